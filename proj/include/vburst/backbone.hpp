#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vburst/ops.hpp"
#include "vburst/optimizer.hpp"
#include "vburst/tensor.hpp"

namespace vburst {

struct BackboneConfig {
    int conv_channels = 32;   // feature size after the conv front end
    int d_model = 64;         // transformer width
    int n_layers = 4;         // encoder depth
    int n_heads = 4;
    int ff_mult = 4;          // feed-forward expansion
    double mask_prob = 0.05;  // time/feature masking probability
    int sample_len = 4000;    // fixed input length in samples
    std::vector<int> conv_kernels{10, 8, 4};
    std::vector<int> conv_strides{8, 4, 4};

    void validate() const {
        check(d_model > 0 && n_heads > 0 && d_model % n_heads == 0,
              "backbone: d_model must be divisible by n_heads");
        check(n_layers >= 1, "backbone: n_layers must be at least 1");
        check(mask_prob >= 0.0 && mask_prob < 1.0, "backbone: mask_prob must be in [0,1)");
        check(conv_channels > 0 && ff_mult > 0 && sample_len > 0, "backbone: sizes must be positive");
        check(!conv_kernels.empty() && conv_kernels.size() == conv_strides.size(),
              "backbone: conv kernels and strides must align");
    }

    // Each conv stage emits floor(len / stride) frames.
    int frame_count() const {
        int len = sample_len;
        for (int s : conv_strides) len /= s;
        check(len > 0, "backbone: sample_len too short for the conv stack");
        return len;
    }
};

/// Embedding output plus each encoder layer's output, all (frames, d_model).
using HiddenStack = std::vector<Tensor>;

/// Zeroes whole time steps (rows) and feature channels (columns), each
/// independently with the given probability. Training-time augmentation.
inline Tensor time_feature_mask(const Tensor& features, double mask_prob,
                                std::mt19937_64& rng) {
    check(features.rank() == 2, "time_feature_mask: features must be (frames, d)");
    const double p = std::min(std::max(mask_prob, 0.0), 1.0 - 1e-12);
    const int frames = features.shape()[0], d = features.shape()[1];
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> row_keep(frames), col_keep(d);
    for (int f = 0; f < frames; ++f) row_keep[f] = unif(rng) < p ? 0.0 : 1.0;
    for (int c = 0; c < d; ++c) col_keep[c] = unif(rng) < p ? 0.0 : 1.0;
    std::vector<double> mask(static_cast<size_t>(frames) * d);
    for (int f = 0; f < frames; ++f)
        for (int c = 0; c < d; ++c)
            mask[static_cast<size_t>(f) * d + c] = row_keep[f] * col_keep[c];
    return multiply(features, Tensor::from_data({frames, d}, std::move(mask)));
}

/// Sinusoidal position table, (frames, d_model).
inline Tensor sinusoidal_positions(int frames, int d_model) {
    std::vector<double> pos(static_cast<size_t>(frames) * d_model);
    for (int f = 0; f < frames; ++f)
        for (int i = 0; i < d_model; ++i) {
            const double rate = std::pow(10000.0, -2.0 * (i / 2) / d_model);
            pos[static_cast<size_t>(f) * d_model + i] =
                (i % 2 == 0) ? std::sin(f * rate) : std::cos(f * rate);
        }
    return Tensor::from_data({frames, d_model}, std::move(pos));
}

/// Strided-conv front end plus a pre-norm transformer encoder stack that
/// exposes every intermediate hidden state.
class Backbone {
  public:
    Backbone(BackboneConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        int in_ch = 1;
        for (size_t l = 0; l < cfg_.conv_kernels.size(); ++l) {
            const int k = cfg_.conv_kernels[l];
            const int out_ch = cfg_.conv_channels;
            const std::string base = "backbone.conv" + std::to_string(l);
            conv_w_.push_back({base + ".w",
                               glorot_uniform({out_ch, in_ch * k}, in_ch * k, out_ch, rng),
                               ParamGroup::backbone});
            conv_b_.push_back({base + ".b", Tensor::zeros({out_ch}, true), ParamGroup::backbone});
            in_ch = out_ch;
        }
        const int d = cfg_.d_model;
        proj_w_ = {"backbone.proj.w", glorot_uniform({in_ch, d}, in_ch, d, rng),
                   ParamGroup::backbone};
        proj_b_ = {"backbone.proj.b", Tensor::zeros({d}, true), ParamGroup::backbone};
        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string base = "backbone.layer" + std::to_string(l);
            EncoderLayer layer;
            layer.ln1_g = {base + ".ln1.g", Tensor::filled({d}, 1.0, true), ParamGroup::backbone};
            layer.ln1_b = {base + ".ln1.b", Tensor::zeros({d}, true), ParamGroup::backbone};
            layer.wq = {base + ".wq", glorot_uniform({d, d}, d, d, rng), ParamGroup::backbone};
            layer.bq = {base + ".bq", Tensor::zeros({d}, true), ParamGroup::backbone};
            layer.wk = {base + ".wk", glorot_uniform({d, d}, d, d, rng), ParamGroup::backbone};
            layer.bk = {base + ".bk", Tensor::zeros({d}, true), ParamGroup::backbone};
            layer.wv = {base + ".wv", glorot_uniform({d, d}, d, d, rng), ParamGroup::backbone};
            layer.bv = {base + ".bv", Tensor::zeros({d}, true), ParamGroup::backbone};
            layer.wo = {base + ".wo", glorot_uniform({d, d}, d, d, rng), ParamGroup::backbone};
            layer.bo = {base + ".bo", Tensor::zeros({d}, true), ParamGroup::backbone};
            layer.ln2_g = {base + ".ln2.g", Tensor::filled({d}, 1.0, true), ParamGroup::backbone};
            layer.ln2_b = {base + ".ln2.b", Tensor::zeros({d}, true), ParamGroup::backbone};
            const int ff = d * cfg_.ff_mult;
            layer.ff1_w = {base + ".ff1.w", glorot_uniform({d, ff}, d, ff, rng),
                           ParamGroup::backbone};
            layer.ff1_b = {base + ".ff1.b", Tensor::zeros({ff}, true), ParamGroup::backbone};
            layer.ff2_w = {base + ".ff2.w", glorot_uniform({ff, d}, ff, d, rng),
                           ParamGroup::backbone};
            layer.ff2_b = {base + ".ff2.b", Tensor::zeros({d}, true), ParamGroup::backbone};
            layers_.push_back(std::move(layer));
        }
        positions_ = sinusoidal_positions(cfg_.frame_count(), d);
    }

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }
    const BackboneConfig& config() const { return cfg_; }

    /// Runs the full front end and encoder stack over one fixed-length wave.
    /// Masking is a training-only augmentation; requesting it outside
    /// training mode is a contract violation.
    HiddenStack encode(const std::vector<double>& wave, bool apply_mask,
                       std::mt19937_64* rng = nullptr) const {
        check(static_cast<int>(wave.size()) == cfg_.sample_len,
              "encode: wave length " + std::to_string(wave.size()) +
                  " does not match configured sample length " +
                  std::to_string(cfg_.sample_len));
        if (apply_mask) {
            if (!training_)
                throw std::logic_error("encode: masking requested outside training mode");
            check(rng != nullptr, "encode: masking requires an rng");
        }
        Tensor x = Tensor::from_data({cfg_.sample_len, 1}, wave);
        for (size_t l = 0; l < conv_w_.size(); ++l)
            x = relu(conv1d(x, conv_w_[l].tensor, conv_b_[l].tensor, cfg_.conv_kernels[l],
                            cfg_.conv_strides[l]));
        x = add(matmul(x, proj_w_.tensor), proj_b_.tensor);
        x = add(x, positions_);
        if (apply_mask && cfg_.mask_prob > 0.0)
            x = time_feature_mask(x, cfg_.mask_prob, *rng);

        HiddenStack stack;
        stack.reserve(layers_.size() + 1);
        stack.push_back(x);
        for (const auto& layer : layers_) {
            Tensor h = add(x, attention_block(layer, norm(x, layer.ln1_g, layer.ln1_b)));
            x = add(h, feed_forward(layer, norm(h, layer.ln2_g, layer.ln2_b)));
            stack.push_back(x);
        }
        return stack;
    }

    std::vector<Parameter> parameters() const {
        std::vector<Parameter> params;
        for (size_t l = 0; l < conv_w_.size(); ++l) {
            params.push_back(conv_w_[l]);
            params.push_back(conv_b_[l]);
        }
        params.push_back(proj_w_);
        params.push_back(proj_b_);
        for (const auto& layer : layers_) {
            for (const auto* p :
                 {&layer.ln1_g, &layer.ln1_b, &layer.wq, &layer.bq, &layer.wk, &layer.bk,
                  &layer.wv, &layer.bv, &layer.wo, &layer.bo, &layer.ln2_g, &layer.ln2_b,
                  &layer.ff1_w, &layer.ff1_b, &layer.ff2_w, &layer.ff2_b})
                params.push_back(*p);
        }
        return params;
    }

  private:
    struct EncoderLayer {
        Parameter ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b;
        Parameter ff1_w, ff1_b, ff2_w, ff2_b;
    };

    static Tensor norm(const Tensor& x, const Parameter& gamma, const Parameter& beta) {
        return add(multiply(layer_norm(x), gamma.tensor), beta.tensor);
    }

    Tensor attention_block(const EncoderLayer& l, const Tensor& x) const {
        Tensor q = add(matmul(x, l.wq.tensor), l.bq.tensor);
        Tensor k = add(matmul(x, l.wk.tensor), l.bk.tensor);
        Tensor v = add(matmul(x, l.wv.tensor), l.bv.tensor);
        Tensor a = scaled_dot_product_attention(q, k, v, cfg_.n_heads);
        return add(matmul(a, l.wo.tensor), l.bo.tensor);
    }

    Tensor feed_forward(const EncoderLayer& l, const Tensor& x) const {
        Tensor h = relu(add(matmul(x, l.ff1_w.tensor), l.ff1_b.tensor));
        return add(matmul(h, l.ff2_w.tensor), l.ff2_b.tensor);
    }

    BackboneConfig cfg_;
    std::vector<Parameter> conv_w_, conv_b_;
    Parameter proj_w_, proj_b_;
    std::vector<EncoderLayer> layers_;
    Tensor positions_;
    bool training_ = false;
};

}  // namespace vburst
