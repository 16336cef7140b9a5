#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vburst/tensor.hpp"

namespace vburst {

enum class ParamGroup { backbone, head, weighting };

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::backbone: return "backbone";
        case ParamGroup::head: return "head";
        case ParamGroup::weighting: return "weighting";
    }
    return "?";
}

/// A trainable tensor with a fixed learning-rate group.
struct Parameter {
    std::string name;
    Tensor tensor;
    ParamGroup group = ParamGroup::head;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct GroupRates {
    double backbone = 1e-5;
    double head = 1e-3;
    double weighting = 1e-3;

    double of(ParamGroup g) const {
        switch (g) {
            case ParamGroup::backbone: return backbone;
            case ParamGroup::head: return head;
            case ParamGroup::weighting: return weighting;
        }
        return 0.0;
    }
    void scale(double factor) {
        backbone *= factor;
        head *= factor;
        weighting *= factor;
    }
};

/// Decoupled weight-decay adaptive-moment optimizer. Moments are kept
/// index-aligned with the registered parameter list.
class AdamW {
  public:
    AdamW(std::vector<Parameter> params, GroupRates rates, AdamWConfig cfg = {})
        : params_(std::move(params)), rates_(rates), cfg_(cfg) {
        moment1_.resize(params_.size());
        moment2_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            moment1_[i].assign(params_[i].tensor.size(), 0.0);
            moment2_[i].assign(params_[i].tensor.size(), 0.0);
        }
    }

    /// One update over all parameters; grads are consumed and zeroed.
    void step() {
        for (const auto& p : params_)
            if (!p.tensor.has_grad())
                throw std::runtime_error("optimizer_step: parameter '" + p.name +
                                         "' has no gradient");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            const double lr = rates_.of(p.group);
            auto& w = p.tensor.data();
            const auto& g = p.tensor.grad();
            auto& m = moment1_[i];
            auto& v = moment2_[i];
            for (size_t j = 0; j < w.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                w[j] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * w[j]);
            }
            p.tensor.zero_grad();
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    std::int64_t step_count() const { return step_count_; }
    GroupRates& rates() { return rates_; }
    const GroupRates& rates() const { return rates_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Parameter>& params() const { return params_; }

    // Serialization access.
    std::vector<std::vector<double>>& moment1() { return moment1_; }
    std::vector<std::vector<double>>& moment2() { return moment2_; }
    void set_step_count(std::int64_t n) { step_count_ = n; }

  private:
    std::vector<Parameter> params_;
    GroupRates rates_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> moment1_;
    std::vector<std::vector<double>> moment2_;
    std::int64_t step_count_ = 0;
};

/// Uniform init in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out,
                             std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace vburst
