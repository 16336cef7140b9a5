#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vburst/backbone.hpp"
#include "vburst/ops.hpp"
#include "vburst/optimizer.hpp"
#include "vburst/tensor.hpp"

namespace vburst {

enum class TaskKind { classification, regression };

struct TaskSpec {
    std::string name;
    int out_dim = 0;
    TaskKind kind = TaskKind::regression;
};

constexpr int kTaskCount = 4;

/// The four tasks in chain order: burst type, arousal/valence, the ten
/// emotion dimensions, and the per-culture emotion grid.
inline std::vector<TaskSpec> task_specs(int classes = 8, int emo_dims = 10, int cultures = 4) {
    return {{"type", classes, TaskKind::classification},
            {"two", 2, TaskKind::regression},
            {"high", emo_dims, TaskKind::regression},
            {"culture", cultures * emo_dims, TaskKind::regression}};
}

struct HeadConfig {
    int hidden_width = 256;
    int attn_blocks = 0;         // 0 means one block per encoder layer
    std::string pooling = "mean";

    void validate() const {
        check(hidden_width > 0, "heads: hidden_width must be positive");
        check(attn_blocks >= 0, "heads: attn_blocks must be non-negative");
        check(pooling == "mean", "heads: unsupported pooling '" + pooling + "'");
    }
};

struct HeadOutput {
    Tensor type_logits;  // (N, classes)
    Tensor two;          // (N, 2)
    Tensor high;         // (N, emo_dims)
    Tensor culture;      // (N, cultures * emo_dims)

    const Tensor& by_index(int i) const {
        switch (i) {
            case 0: return type_logits;
            case 1: return two;
            case 2: return high;
            case 3: return culture;
        }
        throw std::out_of_range("HeadOutput: task index out of range");
    }
};

/// Ground-truth labels for one batch; conditioning source for the chain
/// during training.
struct BatchLabels {
    std::vector<int> type;
    Tensor two;   // (N, 2) constants
    Tensor high;  // (N, emo_dims) constants
    std::vector<int> culture;
};

/// Mean over frames of a (frames, d) state.
inline Tensor pool(const Tensor& stack_top) {
    check(stack_top.rank() == 2 && stack_top.shape()[0] >= 1,
          "pool: need at least one frame");
    return mean(stack_top, 0);
}

/// Pools the top state of each sample's stack into a (batch, d) matrix.
inline Tensor pooled_features(const std::vector<HiddenStack>& batch) {
    check(!batch.empty(), "heads: empty batch");
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const auto& stack : batch) {
        check(!stack.empty(), "heads: empty hidden stack");
        rows.push_back(pool(stack.back()));
    }
    return stack_rows(rows);
}

namespace detail {

// One hidden fully connected layer plus an output layer.
struct OutputNet {
    Parameter w1, b1, w2, b2;

    OutputNet() = default;
    OutputNet(const std::string& name, int in_dim, int hidden, int out_dim,
              std::mt19937_64& rng) {
        w1 = {name + ".w1", glorot_uniform({in_dim, hidden}, in_dim, hidden, rng),
              ParamGroup::head};
        b1 = {name + ".b1", Tensor::zeros({hidden}, true), ParamGroup::head};
        w2 = {name + ".w2", glorot_uniform({hidden, out_dim}, hidden, out_dim, rng),
              ParamGroup::head};
        b2 = {name + ".b2", Tensor::zeros({out_dim}, true), ParamGroup::head};
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = relu(add(matmul(x, w1.tensor), b1.tensor));
        return add(matmul(h, w2.tensor), b2.tensor);
    }

    void append_params(std::vector<Parameter>& out) const {
        out.push_back(w1);
        out.push_back(b1);
        out.push_back(w2);
        out.push_back(b2);
    }
};

inline Tensor one_hot(const std::vector<int>& labels, int classes) {
    std::vector<double> data(labels.size() * classes, 0.0);
    for (size_t i = 0; i < labels.size(); ++i) {
        check(0 <= labels[i] && labels[i] < classes, "one_hot: label out of range");
        data[i * classes + labels[i]] = 1.0;
    }
    return Tensor::from_data({static_cast<int>(labels.size()), classes}, std::move(data));
}

}  // namespace detail

class Heads {
  public:
    virtual ~Heads() = default;
    virtual HeadOutput forward(const std::vector<HiddenStack>& batch, const BatchLabels* truth,
                               bool training) = 0;
    virtual std::vector<Parameter> parameters() const = 0;
};

/// Four parallel two-layer networks over the pooled top state; no cross-task
/// connections.
class VanillaHeads : public Heads {
  public:
    VanillaHeads(const std::vector<TaskSpec>& specs, const HeadConfig& cfg, int d_model,
                 std::mt19937_64& rng) {
        cfg.validate();
        for (const auto& spec : specs)
            nets_.emplace_back("heads.vanilla." + spec.name, d_model, cfg.hidden_width,
                               spec.out_dim, rng);
    }

    HeadOutput forward(const std::vector<HiddenStack>& batch, const BatchLabels*,
                       bool) override {
        Tensor feats = pooled_features(batch);
        return {nets_[0].forward(feats), nets_[1].forward(feats), nets_[2].forward(feats),
                nets_[3].forward(feats)};
    }

    std::vector<Parameter> parameters() const override {
        std::vector<Parameter> out;
        for (const auto& n : nets_) n.append_params(out);
        return out;
    }

  private:
    std::vector<detail::OutputNet> nets_;
};

/// Sequential chain type -> two -> high -> culture. Each task's input is the
/// pooled features concatenated with the conditioning vectors of all earlier
/// tasks: ground truth while training (teacher forcing), the model's own
/// predictions at evaluation. Type conditions as a one-hot vector in
/// training and as softmax probabilities at evaluation.
class ChainHeads : public Heads {
  public:
    ChainHeads(const std::vector<TaskSpec>& specs, const HeadConfig& cfg, int d_model,
               std::mt19937_64& rng)
        : specs_(specs) {
        cfg.validate();
        int in_dim = d_model;
        for (const auto& spec : specs) {
            nets_.emplace_back("heads.chain." + spec.name, in_dim, cfg.hidden_width,
                               spec.out_dim, rng);
            in_dim += spec.out_dim;  // later tasks see this task's conditioning
        }
    }

    HeadOutput forward(const std::vector<HiddenStack>& batch, const BatchLabels* truth,
                       bool training) override {
        if (training)
            check(truth != nullptr, "chain forward: training requires ground-truth labels");
        last_source_ = training ? "truth" : "prediction";
        Tensor feats = pooled_features(batch);

        Tensor type_logits = nets_[0].forward(feats);
        Tensor cond_type = training ? detail::one_hot(truth->type, specs_[0].out_dim)
                                    : softmax(type_logits, 1);

        Tensor two_in = concat({feats, cond_type}, 1);
        Tensor two = nets_[1].forward(two_in);
        Tensor cond_two = training ? truth->two : two;

        Tensor high_in = concat({feats, cond_type, cond_two}, 1);
        Tensor high = nets_[2].forward(high_in);
        Tensor cond_high = training ? truth->high : high;

        Tensor culture_in = concat({feats, cond_type, cond_two, cond_high}, 1);
        Tensor culture = nets_[3].forward(culture_in);

        return {type_logits, two, high, culture};
    }

    std::vector<Parameter> parameters() const override {
        std::vector<Parameter> out;
        for (const auto& n : nets_) n.append_params(out);
        return out;
    }

    /// Instrumentation: what the last forward pass conditioned on.
    const char* last_conditioning_source() const { return last_source_; }

  private:
    std::vector<TaskSpec> specs_;
    std::vector<detail::OutputNet> nets_;
    const char* last_source_ = "none";
};

/// Per-task stacks of multi-head attention blocks over the backbone's hidden
/// states. Block j takes state s_{q_j} as queries and the previous block's
/// output as keys and values, rooted at the embedding output s_0.
class BranchHeads : public Heads {
  public:
    BranchHeads(const std::vector<TaskSpec>& specs, const HeadConfig& cfg, int d_model,
                int n_layers, int n_heads, std::mt19937_64& rng)
        : n_heads_(n_heads) {
        cfg.validate();
        blocks_per_task_ = cfg.attn_blocks > 0 ? cfg.attn_blocks : n_layers;
        check(blocks_per_task_ <= n_layers,
              "branch heads: " + std::to_string(blocks_per_task_) +
                  " attention blocks exceed the " + std::to_string(n_layers) +
                  " available encoder states");
        // Query states evenly spaced over s_1..s_{n_layers}.
        for (int j = 0; j < blocks_per_task_; ++j)
            query_state_.push_back(1 + j * n_layers / blocks_per_task_);
        for (const auto& spec : specs) {
            std::vector<MhaBlock> stack;
            for (int j = 0; j < blocks_per_task_; ++j)
                stack.emplace_back("heads.branch." + spec.name + ".block" + std::to_string(j),
                                   d_model, rng);
            task_blocks_.push_back(std::move(stack));
            nets_.emplace_back("heads.branch." + spec.name + ".out", d_model,
                               cfg.hidden_width, spec.out_dim, rng);
        }
    }

    HeadOutput forward(const std::vector<HiddenStack>& batch, const BatchLabels*,
                       bool) override {
        check(!batch.empty(), "heads: empty batch");
        if (capture_attention_) last_attention_.clear();
        std::vector<Tensor> outs;
        for (size_t task = 0; task < task_blocks_.size(); ++task) {
            std::vector<Tensor> rows;
            rows.reserve(batch.size());
            for (const auto& stack : batch) {
                check(static_cast<int>(stack.size()) > query_state_.back(),
                      "branch heads: hidden stack too shallow");
                Tensor kv = stack[0];
                for (int j = 0; j < blocks_per_task_; ++j)
                    kv = task_blocks_[task][j].forward(stack[query_state_[j]], kv, n_heads_,
                                                       capture_attention_ ? &last_attention_
                                                                          : nullptr);
                rows.push_back(pool(kv));
            }
            outs.push_back(nets_[task].forward(stack_rows(rows)));
        }
        return {outs[0], outs[1], outs[2], outs[3]};
    }

    std::vector<Parameter> parameters() const override {
        std::vector<Parameter> out;
        for (const auto& stack : task_blocks_)
            for (const auto& b : stack) b.append_params(out);
        for (const auto& n : nets_) n.append_params(out);
        return out;
    }

    int blocks_per_task() const { return blocks_per_task_; }
    void set_capture_attention(bool on) { capture_attention_ = on; }
    const std::vector<std::vector<double>>& last_attention() const { return last_attention_; }

  private:
    struct MhaBlock {
        Parameter wq, bq, wk, bk, wv, bv, wo, bo;

        MhaBlock(const std::string& name, int d, std::mt19937_64& rng) {
            wq = {name + ".wq", glorot_uniform({d, d}, d, d, rng), ParamGroup::head};
            bq = {name + ".bq", Tensor::zeros({d}, true), ParamGroup::head};
            wk = {name + ".wk", glorot_uniform({d, d}, d, d, rng), ParamGroup::head};
            bk = {name + ".bk", Tensor::zeros({d}, true), ParamGroup::head};
            wv = {name + ".wv", glorot_uniform({d, d}, d, d, rng), ParamGroup::head};
            bv = {name + ".bv", Tensor::zeros({d}, true), ParamGroup::head};
            wo = {name + ".wo", glorot_uniform({d, d}, d, d, rng), ParamGroup::head};
            bo = {name + ".bo", Tensor::zeros({d}, true), ParamGroup::head};
        }

        Tensor forward(const Tensor& queries, const Tensor& kv, int heads,
                       std::vector<std::vector<double>>* attn_sink) const {
            Tensor q = add(matmul(queries, wq.tensor), bq.tensor);
            Tensor k = add(matmul(kv, wk.tensor), bk.tensor);
            Tensor v = add(matmul(kv, wv.tensor), bv.tensor);
            std::vector<std::vector<double>> attn;
            Tensor a = scaled_dot_product_attention(q, k, v, heads,
                                                    attn_sink ? &attn : nullptr);
            if (attn_sink)
                attn_sink->insert(attn_sink->end(), attn.begin(), attn.end());
            return add(matmul(a, wo.tensor), bo.tensor);
        }

        void append_params(std::vector<Parameter>& out) const {
            for (const auto* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}) out.push_back(*p);
        }
    };

    int n_heads_;
    int blocks_per_task_ = 0;
    std::vector<int> query_state_;
    std::vector<std::vector<MhaBlock>> task_blocks_;
    std::vector<detail::OutputNet> nets_;
    bool capture_attention_ = false;
    std::vector<std::vector<double>> last_attention_;
};

}  // namespace vburst
