#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vburst/backbone.hpp"
#include "vburst/heads.hpp"

namespace vburst {

enum class Architecture { vanilla, chain, branch };

inline const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::vanilla: return "vanilla";
        case Architecture::chain: return "chain";
        case Architecture::branch: return "branch";
    }
    return "?";
}

inline Architecture architecture_from_string(const std::string& s) {
    if (s == "vanilla") return Architecture::vanilla;
    if (s == "chain") return Architecture::chain;
    if (s == "branch") return Architecture::branch;
    throw std::invalid_argument("unknown architecture '" + s + "'");
}

/// Backbone plus one of the three head architectures; the unit the trainer
/// optimizes and the evaluator scores.
class Model {
  public:
    Model(Architecture arch, const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
          const std::vector<TaskSpec>& specs, std::mt19937_64& rng)
        : arch_(arch), specs_(specs), backbone_(backbone_cfg, rng) {
        switch (arch) {
            case Architecture::vanilla:
                heads_ = std::make_unique<VanillaHeads>(specs, head_cfg, backbone_cfg.d_model, rng);
                break;
            case Architecture::chain:
                heads_ = std::make_unique<ChainHeads>(specs, head_cfg, backbone_cfg.d_model, rng);
                break;
            case Architecture::branch:
                heads_ = std::make_unique<BranchHeads>(specs, head_cfg, backbone_cfg.d_model,
                                                       backbone_cfg.n_layers,
                                                       backbone_cfg.n_heads, rng);
                break;
        }
    }

    void set_training(bool training) { backbone_.set_training(training); }

    HeadOutput forward(const std::vector<std::vector<double>>& waves, const BatchLabels* truth,
                       bool training, std::mt19937_64* mask_rng = nullptr) {
        set_training(training);
        const bool mask = training && backbone_.config().mask_prob > 0.0;
        std::vector<HiddenStack> stacks;
        stacks.reserve(waves.size());
        for (const auto& wave : waves) stacks.push_back(backbone_.encode(wave, mask, mask_rng));
        return heads_->forward(stacks, truth, training);
    }

    std::vector<Parameter> parameters() const {
        std::vector<Parameter> params = backbone_.parameters();
        auto head_params = heads_->parameters();
        params.insert(params.end(), head_params.begin(), head_params.end());
        return params;
    }

    Architecture architecture() const { return arch_; }
    const std::vector<TaskSpec>& specs() const { return specs_; }
    Backbone& backbone() { return backbone_; }
    const Backbone& backbone() const { return backbone_; }
    Heads& heads() { return *heads_; }

  private:
    Architecture arch_;
    std::vector<TaskSpec> specs_;
    Backbone backbone_;
    std::unique_ptr<Heads> heads_;
};

}  // namespace vburst
