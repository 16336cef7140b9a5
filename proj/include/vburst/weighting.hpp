#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vburst/ops.hpp"
#include "vburst/optimizer.hpp"
#include "vburst/tensor.hpp"

namespace vburst {

/// Loss-ratio history for dynamic weight averaging. Weights are computed
/// from the two most recent epoch-mean losses per task.
struct DwaState {
    int task_count = 0;
    double temperature = 2.0;
    std::vector<std::vector<double>> history;  // most recent last, keeps two

    DwaState() = default;
    DwaState(int tasks, double temp) : task_count(tasks), temperature(temp) {
        check(tasks >= 1, "dwa: task count must be positive");
        check(temp > 0.0, "dwa: temperature must be positive");
    }

    void push_epoch(const std::vector<double>& mean_losses) {
        check(static_cast<int>(mean_losses.size()) == task_count,
              "dwa: epoch losses must cover every task");
        history.push_back(mean_losses);
        if (history.size() > 2) history.erase(history.begin());
    }

    bool ready() const { return history.size() >= 2; }
};

/// lambda_k = K * softmax_k((L_k(t-1) / L_k(t-2)) / T). Before two epochs of
/// history exist every weight is 1.
inline std::vector<double> dwa_weights(const DwaState& state) {
    const int k = state.task_count;
    if (!state.ready()) return std::vector<double>(k, 1.0);
    const auto& prev = state.history[1];
    const auto& prev2 = state.history[0];
    std::vector<double> logits(k);
    for (int i = 0; i < k; ++i) {
        check(prev[i] > 0.0 && prev2[i] > 0.0,
              "dwa_weights: historical loss must be positive, task " + std::to_string(i));
        logits[i] = (prev[i] / prev2[i]) / state.temperature;
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> w(k);
    for (int i = 0; i < k; ++i) {
        w[i] = std::exp(logits[i] - mx);
        sum += w[i];
    }
    for (int i = 0; i < k; ++i) w[i] *= static_cast<double>(k) / sum;
    return w;
}

/// Trainable per-task uncertainty scales. alpha_k = exp(log_alpha_k) keeps
/// alpha positive without projection; init is alpha = 1.
struct UncertaintyState {
    std::vector<Parameter> log_alpha;
    double phi = 1.0;

    UncertaintyState() = default;
    UncertaintyState(int tasks, double phi_target) : phi(phi_target) {
        check(tasks >= 1, "uncertainty: task count must be positive");
        check(phi_target > 0.0, "uncertainty: phi must be positive");
        for (int i = 0; i < tasks; ++i)
            log_alpha.push_back({"weighting.log_alpha_" + std::to_string(i),
                                 Tensor::scalar(0.0, true), ParamGroup::weighting});
    }

    int task_count() const { return static_cast<int>(log_alpha.size()); }
    std::vector<double> alphas() const {
        std::vector<double> a;
        for (const auto& p : log_alpha) a.push_back(std::exp(p.tensor.item()));
        return a;
    }
};

inline Tensor uniform_loss(const std::vector<Tensor>& task_losses) {
    check(!task_losses.empty(), "uniform_loss: need at least one task loss");
    Tensor total = task_losses[0];
    for (size_t i = 1; i < task_losses.size(); ++i) total = add(total, task_losses[i]);
    return total;
}

/// Weighted sum with the dynamic weights treated as constants; gradients
/// reach only the task losses.
inline Tensor dwa_loss(const std::vector<Tensor>& task_losses, const DwaState& state) {
    check(static_cast<int>(task_losses.size()) == state.task_count,
          "dwa_loss: loss count must match task count");
    if (!state.ready()) return uniform_loss(task_losses);
    const std::vector<double> w = dwa_weights(state);
    Tensor total = multiply(task_losses[0], w[0]);
    for (size_t i = 1; i < task_losses.size(); ++i)
        total = add(total, multiply(task_losses[i], w[i]));
    return total;
}

namespace detail {

// sum_k log(1 + log alpha_k^2) + |phi - sum_k |log alpha_k||, with
// log alpha_k held as the raw parameter. The regularizer requires
// 1 + 2 log_alpha > 0, i.e. alpha > exp(-1/2).
inline Tensor uncertainty_penalty(const UncertaintyState& state) {
    Tensor reg;
    Tensor abs_sum;
    for (int i = 0; i < state.task_count(); ++i) {
        const Tensor& rho = state.log_alpha[i].tensor;
        check(1.0 + 2.0 * rho.item() > 0.0,
              "rruw_loss: alpha_" + std::to_string(i) +
                  " below exp(-1/2); log(1 + log alpha^2) undefined");
        Tensor r = log(add(multiply(rho, 2.0), 1.0));
        reg = reg.defined() ? add(reg, r) : r;
        Tensor a = abs(rho);
        abs_sum = abs_sum.defined() ? add(abs_sum, a) : a;
    }
    Tensor constraint = abs(sub(state.phi, abs_sum));
    return add(reg, constraint);
}

}  // namespace detail

/// sum_k L_k / alpha_k^2 + sum_k log(1 + log alpha_k^2)
/// + |phi - sum_k |log alpha_k||, differentiable in the losses and alpha.
inline Tensor rruw_loss(const std::vector<Tensor>& task_losses, const UncertaintyState& state) {
    check(static_cast<int>(task_losses.size()) == state.task_count(),
          "rruw_loss: loss count must match task count");
    Tensor total;
    for (size_t i = 0; i < task_losses.size(); ++i) {
        Tensor inv_sq = exp(multiply(state.log_alpha[i].tensor, -2.0));
        Tensor term = multiply(inv_sq, task_losses[i]);
        total = total.defined() ? add(total, term) : term;
    }
    return add(total, detail::uncertainty_penalty(state));
}

/// sum_k (1/alpha_k^2 + lambda_k) L_k plus the same penalty as rruw_loss,
/// with the dynamic weights given explicitly.
inline Tensor druw_loss(const std::vector<Tensor>& task_losses, const UncertaintyState& u,
                        const std::vector<double>& weights) {
    check(static_cast<int>(task_losses.size()) == u.task_count(),
          "druw_loss: loss count must match task count");
    check(weights.size() == task_losses.size(), "druw_loss: one weight per task required");
    Tensor total;
    for (size_t i = 0; i < task_losses.size(); ++i) {
        Tensor coeff = add(exp(multiply(u.log_alpha[i].tensor, -2.0)), weights[i]);
        Tensor term = multiply(coeff, task_losses[i]);
        total = total.defined() ? add(total, term) : term;
    }
    return add(total, detail::uncertainty_penalty(u));
}

inline Tensor druw_loss(const std::vector<Tensor>& task_losses, const UncertaintyState& u,
                        const DwaState& d) {
    check(d.task_count == u.task_count(), "druw_loss: state task counts differ");
    return druw_loss(task_losses, u, dwa_weights(d));
}

}  // namespace vburst
