#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vburst/metrics.hpp"
#include "vburst/ops.hpp"
#include "vburst/tensor.hpp"
#include "vburst/weighting.hpp"

namespace vburst {

struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
    int trials = 0;
    bool pass = false;
};

/// Central finite-difference verification of reverse-mode gradients. The
/// numeric route re-evaluates the forward value from raw input data and
/// never touches the backward pass it checks.
class GradChecker {
  public:
    explicit GradChecker(std::uint64_t seed = 7, int trials = 100, double step = 1e-5,
                         double tolerance = 1e-4)
        : rng_(seed), trials_(trials), step_(step), tol_(tolerance) {}

    using Inputs = std::vector<std::vector<double>>;
    using ValueFn = std::function<double(const Inputs&)>;
    using GradFn = std::function<Inputs(const Inputs&)>;

    GradCheckRow run_case(const std::string& name, const std::function<Inputs()>& build,
                          const ValueFn& value, const GradFn& analytic) {
        GradCheckRow row{name, 0.0, trials_, false};
        for (int t = 0; t < trials_; ++t) {
            Inputs inputs = build();
            const Inputs grads = analytic(inputs);
            for (size_t i = 0; i < inputs.size(); ++i)
                for (size_t j = 0; j < inputs[i].size(); ++j) {
                    const double saved = inputs[i][j];
                    inputs[i][j] = saved + step_;
                    const double up = value(inputs);
                    inputs[i][j] = saved - step_;
                    const double down = value(inputs);
                    inputs[i][j] = saved;
                    const double numeric = (up - down) / (2.0 * step_);
                    const double a = grads[i][j];
                    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
                    row.max_rel_err = std::max(row.max_rel_err, std::abs(a - numeric) / denom);
                }
        }
        row.pass = row.max_rel_err < tol_;
        return row;
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }

    std::vector<double> uniform_vec(int n, double lo, double hi) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(lo, hi);
        return v;
    }

    /// Uniform values with a dead zone around 0, for kinked ops.
    std::vector<double> uniform_vec_away_from(int n, double lo, double hi, double margin) {
        std::vector<double> v(n);
        for (auto& x : v) {
            do {
                x = uniform(lo, hi);
            } while (std::abs(x) < margin);
        }
        return v;
    }

    std::mt19937_64& rng() { return rng_; }

  private:
    std::mt19937_64 rng_;
    int trials_;
    double step_;
    double tol_;
};

/// Runs the full gradient-check table: every differentiable op plus the CCC,
/// cross-entropy and uncertainty-weighting loss families.
inline std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed = 7, int trials = 100) {
    GradChecker checker(seed, trials);
    std::vector<GradCheckRow> rows;

    // An op becomes a scalar through a fixed quasi-random projection so the
    // check exercises the whole Jacobian.
    auto project = [](const Tensor& out) {
        std::vector<double> weights(out.size());
        for (int j = 0; j < out.size(); ++j) weights[j] = 0.3 + 0.1 * std::sin(2.7 * j + 0.4);
        return sum(multiply(out, Tensor::from_data(out.shape(), weights)));
    };

    auto tensor_case = [&](const std::string& name, std::vector<std::vector<int>> shapes,
                           std::function<Tensor(const std::vector<Tensor>&)> graph,
                           std::function<GradChecker::Inputs()> build) {
        auto value = [shapes, graph, project](const GradChecker::Inputs& raw) {
            std::vector<Tensor> leaves;
            for (size_t i = 0; i < raw.size(); ++i)
                leaves.push_back(Tensor::from_data(shapes[i], raw[i]));
            return project(graph(leaves)).item();
        };
        auto analytic = [shapes, graph, project](const GradChecker::Inputs& raw) {
            std::vector<Tensor> leaves;
            for (size_t i = 0; i < raw.size(); ++i)
                leaves.push_back(Tensor::from_data(shapes[i], raw[i], true));
            project(graph(leaves)).backward();
            GradChecker::Inputs grads;
            for (const auto& leaf : leaves) grads.push_back(leaf.grad());
            return grads;
        };
        rows.push_back(checker.run_case(name, build, value, analytic));
    };

    auto plain = [&](int n) { return checker.uniform_vec(n, -2.0, 2.0); };

    tensor_case("add", {{3, 4}, {3, 4}},
                [](const std::vector<Tensor>& t) { return add(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(12)}; });
    tensor_case("add_row_broadcast", {{3, 4}, {4}},
                [](const std::vector<Tensor>& t) { return add(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(4)}; });
    tensor_case("add_scalar_broadcast", {{3, 4}, {1}},
                [](const std::vector<Tensor>& t) { return add(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(1)}; });
    tensor_case("sub", {{3, 4}, {3, 4}},
                [](const std::vector<Tensor>& t) { return sub(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(12)}; });
    tensor_case("multiply", {{3, 4}, {3, 4}},
                [](const std::vector<Tensor>& t) { return multiply(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(12)}; });
    tensor_case("multiply_row_broadcast", {{3, 4}, {4}},
                [](const std::vector<Tensor>& t) { return multiply(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(4)}; });
    tensor_case("divide", {{3, 4}, {3, 4}},
                [](const std::vector<Tensor>& t) { return divide(t[0], t[1]); },
                [&] {
                    return GradChecker::Inputs{
                        plain(12), checker.uniform_vec_away_from(12, -2.0, 2.0, 0.4)};
                });
    tensor_case("matmul", {{3, 4}, {4, 5}},
                [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); },
                [&] { return GradChecker::Inputs{plain(12), plain(20)}; });
    tensor_case("transpose", {{3, 4}},
                [](const std::vector<Tensor>& t) { return transpose(t[0]); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("reshape", {{3, 4}},
                [](const std::vector<Tensor>& t) { return reshape(t[0], {2, 6}); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("concat_axis0", {{2, 3}, {4, 3}},
                [](const std::vector<Tensor>& t) { return concat({t[0], t[1]}, 0); },
                [&] { return GradChecker::Inputs{plain(6), plain(12)}; });
    tensor_case("concat_axis1", {{3, 2}, {3, 5}},
                [](const std::vector<Tensor>& t) { return concat({t[0], t[1]}, 1); },
                [&] { return GradChecker::Inputs{plain(6), plain(15)}; });
    tensor_case("stack_rows", {{4}, {4}, {4}},
                [](const std::vector<Tensor>& t) { return stack_rows(t); },
                [&] { return GradChecker::Inputs{plain(4), plain(4), plain(4)}; });
    tensor_case("slice_cols", {{3, 6}},
                [](const std::vector<Tensor>& t) { return slice_cols(t[0], 1, 4); },
                [&] { return GradChecker::Inputs{plain(18)}; });
    tensor_case("gather_rows", {{5, 3}},
                [](const std::vector<Tensor>& t) { return gather_rows(t[0], {4, 0, 2, 0}); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("pick", {{4, 5}},
                [](const std::vector<Tensor>& t) { return pick(t[0], {1, 0, 4, 2}); },
                [&] { return GradChecker::Inputs{plain(20)}; });
    tensor_case("sum", {{3, 4}}, [](const std::vector<Tensor>& t) { return sum(t[0]); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("mean", {{3, 4}}, [](const std::vector<Tensor>& t) { return mean(t[0]); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("mean_axis0", {{3, 4}},
                [](const std::vector<Tensor>& t) { return mean(t[0], 0); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("mean_axis1", {{3, 4}},
                [](const std::vector<Tensor>& t) { return mean(t[0], 1); },
                [&] { return GradChecker::Inputs{plain(12)}; });
    tensor_case("variance_axis0", {{5, 3}},
                [](const std::vector<Tensor>& t) { return variance(t[0], 0); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("variance_axis1", {{5, 3}},
                [](const std::vector<Tensor>& t) { return variance(t[0], 1); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("exp", {{3, 4}}, [](const std::vector<Tensor>& t) { return exp(t[0]); },
                [&] { return GradChecker::Inputs{checker.uniform_vec(12, -1.5, 1.5)}; });
    tensor_case("log", {{3, 4}}, [](const std::vector<Tensor>& t) { return log(t[0]); },
                [&] { return GradChecker::Inputs{checker.uniform_vec(12, 0.4, 3.0)}; });
    tensor_case("abs", {{3, 4}}, [](const std::vector<Tensor>& t) { return abs(t[0]); },
                [&] {
                    return GradChecker::Inputs{
                        checker.uniform_vec_away_from(12, -2.0, 2.0, 0.05)};
                });
    tensor_case("relu", {{3, 4}}, [](const std::vector<Tensor>& t) { return relu(t[0]); },
                [&] {
                    return GradChecker::Inputs{
                        checker.uniform_vec_away_from(12, -2.0, 2.0, 0.05)};
                });
    tensor_case("softmax_vector", {{6}},
                [](const std::vector<Tensor>& t) { return softmax(t[0], 0); },
                [&] { return GradChecker::Inputs{plain(6)}; });
    tensor_case("softmax_rows", {{3, 5}},
                [](const std::vector<Tensor>& t) { return softmax(t[0], 1); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("softmax_cols", {{3, 5}},
                [](const std::vector<Tensor>& t) { return softmax(t[0], 0); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("log_softmax", {{3, 5}},
                [](const std::vector<Tensor>& t) { return log_softmax(t[0]); },
                [&] { return GradChecker::Inputs{plain(15)}; });
    tensor_case("layer_norm", {{3, 6}},
                [](const std::vector<Tensor>& t) { return layer_norm(t[0]); },
                [&] { return GradChecker::Inputs{plain(18)}; });
    tensor_case("attention", {{5, 8}, {6, 8}, {6, 8}},
                [](const std::vector<Tensor>& t) {
                    return scaled_dot_product_attention(t[0], t[1], t[2], 2);
                },
                [&] { return GradChecker::Inputs{plain(40), plain(48), plain(48)}; });
    tensor_case("conv1d", {{20, 2}, {3, 8}, {3}},
                [](const std::vector<Tensor>& t) { return conv1d(t[0], t[1], t[2], 4, 3); },
                [&] { return GradChecker::Inputs{plain(40), plain(24), plain(3)}; });
    tensor_case("ccc_loss", {{8, 10}, {8, 10}},
                [](const std::vector<Tensor>& t) { return ccc_loss(t[0], t[1]); },
                [&] {
                    return GradChecker::Inputs{checker.uniform_vec(80, 0.0, 1.0),
                                               checker.uniform_vec(80, 0.0, 1.0)};
                });
    {
        auto labels = std::make_shared<std::vector<int>>();
        tensor_case(
            "cross_entropy", {{6, 5}},
            [labels](const std::vector<Tensor>& t) { return cross_entropy(t[0], *labels); },
            [&, labels] {
                labels->clear();
                for (int i = 0; i < 6; ++i)
                    labels->push_back(static_cast<int>(checker.uniform(0.0, 4.999)));
                return GradChecker::Inputs{plain(30)};
            });
    }

    // Uncertainty losses take (task losses, log alphas) as the two leaves.
    auto unc_case = [&](const std::string& name, bool with_dwa) {
        const int k = 4;
        auto eval = [k, with_dwa](const GradChecker::Inputs& raw, bool want_grads,
                                  GradChecker::Inputs* grads) {
            std::vector<Tensor> losses;
            for (int i = 0; i < k; ++i)
                losses.push_back(Tensor::from_data({1}, {raw[0][i]}, want_grads));
            UncertaintyState state(k, 1.0);
            for (int i = 0; i < k; ++i) state.log_alpha[i].tensor.data()[0] = raw[1][i];
            Tensor out = with_dwa ? druw_loss(losses, state, {1.3, 0.8, 1.1, 0.8})
                                  : rruw_loss(losses, state);
            if (want_grads) {
                out.backward();
                grads->resize(2);
                for (int i = 0; i < k; ++i) {
                    (*grads)[0].push_back(losses[i].grad()[0]);
                    (*grads)[1].push_back(state.log_alpha[i].tensor.grad()[0]);
                }
            }
            return out.item();
        };
        auto value = [eval](const GradChecker::Inputs& raw) {
            return eval(raw, false, nullptr);
        };
        auto analytic = [eval](const GradChecker::Inputs& raw) {
            GradChecker::Inputs grads;
            eval(raw, true, &grads);
            return grads;
        };
        auto build = [&, k] {
            std::vector<double> losses = checker.uniform_vec(k, 0.2, 2.0);
            std::vector<double> rho;
            while (true) {
                rho = checker.uniform_vec_away_from(k, -0.3, 0.5, 0.02);
                double abs_sum = 0.0;
                for (double r : rho) abs_sum += std::abs(r);
                if (std::abs(1.0 - abs_sum) > 0.05) break;  // keep off the constraint kink
            }
            return GradChecker::Inputs{losses, rho};
        };
        rows.push_back(checker.run_case(name, build, value, analytic));
    };
    unc_case("rruw_loss", false);
    unc_case("druw_loss", true);

    return rows;
}

}  // namespace vburst
