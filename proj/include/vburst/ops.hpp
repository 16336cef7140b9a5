#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "vburst/tensor.hpp"

namespace vburst {

namespace detail {

enum class Broadcast { same, b_scalar, a_scalar, b_row };

// Elementwise binary ops accept equal shapes, a scalar on either side, or a
// rank-1 vector on the right broadcast across the rows of a rank-2 left.
inline Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (b.size() == 1) return Broadcast::b_scalar;
    if (a.size() == 1) return Broadcast::a_scalar;
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0])
        return Broadcast::b_row;
    throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()) + " do not conform");
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da_of,
                 DB db_of) {
    Broadcast mode = broadcast_mode(a, b, name);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<int> out_shape = (mode == Broadcast::a_scalar) ? b.shape() : a.shape();
    int n = detail::shape_size(out_shape);
    int inner = (mode == Broadcast::b_row) ? a.shape()[1] : 0;
    auto bi = [mode, inner](int i) -> int {
        switch (mode) {
            case Broadcast::same: return i;
            case Broadcast::b_scalar: return 0;
            case Broadcast::a_scalar: return i;  // unused for b
            case Broadcast::b_row: return i % inner;
        }
        return i;
    };
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        double av = (mode == Broadcast::a_scalar) ? ad[0] : ad[i];
        double bv = (mode == Broadcast::a_scalar) ? bd[i] : bd[bi(i)];
        out[i] = fwd(av, bv);
    }
    return make_op(out_shape, std::move(out), {a, b},
                   [ad, bd, mode, n, bi, da_of, db_of](const std::vector<double>& g,
                                                       const std::vector<std::vector<double>*>& pg) {
                       for (int i = 0; i < n; ++i) {
                           double av = (mode == Broadcast::a_scalar) ? ad[0] : ad[i];
                           double bv = (mode == Broadcast::a_scalar) ? bd[i] : bd[bi(i)];
                           if (pg[0]) (*pg[0])[(mode == Broadcast::a_scalar) ? 0 : i] += g[i] * da_of(av, bv);
                           if (pg[1]) (*pg[1])[(mode == Broadcast::a_scalar) ? i : bi(i)] += g[i] * db_of(av, bv);
                       }
                   });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor multiply(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "multiply", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor divide(const Tensor& a, const Tensor& b) {
    for (double v : b.data())
        check(v != 0.0, "divide: division by zero");
    return detail::binary_op(
        a, b, "divide", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

inline Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor sub(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
inline Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
inline Tensor multiply(const Tensor& a, double c) { return multiply(a, Tensor::scalar(c)); }
inline Tensor neg(const Tensor& a) { return multiply(a, -1.0); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2,
          "matmul: operands must be rank-2, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
    check(a.shape()[1] == b.shape()[0],
          "matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ad[static_cast<size_t>(i) * k + p];
            const double* brow = &bd[static_cast<size_t>(p) * n];
            double* orow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return detail::make_op(
        {m, n}, std::move(out), {a, b},
        [ad, bd, m, k, n](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
            if (pg[0]) {  // dA = g . B^T
                auto& da = *pg[0];
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double gv = g[static_cast<size_t>(i) * n + j];
                        const double* brow = &bd[j];
                        double* darow = &da[static_cast<size_t>(i) * k];
                        for (int p = 0; p < k; ++p) darow[p] += gv * brow[static_cast<size_t>(p) * n];
                    }
            }
            if (pg[1]) {  // dB = A^T . g
                auto& db = *pg[1];
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double av = ad[static_cast<size_t>(i) * k + p];
                        const double* grow = &g[static_cast<size_t>(i) * n];
                        double* dbrow = &db[static_cast<size_t>(p) * n];
                        for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                    }
            }
        });
}

inline Tensor transpose(const Tensor& a) {
    check(a.rank() == 2, "transpose: requires rank-2, got " + shape_str(a.shape()));
    const int m = a.shape()[0], n = a.shape()[1];
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = ad[static_cast<size_t>(i) * n + j];
    return detail::make_op({n, m}, std::move(out), {a},
                           [m, n](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < n; ++j)
                                       (*pg[0])[static_cast<size_t>(i) * n + j] +=
                                           g[static_cast<size_t>(j) * m + i];
                           });
}

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    int n = 1;
    for (int d : shape) n *= d;
    check(n == a.size(), "reshape: size mismatch, " + shape_str(a.shape()) + " to " +
                             shape_str(shape));
    return detail::make_op(std::move(shape), a.data(), {a},
                           [](const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const int rank = parts[0].rank();
    check(axis >= 0 && axis < rank, "concat: axis out of range");
    for (const auto& p : parts) {
        check(p.rank() == rank, "concat: mixed ranks");
        for (int d = 0; d < rank; ++d)
            check(d == axis || p.shape()[d] == parts[0].shape()[d],
                  "concat: shapes must agree off-axis, got " + shape_str(p.shape()) +
                      " vs " + shape_str(parts[0].shape()));
    }
    std::vector<int> out_shape = parts[0].shape();
    out_shape[axis] = 0;
    for (const auto& p : parts) out_shape[axis] += p.shape()[axis];

    std::vector<double> out(detail::shape_size(out_shape));
    // Treat as (outer, axis_extent, inner) blocks.
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];
    std::vector<int> extents, offsets;
    int off = 0;
    for (const auto& p : parts) {
        extents.push_back(p.shape()[axis]);
        offsets.push_back(off);
        off += p.shape()[axis];
    }
    const int total_axis = out_shape[axis];
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& pd = parts[pi].data();
        for (int o = 0; o < outer; ++o)
            for (int x = 0; x < extents[pi]; ++x)
                std::copy_n(&pd[(static_cast<size_t>(o) * extents[pi] + x) * inner], inner,
                            &out[(static_cast<size_t>(o) * total_axis + offsets[pi] + x) * inner]);
    }
    return detail::make_op(
        out_shape, std::move(out), parts,
        [outer, inner, total_axis, extents, offsets](const std::vector<double>& g,
                                                     const std::vector<std::vector<double>*>& pg) {
            for (size_t pi = 0; pi < pg.size(); ++pi) {
                if (!pg[pi]) continue;
                auto& dp = *pg[pi];
                for (int o = 0; o < outer; ++o)
                    for (int x = 0; x < extents[pi]; ++x) {
                        const double* src =
                            &g[(static_cast<size_t>(o) * total_axis + offsets[pi] + x) * inner];
                        double* dst = &dp[(static_cast<size_t>(o) * extents[pi] + x) * inner];
                        for (int i = 0; i < inner; ++i) dst[i] += src[i];
                    }
            }
        });
}

/// Stacks rank-1 tensors of equal length into a (count, length) matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    check(!rows.empty(), "stack_rows: no inputs");
    const int d = rows[0].size();
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (const auto& r : rows) {
        check(r.rank() == 1 && r.size() == d, "stack_rows: rows must be equal-length vectors");
        out.insert(out.end(), r.data().begin(), r.data().end());
    }
    return detail::make_op({static_cast<int>(rows.size()), d}, std::move(out), rows,
                           [d](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& pg) {
                               for (size_t r = 0; r < pg.size(); ++r) {
                                   if (!pg[r]) continue;
                                   for (int j = 0; j < d; ++j)
                                       (*pg[r])[j] += g[r * d + j];
                               }
                           });
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    check(a.rank() == 2, "slice_cols: requires rank-2");
    const int m = a.shape()[0], n = a.shape()[1];
    check(0 <= c0 && c0 < c1 && c1 <= n, "slice_cols: bad column range [" +
                                             std::to_string(c0) + "," + std::to_string(c1) +
                                             ") for " + shape_str(a.shape()));
    const int w = c1 - c0;
    const auto& ad = a.data();
    std::vector<double> out(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        std::copy_n(&ad[static_cast<size_t>(i) * n + c0], w, &out[static_cast<size_t>(i) * w]);
    return detail::make_op({m, w}, std::move(out), {a},
                           [m, n, c0, w](const std::vector<double>& g,
                                         const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < w; ++j)
                                       (*pg[0])[static_cast<size_t>(i) * n + c0 + j] +=
                                           g[static_cast<size_t>(i) * w + j];
                           });
}

inline Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
    check(a.rank() == 2, "gather_rows: requires rank-2");
    const int m = a.shape()[0], n = a.shape()[1];
    for (int i : idx) check(0 <= i && i < m, "gather_rows: row index out of range");
    const auto& ad = a.data();
    std::vector<double> out(idx.size() * n);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(&ad[static_cast<size_t>(idx[r]) * n], n, &out[r * n]);
    return detail::make_op({static_cast<int>(idx.size()), n}, std::move(out), {a},
                           [idx, n](const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t r = 0; r < idx.size(); ++r)
                                   for (int j = 0; j < n; ++j)
                                       (*pg[0])[static_cast<size_t>(idx[r]) * n + j] += g[r * n + j];
                           });
}

/// out[i] = a[i, cols[i]]; used for selecting the true-class entry per row.
inline Tensor pick(const Tensor& a, const std::vector<int>& cols) {
    check(a.rank() == 2, "pick: requires rank-2");
    const int m = a.shape()[0], n = a.shape()[1];
    check(static_cast<int>(cols.size()) == m, "pick: need one column index per row");
    for (int c : cols) check(0 <= c && c < n, "pick: column index out of range");
    const auto& ad = a.data();
    std::vector<double> out(m);
    for (int i = 0; i < m; ++i) out[i] = ad[static_cast<size_t>(i) * n + cols[i]];
    return detail::make_op({m}, std::move(out), {a},
                           [cols, n](const std::vector<double>& g,
                                     const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < cols.size(); ++i)
                                   (*pg[0])[i * n + cols[i]] += g[i];
                           });
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const int n = a.size();
    return detail::make_op({1}, {s}, {a},
                           [n](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (int i = 0; i < n; ++i) (*pg[0])[i] += g[0];
                           });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const int n = a.size();
    return detail::make_op({1}, {s / n}, {a},
                           [n](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               const double gi = g[0] / n;
                               for (int i = 0; i < n; ++i) (*pg[0])[i] += gi;
                           });
}

/// Mean over one axis of a rank-2 tensor: axis 0 -> per-column means (n,),
/// axis 1 -> per-row means (m,).
inline Tensor mean(const Tensor& a, int axis) {
    check(a.rank() == 2, "mean(axis): requires rank-2, got " + shape_str(a.shape()));
    check(axis == 0 || axis == 1, "mean(axis): axis must be 0 or 1");
    const int m = a.shape()[0], n = a.shape()[1];
    const auto& ad = a.data();
    if (axis == 0) {
        std::vector<double> out(n, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out[j] += ad[static_cast<size_t>(i) * n + j];
        for (double& v : out) v /= m;
        return detail::make_op({n}, std::move(out), {a},
                               [m, n](const std::vector<double>& g,
                                      const std::vector<std::vector<double>*>& pg) {
                                   if (!pg[0]) return;
                                   for (int i = 0; i < m; ++i)
                                       for (int j = 0; j < n; ++j)
                                           (*pg[0])[static_cast<size_t>(i) * n + j] += g[j] / m;
                               });
    }
    std::vector<double> out(m, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out[i] += ad[static_cast<size_t>(i) * n + j];
        out[i] /= n;
    }
    return detail::make_op({m}, std::move(out), {a},
                           [m, n](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < n; ++j)
                                       (*pg[0])[static_cast<size_t>(i) * n + j] += g[i] / n;
                           });
}

/// Population variance over one axis of a rank-2 tensor.
inline Tensor variance(const Tensor& a, int axis) {
    Tensor mu = mean(a, axis);
    Tensor centered;
    if (axis == 0) {
        centered = sub(a, mu);  // row broadcast
    } else {
        const int m = a.shape()[0], n = a.shape()[1];
        std::vector<Tensor> cols(n, reshape(mu, {m, 1}));
        centered = sub(a, concat(cols, 1));
    }
    return mean(multiply(centered, centered), axis);
}

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = std::exp(a.data()[i]);
    std::vector<double> saved = out;
    return detail::make_op(a.shape(), std::move(out), {a},
                           [saved](const std::vector<double>& g,
                                   const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < saved.size(); ++i)
                                   (*pg[0])[i] += g[i] * saved[i];
                           });
}

inline Tensor log(const Tensor& a) {
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) {
        check(ad[i] > 0.0, "log: input must be positive, got " + std::to_string(ad[i]));
        out[i] = std::log(ad[i]);
    }
    return detail::make_op(a.shape(), std::move(out), {a},
                           [ad](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < ad.size(); ++i)
                                   (*pg[0])[i] += g[i] / ad[i];
                           });
}

/// |x| with subgradient 0 at x = 0.
inline Tensor abs(const Tensor& a) {
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = std::abs(ad[i]);
    return detail::make_op(a.shape(), std::move(out), {a},
                           [ad](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < ad.size(); ++i) {
                                   const double s = ad[i] > 0 ? 1.0 : (ad[i] < 0 ? -1.0 : 0.0);
                                   (*pg[0])[i] += g[i] * s;
                               }
                           });
}

inline Tensor relu(const Tensor& a) {
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = ad[i] > 0 ? ad[i] : 0.0;
    return detail::make_op(a.shape(), std::move(out), {a},
                           [ad](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < ad.size(); ++i)
                                   if (ad[i] > 0) (*pg[0])[i] += g[i];
                           });
}

namespace detail {

inline void softmax_lane(const double* x, double* y, int n, int stride) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[static_cast<size_t>(i) * stride]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        y[static_cast<size_t>(i) * stride] = std::exp(x[static_cast<size_t>(i) * stride] - mx);
        sum += y[static_cast<size_t>(i) * stride];
    }
    for (int i = 0; i < n; ++i) y[static_cast<size_t>(i) * stride] /= sum;
}

}  // namespace detail

/// Softmax along the given axis. Rank-1 tensors use axis 0.
inline Tensor softmax(const Tensor& a, int axis = -1) {
    const int rank = a.rank();
    if (axis < 0) axis = rank - 1;
    check(axis >= 0 && axis < rank, "softmax: axis out of range");
    check(a.shape()[axis] > 0, "softmax: empty axis");
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    int lanes, n, stride, lane_step;
    if (rank == 1) {
        lanes = 1, n = a.shape()[0], stride = 1, lane_step = 0;
    } else {
        check(rank == 2, "softmax: requires rank-1 or rank-2");
        const int m = a.shape()[0], c = a.shape()[1];
        if (axis == 1) lanes = m, n = c, stride = 1, lane_step = c;
        else lanes = c, n = m, stride = c, lane_step = 1;
    }
    for (int l = 0; l < lanes; ++l)
        detail::softmax_lane(&ad[static_cast<size_t>(l) * lane_step],
                             &out[static_cast<size_t>(l) * lane_step], n, stride);
    std::vector<double> saved = out;
    return detail::make_op(
        a.shape(), std::move(out), {a},
        [saved, lanes, n, stride, lane_step](const std::vector<double>& g,
                                             const std::vector<std::vector<double>*>& pg) {
            if (!pg[0]) return;
            for (int l = 0; l < lanes; ++l) {
                const double* s = &saved[static_cast<size_t>(l) * lane_step];
                const double* gl = &g[static_cast<size_t>(l) * lane_step];
                double dot = 0.0;
                for (int i = 0; i < n; ++i)
                    dot += gl[static_cast<size_t>(i) * stride] * s[static_cast<size_t>(i) * stride];
                double* dl = &(*pg[0])[static_cast<size_t>(l) * lane_step];
                for (int i = 0; i < n; ++i)
                    dl[static_cast<size_t>(i) * stride] +=
                        s[static_cast<size_t>(i) * stride] * (gl[static_cast<size_t>(i) * stride] - dot);
            }
        });
}

/// Row-wise log-softmax of a rank-2 tensor.
inline Tensor log_softmax(const Tensor& a) {
    check(a.rank() == 2, "log_softmax: requires rank-2");
    const int m = a.shape()[0], n = a.shape()[1];
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    std::vector<double> probs(a.size());
    for (int i = 0; i < m; ++i) {
        const double* x = &ad[static_cast<size_t>(i) * n];
        double mx = *std::max_element(x, x + n);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < n; ++j) {
            out[static_cast<size_t>(i) * n + j] = x[j] - lse;
            probs[static_cast<size_t>(i) * n + j] = std::exp(x[j] - lse);
        }
    }
    return detail::make_op({m, n}, std::move(out), {a},
                           [probs, m, n](const std::vector<double>& g,
                                         const std::vector<std::vector<double>*>& pg) {
                               if (!pg[0]) return;
                               for (int i = 0; i < m; ++i) {
                                   double gsum = 0.0;
                                   for (int j = 0; j < n; ++j) gsum += g[static_cast<size_t>(i) * n + j];
                                   for (int j = 0; j < n; ++j)
                                       (*pg[0])[static_cast<size_t>(i) * n + j] +=
                                           g[static_cast<size_t>(i) * n + j] -
                                           probs[static_cast<size_t>(i) * n + j] * gsum;
                               }
                           });
}

/// Row-wise normalization to zero mean, unit variance (population, eps 1e-5).
inline Tensor layer_norm(const Tensor& a) {
    check(a.rank() == 2, "layer_norm: requires rank-2");
    constexpr double eps = 1e-5;
    const int m = a.shape()[0], n = a.shape()[1];
    const auto& ad = a.data();
    std::vector<double> out(a.size());
    std::vector<double> inv_std(m);
    for (int i = 0; i < m; ++i) {
        const double* x = &ad[static_cast<size_t>(i) * n];
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += x[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= n;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = (x[j] - mu) * inv_std[i];
    }
    std::vector<double> saved = out;
    return detail::make_op(
        {m, n}, std::move(out), {a},
        [saved, inv_std, m, n](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& pg) {
            if (!pg[0]) return;
            for (int i = 0; i < m; ++i) {
                const double* y = &saved[static_cast<size_t>(i) * n];
                const double* gl = &g[static_cast<size_t>(i) * n];
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < n; ++j) {
                    gmean += gl[j];
                    gymean += gl[j] * y[j];
                }
                gmean /= n;
                gymean /= n;
                for (int j = 0; j < n; ++j)
                    (*pg[0])[static_cast<size_t>(i) * n + j] +=
                        inv_std[i] * (gl[j] - gmean - y[j] * gymean);
            }
        });
}

/// Multi-head scaled dot-product attention over (frames, d) inputs.
/// Columns are split into `heads` equal slices; per head,
/// softmax(q k^T / sqrt(d_head)) v, results concatenated back.
inline Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           int heads,
                                           std::vector<std::vector<double>>* attn_out = nullptr) {
    check(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
          "attention: q, k, v must be rank-2");
    const int d = q.shape()[1];
    check(k.shape()[1] == d && v.shape()[1] == d, "attention: q, k, v widths must agree");
    check(k.shape()[0] == v.shape()[0], "attention: k and v must have equal frame counts");
    check(heads > 0 && d % heads == 0,
          "attention: width " + std::to_string(d) + " not divisible by " +
              std::to_string(heads) + " heads");
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (attn_out) attn_out->clear();
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor weights = softmax(multiply(matmul(qh, transpose(kh)), scale), 1);
        if (attn_out) attn_out->push_back(weights.data());
        outs.push_back(matmul(weights, vh));
    }
    return concat(outs, 1);
}

/// 1-d convolution over (length, in_channels) input with weight laid out as
/// (out_channels, in_channels * kernel) and per-channel bias. The output has
/// floor(length / stride) frames; the input tail is zero-padded or dropped to
/// make that exact.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int kernel, int stride) {
    check(x.rank() == 2, "conv1d: input must be (length, channels)");
    const int len = x.shape()[0], cin = x.shape()[1];
    check(w.rank() == 2 && w.shape()[1] == cin * kernel,
          "conv1d: weight must be (out_channels, in_channels*kernel), got " +
              shape_str(w.shape()));
    const int cout = w.shape()[0];
    check(b.rank() == 1 && b.shape()[0] == cout, "conv1d: bias must be (out_channels)");
    check(stride > 0 && kernel > 0, "conv1d: kernel and stride must be positive");
    const int frames = len / stride;
    check(frames > 0, "conv1d: input of length " + std::to_string(len) +
                          " too short for stride " + std::to_string(stride));
    const auto& xd = x.data();
    const auto& wd = w.data();
    const auto& bd = b.data();
    std::vector<double> out(static_cast<size_t>(frames) * cout);
    for (int t = 0; t < frames; ++t)
        for (int o = 0; o < cout; ++o) {
            double acc = bd[o];
            const double* wrow = &wd[static_cast<size_t>(o) * cin * kernel];
            for (int i = 0; i < cin; ++i)
                for (int kk = 0; kk < kernel; ++kk) {
                    const int pos = t * stride + kk;
                    if (pos < len) acc += xd[static_cast<size_t>(pos) * cin + i] * wrow[i * kernel + kk];
                }
            out[static_cast<size_t>(t) * cout + o] = acc;
        }
    return detail::make_op(
        {frames, cout}, std::move(out), {x, w, b},
        [xd, wd, len, cin, cout, kernel, stride, frames](
            const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
            for (int t = 0; t < frames; ++t)
                for (int o = 0; o < cout; ++o) {
                    const double gv = g[static_cast<size_t>(t) * cout + o];
                    if (pg[2]) (*pg[2])[o] += gv;
                    const double* wrow = &wd[static_cast<size_t>(o) * cin * kernel];
                    for (int i = 0; i < cin; ++i)
                        for (int kk = 0; kk < kernel; ++kk) {
                            const int pos = t * stride + kk;
                            if (pos >= len) continue;
                            if (pg[0])
                                (*pg[0])[static_cast<size_t>(pos) * cin + i] += gv * wrow[i * kernel + kk];
                            if (pg[1])
                                (*pg[1])[static_cast<size_t>(o) * cin * kernel + i * kernel + kk] +=
                                    gv * xd[static_cast<size_t>(pos) * cin + i];
                        }
                }
        });
}

}  // namespace vburst
