#pragma once

#include <cmath>
#include <vector>

#include "vburst/ops.hpp"
#include "vburst/tensor.hpp"

namespace vburst {

/// Population (1/N) first and second moments of a paired sample.
struct MomentSummary {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov = 0.0;
};

inline MomentSummary moments(const std::vector<double>& x, const std::vector<double>& y) {
    check(x.size() == y.size(), "moments: length mismatch");
    check(x.size() >= 2, "moments: need at least 2 points");
    const double n = static_cast<double>(x.size());
    MomentSummary m;
    for (size_t i = 0; i < x.size(); ++i) {
        m.mean_x += x[i];
        m.mean_y += y[i];
    }
    m.mean_x /= n;
    m.mean_y /= n;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - m.mean_x;
        const double dy = y[i] - m.mean_y;
        m.var_x += dx * dx;
        m.var_y += dy * dy;
        m.cov += dx * dy;
    }
    m.var_x /= n;
    m.var_y /= n;
    m.cov /= n;
    return m;
}

/// Concordance correlation: 2 cov / (var_x + var_y + (mean_x - mean_y)^2).
inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
    MomentSummary m = moments(x, y);
    const double md = m.mean_x - m.mean_y;
    const double denom = m.var_x + m.var_y + md * md;
    check(denom > 0.0, "ccc: undefined denominator (both inputs constant with equal means)");
    return 2.0 * m.cov / denom;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    MomentSummary m = moments(x, y);
    check(m.var_x > 0.0 && m.var_y > 0.0, "pearson: undefined for zero-variance input");
    return m.cov / std::sqrt(m.var_x * m.var_y);
}

struct ConfusionMatrix {
    int classes = 0;
    std::vector<long> counts;  // rows = true class, cols = predicted

    long at(int t, int p) const { return counts[static_cast<size_t>(t) * classes + p]; }
    long row_sum(int t) const {
        long s = 0;
        for (int p = 0; p < classes; ++p) s += at(t, p);
        return s;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int classes) {
    check(truth.size() == pred.size(), "confusion: length mismatch");
    check(classes > 0, "confusion: class count must be positive");
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.counts.assign(static_cast<size_t>(classes) * classes, 0);
    for (size_t i = 0; i < truth.size(); ++i) {
        check(0 <= truth[i] && truth[i] < classes, "confusion: true label out of range");
        check(0 <= pred[i] && pred[i] < classes, "confusion: predicted label out of range");
        ++cm.counts[static_cast<size_t>(truth[i]) * classes + pred[i]];
    }
    return cm;
}

struct UarResult {
    double value = 0.0;
    std::vector<int> absent_classes;  // classes missing from the true labels
};

/// Unweighted mean of per-class recalls. Classes absent from the true labels
/// are skipped and reported back rather than treated as zero recall.
inline UarResult uar(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
    ConfusionMatrix cm = confusion(truth, pred, classes);
    UarResult r;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        const long support = cm.row_sum(c);
        if (support == 0) {
            r.absent_classes.push_back(c);
            continue;
        }
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(support);
        ++present;
    }
    check(present > 0, "uar: no class present in true labels");
    r.value = sum / present;
    return r;
}

/// Mean over columns of (1 - CCC_col), differentiable w.r.t. pred.
inline Tensor ccc_loss(const Tensor& pred, const Tensor& target) {
    check(pred.rank() == 2 && target.rank() == 2, "ccc_loss: inputs must be rank-2");
    check(pred.shape() == target.shape(),
          "ccc_loss: shape mismatch, " + shape_str(pred.shape()) + " vs " +
              shape_str(target.shape()));
    check(pred.shape()[0] >= 2, "ccc_loss: need at least 2 rows");

    Tensor mx = mean(pred, 0);                       // (D,)
    Tensor my = mean(target, 0);                     // (D,)
    Tensor cx = sub(pred, mx);                       // centered, row broadcast
    Tensor cy = sub(target, my);
    Tensor vx = mean(multiply(cx, cx), 0);           // population variances
    Tensor vy = mean(multiply(cy, cy), 0);
    Tensor cov = mean(multiply(cx, cy), 0);
    Tensor md = sub(mx, my);
    Tensor denom = add(add(vx, vy), multiply(md, md));
    for (double v : denom.data())
        check(v > 0.0, "ccc_loss: undefined denominator (constant column pair with equal means)");
    Tensor ccc_cols = divide(multiply(cov, 2.0), denom);
    return mean(sub(1.0, ccc_cols));
}

/// Mean negative log-probability of the true class, differentiable.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check(logits.rank() == 2, "cross_entropy: logits must be (rows, classes)");
    check(static_cast<int>(labels.size()) == logits.shape()[0],
          "cross_entropy: one label per row required");
    Tensor logp = log_softmax(logits);
    return neg(mean(pick(logp, labels)));
}

}  // namespace vburst
