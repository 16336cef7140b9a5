#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vburst/gradcheck.hpp"
#include "vburst/metrics.hpp"
#include "vburst/ops.hpp"
#include "vburst/optimizer.hpp"
#include "vburst/tensor.hpp"

using namespace vburst;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, bool requires_grad = false,
                     double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.size(), 6);
    EXPECT_EQ(t.at(1, 2), 6.0);
    EXPECT_THROW(Tensor::from_data({2, 3}, {1, 2, 3}), std::invalid_argument);
    EXPECT_THROW(Tensor::zeros({0, 3}), std::invalid_argument);
}

TEST(Ops, ConcatShapes) {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3, 64}, rng);
    Tensor b = random_tensor({3, 8}, rng);
    Tensor c = concat({a, b}, 1);
    EXPECT_EQ(c.shape(), (std::vector<int>{3, 72}));
    EXPECT_EQ(c.at(0, 63), a.at(0, 63));
    EXPECT_EQ(c.at(0, 64), b.at(0, 0));
    EXPECT_EQ(c.at(2, 71), b.at(2, 7));
}

TEST(Ops, SoftmaxUniformCase) {
    Tensor z = Tensor::zeros({8});
    Tensor s = softmax(z, 0);
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(s.at(i), 0.125);
}

TEST(Ops, MatmulShapeMismatch) {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    EXPECT_THROW(matmul(a, b), std::invalid_argument);
}

TEST(Ops, SoftmaxRowsSumToOne) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor({5, 9}, rng, false, -8.0, 8.0);
        Tensor s = softmax(x, 1);
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 9; ++c) sum += s.at(r, c);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(Ops, LayerNormMoments) {
    std::mt19937_64 rng(4);
    Tensor x = random_tensor({7, 33}, rng, false, -5.0, 5.0);
    Tensor y = layer_norm(x);
    for (int r = 0; r < 7; ++r) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < 33; ++c) mean += y.at(r, c);
        mean /= 33;
        for (int c = 0; c < 33; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        var /= 33;
        EXPECT_LT(std::abs(mean), 1e-7);
        EXPECT_NEAR(var, 1.0, 1e-5);
    }
}

TEST(Ops, ForwardOpsDoNotMutateOperands) {
    std::mt19937_64 rng(5);
    Tensor a = random_tensor({4, 4}, rng, true);
    Tensor b = random_tensor({4, 4}, rng, true);
    const std::vector<double> a_before = a.data();
    const std::vector<double> b_before = b.data();
    (void)add(a, b);
    (void)multiply(a, b);
    (void)matmul(a, b);
    (void)softmax(a, 1);
    (void)layer_norm(a);
    (void)relu(a);
    (void)mean(a, 0);
    EXPECT_EQ(a.data(), a_before);
    EXPECT_EQ(b.data(), b_before);
}

TEST(Backward, QuadraticGradient) {
    Tensor w = Tensor::from_data({3}, {1, 2, 3}, true);
    sum(multiply(w, w)).backward();
    EXPECT_EQ(w.grad(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, RepeatedCallsAccumulate) {
    Tensor w = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor root = sum(multiply(w, w));
    root.backward();
    root.backward();
    EXPECT_EQ(w.grad(), (std::vector<double>{4, 8, 12}));
}

TEST(Backward, NonScalarRootRejected) {
    Tensor w = Tensor::from_data({2}, {1, 2}, true);
    EXPECT_THROW(multiply(w, w).backward(), std::invalid_argument);
}

TEST(Backward, CccLossMatchesFiniteDifferences) {
    GradChecker checker(11, 5);
    auto value = [](const GradChecker::Inputs& raw) {
        Tensor pred = Tensor::from_data({8, 10}, raw[0]);
        Tensor target = Tensor::from_data({8, 10}, raw[1]);
        return ccc_loss(pred, target).item();
    };
    auto analytic = [](const GradChecker::Inputs& raw) {
        Tensor pred = Tensor::from_data({8, 10}, raw[0], true);
        Tensor target = Tensor::from_data({8, 10}, raw[1], true);
        ccc_loss(pred, target).backward();
        return GradChecker::Inputs{pred.grad(), target.grad()};
    };
    auto build = [&checker] {
        return GradChecker::Inputs{checker.uniform_vec(80, 0.0, 1.0),
                                   checker.uniform_vec(80, 0.0, 1.0)};
    };
    const GradCheckRow row = checker.run_case("ccc_loss", build, value, analytic);
    EXPECT_TRUE(row.pass) << "max rel err " << row.max_rel_err;
}

TEST(GradCheck, AllOpsPass) {
    for (const auto& row : run_gradcheck(7, 20))
        EXPECT_TRUE(row.pass) << row.name << " max rel err " << row.max_rel_err;
}

TEST(Optimizer, ZeroGradIsFixedPoint) {
    Parameter p{"p", Tensor::from_data({2}, {1.5, -0.5}, true), ParamGroup::head};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, {1e-3, 1e-3, 1e-3}, cfg);
    p.tensor.zero_grad();
    opt.step();
    EXPECT_EQ(p.tensor.data(), (std::vector<double>{1.5, -0.5}));
}

TEST(Optimizer, SingleStepHandEvaluation) {
    Parameter p{"w", Tensor::scalar(1.0, true), ParamGroup::head};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, {1e-3, 1e-3, 1e-3}, cfg);
    sum(p.tensor).backward();  // grad 1
    opt.step();
    // m_hat = 1, v_hat = 1: w = 1 - lr / (1 + eps)
    EXPECT_NEAR(p.tensor.item(), 1.0 - 1e-3, 1e-8);
    EXPECT_EQ(opt.step_count(), 1);
}

TEST(Optimizer, GroupRatesScaleUpdates) {
    Parameter pb{"b", Tensor::scalar(0.0, true), ParamGroup::backbone};
    Parameter ph{"h", Tensor::scalar(0.0, true), ParamGroup::head};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({pb, ph}, {1e-5, 1e-3, 1e-3}, cfg);
    multiply(add(sum(pb.tensor), sum(ph.tensor)), 0.7).backward();  // grads 0.7 each
    opt.step();
    EXPECT_NEAR(ph.tensor.item() / pb.tensor.item(), 100.0, 1e-6);
}

TEST(Optimizer, MissingGradNamesParameter) {
    Parameter p{"heads.culture.w1", Tensor::scalar(1.0, true), ParamGroup::head};
    AdamW opt({p}, {1e-3, 1e-3, 1e-3});
    try {
        opt.step();
        FAIL() << "expected missing-grad error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("heads.culture.w1"), std::string::npos);
    }
}

TEST(Optimizer, GradsZeroedAfterStep) {
    Parameter p{"p", Tensor::scalar(2.0, true), ParamGroup::head};
    AdamW opt({p}, {1e-3, 1e-3, 1e-3});
    multiply(sum(p.tensor), 3.0).backward();
    opt.step();
    EXPECT_EQ(p.tensor.grad()[0], 0.0);
}

TEST(Ops, DivideByZeroRejected) {
    Tensor a = Tensor::scalar(1.0);
    EXPECT_THROW(divide(a, Tensor::scalar(0.0)), std::invalid_argument);
}

TEST(Ops, LogDomainChecked) {
    EXPECT_THROW(log(Tensor::scalar(-1.0)), std::invalid_argument);
    EXPECT_THROW(log(Tensor::scalar(0.0)), std::invalid_argument);
}

TEST(Ops, RowBroadcastArithmetic) {
    Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row = Tensor::from_data({3}, {10, 20, 30});
    Tensor out = add(m, row);
    EXPECT_EQ(out.data(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
}

TEST(Ops, AttentionWeightsRowSumToOne) {
    std::mt19937_64 rng(6);
    Tensor q = random_tensor({5, 8}, rng);
    Tensor k = random_tensor({7, 8}, rng);
    Tensor v = random_tensor({7, 8}, rng);
    std::vector<std::vector<double>> attn;
    (void)scaled_dot_product_attention(q, k, v, 2, &attn);
    ASSERT_EQ(attn.size(), 2u);
    for (const auto& head : attn) {
        ASSERT_EQ(head.size(), 5u * 7u);
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 7; ++c) sum += head[r * 7 + c];
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(Ops, Conv1dFrameConvention) {
    std::mt19937_64 rng(8);
    Tensor x = random_tensor({4000, 1}, rng);
    Tensor w = random_tensor({4, 10}, rng);
    Tensor b = Tensor::zeros({4});
    Tensor out = conv1d(x, w, b, 10, 8);
    EXPECT_EQ(out.shape(), (std::vector<int>{500, 4}));
}
