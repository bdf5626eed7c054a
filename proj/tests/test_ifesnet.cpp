#include "ifes/error.hpp"
#include "ifes/ifesnet.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace ifes {
namespace {

Tensor external_fusion(const ForwardOutput& out) {
    Tensor f(out.fused.shape());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = out.weight_ir[i] * out.input_ir[i] + out.weight_vis[i] * out.input_vis[i];
    }
    return f;
}

TEST(ForwardTest, ZeroPairWithZeroBiasesGivesZeroOutputs) {
    const Network net = build_network(make_config(3, 8));
    const Tensor zero(Shape{1, 1, 6, 6});
    const ForwardOutput out = forward(net, zero, zero);
    for (double v : out.fused.data()) EXPECT_EQ(v, 0.0);
    for (double v : out.recon_ir.data()) EXPECT_EQ(v, 0.0);
    for (double v : out.recon_vis.data()) EXPECT_EQ(v, 0.0);
    for (double v : out.weight_ir.data()) EXPECT_EQ(v, 0.5);
}

TEST(ForwardTest, FusionIdentityHoldsBitwiseForAllVariants) {
    std::mt19937_64 rng(1);
    for (Variant v : {Variant::Full, Variant::NoIFEM, Variant::HierConnect}) {
        for (int stages = 1; stages <= 4; ++stages) {
            const Network net = build_network(make_config(stages, 16, v, rng()));
            const Tensor ir = test::random_tensor({1, 1, 7, 5}, rng, 0.0, 1.0);
            const Tensor vis = test::random_tensor({1, 1, 7, 5}, rng, 0.0, 1.0);
            const ForwardOutput out = forward(net, ir, vis);
            EXPECT_EQ(out.fused.storage(), external_fusion(out).storage()) << to_string(v) << stages;
            EXPECT_EQ(out.stages.size(), static_cast<std::size_t>(stages));
            for (double w : out.weight_ir.data()) {
                EXPECT_GE(w, 0.0);
                EXPECT_LE(w, 1.0);
            }
            for (const StageState& s : out.stages) {
                EXPECT_EQ(s.infrared.shape(), s.visible.shape());
                EXPECT_EQ(s.fused.height(), 7u);
                EXPECT_EQ(s.infrared.width(), 5u);
            }
            EXPECT_EQ(out.recon_ir.shape(), ir.shape());
        }
    }
}

TEST(ForwardTest, RejectsUnregisteredOrMultichannelInput) {
    const Network net = build_network(make_config(2, 16));
    EXPECT_THROW(forward(net, Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 4, 5})), DimensionError);
    EXPECT_THROW(forward(net, Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{1, 2, 4, 4})), DimensionError);
}

TEST(ForwardTest, IsDeterministic) {
    std::mt19937_64 rng(2);
    const Network net = build_network(make_config(3, 8, Variant::Full, 5));
    const Tensor ir = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    EXPECT_EQ(forward(net, ir, vis).fused.storage(), forward(net, ir, vis).fused.storage());
}

TEST(ForwardTest, FullAndNoIfemDiffer) {
    std::mt19937_64 rng(3);
    const Tensor ir = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const ForwardOutput a = forward(build_network(make_config(3, 8, Variant::Full, 9)), ir, vis);
    const ForwardOutput b = forward(build_network(make_config(3, 8, Variant::NoIFEM, 9)), ir, vis);
    EXPECT_NE(a.recon_ir.storage(), b.recon_ir.storage());
}

TEST(IfemStageTest, ZeroFeatureGivesZeroTriple) {
    const Network net = build_network(make_config(3, 8));
    const StageResult r = ifem_stage(Tensor(Shape{1, 8, 4, 4}), net, 1);
    for (const Tensor* t : {&r.state.infrared, &r.state.visible, &*r.next_fused}) {
        for (double v : t->data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(IfemStageTest, DefaultStageTwoShapes) {
    const Network net = build_network(make_config(3, 1));
    const StageResult r = ifem_stage(Tensor(Shape{1, 128, 3, 3}), net, 2);
    EXPECT_EQ(r.state.infrared.channels(), 128u);
    EXPECT_EQ(r.state.visible.channels(), 128u);
    EXPECT_EQ(r.next_fused->channels(), 256u);
    EXPECT_FALSE(ifem_stage(Tensor(Shape{1, 256, 3, 3}), net, 3).next_fused.has_value());
}

TEST(IfemStageTest, MatchesForwardStageFeatures) {
    std::mt19937_64 rng(4);
    const Network net = build_network(make_config(3, 8, Variant::Full, 3));
    const Tensor ir = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const ForwardOutput out = forward(net, ir, vis);
    for (int n = 1; n <= 3; ++n) {
        const StageResult r = ifem_stage(out.stages[static_cast<std::size_t>(n) - 1].fused, net, n);
        EXPECT_EQ(r.state.infrared.storage(), out.stages[static_cast<std::size_t>(n) - 1].infrared.storage());
        if (n < 3) {
            EXPECT_EQ(r.next_fused->storage(), out.stages[static_cast<std::size_t>(n)].fused.storage());
        }
    }
}

TEST(IfemStageTest, ChannelMismatchAndRangeErrors) {
    const Network net = build_network(make_config(3, 8));
    EXPECT_THROW(ifem_stage(Tensor(Shape{1, 3, 4, 4}), net, 1), DimensionError);
    EXPECT_THROW(ifem_stage(Tensor(Shape{1, 8, 4, 4}), net, 4), UsageError);
}

TEST(IfemStageTest, JacobianMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    Network net = build_network(make_config(2, 16, Variant::Full, 6));
    net.visit([&](const std::string&, ConvLayer& l) {
        for (double& b : l.bias) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    });
    const Tensor fused = test::random_tensor({1, 4, 5, 5}, rng, 0.0, 1.0);
    const StageResult s = ifem_stage(fused, net, 1);
    const Tensor r1 = test::random_tensor(s.state.infrared.shape(), rng);
    const Tensor r2 = test::random_tensor(s.state.visible.shape(), rng);
    const Tensor r3 = test::random_tensor(s.next_fused->shape(), rng);
    NetworkGrads grads = zero_grads(net);
    const Tensor d = ifem_stage_backward(fused, net, 1, r1, r2, &r3, grads);
    const LossFn loss = [&](std::span<const double> p) {
        const StageResult r = ifem_stage(test::from_vector(fused.shape(), p), net, 1);
        return test::dot(r.state.infrared, r1) + test::dot(r.state.visible, r2) + test::dot(*r.next_fused, r3);
    };
    FiniteDiffOptions o;
    o.retry_steps = {1e-5, 1e-7};
    EXPECT_LT(finite_diff_check(loss, d.data(), fused.data(), o).max_relative_error, 1e-5);
}

double total_of(const Network& net, const Tensor& ir, const Tensor& vis, const LossConfig& cfg) {
    return total_loss(forward(net, ir, vis), ir, vis, cfg).total;
}

class EndToEndGradientTest : public ::testing::TestWithParam<Variant> {};

TEST_P(EndToEndGradientTest, SampledParametersMatchFiniteDifferences) {
    std::mt19937_64 rng(6);
    Network net = build_network(make_config(3, 16, GetParam(), 11));
    net.visit([&](const std::string&, ConvLayer& l) {
        for (double& b : l.bias) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    });
    const Tensor ir = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    LossConfig cfg;
    cfg.window = 4;
    const auto [terms, grads] = loss_and_grads(net, ir, vis, cfg);
    EXPECT_DOUBLE_EQ(terms.total, total_of(net, ir, vis, cfg));
    const std::vector<double> params = flatten_parameters(net);
    const std::vector<double> analytic = flatten_grads(grads);
    ASSERT_EQ(params.size(), analytic.size());
    const LossFn loss = [&](std::span<const double> p) {
        Network copy = net;
        assign_parameters(copy, p);
        return total_of(copy, ir, vis, cfg);
    };
    FiniteDiffOptions o;
    o.samples = 120;
    o.seed = 3;
    o.retry_steps = {1e-5, 1e-4, 1e-7};
    const FiniteDiffReport r = finite_diff_check(loss, analytic, params, o);
    EXPECT_LT(r.max_relative_error, 1e-5) << "worst index " << r.worst_index << " analytic " << r.worst_analytic
                                          << " numeric " << r.worst_numeric;
}

INSTANTIATE_TEST_SUITE_P(Variants, EndToEndGradientTest,
                         ::testing::Values(Variant::Full, Variant::NoIFEM, Variant::HierConnect),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(FuseWithWeightMapsTest, SelectorReturnsFirstSourceExactly) {
    std::mt19937_64 rng(7);
    const Tensor i1 = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const Tensor i2 = test::random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
    const Tensor one(Shape{1, 1, 6, 6}, 1.0);
    const Tensor zero(Shape{1, 1, 6, 6}, 0.0);
    EXPECT_EQ(fuse_with_weight_maps(one, zero, i1, i2).storage(), i1.storage());
    EXPECT_EQ(fuse_with_weight_maps(one, zero, i1, i2, true).storage(), i1.storage());
}

TEST(FuseWithWeightMapsTest, ConvexIdentity) {
    std::mt19937_64 rng(8);
    const Tensor i = test::random_tensor({1, 1, 5, 5}, rng, 0.0, 1.0);
    const Tensor half(Shape{1, 1, 5, 5}, 0.5);
    EXPECT_EQ(fuse_with_weight_maps(half, half, i, i).storage(), i.storage());
}

TEST(FuseWithWeightMapsTest, SmoothingConstantMapsChangesNothing) {
    std::mt19937_64 rng(9);
    const Tensor i1 = test::random_tensor({1, 1, 9, 7}, rng, 0.0, 1.0);
    const Tensor i2 = test::random_tensor({1, 1, 9, 7}, rng, 0.0, 1.0);
    const Tensor w1(Shape{1, 1, 9, 7}, 0.25);
    const Tensor w2(Shape{1, 1, 9, 7}, 0.75);
    EXPECT_LT(test::max_abs_diff(fuse_with_weight_maps(w1, w2, i1, i2, true), fuse_with_weight_maps(w1, w2, i1, i2)),
              1e-15);
}

TEST(FuseWithWeightMapsTest, ShapeMismatchRejected) {
    const Tensor a(Shape{1, 1, 4, 4});
    const Tensor b(Shape{1, 1, 4, 3});
    EXPECT_THROW(fuse_with_weight_maps(a, a, a, b), DimensionError);
}

TEST(TrainStepTest, DeterministicTrajectories) {
    std::mt19937_64 rng(10);
    const Tensor ir = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    auto run = [&] {
        Trainer t{build_network(make_config(2, 16, Variant::Full, 4)), AdamState{}, LossConfig{}};
        std::vector<double> totals;
        for (int i = 0; i < 5; ++i) totals.push_back(train_step(t, ir, vis).total);
        return std::make_pair(totals, flatten_parameters(t.net));
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainStepTest, LossDecreasesOnAFixedPair) {
    std::mt19937_64 rng(11);
    const Tensor ir = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    const Tensor vis = test::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    AdamOptions o;
    o.lr = 1e-3;
    Trainer t{build_network(make_config(2, 16, Variant::Full, 4)), AdamState(o), LossConfig{}};
    const double first = train_step(t, ir, vis).total;
    double last = first;
    for (int i = 0; i < 60; ++i) last = train_step(t, ir, vis).total;
    EXPECT_LT(last, first);
}

TEST(TrainStepTest, NonFiniteInputNamesLossTerm) {
    Trainer t{build_network(make_config(1, 16)), AdamState{}, LossConfig{}};
    Tensor ir(Shape{1, 1, 4, 4}, 0.5);
    ir[3] = std::numeric_limits<double>::quiet_NaN();
    const Tensor vis(Shape{1, 1, 4, 4}, 0.5);
    try {
        train_step(t, ir, vis);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("L_"), std::string::npos) << e.what();
    }
}

TEST(ParamBlocksTest, NamesFollowDeclarationOrder) {
    Network net = build_network(make_config(1, 16));
    const NetworkGrads g = zero_grads(net);
    const std::vector<ParamBlock> blocks = param_blocks(net, g);
    ASSERT_FALSE(blocks.empty());
    EXPECT_EQ(blocks.front().name, "ivif.0.weight");
    EXPECT_EQ(blocks[1].name, "ivif.0.bias");
    EXPECT_EQ(blocks.back().name, "recon_vis.2.bias");
}

}  // namespace
}  // namespace ifes
