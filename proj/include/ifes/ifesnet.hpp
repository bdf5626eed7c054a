#pragma once

#include "ifes/losses.hpp"
#include "ifes/network.hpp"
#include "ifes/ops.hpp"

#include <optional>
#include <vector>

namespace ifes {

/// Features of one interaction stage: the fused feature F_n that enters it
/// and the branch features F'_n (infrared) and F''_n (visible).
struct StageState {
    int index = 0;
    Tensor fused;
    Tensor infrared;
    Tensor visible;
};

using ForwardCache = Branches<ConvCache>;

struct ForwardOutput : FusionOutputs {
    Tensor input_ir;
    Tensor input_vis;
    std::vector<StageState> stages;
    ForwardCache cache;
};

/// Result of a standalone stage: the triple plus F_{n+1} when n < stages.
struct StageResult {
    StageState state;
    std::optional<Tensor> next_fused;
};

/// One bidirectional stage: F'_n and F''_n from F_n through the two branch
/// convs (separate weights), then F_{n+1} = C^2(Cat(F'_n, F''_n)).
StageResult ifem_stage(const Tensor& fused, const Network& net, int n);

/// Gradient of a scalar through ifem_stage, given dL/dF'_n, dL/dF''_n and
/// dL/dF_{n+1} (ignored when n is the last stage). Parameter gradients of the
/// layers touched are accumulated into `grads`; returns dL/dF_n.
Tensor ifem_stage_backward(const Tensor& fused, const Network& net, int n, const Tensor& grad_infrared,
                           const Tensor& grad_visible, const Tensor* grad_next, NetworkGrads& grads);

/// Full forward pass on a registered single-channel pair.
ForwardOutput forward(const Network& net, const Tensor& ir, const Tensor& vis);

/// Parameter gradients of a scalar whose derivatives with respect to the
/// outputs are `grads`. dL/dI_f is pushed into both weight maps.
NetworkGrads backward(const Network& net, const ForwardOutput& out, const FusionOutputs& grads);

/// Sum of W_i (x) I_i; with `smooth` both maps are Gaussian filtered first
/// (variance 2, 5x5 window).
Tensor fuse_with_weight_maps(const Tensor& w1, const Tensor& w2, const Tensor& i1, const Tensor& i2,
                             bool smooth = false);

inline constexpr double kSmoothVariance = 2.0;
inline constexpr int kSmoothWindow = 5;

struct Trainer {
    Network net;
    AdamState optimizer;
    LossConfig loss;
};

/// Named parameter/gradient blocks in declaration order, for the optimiser.
std::vector<ParamBlock> param_blocks(Network& net, const NetworkGrads& grads);

/// Loss of the current parameters and its full gradient.
std::pair<LossTerms, NetworkGrads> loss_and_grads(const Network& net, const Tensor& ir, const Tensor& vis,
                                                  const LossConfig& cfg);

/// Forward, total loss, backward through all branches, one Adam step.
/// Throws TrainingError naming the first non-finite loss term.
LossTerms train_step(Trainer& trainer, const Tensor& ir, const Tensor& vis);

}  // namespace ifes
