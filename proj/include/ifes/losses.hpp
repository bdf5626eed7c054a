#pragma once

#include "ifes/tensor.hpp"

#include <string_view>

namespace ifes {

enum class ReconLoss { MSE, MAE };

std::string_view to_string(ReconLoss r) noexcept;
ReconLoss parse_recon_loss(std::string_view name);

struct LossConfig {
    double tau = 1.0;          // target for W_1 + W_2
    double xi = 1.7;           // contrast gain of the SSIM target
    double ssim_const = 9e-4;  // (0.03)^2 at unit dynamic range
    /// Side of the non-overlapping statistics windows; edge windows are
    /// clipped to the image. 0 selects a single global window per plane.
    std::size_t window = 16;
    ReconLoss recon = ReconLoss::MSE;
};

/// Throws ConfigError on non-positive tau, xi or ssim_const.
void validate(const LossConfig& cfg);

struct ScalarGrad {
    double value = 0.0;
    Tensor grad;
};

/// Mean of squared differences; gradient 2(x - target)/N.
ScalarGrad mse_loss(const Tensor& x, const Tensor& target);

/// Mean absolute difference; subgradient sign(x - target)/N with sign(0) = 0.
ScalarGrad mae_loss(const Tensor& x, const Tensor& target);

/// Expected fusion result: per window, xi * max contrast * normalised sum of
/// the two structures. A window constant in a source contributes no structure
/// from that source; if both are constant, or the structures cancel exactly,
/// the window is zero.
Tensor build_ssim_target(const Tensor& i1, const Tensor& i2, const LossConfig& cfg);

struct SsimResult {
    double value = 0.0;
    Tensor grad_a;
    Tensor grad_b;
};

/// Mean over windows of (2 cov(a,b) + C) / (var(a) + var(b) + C) using
/// population statistics, with gradients with respect to both arguments.
SsimResult ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg);

/// 1 - ssim(target, fused); the target is treated as a constant.
ScalarGrad fusion_loss(const Tensor& fused, const Tensor& i1, const Tensor& i2, const LossConfig& cfg);

struct WeightMapLoss {
    double value = 0.0;
    Tensor grad_w1;
    Tensor grad_w2;
};

/// Pixel mean of |tau - W_1 - W_2|; the subgradient is 0 at the kink.
WeightMapLoss weight_map_loss(const Tensor& w1, const Tensor& w2, const LossConfig& cfg);

/// Network outputs the objective depends on.
struct FusionOutputs {
    Tensor fused;
    Tensor weight_ir;
    Tensor weight_vis;
    Tensor recon_ir;
    Tensor recon_vis;
};

struct LossTerms {
    double infrared = 0.0;  // L_I
    double visible = 0.0;   // L_V
    double fusion = 0.0;    // L_F
    double weight = 0.0;    // L_M
    double total = 0.0;
    /// d total / d each output. `fused` is not folded into the weight maps.
    FusionOutputs grads;
};

LossTerms total_loss(const FusionOutputs& out, const Tensor& i1, const Tensor& i2, const LossConfig& cfg);

}  // namespace ifes
