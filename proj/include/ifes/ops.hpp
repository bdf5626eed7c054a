#pragma once

#include "ifes/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ifes {

/// Normalised window x window Gaussian kernel, row-major.
std::vector<double> gaussian_kernel(double variance, int window);

/// Per-channel Gaussian smoothing with zero padding; at borders the kernel is
/// renormalised over its in-bounds taps so every output is a convex
/// combination of inputs.
Tensor gaussian_filter2d(const Tensor& map, double variance, int window);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-3;  // L2 term added to the gradient
};

/// A named parameter block and its gradient.
struct ParamBlock {
    std::string name;
    std::span<double> values;
    std::span<const double> grads;
};

struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    AdamState() = default;
    explicit AdamState(AdamOptions opts) : options(opts) {}
};

/// One Adam update of every block. Moments are allocated lazily on the first
/// step. Throws TrainingError naming the block if any gradient is not finite;
/// in that case no parameter is modified.
void adam_step(std::span<const ParamBlock> blocks, AdamState& state);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct FiniteDiffOptions {
    double step = 1e-6;
    /// Coordinates to probe; 0 means every coordinate.
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    /// Denominator floor for the relative error.
    double floor = 1e-12;
    /// Extra step sizes tried for a coordinate whose error at `step` exceeds
    /// `retry_above`; the smallest error is kept. Piecewise-linear losses
    /// (ReLU, |x|) can put a kink inside [x-h, x+h]; a genuinely wrong
    /// gradient fails at every step size.
    std::vector<double> retry_steps;
    double retry_above = 1e-5;
};

struct FiniteDiffReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    bool finite = true;
    std::size_t nonfinite_index = 0;
};

using LossFn = std::function<double(std::span<const double>)>;

/// Compares `analytic` against central differences of `loss` around
/// `params`. Relative error is |a - n| / max(|a|, |n|, floor).
FiniteDiffReport finite_diff_check(const LossFn& loss, std::span<const double> analytic,
                                   std::span<const double> params, const FiniteDiffOptions& options = {});

}  // namespace ifes
