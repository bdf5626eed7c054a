#pragma once

#include "ifes/tensor.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ifes {

enum class Activation { ReLU, Sigmoid, Linear };

std::string_view to_string(Activation act) noexcept;

/// 3x3, stride 1, zero padding 1: spatial size is preserved.
struct ConvLayer {
    static constexpr std::size_t kernel = 3;

    Tensor weights;             // (out_ch, in_ch, 3, 3)
    std::vector<double> bias;   // out_ch
    Activation activation = Activation::Linear;

    ConvLayer() = default;
    ConvLayer(std::size_t in_ch, std::size_t out_ch, Activation act);

    std::size_t in_channels() const noexcept { return weights.channels(); }
    std::size_t out_channels() const noexcept { return weights.batch(); }
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
};

/// What the backward pass needs from the forward pass.
struct ConvCache {
    std::optional<Tensor> input;
    Tensor pre_activation;
    Tensor output;

    bool valid() const noexcept { return input.has_value(); }
};

struct ConvGrads {
    Tensor input;
    Tensor weights;
    std::vector<double> bias;
};

double activate(Activation act, double pre) noexcept;

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer);
Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer, ConvCache& cache);

/// Exact gradients of conv2d_forward. Throws UsageError if `cache` was never
/// filled by a forward call.
ConvGrads conv2d_backward(const ConvCache& cache, const ConvLayer& layer, const Tensor& grad_output);

/// Same as above, recomputing the cache from `input`.
ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_output);

}  // namespace ifes
