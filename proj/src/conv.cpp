#include "ifes/conv.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>

namespace ifes {

namespace {

// Innermost loops run over a contiguous row segment; the column bounds clip
// the zero-padded border instead of branching per pixel.
struct RowSpan {
    std::size_t dst_begin;
    std::size_t dst_end;
};

// Tap k in {0,1,2} reads src index dst + k - 1; keep only in-bounds dst.
RowSpan clip(std::size_t extent, std::size_t k) {
    const std::size_t begin = k == 0 ? 1 : 0;
    const std::size_t end = k == 2 ? (extent == 0 ? 0 : extent - 1) : extent;
    return {begin, std::max(begin, end)};
}

void check_input(const Tensor& input, const ConvLayer& layer) {
    if (input.channels() != layer.in_channels()) {
        throw DimensionError("channels", "conv expects " + std::to_string(layer.in_channels()) +
                                             " input channels, got " + input.shape().str());
    }
    if (input.height() == 0) throw DimensionError("height", "conv input " + input.shape().str());
    if (input.width() == 0) throw DimensionError("width", "conv input " + input.shape().str());
}

Tensor correlate(const Tensor& input, const ConvLayer& layer) {
    const std::size_t H = input.height();
    const std::size_t W = input.width();
    const std::size_t Cin = layer.in_channels();
    const std::size_t Cout = layer.out_channels();
    Tensor out(Shape{input.batch(), Cout, H, W});
    // One output row at a time so the row and the three source rows it reads
    // stay in cache across all input channels and taps.
    for (std::size_t n = 0; n < input.batch(); ++n) {
        for (std::size_t o = 0; o < Cout; ++o) {
            double* plane = out.plane(n, o).data();
            for (std::size_t y = 0; y < H; ++y) {
                double* d = plane + y * W;
                std::fill(d, d + W, layer.bias[o]);
                for (std::size_t i = 0; i < Cin; ++i) {
                    const double* src = input.plane(n, i).data();
                    const double* w = layer.weights.data().data() + (o * Cin + i) * 9;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        if ((ky == 0 && y == 0) || (ky == 2 && y + 1 == H)) continue;
                        const double* row = src + (y + ky - 1) * W;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const RowSpan cols = clip(W, kx);
                            const double wk = w[ky * 3 + kx];
                            const double* s = row + kx - 1 + cols.dst_begin;
                            double* dd = d + cols.dst_begin;
                            const std::size_t len = cols.dst_end - cols.dst_begin;
                            for (std::size_t x = 0; x < len; ++x) dd[x] += wk * s[x];
                        }
                    }
                }
            }
        }
    }
    return out;
}

double derivative(Activation act, double pre, double post) noexcept {
    switch (act) {
        case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return post * (1.0 - post);
        case Activation::Linear: return 1.0;
    }
    return 1.0;
}

}  // namespace

std::string_view to_string(Activation act) noexcept {
    switch (act) {
        case Activation::ReLU: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Linear: return "linear";
    }
    return "?";
}

ConvLayer::ConvLayer(std::size_t in_ch, std::size_t out_ch, Activation act)
    : weights(Shape{out_ch, in_ch, kernel, kernel}), bias(out_ch, 0.0), activation(act) {}

double activate(Activation act, double pre) noexcept {
    switch (act) {
        case Activation::ReLU: return pre > 0.0 ? pre : 0.0;
        case Activation::Sigmoid:
            // Branching keeps exp() from overflowing for large |pre|.
            if (pre >= 0.0) return 1.0 / (1.0 + std::exp(-pre));
            else {
                const double e = std::exp(pre);
                return e / (1.0 + e);
            }
        case Activation::Linear: return pre;
    }
    return pre;
}

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer) {
    ConvCache cache;
    return conv2d_forward(input, layer, cache);
}

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer, ConvCache& cache) {
    check_input(input, layer);
    cache.input = input;
    cache.pre_activation = correlate(input, layer);
    cache.output = Tensor(cache.pre_activation.shape());
    for (std::size_t k = 0; k < cache.output.size(); ++k) {
        cache.output[k] = activate(layer.activation, cache.pre_activation[k]);
    }
    return cache.output;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_output) {
    ConvCache cache;
    conv2d_forward(input, layer, cache);
    return conv2d_backward(cache, layer, grad_output);
}

ConvGrads conv2d_backward(const ConvCache& cache, const ConvLayer& layer, const Tensor& grad_output) {
    if (!cache.valid()) throw UsageError("conv2d_backward called without a forward cache");
    require_same_shape(cache.output, grad_output, "conv2d_backward grad_output");
    const Tensor& input = *cache.input;
    check_input(input, layer);

    const std::size_t H = input.height();
    const std::size_t W = input.width();
    const std::size_t Cin = layer.in_channels();
    const std::size_t Cout = layer.out_channels();

    Tensor grad_pre(grad_output.shape());
    for (std::size_t k = 0; k < grad_pre.size(); ++k) {
        grad_pre[k] = grad_output[k] *
                      derivative(layer.activation, cache.pre_activation[k], cache.output[k]);
    }

    ConvGrads g{Tensor(input.shape()), Tensor(layer.weights.shape()), std::vector<double>(Cout, 0.0)};
    for (std::size_t n = 0; n < input.batch(); ++n) {
        for (std::size_t o = 0; o < Cout; ++o) {
            const double* gp = grad_pre.plane(n, o).data();
            double bsum = 0.0;
            for (std::size_t p = 0; p < H * W; ++p) bsum += gp[p];
            g.bias[o] += bsum;
        }
    }

    // Weight gradients: per (o, i) pair, nine column-wise partial sums are
    // filled row by row, then reduced once.
    std::vector<double> column_sums(9 * W, 0.0);
    for (std::size_t n = 0; n < input.batch(); ++n) {
        for (std::size_t o = 0; o < Cout; ++o) {
            const double* gp = grad_pre.plane(n, o).data();
            for (std::size_t i = 0; i < Cin; ++i) {
                const double* src = input.plane(n, i).data();
                std::fill(column_sums.begin(), column_sums.end(), 0.0);
                for (std::size_t y = 0; y < H; ++y) {
                    const double* d = gp + y * W;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        if ((ky == 0 && y == 0) || (ky == 2 && y + 1 == H)) continue;
                        const double* row = src + (y + ky - 1) * W;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const RowSpan cols = clip(W, kx);
                            double* cs = column_sums.data() + (ky * 3 + kx) * W;
                            const double* s = row + kx - 1 + cols.dst_begin;
                            const double* dd = d + cols.dst_begin;
                            const std::size_t len = cols.dst_end - cols.dst_begin;
                            for (std::size_t x = 0; x < len; ++x) cs[x] += dd[x] * s[x];
                        }
                    }
                }
                double* gw = &g.weights.at(o, i, 0, 0);
                for (std::size_t t = 0; t < 9; ++t) {
                    const double* cs = column_sums.data() + t * W;
                    double sum = 0.0;
                    for (std::size_t x = 0; x < W; ++x) sum += cs[x];
                    gw[t] += sum;
                }
            }
        }
    }

    // Input gradients: one source row at a time, gathering from every output
    // channel and tap that reads it.
    for (std::size_t n = 0; n < input.batch(); ++n) {
        for (std::size_t i = 0; i < Cin; ++i) {
            double* gin = g.input.plane(n, i).data();
            for (std::size_t y = 0; y < H; ++y) {
                double* gi = gin + y * W;
                for (std::size_t o = 0; o < Cout; ++o) {
                    const double* gp = grad_pre.plane(n, o).data();
                    const double* w = layer.weights.data().data() + (o * Cin + i) * 9;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        // Output row y_out reads source row y_out + ky - 1.
                        if ((ky == 2 && y == 0) || (ky == 0 && y + 1 == H)) continue;
                        const double* d = gp + (y + 1 - ky) * W;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const RowSpan cols = clip(W, kx);
                            const double wk = w[ky * 3 + kx];
                            const double* dd = d + cols.dst_begin;
                            double* gs = gi + kx - 1 + cols.dst_begin;
                            const std::size_t len = cols.dst_end - cols.dst_begin;
                            for (std::size_t x = 0; x < len; ++x) gs[x] += wk * dd[x];
                        }
                    }
                }
            }
        }
    }
    return g;
}

}  // namespace ifes
