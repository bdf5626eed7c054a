#pragma once

#include "ifes/conv.hpp"
#include "ifes/image.hpp"
#include "ifes/ops.hpp"
#include "ifes/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace ifes::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

inline GrayImage random_byte_image(std::size_t w, std::size_t h, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dist(0, 255);
    GrayImage img(w, h, PixelRange::Byte);
    for (double& p : img.pixels) p = dist(rng);
    return img;
}

inline void randomize(ConvLayer& layer, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& v : layer.weights.data()) v = dist(rng);
    for (double& v : layer.bias) v = dist(rng);
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double apply_activation(Activation act, double v) {
    switch (act) {
        case Activation::ReLU: return v > 0.0 ? v : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
        case Activation::Linear: return v;
    }
    return v;
}

// Straight six-loop correlation with explicit bounds tests.
inline Tensor reference_conv(const Tensor& in, const ConvLayer& layer) {
    const std::size_t B = in.batch();
    const std::size_t C = in.channels();
    const std::size_t H = in.height();
    const std::size_t W = in.width();
    const std::size_t O = layer.out_channels();
    Tensor out(Shape{B, O, H, W});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = layer.bias[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (int ky = -1; ky <= 1; ++ky)
                            for (int kx = -1; kx <= 1; ++kx) {
                                const long yy = static_cast<long>(y) + ky;
                                const long xx = static_cast<long>(x) + kx;
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) {
                                    continue;
                                }
                                acc += layer.weights.at(o, c, static_cast<std::size_t>(ky + 1),
                                                        static_cast<std::size_t>(kx + 1)) *
                                       in.at(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                            }
                    out.at(n, o, y, x) = apply_activation(layer.activation, acc);
                }
    return out;
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Tensor from_vector(Shape shape, std::span<const double> v) {
    Tensor t(shape);
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(t.size()), t.data().begin());
    return t;
}

}  // namespace ifes::test
