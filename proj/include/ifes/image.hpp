#pragma once

#include "ifes/tensor.hpp"

#include <cstddef>
#include <vector>

namespace ifes {

enum class PixelRange { Unit, Byte };  // [0,1] or [0,255]

/// Single-channel image; pixels row-major, `height` rows of `width`.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;
    PixelRange range = PixelRange::Byte;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, PixelRange r, double fill = 0.0)
        : width(w), height(h), pixels(w * h, fill), range(r) {}
    GrayImage(std::size_t w, std::size_t h, PixelRange r, std::vector<double> px);

    double& at(std::size_t x, std::size_t y) noexcept { return pixels[y * width + x]; }
    double at(std::size_t x, std::size_t y) const noexcept { return pixels[y * width + x]; }
    bool empty() const noexcept { return pixels.empty(); }

    /// Linear rescale between [0,1] and [0,255]; identity if already there.
    GrayImage to_range(PixelRange target) const;

    /// Unit-range (1,1,height,width) tensor.
    Tensor to_tensor() const;
    static GrayImage from_tensor(const Tensor& t, PixelRange range = PixelRange::Unit);

    GrayImage crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const;
};

/// Rounds half up and clamps to [0,255].
unsigned char to_byte(double byte_range_value) noexcept;

}  // namespace ifes
