#include "ifes/image.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>

namespace ifes {

GrayImage::GrayImage(std::size_t w, std::size_t h, PixelRange r, std::vector<double> px)
    : width(w), height(h), pixels(std::move(px)), range(r) {
    if (pixels.size() != w * h) {
        throw DimensionError("data", std::to_string(pixels.size()) + " pixels for a " + std::to_string(w) + "x" +
                                         std::to_string(h) + " image");
    }
}

GrayImage GrayImage::to_range(PixelRange target) const {
    if (target == range) return *this;
    GrayImage out = *this;
    out.range = target;
    if (target == PixelRange::Byte) {
        for (double& p : out.pixels) p *= 255.0;
    } else {
        for (double& p : out.pixels) p /= 255.0;
    }
    return out;
}

Tensor GrayImage::to_tensor() const {
    const GrayImage unit = to_range(PixelRange::Unit);
    return Tensor(Shape{1, 1, height, width}, unit.pixels);
}

GrayImage GrayImage::from_tensor(const Tensor& t, PixelRange range) {
    if (t.batch() != 1 || t.channels() != 1) {
        throw DimensionError(t.batch() != 1 ? "batch" : "channels",
                             "image tensors must be (1,1,h,w), got " + t.shape().str());
    }
    GrayImage img(t.width(), t.height(), PixelRange::Unit,
                  std::vector<double>(t.data().begin(), t.data().end()));
    return img.to_range(range);
}

GrayImage GrayImage::crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
    if (x0 + w > width || y0 + h > height) {
        throw DimensionError(x0 + w > width ? "width" : "height", "crop exceeds image bounds");
    }
    GrayImage out(w, h, range);
    for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>((y0 + y) * width + x0), w,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return out;
}

unsigned char to_byte(double v) noexcept {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    const double r = std::floor(v + 0.5);
    return static_cast<unsigned char>(std::min(r, 255.0));
}

}  // namespace ifes
