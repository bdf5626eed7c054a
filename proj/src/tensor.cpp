#include "ifes/tensor.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>

namespace ifes {

std::string Shape::str() const {
    return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," + std::to_string(height) +
           "," + std::to_string(width) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw DimensionError("data", "buffer of " + std::to_string(data_.size()) +
                                         " values does not match shape " + shape_.str());
    }
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "tensor accumulate");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto fail = [&](const char* axis) {
        throw DimensionError(axis, std::string(context) + ": " + sa.str() + " vs " + sb.str());
    };
    if (sa.batch != sb.batch) fail("batch");
    if (sa.channels != sb.channels) fail("channels");
    if (sa.height != sb.height) fail("height");
    if (sa.width != sb.width) fail("width");
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Tensor* parts[] = {&a, &b};
    return concat_channels(parts);
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw DimensionError("channels", "concat of zero tensors");
    const Shape& first = parts.front()->shape();
    std::size_t channels = 0;
    for (const Tensor* p : parts) {
        const Shape& s = p->shape();
        if (s.batch != first.batch) throw DimensionError("batch", "concat " + first.str() + " vs " + s.str());
        if (s.height != first.height) throw DimensionError("height", "concat " + first.str() + " vs " + s.str());
        if (s.width != first.width) throw DimensionError("width", "concat " + first.str() + " vs " + s.str());
        channels += s.channels;
    }
    Tensor out(Shape{first.batch, channels, first.height, first.width});
    for (std::size_t n = 0; n < first.batch; ++n) {
        std::size_t c_out = 0;
        for (const Tensor* p : parts) {
            for (std::size_t c = 0; c < p->channels(); ++c, ++c_out) {
                auto src = p->plane(n, c);
                std::copy(src.begin(), src.end(), out.plane(n, c_out).begin());
            }
        }
    }
    return out;
}

Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count) {
    if (first + count > t.channels()) {
        throw DimensionError("channels", "slice [" + std::to_string(first) + ", " +
                                             std::to_string(first + count) + ") of " + t.shape().str());
    }
    Tensor out(Shape{t.batch(), count, t.height(), t.width()});
    for (std::size_t n = 0; n < t.batch(); ++n) {
        for (std::size_t c = 0; c < count; ++c) {
            auto src = t.plane(n, first + c);
            std::copy(src.begin(), src.end(), out.plane(n, c).begin());
        }
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& grad, std::span<const std::size_t> channel_counts) {
    std::size_t total = 0;
    for (std::size_t c : channel_counts) total += c;
    if (total != grad.channels()) {
        throw DimensionError("channels", "split into " + std::to_string(total) + " channels of " +
                                             grad.shape().str());
    }
    std::vector<Tensor> parts;
    parts.reserve(channel_counts.size());
    std::size_t first = 0;
    for (std::size_t c : channel_counts) {
        parts.push_back(slice_channels(grad, first, c));
        first += c;
    }
    return parts;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

}  // namespace ifes
