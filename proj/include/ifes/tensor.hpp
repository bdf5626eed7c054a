#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ifes {

/// (batch, channels, height, width)
struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t numel() const noexcept { return batch * channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense rank-4 tensor of doubles, batch-outermost row-major layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t batch() const noexcept { return shape_.batch; }
    std::size_t channels() const noexcept { return shape_.channels; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((n * shape_.channels + c) * shape_.height + y) * shape_.width + x;
    }
    double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[index(n, c, y, x)];
    }
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[index(n, c, y, x)];
    }

    /// Contiguous (height*width) plane of one channel.
    std::span<double> plane(std::size_t n, std::size_t c) noexcept {
        return {data_.data() + index(n, c, 0, 0), shape_.plane()};
    }
    std::span<const double> plane(std::size_t n, std::size_t c) const noexcept {
        return {data_.data() + index(n, c, 0, 0), shape_.plane()};
    }

    bool all_finite() const noexcept;
    void fill(double value) noexcept;

    Tensor& operator+=(const Tensor& other);

private:
    Shape shape_{};
    std::vector<double> data_;
};

/// Throws DimensionError naming the first disagreeing axis.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

/// Channel-wise concatenation, `a`'s channels first.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor concat_channels(std::span<const Tensor* const> parts);

/// Copy of channels [first, first + count).
Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count);

/// Routes a concatenated gradient back to its parts; `channel_counts` gives
/// each part's channel count in concatenation order.
std::vector<Tensor> split_channels(const Tensor& grad, std::span<const std::size_t> channel_counts);

/// Elementwise product; shapes must match.
Tensor hadamard(const Tensor& a, const Tensor& b);

}  // namespace ifes
