#pragma once

#include "ifes/image.hpp"
#include "ifes/losses.hpp"

#include <array>
#include <ostream>
#include <string>
#include <vector>

namespace ifes::metrics {

// Pixel-range convention per metric. The harness converts each input to the
// declared range before computing.
//   AG, EN, MI, GLD : Byte  [0,255]
//   SF, SSIM        : Unit  [0,1]
inline constexpr PixelRange kAverageGradientRange = PixelRange::Byte;
inline constexpr PixelRange kEntropyRange = PixelRange::Byte;
inline constexpr PixelRange kMutualInformationRange = PixelRange::Byte;
inline constexpr PixelRange kGrayLevelDifferenceRange = PixelRange::Byte;
inline constexpr PixelRange kSpatialFrequencyRange = PixelRange::Unit;
inline constexpr PixelRange kSsimRange = PixelRange::Unit;

/// Mean over the (M-1)(N-1) grid of sqrt((dx^2 + dy^2) / 2), forward differences.
double average_gradient(const GrayImage& img);

/// Shannon entropy in bits of the 256-bin histogram.
double entropy(const GrayImage& img);

/// Joint entropy in bits of the 256x256 joint histogram.
double joint_entropy(const GrayImage& a, const GrayImage& b);

/// [E(I_1) + E(I_f) - E(I_1,I_f)] + [E(I_2) + E(I_f) - E(I_2,I_f)].
double mutual_information(const GrayImage& i1, const GrayImage& i2, const GrayImage& fused);

/// Mean over the (M-1)(N-1) grid of |dy| + |dx|. The last row and column only
/// serve as the forward neighbours.
double gray_level_difference(const GrayImage& img);

/// sqrt(H^2 + V^2); H and V are RMS first differences along rows and columns,
/// both normalised by the full pixel count M*N.
double spatial_frequency(const GrayImage& img);

/// Histogram bin: round half up in Byte range, clamped to [0,255].
std::size_t gray_bin(double byte_value) noexcept;

struct MetricRow {
    std::string image;
    double ag = 0.0;
    double en = 0.0;
    double mi = 0.0;
    double gld = 0.0;
    double sf = 0.0;
    double ssim = 0.0;
};

/// All metrics for one registered triple. SSIM is the mean of
/// ssim(I_f, I_1) and ssim(I_f, I_2) on Unit-range images.
MetricRow evaluate_pair(const GrayImage& i1, const GrayImage& i2, const GrayImage& fused, std::string name = {},
                        const LossConfig& ssim_cfg = {});

struct MetricReport {
    std::vector<MetricRow> rows;

    /// Arithmetic mean of every column, labelled "mean".
    MetricRow mean() const;
};

/// Header `<first_column>,AG,EN,MI,GLD,SF,SSIM`, one line per row, values
/// with 4 digits after the decimal point.
void write_csv_header(std::ostream& os, const std::string& first_column = "image");
void write_csv_row(std::ostream& os, const MetricRow& row);

/// Rows followed by the `mean` row; an empty report writes the header only.
void write_csv(std::ostream& os, const MetricReport& report);

}  // namespace ifes::metrics
