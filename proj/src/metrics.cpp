#include "ifes/metrics.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ifes::metrics {

namespace {

void require_gradient_size(const GrayImage& img, const char* metric) {
    if (img.width < 2 || img.height < 2) {
        throw MetricError(std::string(metric) + " needs at least 2x2 pixels, got " + std::to_string(img.width) + "x" +
                          std::to_string(img.height));
    }
}

void require_same_size(const GrayImage& a, const GrayImage& b, const char* metric) {
    if (a.width != b.width || a.height != b.height) {
        throw MetricError(std::string(metric) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
    }
}

double entropy_of(const std::vector<double>& counts, double total) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / total;
            h -= p * std::log2(p);
        }
    }
    return h;
}

}  // namespace

std::size_t gray_bin(double v) noexcept { return to_byte(v); }

double average_gradient(const GrayImage& input) {
    require_gradient_size(input, "average gradient");
    const GrayImage img = input.to_range(kAverageGradientRange);
    double sum = 0.0;
    for (std::size_t y = 0; y + 1 < img.height; ++y) {
        for (std::size_t x = 0; x + 1 < img.width; ++x) {
            const double dy = img.at(x, y + 1) - img.at(x, y);
            const double dx = img.at(x + 1, y) - img.at(x, y);
            sum += std::sqrt((dy * dy + dx * dx) / 2.0);
        }
    }
    return sum / static_cast<double>((img.width - 1) * (img.height - 1));
}

double entropy(const GrayImage& input) {
    if (input.empty()) throw MetricError("entropy of an empty image");
    const GrayImage img = input.to_range(kEntropyRange);
    std::vector<double> hist(256, 0.0);
    for (double p : img.pixels) hist[gray_bin(p)] += 1.0;
    return entropy_of(hist, static_cast<double>(img.pixels.size()));
}

double joint_entropy(const GrayImage& a_in, const GrayImage& b_in) {
    require_same_size(a_in, b_in, "joint entropy");
    if (a_in.empty()) throw MetricError("joint entropy of empty images");
    const GrayImage a = a_in.to_range(kMutualInformationRange);
    const GrayImage b = b_in.to_range(kMutualInformationRange);
    std::vector<double> hist(256 * 256, 0.0);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) hist[gray_bin(a.pixels[i]) * 256 + gray_bin(b.pixels[i])] += 1.0;
    return entropy_of(hist, static_cast<double>(a.pixels.size()));
}

double mutual_information(const GrayImage& i1, const GrayImage& i2, const GrayImage& fused) {
    require_same_size(i1, fused, "mutual information");
    require_same_size(i2, fused, "mutual information");
    const double ef = entropy(fused);
    const double mi1 = entropy(i1) + ef - joint_entropy(i1, fused);
    const double mi2 = entropy(i2) + ef - joint_entropy(i2, fused);
    return mi1 + mi2;
}

double gray_level_difference(const GrayImage& input) {
    require_gradient_size(input, "gray level difference");
    const GrayImage img = input.to_range(kGrayLevelDifferenceRange);
    double sum = 0.0;
    for (std::size_t y = 0; y + 1 < img.height; ++y) {
        for (std::size_t x = 0; x + 1 < img.width; ++x) {
            sum += std::abs(img.at(x, y) - img.at(x, y + 1)) + std::abs(img.at(x, y) - img.at(x + 1, y));
        }
    }
    return sum / static_cast<double>((img.width - 1) * (img.height - 1));
}

double spatial_frequency(const GrayImage& input) {
    require_gradient_size(input, "spatial frequency");
    const GrayImage img = input.to_range(kSpatialFrequencyRange);
    double row_sq = 0.0;
    double col_sq = 0.0;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 1; x < img.width; ++x) {
            const double d = img.at(x, y) - img.at(x - 1, y);
            row_sq += d * d;
        }
    }
    for (std::size_t y = 1; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const double d = img.at(x, y) - img.at(x, y - 1);
            col_sq += d * d;
        }
    }
    const auto mn = static_cast<double>(img.width * img.height);
    const double h = std::sqrt(row_sq / mn);
    const double v = std::sqrt(col_sq / mn);
    return std::sqrt(h * h + v * v);
}

MetricRow evaluate_pair(const GrayImage& i1, const GrayImage& i2, const GrayImage& fused, std::string name,
                        const LossConfig& ssim_cfg) {
    require_same_size(i1, fused, "evaluate_pair");
    require_same_size(i2, fused, "evaluate_pair");
    MetricRow row;
    row.image = std::move(name);
    row.ag = average_gradient(fused);
    row.en = entropy(fused);
    row.mi = mutual_information(i1, i2, fused);
    row.gld = gray_level_difference(fused);
    row.sf = spatial_frequency(fused);
    const Tensor f = fused.to_range(kSsimRange).to_tensor();
    const double s1 = ssim(f, i1.to_range(kSsimRange).to_tensor(), ssim_cfg).value;
    const double s2 = ssim(f, i2.to_range(kSsimRange).to_tensor(), ssim_cfg).value;
    row.ssim = (s1 + s2) / 2.0;
    return row;
}

MetricRow MetricReport::mean() const {
    MetricRow m;
    m.image = "mean";
    if (rows.empty()) return m;
    for (const MetricRow& r : rows) {
        m.ag += r.ag;
        m.en += r.en;
        m.mi += r.mi;
        m.gld += r.gld;
        m.sf += r.sf;
        m.ssim += r.ssim;
    }
    const auto n = static_cast<double>(rows.size());
    m.ag /= n;
    m.en /= n;
    m.mi /= n;
    m.gld /= n;
    m.sf /= n;
    m.ssim /= n;
    return m;
}

void write_csv_header(std::ostream& os, const std::string& first_column) {
    os << first_column << ",AG,EN,MI,GLD,SF,SSIM\n";
}

void write_csv_row(std::ostream& os, const MetricRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", row.ag, row.en, row.mi, row.gld, row.sf,
                  row.ssim);
    os << row.image << ',' << buf << '\n';
}

void write_csv(std::ostream& os, const MetricReport& report) {
    write_csv_header(os);
    for (const MetricRow& r : report.rows) write_csv_row(os, r);
    if (!report.rows.empty()) write_csv_row(os, report.mean());
}

}  // namespace ifes::metrics
