#include "ifes/ops.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ifes {

std::vector<double> gaussian_kernel(double variance, int window) {
    if (window <= 0 || window % 2 == 0) {
        throw ParameterError("gaussian window must be a positive odd integer, got " + std::to_string(window));
    }
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw ParameterError("gaussian variance must be positive, got " + std::to_string(variance));
    }
    const int r = window / 2;
    std::vector<double> k(static_cast<std::size_t>(window * window));
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            k[static_cast<std::size_t>((dy + r) * window + dx + r)] =
                std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * variance));
        }
    }
    const double total = std::accumulate(k.begin(), k.end(), 0.0);
    for (double& v : k) v /= total;
    return k;
}

Tensor gaussian_filter2d(const Tensor& map, double variance, int window) {
    const std::vector<double> k = gaussian_kernel(variance, window);
    const int r = window / 2;
    const auto H = static_cast<int>(map.height());
    const auto W = static_cast<int>(map.width());
    Tensor out(map.shape());
    for (std::size_t n = 0; n < map.batch(); ++n) {
        for (std::size_t c = 0; c < map.channels(); ++c) {
            auto src = map.plane(n, c);
            auto dst = out.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    double norm = 0.0;
                    for (int dy = -r; dy <= r; ++dy) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= H) continue;
                        for (int dx = -r; dx <= r; ++dx) {
                            const int sx = x + dx;
                            if (sx < 0 || sx >= W) continue;
                            const double w = k[static_cast<std::size_t>((dy + r) * window + dx + r)];
                            acc += w * src[static_cast<std::size_t>(sy * W + sx)];
                            norm += w;
                        }
                    }
                    dst[static_cast<std::size_t>(y * W + x)] = acc / norm;
                }
            }
        }
    }
    return out;
}

void adam_step(std::span<const ParamBlock> blocks, AdamState& state) {
    for (const ParamBlock& b : blocks) {
        if (b.values.size() != b.grads.size()) {
            throw DimensionError("params", "block '" + b.name + "' has " + std::to_string(b.values.size()) +
                                               " values but " + std::to_string(b.grads.size()) + " grads");
        }
        for (std::size_t i = 0; i < b.grads.size(); ++i) {
            if (!std::isfinite(b.grads[i])) {
                throw TrainingError("non-finite gradient in '" + b.name + "' at index " + std::to_string(i));
            }
        }
    }
    if (state.first_moment.empty()) {
        for (const ParamBlock& b : blocks) {
            state.first_moment.emplace_back(b.values.size(), 0.0);
            state.second_moment.emplace_back(b.values.size(), 0.0);
        }
    }
    if (state.first_moment.size() != blocks.size()) {
        throw DimensionError("params", "optimizer tracks " + std::to_string(state.first_moment.size()) +
                                           " blocks, got " + std::to_string(blocks.size()));
    }
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        if (state.first_moment[j].size() != blocks[j].values.size()) {
            throw DimensionError("params", "moment shape mismatch for block '" + blocks[j].name + "'");
        }
    }

    const AdamOptions& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        const ParamBlock& b = blocks[j];
        auto& m = state.first_moment[j];
        auto& v = state.second_moment[j];
        for (std::size_t i = 0; i < b.values.size(); ++i) {
            const double g = b.grads[i] + o.weight_decay * b.values[i];
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            b.values[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
        }
    }
}

namespace {

double relative_error(double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

FiniteDiffReport finite_diff_check(const LossFn& loss, std::span<const double> analytic,
                                   std::span<const double> params, const FiniteDiffOptions& options) {
    if (!(options.step > 0.0)) throw ParameterError("finite difference step must be positive");
    if (analytic.size() != params.size()) {
        throw DimensionError("params", "analytic gradient has " + std::to_string(analytic.size()) +
                                           " entries for " + std::to_string(params.size()) + " parameters");
    }

    std::vector<std::size_t> coords;
    if (options.samples == 0 || options.samples >= params.size()) {
        coords.resize(params.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
        std::mt19937_64 rng(options.seed);
        std::vector<std::size_t> all(params.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::shuffle(all.begin(), all.end(), rng);
        coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(options.samples));
        std::sort(coords.begin(), coords.end());
    }

    std::vector<double> x(params.begin(), params.end());
    auto central = [&](std::size_t i, double h, bool& ok) {
        const double saved = x[i];
        const double hi = saved + h;
        const double lo = saved - h;
        x[i] = hi;
        const double plus = loss(x);
        x[i] = lo;
        const double minus = loss(x);
        x[i] = saved;
        ok = std::isfinite(plus) && std::isfinite(minus);
        // hi - lo is the step actually taken after rounding.
        return (plus - minus) / (hi - lo);
    };

    FiniteDiffReport report;
    for (std::size_t i : coords) {
        bool ok = true;
        double numeric = central(i, options.step, ok);
        if (!ok) {
            report.finite = false;
            report.nonfinite_index = i;
            report.max_relative_error = std::numeric_limits<double>::infinity();
            report.worst_index = i;
            return report;
        }
        double err = relative_error(analytic[i], numeric, options.floor);
        if (err > options.retry_above) {
            for (double h : options.retry_steps) {
                bool ok_retry = true;
                const double n2 = central(i, h, ok_retry);
                if (!ok_retry) continue;
                const double e2 = relative_error(analytic[i], n2, options.floor);
                if (e2 < err) {
                    err = e2;
                    numeric = n2;
                }
            }
        }
        ++report.checked;
        if (report.checked == 1 || err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace ifes
