#include "ifes/losses.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>

namespace ifes {

namespace {

// Below this norm the summed structure is treated as exact cancellation.
// Each structure is a unit vector, so the threshold is scale-free.
constexpr double kCancelledStructure = 1e-8;

struct Window {
    std::size_t n, c, y0, x0, h, w;
};

template <class F>
void for_each_window(const Shape& s, std::size_t side, F&& f) {
    const std::size_t wy = side == 0 ? s.height : side;
    const std::size_t wx = side == 0 ? s.width : side;
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y0 = 0; y0 < s.height; y0 += wy)
                for (std::size_t x0 = 0; x0 < s.width; x0 += wx)
                    f(Window{n, c, y0, x0, std::min(wy, s.height - y0), std::min(wx, s.width - x0)});
}

std::size_t window_count(const Shape& s, std::size_t side) {
    std::size_t count = 0;
    for_each_window(s, side, [&](const Window&) { ++count; });
    return count;
}

template <class F>
void for_each_pixel(const Tensor& t, const Window& w, F&& f) {
    for (std::size_t y = w.y0; y < w.y0 + w.h; ++y)
        for (std::size_t x = w.x0; x < w.x0 + w.w; ++x) f(t.index(w.n, w.c, y, x));
}

double window_mean(const Tensor& t, const Window& w) {
    double sum = 0.0;
    for_each_pixel(t, w, [&](std::size_t i) { sum += t[i]; });
    return sum / static_cast<double>(w.h * w.w);
}

bool window_constant(const Tensor& t, const Window& w) {
    const double first = t.at(w.n, w.c, w.y0, w.x0);
    bool flat = true;
    for_each_pixel(t, w, [&](std::size_t i) { flat = flat && t[i] == first; });
    return flat;
}

void require_nonempty(const Tensor& t, const char* what) {
    if (t.empty()) throw DimensionError("height", std::string(what) + " on an empty tensor");
}

}  // namespace

std::string_view to_string(ReconLoss r) noexcept { return r == ReconLoss::MSE ? "mse" : "mae"; }

ReconLoss parse_recon_loss(std::string_view name) {
    if (name == "mse") return ReconLoss::MSE;
    if (name == "mae") return ReconLoss::MAE;
    throw ConfigError("unknown recon_loss '" + std::string(name) + "' (expected mse|mae)");
}

void validate(const LossConfig& cfg) {
    if (!(cfg.tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(cfg.xi > 0.0)) throw ConfigError("xi must be positive");
    if (!(cfg.ssim_const > 0.0)) throw ConfigError("ssim_const must be positive");
}

ScalarGrad mse_loss(const Tensor& x, const Tensor& target) {
    require_same_shape(x, target, "mse_loss");
    require_nonempty(x, "mse_loss");
    const auto N = static_cast<double>(x.size());
    ScalarGrad r{0.0, Tensor(x.shape())};
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - target[i];
        sum += d * d;
        r.grad[i] = 2.0 * d / N;
    }
    r.value = sum / N;
    return r;
}

ScalarGrad mae_loss(const Tensor& x, const Tensor& target) {
    require_same_shape(x, target, "mae_loss");
    require_nonempty(x, "mae_loss");
    const auto N = static_cast<double>(x.size());
    ScalarGrad r{0.0, Tensor(x.shape())};
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - target[i];
        sum += std::abs(d);
        r.grad[i] = d > 0.0 ? 1.0 / N : (d < 0.0 ? -1.0 / N : 0.0);
    }
    r.value = sum / N;
    return r;
}

Tensor build_ssim_target(const Tensor& i1, const Tensor& i2, const LossConfig& cfg) {
    require_same_shape(i1, i2, "build_ssim_target");
    Tensor target(i1.shape());
    for_each_window(i1.shape(), cfg.window, [&](const Window& w) {
        const Tensor* src[2] = {&i1, &i2};
        double mean[2];
        double contrast[2];
        for (int s = 0; s < 2; ++s) {
            mean[s] = window_mean(*src[s], w);
            if (window_constant(*src[s], w)) {
                contrast[s] = 0.0;
                continue;
            }
            double sq = 0.0;
            for_each_pixel(*src[s], w, [&](std::size_t i) {
                const double d = (*src[s])[i] - mean[s];
                sq += d * d;
            });
            contrast[s] = std::sqrt(sq);
        }
        const double best = std::max(contrast[0], contrast[1]);
        if (best == 0.0) return;  // both flat: target stays zero

        // Summed structure S_1 + S_2 (a flat source contributes nothing).
        double norm_sq = 0.0;
        for_each_pixel(target, w, [&](std::size_t i) {
            double s = 0.0;
            for (int k = 0; k < 2; ++k) {
                if (contrast[k] > 0.0) s += ((*src[k])[i] - mean[k]) / contrast[k];
            }
            target[i] = s;
            norm_sq += s * s;
        });
        const double norm = std::sqrt(norm_sq);
        if (norm <= kCancelledStructure) {
            for_each_pixel(target, w, [&](std::size_t i) { target[i] = 0.0; });
            return;
        }
        const double gain = cfg.xi * best / norm;
        for_each_pixel(target, w, [&](std::size_t i) { target[i] *= gain; });
    });
    return target;
}

SsimResult ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
    require_same_shape(a, b, "ssim");
    require_nonempty(a, "ssim");
    const double C = cfg.ssim_const;
    const auto windows = static_cast<double>(window_count(a.shape(), cfg.window));
    SsimResult r{0.0, Tensor(a.shape()), Tensor(b.shape())};
    double total = 0.0;
    for_each_window(a.shape(), cfg.window, [&](const Window& w) {
        const auto n = static_cast<double>(w.h * w.w);
        const double ma = window_mean(a, w);
        const double mb = window_mean(b, w);
        double va = 0.0, vb = 0.0, cov = 0.0;
        for_each_pixel(a, w, [&](std::size_t i) {
            const double da = a[i] - ma;
            const double db = b[i] - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        });
        va /= n;
        vb /= n;
        cov /= n;
        const double num = 2.0 * cov + C;
        const double den = va + vb + C;
        total += num / den;
        const double scale = 2.0 / (n * den * den * windows);
        for_each_pixel(a, w, [&](std::size_t i) {
            const double da = a[i] - ma;
            const double db = b[i] - mb;
            r.grad_a[i] = scale * (db * den - num * da);
            r.grad_b[i] = scale * (da * den - num * db);
        });
    });
    r.value = total / windows;
    return r;
}

ScalarGrad fusion_loss(const Tensor& fused, const Tensor& i1, const Tensor& i2, const LossConfig& cfg) {
    require_same_shape(fused, i1, "fusion_loss");
    const Tensor target = build_ssim_target(i1, i2, cfg);
    SsimResult s = ssim(target, fused, cfg);
    ScalarGrad r{1.0 - s.value, std::move(s.grad_b)};
    for (double& g : r.grad.data()) g = -g;
    return r;
}

WeightMapLoss weight_map_loss(const Tensor& w1, const Tensor& w2, const LossConfig& cfg) {
    require_same_shape(w1, w2, "weight_map_loss");
    require_nonempty(w1, "weight_map_loss");
    const auto N = static_cast<double>(w1.size());
    WeightMapLoss r{0.0, Tensor(w1.shape()), Tensor(w2.shape())};
    double sum = 0.0;
    for (std::size_t i = 0; i < w1.size(); ++i) {
        const double d = cfg.tau - w1[i] - w2[i];
        sum += std::abs(d);
        // d|tau - w1 - w2|/dw = -sign(d)
        const double g = d > 0.0 ? -1.0 / N : (d < 0.0 ? 1.0 / N : 0.0);
        r.grad_w1[i] = g;
        r.grad_w2[i] = g;
    }
    r.value = sum / N;
    return r;
}

LossTerms total_loss(const FusionOutputs& out, const Tensor& i1, const Tensor& i2, const LossConfig& cfg) {
    auto recon = [&](const Tensor& x, const Tensor& t) {
        return cfg.recon == ReconLoss::MSE ? mse_loss(x, t) : mae_loss(x, t);
    };
    ScalarGrad li = recon(out.recon_ir, i1);
    ScalarGrad lv = recon(out.recon_vis, i2);
    ScalarGrad lf = fusion_loss(out.fused, i1, i2, cfg);
    WeightMapLoss lm = weight_map_loss(out.weight_ir, out.weight_vis, cfg);

    LossTerms t;
    t.infrared = li.value;
    t.visible = lv.value;
    t.fusion = lf.value;
    t.weight = lm.value;
    t.total = t.infrared + t.visible + t.fusion + t.weight;
    t.grads.recon_ir = std::move(li.grad);
    t.grads.recon_vis = std::move(lv.grad);
    t.grads.fused = std::move(lf.grad);
    t.grads.weight_ir = std::move(lm.grad_w1);
    t.grads.weight_vis = std::move(lm.grad_w2);
    return t;
}

}  // namespace ifes
