#include "ifes/ifesnet.hpp"

#include "ifes/error.hpp"

#include <cmath>

namespace ifes {

namespace {

Tensor run_chain(const std::vector<ConvLayer>& layers, std::vector<ConvCache>& caches, std::size_t first,
                 std::size_t count, Tensor x) {
    for (std::size_t l = first; l < first + count; ++l) x = conv2d_forward(x, layers[l], caches[l]);
    return x;
}

// Walks the chain backwards, storing each layer's parameter gradient, and
// returns the gradient with respect to the chain input.
Tensor back_chain(const std::vector<ConvLayer>& layers, const std::vector<ConvCache>& caches,
                  std::vector<ParamGrad>& grads, std::size_t first, std::size_t count, Tensor d) {
    for (std::size_t l = first + count; l-- > first;) {
        ConvGrads g = conv2d_backward(caches[l], layers[l], d);
        grads[l].weights += g.weights;
        for (std::size_t o = 0; o < g.bias.size(); ++o) grads[l].bias[o] += g.bias[o];
        d = std::move(g.input);
    }
    return d;
}

ForwardCache empty_cache(const Network& net) {
    ForwardCache c;
    c.ivif.resize(net.ivif.size());
    for (int i = 0; i < 2; ++i) {
        c.weight_heads[i].resize(net.weight_heads[i].size());
        c.recon_heads[i].resize(net.recon_heads[i].size());
    }
    c.shfe_ir.resize(net.shfe_ir.size());
    c.shfe_vis.resize(net.shfe_vis.size());
    c.adapters.resize(net.adapters.size());
    return c;
}

void check_pair(const Tensor& ir, const Tensor& vis) {
    if (ir.channels() != 1) throw DimensionError("channels", "infrared input must have 1 channel, got " + ir.shape().str());
    if (vis.channels() != 1) throw DimensionError("channels", "visible input must have 1 channel, got " + vis.shape().str());
    require_same_shape(ir, vis, "infrared/visible pair");
    if (ir.empty()) throw DimensionError("height", "empty input pair");
}

void check_stage(const Network& net, int n) {
    if (n < 1 || n > net.config.stages) {
        throw UsageError("stage " + std::to_string(n) + " outside 1.." + std::to_string(net.config.stages));
    }
    if (net.config.variant != Variant::Full) {
        throw UsageError("ifem_stage models the bidirectional stage; variant '" +
                         std::string(to_string(net.config.variant)) + "' wires stages differently");
    }
}

}  // namespace

StageResult ifem_stage(const Tensor& fused, const Network& net, int n) {
    check_stage(net, n);
    const auto k = static_cast<std::size_t>(n);
    ConvCache scratch;
    StageResult r;
    r.state.index = n;
    r.state.fused = fused;
    r.state.infrared = conv2d_forward(fused, net.shfe_ir[k - 1], scratch);
    r.state.visible = conv2d_forward(fused, net.shfe_vis[k - 1], scratch);
    if (n < net.config.stages) {
        Tensor h = conv2d_forward(concat_channels(r.state.infrared, r.state.visible), net.ivif[2 * k], scratch);
        r.next_fused = conv2d_forward(h, net.ivif[2 * k + 1], scratch);
    }
    return r;
}

Tensor ifem_stage_backward(const Tensor& fused, const Network& net, int n, const Tensor& grad_infrared,
                           const Tensor& grad_visible, const Tensor* grad_next, NetworkGrads& grads) {
    check_stage(net, n);
    const auto k = static_cast<std::size_t>(n);
    ForwardCache c = empty_cache(net);
    const Tensor p = conv2d_forward(fused, net.shfe_ir[k - 1], c.shfe_ir[k - 1]);
    const Tensor q = conv2d_forward(fused, net.shfe_vis[k - 1], c.shfe_vis[k - 1]);
    Tensor dp = grad_infrared;
    Tensor dq = grad_visible;
    if (n < net.config.stages && grad_next != nullptr) {
        run_chain(net.ivif, c.ivif, 2 * k, 2, concat_channels(p, q));
        Tensor dcat = back_chain(net.ivif, c.ivif, grads.ivif, 2 * k, 2, *grad_next);
        const std::size_t counts[] = {p.channels(), q.channels()};
        std::vector<Tensor> parts = split_channels(dcat, counts);
        dp += parts[0];
        dq += parts[1];
    }
    Tensor d = back_chain(net.shfe_ir, c.shfe_ir, grads.shfe_ir, k - 1, 1, dp);
    d += back_chain(net.shfe_vis, c.shfe_vis, grads.shfe_vis, k - 1, 1, dq);
    return d;
}

ForwardOutput forward(const Network& net, const Tensor& ir, const Tensor& vis) {
    check_pair(ir, vis);
    const int S = net.config.stages;
    const Variant variant = net.config.variant;

    ForwardOutput out;
    out.input_ir = ir;
    out.input_vis = vis;
    out.cache = empty_cache(net);
    ForwardCache& c = out.cache;

    std::vector<Tensor> fused;
    fused.push_back(run_chain(net.ivif, c.ivif, 0, 2, concat_channels(ir, vis)));

    for (int n = 1; n <= S; ++n) {
        const auto k = static_cast<std::size_t>(n);
        const Tensor& branch_ir_in = variant == Variant::NoIFEM ? (n == 1 ? ir : out.stages.back().infrared) : fused[k - 1];
        const Tensor& branch_vis_in = variant == Variant::NoIFEM ? (n == 1 ? vis : out.stages.back().visible) : fused[k - 1];
        StageState st;
        st.index = n;
        st.fused = fused[k - 1];
        st.infrared = conv2d_forward(branch_ir_in, net.shfe_ir[k - 1], c.shfe_ir[k - 1]);
        st.visible = conv2d_forward(branch_vis_in, net.shfe_vis[k - 1], c.shfe_vis[k - 1]);

        if (n < S) {
            std::vector<Tensor> skips;
            if (variant == Variant::HierConnect) {
                for (int src = 1; src <= n; ++src) {
                    const std::size_t a = adapter_index(src, n + 1);
                    skips.push_back(conv2d_forward(fused[static_cast<std::size_t>(src) - 1], net.adapters[a], c.adapters[a]));
                }
            }
            std::vector<const Tensor*> parts{&st.infrared, &st.visible};
            for (const Tensor& s : skips) parts.push_back(&s);
            fused.push_back(run_chain(net.ivif, c.ivif, 2 * k, 2, concat_channels(parts)));
        }
        out.stages.push_back(std::move(st));
    }

    const Tensor& last = fused.back();
    out.weight_ir = run_chain(net.weight_heads[0], c.weight_heads[0], 0, 4, last);
    out.weight_vis = run_chain(net.weight_heads[1], c.weight_heads[1], 0, 4, last);
    out.recon_ir = run_chain(net.recon_heads[0], c.recon_heads[0], 0, 3, out.stages.back().infrared);
    out.recon_vis = run_chain(net.recon_heads[1], c.recon_heads[1], 0, 3, out.stages.back().visible);
    out.fused = fuse_with_weight_maps(out.weight_ir, out.weight_vis, ir, vis, false);
    return out;
}

NetworkGrads backward(const Network& net, const ForwardOutput& out, const FusionOutputs& g) {
    const int S = net.config.stages;
    const Variant variant = net.config.variant;
    const ForwardCache& c = out.cache;
    NetworkGrads grads = zero_grads(net);

    // I_f = W_1 * I_1 + W_2 * I_2
    Tensor dw_ir = hadamard(g.fused, out.input_ir);
    dw_ir += g.weight_ir;
    Tensor dw_vis = hadamard(g.fused, out.input_vis);
    dw_vis += g.weight_vis;

    std::vector<Tensor> dfused;
    std::vector<Tensor> dinfrared;
    std::vector<Tensor> dvisible;
    for (const StageState& st : out.stages) {
        dfused.emplace_back(st.fused.shape());
        dinfrared.emplace_back(st.infrared.shape());
        dvisible.emplace_back(st.visible.shape());
    }
    const auto last = static_cast<std::size_t>(S) - 1;
    dfused[last] += back_chain(net.weight_heads[0], c.weight_heads[0], grads.weight_heads[0], 0, 4, dw_ir);
    dfused[last] += back_chain(net.weight_heads[1], c.weight_heads[1], grads.weight_heads[1], 0, 4, dw_vis);
    dinfrared[last] += back_chain(net.recon_heads[0], c.recon_heads[0], grads.recon_heads[0], 0, 3, g.recon_ir);
    dvisible[last] += back_chain(net.recon_heads[1], c.recon_heads[1], grads.recon_heads[1], 0, 3, g.recon_vis);

    // Reverse stage order: every consumer of F_{n+1} belongs to a later stage
    // or a head, so its gradient is complete when stage n is processed.
    for (int n = S; n >= 1; --n) {
        const auto k = static_cast<std::size_t>(n);
        if (n < S) {
            Tensor dcat = back_chain(net.ivif, c.ivif, grads.ivif, 2 * k, 2, dfused[k]);
            std::vector<std::size_t> counts{out.stages[k - 1].infrared.channels(), out.stages[k - 1].visible.channels()};
            if (variant == Variant::HierConnect) {
                for (int src = 1; src <= n; ++src) counts.push_back(net.adapters[adapter_index(src, n + 1)].out_channels());
            }
            std::vector<Tensor> parts = split_channels(dcat, counts);
            dinfrared[k - 1] += parts[0];
            dvisible[k - 1] += parts[1];
            if (variant == Variant::HierConnect) {
                for (int src = 1; src <= n; ++src) {
                    const std::size_t a = adapter_index(src, n + 1);
                    dfused[static_cast<std::size_t>(src) - 1] +=
                        back_chain(net.adapters, c.adapters, grads.adapters, a, 1, parts[static_cast<std::size_t>(src) + 1]);
                }
            }
        }
        Tensor din_ir = back_chain(net.shfe_ir, c.shfe_ir, grads.shfe_ir, k - 1, 1, dinfrared[k - 1]);
        Tensor din_vis = back_chain(net.shfe_vis, c.shfe_vis, grads.shfe_vis, k - 1, 1, dvisible[k - 1]);
        if (variant == Variant::NoIFEM) {
            if (n > 1) {
                dinfrared[k - 2] += din_ir;
                dvisible[k - 2] += din_vis;
            }
        } else {
            dfused[k - 1] += din_ir;
            dfused[k - 1] += din_vis;
        }
    }
    back_chain(net.ivif, c.ivif, grads.ivif, 0, 2, dfused[0]);
    return grads;
}

Tensor fuse_with_weight_maps(const Tensor& w1, const Tensor& w2, const Tensor& i1, const Tensor& i2, bool smooth) {
    require_same_shape(w1, i1, "fuse weight map 1");
    require_same_shape(w2, i2, "fuse weight map 2");
    require_same_shape(i1, i2, "fuse sources");
    if (smooth) {
        return fuse_with_weight_maps(gaussian_filter2d(w1, kSmoothVariance, kSmoothWindow),
                                     gaussian_filter2d(w2, kSmoothVariance, kSmoothWindow), i1, i2, false);
    }
    Tensor out(i1.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w1[i] * i1[i] + w2[i] * i2[i];
    return out;
}

std::vector<ParamBlock> param_blocks(Network& net, const NetworkGrads& grads) {
    std::vector<ParamBlock> blocks;
    std::vector<std::pair<std::string, const ParamGrad*>> g;
    grads.visit([&](const std::string& name, const ParamGrad& pg) { g.emplace_back(name, &pg); });
    std::size_t i = 0;
    net.visit([&](const std::string& name, ConvLayer& layer) {
        const ParamGrad& pg = *g.at(i++).second;
        blocks.push_back({name + ".weight", layer.weights.data(), pg.weights.data()});
        blocks.push_back({name + ".bias", layer.bias, pg.bias});
    });
    return blocks;
}

std::pair<LossTerms, NetworkGrads> loss_and_grads(const Network& net, const Tensor& ir, const Tensor& vis,
                                                  const LossConfig& cfg) {
    ForwardOutput out = forward(net, ir, vis);
    LossTerms terms = total_loss(out, ir, vis, cfg);
    NetworkGrads grads = backward(net, out, terms.grads);
    return {std::move(terms), std::move(grads)};
}

LossTerms train_step(Trainer& trainer, const Tensor& ir, const Tensor& vis) {
    auto [terms, grads] = loss_and_grads(trainer.net, ir, vis, trainer.loss);
    const std::pair<const char*, double> named[] = {
        {"L_I", terms.infrared}, {"L_V", terms.visible}, {"L_F", terms.fusion}, {"L_M", terms.weight}};
    for (const auto& [name, value] : named) {
        if (!std::isfinite(value)) throw TrainingError(std::string("non-finite loss term ") + name);
    }
    const std::vector<ParamBlock> blocks = param_blocks(trainer.net, grads);
    adam_step(blocks, trainer.optimizer);
    return terms;
}

}  // namespace ifes
