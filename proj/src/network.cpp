#include "ifes/network.hpp"

#include "ifes/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ifes {

namespace {

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::ReLU;
};

std::string join(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::size_t stage_width(int k) { return std::size_t{64} << std::min(k - 1, 2); }

std::string expected_mapping(int stages) {
    std::ostringstream os;
    os << "expected ivif_channels of length " << 2 * stages + 4 << " (F_1.." << stages
       << " as conv pairs, then a 4-layer weight-map head ending in 1) and shfe_channels of length "
       << stages + 3 << " (one interactive conv per stage, then a 3-layer reconstruction head ending in 1)";
    return os.str();
}

// Input/output channels of every layer. Fused feature F_n is the output of
// ivif[2n-1]; the stage-n branch features come from shfe_*[n-1].
Branches<LayerSpec> plan_layers(const NetConfig& c) {
    validate_config(c);
    const auto S = static_cast<std::size_t>(c.stages);
    const auto& iv = c.ivif_channels;
    const auto& sh = c.shfe_channels;
    auto fused_width = [&](std::size_t n) { return iv[2 * n - 1]; };

    Branches<LayerSpec> p;
    p.ivif.push_back({2, iv[0], Activation::ReLU});
    p.ivif.push_back({iv[0], iv[1], Activation::ReLU});
    for (std::size_t n = 1; n < S; ++n) {
        std::size_t in = 2 * sh[n - 1];
        if (c.variant == Variant::HierConnect) {
            for (std::size_t k = 1; k <= n; ++k) in += fused_width(k);
        }
        p.ivif.push_back({in, iv[2 * n], Activation::ReLU});
        p.ivif.push_back({iv[2 * n], iv[2 * n + 1], Activation::ReLU});
    }
    for (auto& head : p.weight_heads) {
        std::size_t in = fused_width(S);
        for (std::size_t l = 0; l < 4; ++l) {
            const std::size_t out = iv[2 * S + l];
            head.push_back({in, out, l == 3 ? Activation::Sigmoid : Activation::ReLU});
            in = out;
        }
    }
    for (auto* branch : {&p.shfe_ir, &p.shfe_vis}) {
        for (std::size_t n = 1; n <= S; ++n) {
            std::size_t in = fused_width(n);
            if (c.variant == Variant::NoIFEM) in = n == 1 ? 1 : sh[n - 2];
            branch->push_back({in, sh[n - 1], Activation::ReLU});
        }
    }
    for (auto& head : p.recon_heads) {
        std::size_t in = sh[S - 1];
        for (std::size_t l = 0; l < 3; ++l) {
            const std::size_t out = sh[S + l];
            head.push_back({in, out, l == 2 ? Activation::Linear : Activation::ReLU});
            in = out;
        }
    }
    if (c.variant == Variant::HierConnect) {
        for (std::size_t target = 2; target <= S; ++target) {
            for (std::size_t source = 1; source < target; ++source) {
                const std::size_t w = fused_width(source);
                p.adapters.push_back({w, w, Activation::ReLU});
            }
        }
    }
    return p;
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoIFEM: return "no_ifem";
        case Variant::HierConnect: return "hc";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "full") return Variant::Full;
    if (name == "no_ifem") return Variant::NoIFEM;
    if (name == "hc") return Variant::HierConnect;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected full|no_ifem|hc)");
}

NetConfig make_config(int stages, std::size_t scale, Variant variant, std::uint64_t seed) {
    if (stages < 1) throw ConfigError("stages must be >= 1, got " + std::to_string(stages));
    if (scale < 1) throw ConfigError("scale must be >= 1");
    auto div = [scale](std::size_t w) { return std::max<std::size_t>(1, w / scale); };

    NetConfig c;
    c.stages = stages;
    c.scale = scale;
    c.variant = variant;
    c.seed = seed;
    for (int k = 1; k <= stages; ++k) {
        c.ivif_channels.push_back(div(stage_width(k)));
        c.ivif_channels.push_back(div(stage_width(k)));
        c.shfe_channels.push_back(div(stage_width(k)));
    }
    for (std::size_t w : {256, 128, 64}) c.ivif_channels.push_back(div(w));
    c.ivif_channels.push_back(1);
    for (std::size_t w : {128, 64}) c.shfe_channels.push_back(div(w));
    c.shfe_channels.push_back(1);
    return c;
}

void validate_config(const NetConfig& c) {
    if (c.stages < 1) throw ConfigError("stages must be >= 1, got " + std::to_string(c.stages));
    const auto S = static_cast<std::size_t>(c.stages);
    auto fail = [&](const std::string& why) {
        throw ConfigError(why + "; got ivif_channels [" + join(c.ivif_channels) + "], shfe_channels [" +
                          join(c.shfe_channels) + "]; " + expected_mapping(c.stages));
    };
    if (c.ivif_channels.size() != 2 * S + 4) fail("ivif_channels has the wrong length");
    if (c.shfe_channels.size() != S + 3) fail("shfe_channels has the wrong length");
    if (c.ivif_channels.back() != 1) fail("weight-map head must end in 1 channel");
    if (c.shfe_channels.back() != 1) fail("reconstruction head must end in 1 channel");
    auto positive = [](std::size_t w) { return w > 0; };
    if (!std::all_of(c.ivif_channels.begin(), c.ivif_channels.end(), positive) ||
        !std::all_of(c.shfe_channels.begin(), c.shfe_channels.end(), positive)) {
        fail("channel widths must be positive");
    }
}

std::size_t adapter_index(int source, int target) noexcept {
    const auto t = static_cast<std::size_t>(target);
    return (t - 2) * (t - 1) / 2 + static_cast<std::size_t>(source - 1);
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    visit([&](const std::string&, const ConvLayer& l) { total += l.parameter_count(); });
    return total;
}

Network build_network(const NetConfig& config) {
    const Branches<LayerSpec> plan = plan_layers(config);
    Network net;
    net.config = config;

    auto make = [](const std::vector<LayerSpec>& specs) {
        std::vector<ConvLayer> layers;
        for (const LayerSpec& s : specs) layers.emplace_back(s.in, s.out, s.act);
        return layers;
    };
    net.ivif = make(plan.ivif);
    net.weight_heads = {make(plan.weight_heads[0]), make(plan.weight_heads[1])};
    net.shfe_ir = make(plan.shfe_ir);
    net.shfe_vis = make(plan.shfe_vis);
    net.recon_heads = {make(plan.recon_heads[0]), make(plan.recon_heads[1])};
    net.adapters = make(plan.adapters);

    std::mt19937_64 rng(config.seed);
    net.visit([&](const std::string&, ConvLayer& layer) {
        const double fan_in = static_cast<double>(layer.in_channels() * ConvLayer::kernel * ConvLayer::kernel);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (double& w : layer.weights.data()) w = dist(rng);
    });
    return net;
}

NetworkGrads zero_grads(const Network& net) {
    NetworkGrads g;
    auto mirror = [](const std::vector<ConvLayer>& layers) {
        std::vector<ParamGrad> out;
        for (const ConvLayer& l : layers) {
            out.push_back({Tensor(l.weights.shape()), std::vector<double>(l.bias.size(), 0.0)});
        }
        return out;
    };
    g.ivif = mirror(net.ivif);
    g.weight_heads = {mirror(net.weight_heads[0]), mirror(net.weight_heads[1])};
    g.shfe_ir = mirror(net.shfe_ir);
    g.shfe_vis = mirror(net.shfe_vis);
    g.recon_heads = {mirror(net.recon_heads[0]), mirror(net.recon_heads[1])};
    g.adapters = mirror(net.adapters);
    return g;
}

std::vector<double> flatten_parameters(const Network& net) {
    std::vector<double> flat;
    flat.reserve(net.parameter_count());
    net.visit([&](const std::string&, const ConvLayer& l) {
        flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    });
    return flat;
}

void assign_parameters(Network& net, std::span<const double> flat) {
    if (flat.size() != net.parameter_count()) {
        throw DimensionError("params", "expected " + std::to_string(net.parameter_count()) + " parameters, got " +
                                           std::to_string(flat.size()));
    }
    std::size_t at = 0;
    net.visit([&](const std::string&, ConvLayer& l) {
        for (double& w : l.weights.data()) w = flat[at++];
        for (double& b : l.bias) b = flat[at++];
    });
}

std::vector<double> flatten_grads(const NetworkGrads& grads) {
    std::vector<double> flat;
    grads.visit([&](const std::string&, const ParamGrad& g) {
        flat.insert(flat.end(), g.weights.data().begin(), g.weights.data().end());
        flat.insert(flat.end(), g.bias.begin(), g.bias.end());
    });
    return flat;
}

}  // namespace ifes
