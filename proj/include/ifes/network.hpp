#pragma once

#include "ifes/conv.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ifes {

enum class Variant : std::uint32_t {
    Full = 0,         // bidirectional stage interaction
    NoIFEM = 1,       // branches evolve on their own; fusion only receives
    HierConnect = 2,  // Full plus skip concatenation of earlier fused features
};

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

/// Channel layout of the three branches.
///
/// ivif_channels holds 2*stages body widths (two convs per fused feature)
/// followed by the 4-layer weight-map head. shfe_channels holds one width
/// per stage followed by the 3-layer reconstruction head. Both heads end in
/// a single channel.
struct NetConfig {
    int stages = 3;
    std::vector<std::size_t> ivif_channels;
    std::vector<std::size_t> shfe_channels;
    Variant variant = Variant::Full;
    std::size_t scale = 1;
    std::uint64_t seed = 0;

    bool operator==(const NetConfig&) const = default;
};

/// Channel lists for a stage count and width divisor. Stage k (1-based) is
/// 64 * 2^(k-1) wide, capped at 256; heads are 256,128,64,1 (weight map) and
/// 128,64,1 (reconstruction). Every width except the final 1 is divided by
/// `scale`. stages=3, scale=1 yields
///   IVIF 64,64,128,128,256,256,256,128,64,1 and SHFE 64,128,256,128,64,1.
NetConfig make_config(int stages, std::size_t scale = 1, Variant variant = Variant::Full,
                      std::uint64_t seed = 0);

/// Throws ConfigError describing the expected mapping if the lists do not
/// fit the stage count.
void validate_config(const NetConfig& config);

/// Per-layer slots of the network, shared by parameters, forward caches and
/// gradients so they always line up.
template <class Slot>
struct Branches {
    std::vector<Slot> ivif;                       // 2 * stages
    std::array<std::vector<Slot>, 2> weight_heads;  // 4 each: infrared, visible
    std::vector<Slot> shfe_ir;                    // stages
    std::vector<Slot> shfe_vis;                   // stages
    std::array<std::vector<Slot>, 2> recon_heads;   // 3 each
    std::vector<Slot> adapters;                   // HierConnect only

    /// Visits every slot in declaration order as f(name, slot).
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        auto group = [&f](auto& list, const std::string& prefix) {
            for (std::size_t i = 0; i < list.size(); ++i) f(prefix + "." + std::to_string(i), list[i]);
        };
        group(self.ivif, "ivif");
        group(self.weight_heads[0], "weight_head_ir");
        group(self.weight_heads[1], "weight_head_vis");
        group(self.shfe_ir, "shfe_ir");
        group(self.recon_heads[0], "recon_ir");
        group(self.shfe_vis, "shfe_vis");
        group(self.recon_heads[1], "recon_vis");
        group(self.adapters, "adapter");
    }
};

/// Adapter slot feeding fused feature F_source into the computation of
/// F_target (1 <= source < target <= stages).
std::size_t adapter_index(int source, int target) noexcept;

struct Network : Branches<ConvLayer> {
    NetConfig config;

    std::size_t parameter_count() const;
};

struct ParamGrad {
    Tensor weights;
    std::vector<double> bias;
};

using NetworkGrads = Branches<ParamGrad>;

/// He-normal weights (std sqrt(2 / fan_in)) from a generator seeded with
/// config.seed; zero biases.
Network build_network(const NetConfig& config);

NetworkGrads zero_grads(const Network& net);

std::vector<double> flatten_parameters(const Network& net);
void assign_parameters(Network& net, std::span<const double> flat);
std::vector<double> flatten_grads(const NetworkGrads& grads);

}  // namespace ifes
