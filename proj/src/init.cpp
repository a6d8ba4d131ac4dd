#include "rrelu/init.hpp"

#include <cmath>

#include "rrelu/error.hpp"

namespace rrelu {

void kaiming_fill(Tensorf& w, std::size_t fan_in, std::mt19937_64& rng) {
    if (fan_in == 0) return;  // degenerate zero-input layer has no weights to draw
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& v : w.data) v = dist(rng);
}

float sample_truncated_gmm(std::mt19937_64& rng) {
    std::bernoulli_distribution pick(0.5);
    std::normal_distribution<double> comp(1.0, std::sqrt(3.0));
    for (;;) {
        const double mu = pick(rng) ? 1.0 : -1.0;
        const double v = mu * comp(rng);  // mirror the +1 component for the -1 one
        const double m = std::abs(v);
        if (m >= kSlopeBandLo && m <= kSlopeBandHi) return static_cast<float>(v);
    }
}

void init_type1(Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& L : net.spec.layers) {
        switch (L.kind) {
            case LayerKind::Linear: {
                kaiming_fill(net.params.at(L.name + ".W"), L.in, rng);
                if (L.bias) net.params.at(L.name + ".bias") = Tensorf({L.out});
                break;
            }
            case LayerKind::Conv:
                kaiming_fill(net.params.at(L.name + ".W"), L.in * L.k * L.k, rng);
                break;
            case LayerKind::BatchNorm:
                net.params.at(L.name + ".gamma") = Tensorf::full({L.out}, 1.0f);
                net.params.at(L.name + ".beta") = Tensorf({L.out});
                net.buffers.at(L.name + ".running_mean") = Tensorf({L.out});
                net.buffers.at(L.name + ".running_var") = Tensorf::full({L.out}, 1.0f);
                break;
            case LayerKind::ActRReLU: {
                auto& slopes = net.params.at(L.name + ".slopes");
                for (auto& v : slopes.data) v = sample_truncated_gmm(rng);
                break;
            }
            default:
                break;
        }
    }
}

void init_type2(Network& net, const Network& donor) {
    // Layer structure must match apart from the activation kinds.
    if (net.spec.layers.size() != donor.spec.layers.size())
        throw CheckpointError(CheckpointError::Kind::Incompatible,
                              "type-2 init: layer counts differ");
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const auto& a = net.spec.layers[i];
        const auto& b = donor.spec.layers[i];
        const bool both_acts = (a.kind == LayerKind::ActReLU || a.kind == LayerKind::ActRReLU) &&
                               (b.kind == LayerKind::ActReLU || b.kind == LayerKind::ActRReLU);
        if ((a.kind != b.kind && !both_acts) || a.out != b.out || a.in != b.in || a.k != b.k)
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "type-2 init: layer " + a.name + " does not match donor");
    }
    for (auto& [name, t] : net.params) {
        if (name.size() > 7 && name.substr(name.size() - 7) == ".slopes") {
            t = Tensorf::full(t.shape, 1.0f);
            continue;
        }
        auto it = donor.params.find(name);
        if (it == donor.params.end() || !it->second.same_shape(t))
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "type-2 init: donor lacks tensor " + name);
        t = it->second;
    }
    for (auto& [name, t] : net.buffers) {
        auto it = donor.buffers.find(name);
        if (it == donor.buffers.end() || !it->second.same_shape(t))
            throw CheckpointError(CheckpointError::Kind::Incompatible,
                                  "type-2 init: donor lacks buffer " + name);
        t = it->second;
    }
    net.bn_eps = donor.bn_eps;
    net.bn_momentum = donor.bn_momentum;
}

}  // namespace rrelu
