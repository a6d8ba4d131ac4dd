#include "rrelu/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "rrelu/error.hpp"
#include "rrelu/ops.hpp"
#include "rrelu/training.hpp"

namespace rrelu {

using nlohmann::json;

std::size_t PruneMask::pruned_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : masks) n += static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
    return n;
}

std::size_t PruneMask::total_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : masks) n += m.size();
    return n;
}

std::string PruneMask::to_json() const {
    json jm = json::object();
    for (const auto& [name, m] : masks) jm[name] = m;
    return json{{"gamma", gamma}, {"masks", std::move(jm)}}.dump(2);
}

PruneMask PruneMask::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        PruneMask mask;
        mask.gamma = j.at("gamma").get<float>();
        for (const auto& [name, m] : j.at("masks").items())
            mask.masks[name] = m.get<std::vector<std::uint8_t>>();
        return mask;
    } catch (const json::exception& e) {
        throw ParseError(std::string("prune mask: bad JSON: ") + e.what());
    }
}

PruneMask derive_mask(const Network& net, float gamma) {
    PruneMask mask;
    mask.gamma = gamma;
    for (const auto& name : net.rrelu_layer_names()) {
        const Tensorf& slopes = net.params.at(name + ".slopes");
        std::vector<std::uint8_t> m(slopes.size());
        for (std::size_t i = 0; i < slopes.size(); ++i)
            m[i] = std::abs(slopes[i]) < gamma ? 1 : 0;
        mask.masks[name] = std::move(m);
    }
    return mask;
}

namespace {

bool fully_masked(const std::vector<std::uint8_t>& m) {
    return !m.empty() && std::all_of(m.begin(), m.end(), [](std::uint8_t v) { return v == 1; });
}

std::vector<std::size_t> kept_indices(const std::vector<std::uint8_t>& m) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) keep.push_back(i);
    return keep;
}

}  // namespace

void validate_mask(const Network& net, const PruneMask& mask) {
    const auto& layers = net.spec.layers;
    std::set<std::string> known;
    std::size_t depth = 0;  // inside a residual unit?
    for (const auto& L : layers) {
        if (L.kind == LayerKind::ResidualSave) ++depth;
        if (L.kind == LayerKind::ResidualAdd) {
            if (depth == 0) throw StructuralError("validate_mask: unbalanced residual join");
            --depth;
        }
        if (L.kind != LayerKind::ActRReLU) continue;
        known.insert(L.name);
        auto it = mask.masks.find(L.name);
        if (it == mask.masks.end()) continue;  // absent layer keeps all channels
        if (it->second.size() != L.out)
            throw StructuralError("validate_mask: layer " + L.name + " has " +
                                  std::to_string(L.out) + " slopes but the mask lists " +
                                  std::to_string(it->second.size()));
        // Outside a residual unit there is no skip to carry the signal, so the
        // layer must keep at least one unit.
        if (depth == 0 && fully_masked(it->second))
            throw StructuralError("validate_mask: mask empties layer " + L.name +
                                  ", which has no skip path to carry its signal");
    }
    for (const auto& [name, m] : mask.masks)
        if (!known.count(name))
            throw StructuralError("validate_mask: mask names unknown layer " + name);
}

Network apply_mask_zero(const Network& net, const PruneMask& mask) {
    validate_mask(net, mask);
    Network out = net;
    for (const auto& [name, m] : mask.masks) {
        Tensorf& slopes = out.params.at(name + ".slopes");
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i]) slopes[i] = 0.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Physical compaction
// ---------------------------------------------------------------------------

namespace {

Tensorf slice_vec(const Tensorf& v, const std::vector<std::size_t>& keep) {
    Tensorf out({keep.size()});
    for (std::size_t i = 0; i < keep.size(); ++i) out[i] = v[keep[i]];
    return out;
}

// Linear weight [in x out]: keep input rows and output columns.
Tensorf slice_linear(const Tensorf& w, const std::vector<std::size_t>& keep_in,
                     const std::vector<std::size_t>& keep_out) {
    Tensorf out({keep_in.size(), keep_out.size()});
    for (std::size_t i = 0; i < keep_in.size(); ++i)
        for (std::size_t j = 0; j < keep_out.size(); ++j)
            out[i * keep_out.size() + j] = w[keep_in[i] * w.dim(1) + keep_out[j]];
    return out;
}

// Conv weight [F x C x k x k]: keep filters and input sub-filters.
Tensorf slice_conv(const Tensorf& w, const std::vector<std::size_t>& keep_in,
                   const std::vector<std::size_t>& keep_out) {
    const std::size_t c = w.dim(1), k = w.dim(2);
    Tensorf out({keep_out.size(), keep_in.size(), k, k});
    for (std::size_t f = 0; f < keep_out.size(); ++f)
        for (std::size_t ci = 0; ci < keep_in.size(); ++ci)
            for (std::size_t j = 0; j < k * k; ++j)
                out[(f * keep_in.size() + ci) * k * k + j] =
                    w[(keep_out[f] * c + keep_in[ci]) * k * k + j];
    return out;
}

std::vector<std::size_t> identity_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

Network compact(const Network& net, const PruneMask& mask) {
    validate_mask(net, mask);
    const auto& layers = net.spec.layers;
    for (const auto& L : layers)
        if (L.kind == LayerKind::ChannelScatter)
            throw ContractError("compact: model is already compacted");

    auto mask_of = [&](const std::string& act_name) -> const std::vector<std::uint8_t>* {
        auto it = mask.masks.find(act_name);
        return it == mask.masks.end() ? nullptr : &it->second;
    };

    // Match each residual save with its join, and mark units whose final
    // activation is fully masked: their branch is identically zero, so the
    // whole unit collapses to its skip.
    std::vector<std::size_t> match(layers.size(), layers.size());
    std::vector<bool> removed(layers.size(), false);  // indexed by save position
    {
        std::vector<std::size_t> stack;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].kind == LayerKind::ResidualSave) stack.push_back(i);
            if (layers[i].kind == LayerKind::ResidualAdd) {
                if (stack.empty()) throw StructuralError("compact: unbalanced residual join");
                match[stack.back()] = i;
                stack.pop_back();
            }
        }
        for (std::size_t s = 0; s < layers.size(); ++s) {
            if (layers[s].kind != LayerKind::ResidualSave) continue;
            const std::vector<std::uint8_t>* last_act = nullptr;
            for (std::size_t j = s + 1; j < match[s]; ++j)
                if (layers[j].kind == LayerKind::ActRReLU) last_act = mask_of(layers[j].name);
            if (last_act && fully_masked(*last_act)) removed[s] = true;
        }
    }

    // For a weighted layer at index i, the keep-set its consumer activation
    // dictates (everything kept when no rotated activation follows).
    auto out_keep_for = [&](std::size_t i) {
        for (std::size_t j = i + 1; j < layers.size(); ++j) {
            if (layers[j].kind == LayerKind::BatchNorm) continue;
            if (layers[j].kind == LayerKind::ActRReLU) {
                const auto* m = mask_of(layers[j].name);
                return m ? kept_indices(*m) : identity_indices(layers[j].out);
            }
            break;
        }
        return identity_indices(layers[i].out);
    };

    ModelSpec out_spec;
    out_spec.activation = net.spec.activation;
    out_spec.num_classes = net.spec.num_classes;
    out_spec.input_shape = net.spec.input_shape;

    Network out;
    out.bn_eps = net.bn_eps;
    out.bn_momentum = net.bn_momentum;

    // cur_keep: original channel indices still present in the live feature;
    // cur_width: the feature's original (pre-pruning) width.
    std::size_t cur_width = net.spec.input_shape.size() == 1
                                ? net.spec.input_shape[0]
                                : net.spec.input_shape[0];
    std::vector<std::size_t> cur_keep = identity_indices(cur_width);

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerDef& L = layers[i];
        switch (L.kind) {
            case LayerKind::ResidualSave: {
                if (removed[i]) {
                    // Unit output == its skip.  A stage transition keeps the
                    // parameter-free downsample; otherwise the unit vanishes.
                    const std::size_t add = match[i];
                    const LayerDef& join = layers[add];
                    if (join.skip_stride > 1 || join.skip_pad_channels > 0) {
                        out_spec.layers.push_back({.kind = LayerKind::DownsamplePad,
                                                   .name = layers[i].name + ".skip",
                                                   .skip_stride = join.skip_stride,
                                                   .skip_pad_channels = join.skip_pad_channels});
                        cur_width += join.skip_pad_channels;
                        cur_keep = identity_indices(cur_width);
                    }
                    i = add;  // skip the unit's layers entirely
                    break;
                }
                if (cur_keep.size() != cur_width)
                    throw UnsupportedStructureError(
                        "compact: residual skip taken from a narrowed feature");
                out_spec.layers.push_back(L);
                break;
            }
            case LayerKind::Flatten: {
                if (cur_keep.size() != cur_width)
                    throw UnsupportedStructureError("compact: flatten over a narrowed feature");
                out_spec.layers.push_back(L);
                // flattening merges spatial extent into the channel axis
                if (net.spec.input_shape.size() > 1) {
                    cur_width = numel(net.spec.input_shape);
                    cur_keep = identity_indices(cur_width);
                }
                break;
            }
            case LayerKind::Linear: {
                const auto keep_out = out_keep_for(i);
                LayerDef nl = L;
                nl.in = cur_keep.size();
                nl.out = keep_out.size();
                out_spec.layers.push_back(nl);
                out.params[L.name + ".W"] =
                    slice_linear(net.params.at(L.name + ".W"), cur_keep, keep_out);
                if (L.bias)
                    out.params[L.name + ".bias"] =
                        slice_vec(net.params.at(L.name + ".bias"), keep_out);
                cur_keep = keep_out;
                cur_width = L.out;
                break;
            }
            case LayerKind::Conv: {
                const auto keep_out = out_keep_for(i);
                LayerDef nl = L;
                nl.in = cur_keep.size();
                nl.out = keep_out.size();
                out_spec.layers.push_back(nl);
                out.params[L.name + ".W"] =
                    slice_conv(net.params.at(L.name + ".W"), cur_keep, keep_out);
                cur_keep = keep_out;
                cur_width = L.out;
                break;
            }
            case LayerKind::BatchNorm: {
                LayerDef nl = L;
                nl.out = cur_keep.size();
                out_spec.layers.push_back(nl);
                out.params[L.name + ".gamma"] =
                    slice_vec(net.params.at(L.name + ".gamma"), cur_keep);
                out.params[L.name + ".beta"] = slice_vec(net.params.at(L.name + ".beta"), cur_keep);
                out.buffers[L.name + ".running_mean"] =
                    slice_vec(net.buffers.at(L.name + ".running_mean"), cur_keep);
                out.buffers[L.name + ".running_var"] =
                    slice_vec(net.buffers.at(L.name + ".running_var"), cur_keep);
                break;
            }
            case LayerKind::ActReLU: {
                LayerDef nl = L;
                nl.out = cur_keep.size();
                out_spec.layers.push_back(nl);
                break;
            }
            case LayerKind::ActRReLU: {
                LayerDef nl = L;
                nl.out = cur_keep.size();
                out_spec.layers.push_back(nl);
                out.params[L.name + ".slopes"] =
                    slice_vec(net.params.at(L.name + ".slopes"), cur_keep);
                // A narrowed branch that feeds a join scatters back to full
                // width (the removed slots are zero; the skip supplies them).
                const bool feeds_join =
                    i + 1 < layers.size() && (layers[i + 1].kind == LayerKind::ResidualAdd ||
                                              layers[i + 1].kind == LayerKind::ResidualSave ||
                                              layers[i + 1].kind == LayerKind::GlobalAvgPool);
                if (feeds_join && cur_keep.size() != cur_width) {
                    out_spec.layers.push_back({.kind = LayerKind::ChannelScatter,
                                               .name = L.name + ".scatter",
                                               .map = cur_keep,
                                               .full_width = cur_width});
                    cur_keep = identity_indices(cur_width);
                }
                break;
            }
            case LayerKind::ResidualAdd: {
                if (cur_keep.size() != cur_width)
                    throw UnsupportedStructureError("compact: join over a narrowed feature");
                out_spec.layers.push_back(L);
                break;
            }
            case LayerKind::GlobalAvgPool:
            case LayerKind::DownsamplePad:
            case LayerKind::ChannelScatter: {
                out_spec.layers.push_back(L);
                break;
            }
        }
    }

    out.spec = std::move(out_spec);

    // Allocate anything the walk above did not fill (degenerate layers keep
    // their zero-sized tensors), then overlay the sliced values.
    Network shell = Network::build(out.spec);
    for (auto& [name, t] : shell.params) {
        auto it = out.params.find(name);
        if (it != out.params.end()) t = std::move(it->second);
    }
    for (auto& [name, t] : shell.buffers) {
        auto it = out.buffers.find(name);
        if (it != out.buffers.end()) t = std::move(it->second);
    }
    shell.bn_eps = out.bn_eps;
    shell.bn_momentum = out.bn_momentum;
    return shell;
}

EquivalenceReport verify_equivalence(const Network& a, const Network& b, std::size_t n_inputs,
                                     double tol, std::uint64_t seed) {
    if (n_inputs == 0) throw InputError("verify_equivalence: need at least one input");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> unit(0.0f, 1.0f);
    std::vector<std::size_t> shape = {n_inputs};
    for (std::size_t d : a.spec.input_shape) shape.push_back(d);
    Tensorf x(shape);
    for (auto& v : x.data) v = unit(rng);
    const Tensorf ya = a.forward_eval(x);
    const Tensorf yb = b.forward_eval(x);
    if (!ya.same_shape(yb))
        throw DimensionError("verify_equivalence: output shapes differ, " + shape_str(ya.shape) +
                             " vs " + shape_str(yb.shape));
    EquivalenceReport rep;
    rep.tol = tol;
    rep.n_inputs = n_inputs;
    for (std::size_t i = 0; i < ya.size(); ++i)
        rep.max_abs_diff = std::max(rep.max_abs_diff,
                                    static_cast<double>(std::abs(ya[i] - yb[i])));
    rep.pass = rep.max_abs_diff < tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

std::string GammaSearchResult::to_json() const {
    json rows = json::array();
    for (const auto& c : table)
        rows.push_back(json{{"gamma", c.gamma},
                            {"accuracy", c.accuracy},
                            {"fraction_pruned", c.fraction_pruned},
                            {"structurally_valid", c.structurally_valid}});
    return json{{"gamma", gamma},
                {"baseline_accuracy", baseline_accuracy},
                {"chosen_accuracy", chosen_accuracy},
                {"candidates", std::move(rows)}}
        .dump(2);
}

GammaSearchResult select_gamma(const Network& net, const Dataset& selection,
                               double tolerance_pp) {
    if (selection.size() == 0) throw InputError("select_gamma: empty selection split");
    std::set<float> values;
    for (const auto& name : net.rrelu_layer_names())
        for (float v : net.params.at(name + ".slopes").data) values.insert(std::abs(v));
    if (values.empty()) throw ContractError("select_gamma: model has no slopes");

    const double baseline = evaluate_accuracy(net, selection, 256);
    const double tol = tolerance_pp / 100.0;
    std::size_t total_slopes = 0;
    for (const auto& name : net.rrelu_layer_names())
        total_slopes += net.params.at(name + ".slopes").size();

    GammaSearchResult res;
    res.gamma = 0.0f;
    res.baseline_accuracy = baseline;
    res.chosen_accuracy = baseline;
    res.table.push_back({0.0f, baseline, 0.0, true});

    // Masks are monotone in gamma: each |slope| value, used as the threshold,
    // prunes everything strictly below it.  Walk ascending and keep the
    // largest structurally valid candidate within tolerance.
    for (const float g : values) {
        PruneMask m = derive_mask(net, g);
        GammaCandidate cand{g, 0.0, static_cast<double>(m.pruned_count()) /
                                        static_cast<double>(total_slopes),
                            true};
        try {
            validate_mask(net, m);
        } catch (const StructuralError&) {
            cand.structurally_valid = false;
            res.table.push_back(cand);
            break;  // supersets of an invalid mask stay invalid
        }
        const Network zeroed = apply_mask_zero(net, m);
        cand.accuracy = evaluate_accuracy(zeroed, selection, 256);
        res.table.push_back(cand);
        if (baseline - cand.accuracy <= tol) {
            res.gamma = g;
            res.chosen_accuracy = cand.accuracy;
        }
    }
    return res;
}

}  // namespace rrelu
