#include "rrelu/model.hpp"

#include <json.hpp>

#include "rrelu/error.hpp"
#include "rrelu/ops.hpp"

namespace rrelu {

using nlohmann::json;

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Linear: return "linear";
        case LayerKind::Conv: return "conv";
        case LayerKind::BatchNorm: return "bn";
        case LayerKind::ActReLU: return "relu";
        case LayerKind::ActRReLU: return "rrelu";
        case LayerKind::ResidualSave: return "residual-save";
        case LayerKind::ResidualAdd: return "residual-add";
        case LayerKind::DownsamplePad: return "downsample-pad";
        case LayerKind::ChannelScatter: return "channel-scatter";
        case LayerKind::GlobalAvgPool: return "global-avg-pool";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& s) {
    static const std::pair<const char*, LayerKind> table[] = {
        {"flatten", LayerKind::Flatten},
        {"linear", LayerKind::Linear},
        {"conv", LayerKind::Conv},
        {"bn", LayerKind::BatchNorm},
        {"relu", LayerKind::ActReLU},
        {"rrelu", LayerKind::ActRReLU},
        {"residual-save", LayerKind::ResidualSave},
        {"residual-add", LayerKind::ResidualAdd},
        {"downsample-pad", LayerKind::DownsamplePad},
        {"channel-scatter", LayerKind::ChannelScatter},
        {"global-avg-pool", LayerKind::GlobalAvgPool},
    };
    for (const auto& [name, kind] : table)
        if (s == name) return kind;
    throw ParseError("unknown layer kind '" + s + "'");
}

namespace {

LayerKind act_kind(const std::string& activation) {
    if (activation == "relu") return LayerKind::ActReLU;
    if (activation == "rrelu") return LayerKind::ActRReLU;
    throw InputError("unknown activation '" + activation + "' (want relu or rrelu)");
}

}  // namespace

ModelSpec build_fcnn(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                     std::size_t num_classes, const std::string& activation) {
    if (input_dim == 0 || num_classes == 0) throw InputError("fcnn: zero input or class count");
    for (std::size_t h : hidden_dims)
        if (h == 0) throw InputError("fcnn: zero-width hidden layer");
    const LayerKind act = act_kind(activation);
    ModelSpec spec;
    spec.activation = activation;
    spec.num_classes = num_classes;
    spec.input_shape = {input_dim};
    spec.layers.push_back({.kind = LayerKind::Flatten, .name = "flatten"});
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
        const std::string tag = std::to_string(i);
        spec.layers.push_back({.kind = LayerKind::Linear, .name = "fc" + tag,
                               .in = prev, .out = hidden_dims[i]});
        spec.layers.push_back({.kind = act, .name = "act" + tag, .out = hidden_dims[i]});
        prev = hidden_dims[i];
    }
    spec.layers.push_back({.kind = LayerKind::Linear, .name = "fc_out",
                           .in = prev, .out = num_classes, .bias = true});
    return spec;
}

namespace {

ModelSpec build_residual_net(std::size_t stem_width, std::size_t units_per_block,
                             const std::vector<std::size_t>& widths, std::size_t num_classes,
                             const std::string& activation) {
    if (units_per_block < 1) throw InputError("resnet: units_per_block must be >= 1");
    if (widths.empty() || num_classes == 0) throw InputError("resnet: bad widths/classes");
    const LayerKind act = act_kind(activation);
    ModelSpec spec;
    spec.activation = activation;
    spec.num_classes = num_classes;
    spec.input_shape = {3, 32, 32};
    // Stem keeps a plain ReLU in both variants; slopes start at the units.
    spec.layers.push_back({.kind = LayerKind::Conv, .name = "stem.conv",
                           .in = 3, .out = stem_width, .k = 3, .stride = 1, .pad = 1});
    spec.layers.push_back({.kind = LayerKind::BatchNorm, .name = "stem.bn", .out = stem_width});
    spec.layers.push_back({.kind = LayerKind::ActReLU, .name = "stem.act", .out = stem_width});
    std::size_t c_in = stem_width;
    for (std::size_t s = 0; s < widths.size(); ++s) {
        const std::size_t w = widths[s];
        for (std::size_t u = 0; u < units_per_block; ++u) {
            const std::string p = "s" + std::to_string(s) + "u" + std::to_string(u) + ".";
            const std::size_t stride = (s > 0 && u == 0) ? 2 : 1;
            spec.layers.push_back({.kind = LayerKind::ResidualSave, .name = p + "save"});
            spec.layers.push_back({.kind = LayerKind::Conv, .name = p + "conv1",
                                   .in = c_in, .out = w, .k = 3, .stride = stride, .pad = 1});
            spec.layers.push_back({.kind = LayerKind::BatchNorm, .name = p + "bn1", .out = w});
            spec.layers.push_back({.kind = act, .name = p + "act1", .out = w});
            spec.layers.push_back({.kind = LayerKind::Conv, .name = p + "conv2",
                                   .in = w, .out = w, .k = 3, .stride = 1, .pad = 1});
            spec.layers.push_back({.kind = LayerKind::BatchNorm, .name = p + "bn2", .out = w});
            spec.layers.push_back({.kind = act, .name = p + "act2", .out = w});
            spec.layers.push_back({.kind = LayerKind::ResidualAdd, .name = p + "add",
                                   .skip_stride = stride, .skip_pad_channels = w - c_in});
            c_in = w;
        }
    }
    spec.layers.push_back({.kind = LayerKind::GlobalAvgPool, .name = "pool"});
    spec.layers.push_back({.kind = LayerKind::Linear, .name = "fc",
                           .in = widths.back(), .out = num_classes, .bias = true});
    return spec;
}

}  // namespace

ModelSpec build_resnet(std::size_t units_per_block, const std::vector<std::size_t>& widths,
                       std::size_t num_classes, const std::string& activation) {
    if (widths.empty()) throw InputError("resnet: empty width list");
    return build_residual_net(widths[0], units_per_block, widths, num_classes, activation);
}

ModelSpec build_wrn(std::size_t depth, std::size_t widen_factor, std::size_t num_classes,
                    const std::string& activation) {
    if (depth < 10 || (depth - 4) % 6 != 0)
        throw InputError("wrn: depth must satisfy (depth - 4) % 6 == 0");
    if (widen_factor < 1) throw InputError("wrn: widen_factor must be >= 1");
    const std::size_t units = (depth - 4) / 6;
    // Stem stays 16 wide; only the stages widen.
    return build_residual_net(16, units,
                              {16 * widen_factor, 32 * widen_factor, 64 * widen_factor},
                              num_classes, activation);
}

ModelSpec build_named_model(const std::string& name, std::size_t num_classes,
                            const std::string& activation) {
    auto split_dims = [](const std::string& s) {
        std::vector<std::size_t> dims;
        std::size_t pos = 0;
        while (pos < s.size()) {
            std::size_t dash = s.find('-', pos);
            if (dash == std::string::npos) dash = s.size();
            const std::string tok = s.substr(pos, dash - pos);
            try {
                dims.push_back(std::stoul(tok));
            } catch (const std::exception&) {
                throw InputError("bad dimension '" + tok + "' in model name");
            }
            pos = dash + 1;
        }
        return dims;
    };
    if (name.rfind("fcnn-", 0) == 0) {
        auto dims = split_dims(name.substr(5));
        if (dims.size() < 2) throw InputError("fcnn name needs at least input and output dims");
        const std::size_t classes = dims.back();
        if (num_classes != 0 && num_classes != classes)
            throw InputError("fcnn output dim disagrees with requested class count");
        std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
        return build_fcnn(dims.front(), hidden, classes, activation);
    }
    if (name.rfind("resnet", 0) == 0) {
        std::size_t depth = 0;
        try {
            depth = std::stoul(name.substr(6));
        } catch (const std::exception&) {
            throw InputError("bad resnet depth in '" + name + "'");
        }
        if (depth < 8 || (depth - 2) % 6 != 0)
            throw InputError("resnet depth must satisfy (depth - 2) % 6 == 0");
        return build_resnet((depth - 2) / 6, {16, 32, 64},
                            num_classes ? num_classes : 10, activation);
    }
    if (name.rfind("wrn-", 0) == 0) {
        auto dims = split_dims(name.substr(4));
        if (dims.size() != 2) throw InputError("wrn name must be wrn-<depth>-<widen>");
        return build_wrn(dims[0], dims[1], num_classes ? num_classes : 10, activation);
    }
    throw InputError("unknown model name '" + name + "'");
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network Network::build(ModelSpec spec) {
    Network net;
    net.spec = std::move(spec);
    for (const auto& L : net.spec.layers) {
        switch (L.kind) {
            case LayerKind::Linear:
                net.params[L.name + ".W"] = Tensorf({L.in, L.out});
                if (L.bias) net.params[L.name + ".bias"] = Tensorf({L.out});
                break;
            case LayerKind::Conv:
                net.params[L.name + ".W"] = Tensorf({L.out, L.in, L.k, L.k});
                break;
            case LayerKind::BatchNorm:
                net.params[L.name + ".gamma"] = Tensorf::full({L.out}, 1.0f);
                net.params[L.name + ".beta"] = Tensorf({L.out});
                net.buffers[L.name + ".running_mean"] = Tensorf({L.out});
                net.buffers[L.name + ".running_var"] = Tensorf::full({L.out}, 1.0f);
                break;
            case LayerKind::ActRReLU:
                net.params[L.name + ".slopes"] = Tensorf::full({L.out}, 1.0f);
                break;
            default:
                break;
        }
    }
    return net;
}

Tensorf Network::forward_eval(const Tensorf& x) const {
    Tensorf cur = x;
    std::vector<Tensorf> saved;
    for (const auto& L : spec.layers) {
        switch (L.kind) {
            case LayerKind::Flatten:
                cur = cur.reshaped({cur.dim(0), cur.size() / cur.dim(0)});
                break;
            case LayerKind::Linear:
                cur = ops::matmul(cur, params.at(L.name + ".W"));
                if (L.bias) cur = ops::add_rowvec(cur, params.at(L.name + ".bias"));
                break;
            case LayerKind::Conv:
                cur = ops::conv2d_forward(cur, params.at(L.name + ".W"), L.stride, L.pad);
                break;
            case LayerKind::BatchNorm: {
                Tensorf rm = buffers.at(L.name + ".running_mean");
                Tensorf rv = buffers.at(L.name + ".running_var");
                cur = ops::batchnorm2d_forward(cur, params.at(L.name + ".gamma"),
                                               params.at(L.name + ".beta"), rm, rv,
                                               /*train=*/false, bn_eps, bn_momentum,
                                               static_cast<ops::BnAux<float>*>(nullptr));
                break;
            }
            case LayerKind::ActReLU:
                cur = ops::relu(cur);
                break;
            case LayerKind::ActRReLU:
                cur = ops::rrelu_forward(cur, params.at(L.name + ".slopes"));
                break;
            case LayerKind::ResidualSave:
                saved.push_back(cur);
                break;
            case LayerKind::ResidualAdd: {
                Tensorf skip = std::move(saved.back());
                saved.pop_back();
                if (L.skip_stride > 1 || L.skip_pad_channels > 0)
                    skip = ops::downsample_pad(skip, L.skip_stride, L.skip_pad_channels);
                cur = ops::add(cur, skip);
                break;
            }
            case LayerKind::DownsamplePad:
                cur = ops::downsample_pad(cur, L.skip_stride, L.skip_pad_channels);
                break;
            case LayerKind::ChannelScatter:
                cur = ops::channel_scatter(cur, L.map, L.full_width);
                break;
            case LayerKind::GlobalAvgPool:
                cur = ops::global_avg_pool(cur);
                break;
        }
    }
    return cur;
}

Network::Graph Network::forward_ad(const Tensorf& x, bool train_mode, bool train_weights,
                                   bool train_slopes) {
    Graph g;
    auto get_leaf = [&](const std::string& name, bool trainable) {
        auto it = g.leaves.find(name);
        if (it != g.leaves.end()) return it->second;
        auto v = ad::leaf(params.at(name), trainable);
        g.leaves.emplace(name, v);
        return v;
    };
    ad::Varf cur = ad::leaf(x, false);
    std::vector<ad::Varf> saved;
    for (const auto& L : spec.layers) {
        switch (L.kind) {
            case LayerKind::Flatten:
                cur = ad::flatten(cur);
                break;
            case LayerKind::Linear:
                cur = ad::matmul(cur, get_leaf(L.name + ".W", train_weights));
                if (L.bias) cur = ad::add_rowvec(cur, get_leaf(L.name + ".bias", train_weights));
                break;
            case LayerKind::Conv:
                cur = ad::conv2d(cur, get_leaf(L.name + ".W", train_weights), L.stride, L.pad);
                break;
            case LayerKind::BatchNorm:
                cur = ad::batchnorm2d(cur, get_leaf(L.name + ".gamma", train_weights),
                                      get_leaf(L.name + ".beta", train_weights),
                                      buffers.at(L.name + ".running_mean"),
                                      buffers.at(L.name + ".running_var"), train_mode, bn_eps,
                                      bn_momentum);
                break;
            case LayerKind::ActReLU:
                cur = ad::relu(cur);
                break;
            case LayerKind::ActRReLU:
                cur = ad::rrelu(cur, get_leaf(L.name + ".slopes", train_slopes));
                break;
            case LayerKind::ResidualSave:
                saved.push_back(cur);
                break;
            case LayerKind::ResidualAdd: {
                ad::Varf skip = std::move(saved.back());
                saved.pop_back();
                if (L.skip_stride > 1 || L.skip_pad_channels > 0)
                    skip = ad::downsample_pad(skip, L.skip_stride, L.skip_pad_channels);
                cur = ad::add(cur, skip);
                break;
            }
            case LayerKind::DownsamplePad:
                cur = ad::downsample_pad(cur, L.skip_stride, L.skip_pad_channels);
                break;
            case LayerKind::ChannelScatter:
                cur = ad::channel_scatter(cur, L.map, L.full_width);
                break;
            case LayerKind::GlobalAvgPool:
                cur = ad::global_avg_pool(cur);
                break;
        }
    }
    g.logits = cur;
    return g;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

std::vector<std::string> Network::rrelu_layer_names() const {
    std::vector<std::string> out;
    for (const auto& L : spec.layers)
        if (L.kind == LayerKind::ActRReLU) out.push_back(L.name);
    return out;
}

std::size_t count_residual_units(const ModelSpec& spec) {
    std::size_t n = 0;
    for (const auto& L : spec.layers)
        if (L.kind == LayerKind::ResidualAdd) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

std::string spec_to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const auto& L : spec.layers) {
        json j{{"kind", layer_kind_name(L.kind)}, {"name", L.name}};
        switch (L.kind) {
            case LayerKind::Linear:
                j["in"] = L.in;
                j["out"] = L.out;
                j["bias"] = L.bias;
                break;
            case LayerKind::Conv:
                j["in"] = L.in;
                j["out"] = L.out;
                j["k"] = L.k;
                j["stride"] = L.stride;
                j["pad"] = L.pad;
                break;
            case LayerKind::BatchNorm:
            case LayerKind::ActReLU:
            case LayerKind::ActRReLU:
                j["out"] = L.out;
                break;
            case LayerKind::ResidualAdd:
            case LayerKind::DownsamplePad:
                j["skip_stride"] = L.skip_stride;
                j["skip_pad_channels"] = L.skip_pad_channels;
                break;
            case LayerKind::ChannelScatter:
                j["map"] = L.map;
                j["full_width"] = L.full_width;
                break;
            default:
                break;
        }
        layers.push_back(std::move(j));
    }
    json j{{"activation", spec.activation},
           {"num_classes", spec.num_classes},
           {"input_shape", spec.input_shape},
           {"layers", std::move(layers)}};
    return j.dump(2);
}

ModelSpec spec_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model spec: invalid JSON: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec.activation = j.at("activation").get<std::string>();
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        spec.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
        for (const auto& lj : j.at("layers")) {
            LayerDef L;
            L.kind = layer_kind_from_name(lj.at("kind").get<std::string>());
            L.name = lj.at("name").get<std::string>();
            L.in = lj.value("in", std::size_t{0});
            L.out = lj.value("out", std::size_t{0});
            L.k = lj.value("k", std::size_t{0});
            L.stride = lj.value("stride", std::size_t{1});
            L.pad = lj.value("pad", std::size_t{0});
            L.bias = lj.value("bias", false);
            L.skip_stride = lj.value("skip_stride", std::size_t{1});
            L.skip_pad_channels = lj.value("skip_pad_channels", std::size_t{0});
            L.map = lj.value("map", std::vector<std::size_t>{});
            L.full_width = lj.value("full_width", std::size_t{0});
            spec.layers.push_back(std::move(L));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("model spec: missing or mistyped field: ") + e.what());
    }
    return spec;
}

}  // namespace rrelu
