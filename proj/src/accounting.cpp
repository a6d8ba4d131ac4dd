#include "rrelu/accounting.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rrelu/error.hpp"
#include "rrelu/ops.hpp"

namespace rrelu {

using nlohmann::json;

ParamReport count_params(const ModelSpec& spec) {
    ParamReport rep;
    for (const auto& L : spec.layers) {
        ParamRow row{L.name, layer_kind_name(L.kind), 0, 0, 0, 0};
        switch (L.kind) {
            case LayerKind::Linear:
                row.weights = L.in * L.out;
                if (L.bias) row.biases = L.out;
                break;
            case LayerKind::Conv:
                row.weights = L.out * L.in * L.k * L.k;
                break;
            case LayerKind::BatchNorm:
                row.bn = 2 * L.out;  // gamma + beta
                break;
            case LayerKind::ActRReLU:
                row.slopes = L.out;
                break;
            default:
                continue;  // parameter-free layers get no row
        }
        rep.weights += row.weights;
        rep.biases += row.biases;
        rep.bn += row.bn;
        rep.slopes += row.slopes;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

namespace {

struct FeatShape {
    std::size_t c = 0, h = 1, w = 1;
};

// Walks the layer list tracking the per-sample feature shape; calls fn once
// per layer with the input shape it sees.
template <typename Fn>
void trace_shapes(const ModelSpec& spec, Fn&& fn) {
    FeatShape cur;
    if (spec.input_shape.size() == 1) {
        cur = {spec.input_shape[0], 1, 1};
    } else if (spec.input_shape.size() == 3) {
        cur = {spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
    } else {
        throw InputError("accounting: input shape must be [D] or [C,H,W]");
    }
    std::vector<FeatShape> saved;
    for (const auto& L : spec.layers) {
        const FeatShape in = cur;
        switch (L.kind) {
            case LayerKind::Flatten:
                cur = {in.c * in.h * in.w, 1, 1};
                break;
            case LayerKind::Linear:
                cur = {L.out, 1, 1};
                break;
            case LayerKind::Conv:
                cur = {L.out, ops::conv_out_dim(in.h, L.k, L.stride, L.pad),
                       ops::conv_out_dim(in.w, L.k, L.stride, L.pad)};
                break;
            case LayerKind::BatchNorm:
            case LayerKind::ActReLU:
            case LayerKind::ActRReLU:
                break;
            case LayerKind::ResidualSave:
                saved.push_back(in);
                break;
            case LayerKind::ResidualAdd:
                saved.pop_back();  // join output keeps the branch shape
                break;
            case LayerKind::DownsamplePad:
                cur = {in.c + L.skip_pad_channels, (in.h + L.skip_stride - 1) / L.skip_stride,
                       (in.w + L.skip_stride - 1) / L.skip_stride};
                break;
            case LayerKind::ChannelScatter:
                cur = {L.full_width, in.h, in.w};
                break;
            case LayerKind::GlobalAvgPool:
                cur = {in.c, 1, 1};
                break;
        }
        fn(L, in, cur);
    }
}

}  // namespace

FlopReport count_flops_formula(const ModelSpec& spec) {
    FlopReport rep;
    trace_shapes(spec, [&](const LayerDef& L, const FeatShape& in, const FeatShape& out) {
        FlopRow row{L.name, layer_kind_name(L.kind), 0, 0, 0};
        switch (L.kind) {
            case LayerKind::Linear:
                row.mults = L.in * L.out;
                row.adds = L.in > 0 ? (L.in - 1) * L.out : 0;
                row.flops = 2 * L.in * L.out;
                break;
            case LayerKind::Conv: {
                const std::size_t hw = out.h * out.w;
                row.mults = L.in * L.k * L.k * hw * L.out;
                row.adds = L.in > 0 && L.k > 0
                               ? (L.in - 1) * (L.k * L.k - 1) * hw * L.out
                               : 0;
                row.flops = 2 * row.mults;
                break;
            }
            case LayerKind::ResidualAdd:
                row.adds = out.c * out.h * out.w;
                row.flops = row.adds;
                break;
            default:
                (void)in;
                return;  // not part of the closed-form convention
        }
        rep.mults += row.mults;
        rep.adds += row.adds;
        rep.flops += row.flops;
        rep.rows.push_back(std::move(row));
    });
    return rep;
}

FlopReport count_flops_oracle(const ModelSpec& spec) {
    FlopReport rep;
    trace_shapes(spec, [&](const LayerDef& L, const FeatShape& in, const FeatShape& out) {
        FlopRow row{L.name, layer_kind_name(L.kind), 0, 0, 0};
        switch (L.kind) {
            case LayerKind::Linear:
                // per output element: a length-`in` fma chain, plus the bias add
                for (std::size_t j = 0; j < L.out; ++j) {
                    row.mults += L.in;
                    row.adds += L.in > 0 ? L.in - 1 : 0;
                    if (L.bias) row.adds += 1;
                }
                break;
            case LayerKind::Conv: {
                const std::size_t fan = L.in * L.k * L.k;
                for (std::size_t f = 0; f < L.out; ++f)
                    for (std::size_t i = 0; i < out.h; ++i)
                        for (std::size_t j = 0; j < out.w; ++j) {
                            row.mults += fan;
                            row.adds += fan > 0 ? fan - 1 : 0;
                        }
                break;
            }
            case LayerKind::BatchNorm:
                // evaluation mode: one fused multiply-add per element
                row.mults = in.c * in.h * in.w;
                row.adds = in.c * in.h * in.w;
                break;
            case LayerKind::ActRReLU:
                row.mults = in.c * in.h * in.w;  // slope scaling
                break;
            case LayerKind::ResidualAdd:
                row.adds = out.c * out.h * out.w;
                break;
            case LayerKind::GlobalAvgPool:
                row.adds = in.h * in.w > 0 ? in.c * (in.h * in.w - 1) : 0;
                break;
            default:
                return;  // relu / reshapes / scatter move data, no arithmetic
        }
        row.flops = row.mults + row.adds;
        rep.mults += row.mults;
        rep.adds += row.adds;
        rep.flops += row.flops;
        rep.rows.push_back(std::move(row));
    });
    return rep;
}

SavingsReport savings_report(const ModelSpec& before, const ModelSpec& after,
                             std::size_t slopes_total, std::size_t slopes_pruned, float gamma) {
    SavingsReport rep;
    rep.params_before = count_params(before);
    rep.params_after = count_params(after);
    rep.flops_before = count_flops_formula(before);
    rep.flops_after = count_flops_formula(after);
    rep.slopes_total = slopes_total;
    rep.slopes_pruned = slopes_pruned;
    rep.gamma = gamma;
    return rep;
}

std::string SavingsReport::to_text() const {
    std::ostringstream os;
    const double pct = slopes_total
                           ? 100.0 * static_cast<double>(slopes_pruned) /
                                 static_cast<double>(slopes_total)
                           : 0.0;
    os << "pruning report (gamma = " << gamma << ")\n";
    os << "  filters ignored: " << slopes_pruned << " / " << slopes_total << " (" << pct
       << "%)\n";
    os << "  parameters: " << params_before.total() << " -> " << params_after.total() << " (saved "
       << params_before.total() - params_after.total() << ")\n";
    os << "  flops (formula, per sample): " << flops_before.flops << " -> " << flops_after.flops
       << "\n";
    return os.str();
}

std::string SavingsReport::to_csv() const {
    std::ostringstream os;
    os << "layer,kind,params_before,params_after,flops_before,flops_after\n";
    // Row alignment: pruned specs can drop layers, so match by name.
    auto find_param = [](const ParamReport& r, const std::string& name) -> std::size_t {
        for (const auto& row : r.rows)
            if (row.name == name) return row.total();
        return 0;
    };
    auto find_flops = [](const FlopReport& r, const std::string& name) -> std::size_t {
        for (const auto& row : r.rows)
            if (row.name == name) return row.flops;
        return 0;
    };
    for (const auto& row : params_before.rows)
        os << row.name << "," << row.kind << "," << row.total() << ","
           << find_param(params_after, row.name) << "," << find_flops(flops_before, row.name)
           << "," << find_flops(flops_after, row.name) << "\n";
    os << "total,," << params_before.total() << "," << params_after.total() << ","
       << flops_before.flops << "," << flops_after.flops << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Filter paths
// ---------------------------------------------------------------------------

unsigned __int128 FilterPathDistribution::total_paths() const {
    unsigned __int128 n = 0;
    for (const auto& [len, c] : counts) n += c;
    return n;
}

std::uint64_t FilterPathDistribution::max_length() const {
    return counts.empty() ? 0 : counts.rbegin()->first;
}

std::string u128_to_string(unsigned __int128 v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

std::string FilterPathDistribution::to_json() const {
    json jc = json::object();
    for (const auto& [len, c] : counts) jc[std::to_string(len)] = u128_to_string(c);
    return json{{"units", units},
                {"total_paths", u128_to_string(total_paths())},
                {"max_length", max_length()},
                {"counts", std::move(jc)}}
        .dump(2);
}

FilterPathDistribution filter_path_distribution(const std::vector<std::uint64_t>& unit_filters) {
    if (unit_filters.size() > 120)
        throw InputError("filter_path_distribution: too many units for exact 128-bit counts");
    FilterPathDistribution dist;
    dist.units = unit_filters.size();
    dist.counts[0] = 1;
    // One two-point distribution {0, f} per unit, convolved in.
    for (std::uint64_t f : unit_filters) {
        std::map<std::uint64_t, unsigned __int128> next;
        for (const auto& [len, c] : dist.counts) {
            next[len] += c;
            next[len + f] += c;
        }
        dist.counts = std::move(next);
    }
    return dist;
}

std::vector<std::uint64_t> per_unit_filter_counts(const ModelSpec& spec) {
    std::vector<std::uint64_t> out;
    std::size_t depth = 0;
    std::uint64_t acc = 0;
    for (const auto& L : spec.layers) {
        if (L.kind == LayerKind::ResidualSave) {
            ++depth;
            acc = 0;
        } else if (L.kind == LayerKind::ResidualAdd) {
            if (depth == 0) throw InputError("per_unit_filter_counts: unbalanced join");
            --depth;
            out.push_back(acc);
        } else if (L.kind == LayerKind::Conv && depth > 0) {
            acc += L.out;
        }
    }
    return out;
}

std::map<std::string, std::vector<float>> collect_slopes(const Network& net) {
    std::map<std::string, std::vector<float>> out;
    for (const auto& name : net.rrelu_layer_names())
        out[name] = net.params.at(name + ".slopes").data;
    return out;
}

void write_slope_csv(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("slope export: cannot open " + path);
    f << "layer,index,slope\n";
    for (const auto& [name, slopes] : collect_slopes(net))
        for (std::size_t i = 0; i < slopes.size(); ++i)
            f << name << "," << i << "," << slopes[i] << "\n";
}

}  // namespace rrelu
