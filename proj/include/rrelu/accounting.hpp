#pragma once

// Parameter and FLOP accounting.  Two FLOP columns are produced: the
// closed-form convention (multiplies = c_in k^2 h' w' c_out, adds =
// (c_in - 1)(k^2 - 1) h' w' c_out, FLOPs = 2 x multiplies; fully connected
// FLOPs = 2 h_in h_out; one add per element at every residual join) and an
// independent oracle that walks the output elements of each layer counting
// every executed multiply and add.  Also: the distribution of distinct
// filter-path lengths through the residual units, and slope histograms.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rrelu/model.hpp"

namespace rrelu {

struct ParamRow {
    std::string name;
    std::string kind;
    std::size_t weights = 0, biases = 0, bn = 0, slopes = 0;
    std::size_t total() const { return weights + biases + bn + slopes; }
};

struct ParamReport {
    std::vector<ParamRow> rows;
    std::size_t weights = 0, biases = 0, bn = 0, slopes = 0;
    std::size_t total() const { return weights + biases + bn + slopes; }
};

ParamReport count_params(const ModelSpec& spec);

struct FlopRow {
    std::string name;
    std::string kind;
    std::size_t mults = 0, adds = 0;
    // formula column: 2 x mults for weighted layers; oracle column: mults + adds
    std::size_t flops = 0;
};

struct FlopReport {
    std::vector<FlopRow> rows;
    std::size_t mults = 0, adds = 0, flops = 0;
};

// Closed-form counts per layer (weighted layers and residual joins only).
FlopReport count_flops_formula(const ModelSpec& spec);

// Element-walking oracle; includes batch-norm / activation / pooling rows so
// the weighted-layer rows can be compared against the formula column.
FlopReport count_flops_oracle(const ModelSpec& spec);

struct SavingsReport {
    ParamReport params_before, params_after;
    FlopReport flops_before, flops_after;
    std::size_t slopes_total = 0, slopes_pruned = 0;
    float gamma = 0.0f;

    std::string to_text() const;
    std::string to_csv() const;
};

SavingsReport savings_report(const ModelSpec& before, const ModelSpec& after,
                             std::size_t slopes_total, std::size_t slopes_pruned, float gamma);

// Filter-path length distribution: each residual unit contributes either 0
// (skip) or its active filter count (branch); counts are exact over the
// 2^units binary choices.
struct FilterPathDistribution {
    std::size_t units = 0;
    std::map<std::uint64_t, unsigned __int128> counts;  // path length -> #paths

    unsigned __int128 total_paths() const;  // == 2^units
    std::uint64_t max_length() const;
    std::string to_json() const;  // counts as decimal strings
};

FilterPathDistribution filter_path_distribution(const std::vector<std::uint64_t>& unit_filters);

// Per-unit active (surviving) filter counts of a spec, in order.
std::vector<std::uint64_t> per_unit_filter_counts(const ModelSpec& spec);

// Slope values per activation layer (for histogram export).
std::map<std::string, std::vector<float>> collect_slopes(const Network& net);
void write_slope_csv(const Network& net, const std::string& path);

std::string u128_to_string(unsigned __int128 v);

}  // namespace rrelu
