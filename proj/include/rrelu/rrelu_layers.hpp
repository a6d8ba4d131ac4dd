#pragma once

// The rotated-ReLU activation layer pieces that sit above the raw ops:
// slope banks and the general-form -> canonical-form rewrite.

#include <string>
#include <vector>

#include "rrelu/ops.hpp"
#include "rrelu/tensor.hpp"

namespace rrelu {

// Per-layer trainable slope vectors, one entry per output channel / neuron.
struct SlopeBank {
    struct Entry {
        std::string layer;
        Tensorf slopes;
        bool trainable = true;
    };
    std::vector<Entry> entries;

    std::size_t total_slopes() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.slopes.size();
        return n;
    }
};

inline void check_sign_vector(const Tensorf& a) {
    for (float v : a.data)
        if (v != 1.0f && v != -1.0f)
            throw ContractError("canonicalize: sign entry must be +1 or -1");
}

// Absorb the +-1 signs of the general form (h = b * max(0, a*x)) into the
// incoming weights, leaving the canonical form h = b * max(0, x).
//
// Linear layer: x = h_prev * W with W [in x out]; unit i's incoming weights
// are column i, so a[i] == -1 negates that column.
inline void canonicalize_linear(const Tensorf& a, Tensorf& w, Tensorf& b) {
    check_sign_vector(a);
    if (w.ndim() != 2 || a.dim(0) != w.dim(1) || b.dim(0) != w.dim(1))
        throw UnsupportedStructureError(
            "canonicalize: sign vector length does not match weight columns " +
            shape_str(w.shape));
    const std::size_t in = w.dim(0), out = w.dim(1);
    for (std::size_t j = 0; j < out; ++j)
        if (a[j] < 0)
            for (std::size_t i = 0; i < in; ++i) w[i * out + j] = -w[i * out + j];
    (void)b;  // slopes are unchanged by the rewrite
}

// Conv layer: filter i produces channel i, so a[i] == -1 negates that filter.
// When batch norm sits between the conv and the activation, the normalized
// signal flips along with the raw one provided beta (and the stored running
// mean) flip too; gamma stays.
inline void canonicalize_conv(const Tensorf& a, Tensorf& w, Tensorf& b,
                              Tensorf* bn_beta = nullptr, Tensorf* bn_running_mean = nullptr) {
    check_sign_vector(a);
    if (w.ndim() != 4 || a.dim(0) != w.dim(0) || b.dim(0) != w.dim(0))
        throw UnsupportedStructureError(
            "canonicalize: sign vector length does not match filter count " +
            shape_str(w.shape));
    const std::size_t f = w.dim(0), per = w.size() / (f ? f : 1);
    for (std::size_t i = 0; i < f; ++i) {
        if (a[i] >= 0) continue;
        float* ws = w.ptr() + i * per;
        for (std::size_t j = 0; j < per; ++j) ws[j] = -ws[j];
        if (bn_beta) (*bn_beta)[i] = -(*bn_beta)[i];
        if (bn_running_mean) (*bn_running_mean)[i] = -(*bn_running_mean)[i];
    }
    (void)b;
}

}  // namespace rrelu
