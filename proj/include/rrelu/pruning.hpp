#pragma once

// Structured channel pruning driven by rotated-ReLU slope magnitudes:
// mask derivation (|b| < gamma), threshold selection against a held-out
// split, mask application (zeroing) and physical compaction, plus the
// random-input equivalence check between the two.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rrelu/data.hpp"
#include "rrelu/model.hpp"

namespace rrelu {

struct PruneMask {
    // activation layer name -> per-channel flags, 1 = pruned
    std::map<std::string, std::vector<std::uint8_t>> masks;
    float gamma = 0.0f;

    std::size_t pruned_count() const;
    std::size_t total_count() const;

    std::string to_json() const;
    static PruneMask from_json(const std::string& text);
};

// Flags every slope with |b| < gamma.  Boundary values survive.
PruneMask derive_mask(const Network& net, float gamma);

// Structural rules: mask lengths must match slope vectors, and a hidden
// layer of a pure feed-forward stack (no residual skip to carry the signal)
// must keep at least one unit.  Throws StructuralError naming the offender.
void validate_mask(const Network& net, const PruneMask& mask);

// Zero the masked slopes (shape-preserving); used for threshold search and
// as the equivalence reference.
Network apply_mask_zero(const Network& net, const PruneMask& mask);

// Physically remove masked channels: filters, batch-norm rows, slope entries
// and downstream weight slices.  Channels feeding a residual join shrink the
// branch only, with a scatter restoring full width before the addition; a
// unit whose final activation is fully masked collapses to its skip.
Network compact(const Network& net, const PruneMask& mask);

struct EquivalenceReport {
    double max_abs_diff = 0.0;
    double tol = 0.0;
    std::size_t n_inputs = 0;
    bool pass = false;
};

// Compares eval-mode outputs of two networks on random inputs.
EquivalenceReport verify_equivalence(const Network& a, const Network& b, std::size_t n_inputs,
                                     double tol, std::uint64_t seed);

struct GammaCandidate {
    float gamma;
    double accuracy;          // zeroed-slope accuracy on the selection split
    double fraction_pruned;   // of all slopes
    bool structurally_valid;
};

struct GammaSearchResult {
    float gamma = 0.0f;       // chosen threshold
    double baseline_accuracy = 0.0;
    double chosen_accuracy = 0.0;
    std::vector<GammaCandidate> table;

    std::string to_json() const;
};

// Sweeps the distinct |slope| values (plus 0) in ascending order and returns
// the largest gamma whose zeroed-slope accuracy on `selection` stays within
// tolerance_pp percentage points of the gamma = 0 accuracy.  Throws
// InputError on an empty selection split.
GammaSearchResult select_gamma(const Network& net, const Dataset& selection,
                               double tolerance_pp);

}  // namespace rrelu
