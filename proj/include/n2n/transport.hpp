#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "n2n/vec3.hpp"

namespace n2n::transport {

// One-to-one mapping between two equal-size point batches with minimal total
// Euclidean transport cost.
struct Assignment {
    std::vector<uint32_t> perm;  // source index -> target index, a bijection
    double total_cost = 0.0;
};

// Globally optimal bijection under Euclidean (not squared) cost, computed by
// an exact O(m^3) Hungarian solver. Equal-cost optima are tie-broken towards
// the lexicographically smallest permutation (exactly for m <= 16, via a
// swap-neutral refinement pass above that).
Assignment min_cost_assignment(std::span<const Vec3> a, std::span<const Vec3> b);

// Approximate auction solver for very large batches; exact enough in practice
// but not guaranteed optimal. Only used when explicitly requested.
Assignment auction_assignment(std::span<const Vec3> a, std::span<const Vec3> b,
                              double epsilon_scale = 0.05);

struct EmdLoss {
    double value = 0.0;              // mean-reduced transport cost
    std::vector<Vec3> grad;          // subgradient w.r.t. each point of A
    std::vector<uint32_t> perm;      // the minimizing assignment
};

// Mean-reduced EMD with the envelope-theorem subgradient: the assignment is
// held fixed, each matched pair contributes its unit direction / m, and a
// coincident pair contributes zero.
EmdLoss emd_loss(std::span<const Vec3> a, std::span<const Vec3> b);

}  // namespace n2n::transport
