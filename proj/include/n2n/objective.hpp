#pragma once

#include <cstdint>
#include <span>

#include "n2n/ad.hpp"
#include "n2n/field.hpp"
#include "n2n/vec3.hpp"

namespace n2n::objective {

// Threshold below which the field gradient is considered degenerate.
constexpr double GRAD_EPSILON = 1e-8;

struct LossWeights {
    double lambda = 0.1;     // geometric-consistency weight
    double lambda2 = 0.001;  // eikonal weight (fast mode)
    int64_t lambda1_ramp = 1000;

    // Pull-loss weight schedule: falls linearly from 1 to 0 over the ramp and
    // stays exactly zero afterwards.
    double lambda1(int64_t iter) const {
        return iter < lambda1_ramp
                   ? 1.0 - static_cast<double>(iter) / static_cast<double>(lambda1_ramp)
                   : 0.0;
    }
};

void validate(const LossWeights& w);

enum class Mode { Mlp, Fast };

struct PullOptions {
    bool detach_direction = false;  // ablation: stop gradients through g/|g|
    double grad_epsilon = GRAD_EPSILON;
};

// Shortest-path projection toward the zero level set:
//   q - f(q) * grad f(q) / |grad f(q)|.
// Throws NumericError when the gradient is degenerate.
Vec3 pull(const field::FieldParams& params, const Vec3& q);

// One query recorded on a tape up to its pulled position.
struct RecordedPoint {
    int d = -1;       // field value node
    int grad = -1;    // input-gradient node
    int pulled = -1;  // pulled position node (-1 when degenerate)
    bool degenerate = false;
    double d_value = 0.0;
    Vec3 pulled_value;
};
RecordedPoint record_pull(ad::Tape& tape, const field::FieldParams& params, const Vec3& q,
                          const PullOptions& opts = {});

// Per-term weights for one point's contribution (already divided by the batch
// size). A zero weight skips recording the term entirely.
struct TermWeights {
    double emd = 0.0;
    double gc = 0.0;
    double pull = 0.0;
    double eik = 0.0;
};

// Records this point's weighted loss contribution and returns the scalar root.
// gc_nearest is the (constant) distance from the query to the nearest other
// pulled point of the step.
int record_point_loss(ad::Tape& tape, const RecordedPoint& point, const Vec3& query,
                      const Vec3* emd_target, double gc_nearest, const Vec3* pull_target,
                      const TermWeights& w);

// --- plain (value-only) operations ------------------------------------------

// EMD between the pulled queries and the target batch, mean-reduced.
double noise2noise_term(const field::FieldParams& params, std::span<const Vec3> queries,
                        std::span<const Vec3> targets, const PullOptions& opts = {});

// Mean over queries of max(0, |f(q)| - min distance to the pulled set); the
// nearest distance is a constant for the step.
double gc_penalty(const field::FieldParams& params, std::span<const Vec3> queries,
                  std::span<const Vec3> pulled_set);

// Mean squared distance between pulled queries and their nearest noisy points.
double pull_loss(const field::FieldParams& params, std::span<const Vec3> queries,
                 std::span<const Vec3> nearest_targets, const PullOptions& opts = {});

// Mean of (|grad f(q)| - 1)^2.
double eikonal_loss(const field::FieldParams& params, std::span<const Vec3> queries);

struct BatchData {
    std::span<const Vec3> queries;
    std::span<const Vec3> targets;
    std::span<const Vec3> nearest;  // nearest noisy point per query (fast mode)
};

struct LossBreakdown {
    double total = 0.0;
    double emd = 0.0;
    double gc = 0.0;
    double pull = 0.0;
    double eik = 0.0;
};

// mlp mode:  emd + lambda * gc
// fast mode: emd + lambda1(iter) * pull + lambda2 * eikonal
LossBreakdown total_loss(Mode mode, const field::FieldParams& params, const BatchData& batch,
                         const LossWeights& weights, int64_t iter, const PullOptions& opts = {});

}  // namespace n2n::objective
