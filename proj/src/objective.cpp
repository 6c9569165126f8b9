#include "n2n/objective.hpp"

#include <algorithm>
#include <cmath>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/transport.hpp"

namespace n2n::objective {

void validate(const LossWeights& w) {
    if (w.lambda < 0.0) throw ConfigError("loss weight lambda must be >= 0");
    if (w.lambda2 < 0.0) throw ConfigError("loss weight lambda2 must be >= 0");
    if (w.lambda1_ramp < 1) throw ConfigError("lambda1 ramp must be >= 1 iteration");
}

Vec3 pull(const field::FieldParams& params, const Vec3& q) {
    const auto fg = field::sdf_with_gradient(params, q);
    const double len = norm(fg.grad);
    if (len < GRAD_EPSILON)
        throw NumericError("pull: degenerate field gradient at query");
    return q - fg.grad * (fg.d / len);
}

RecordedPoint record_pull(ad::Tape& tape, const field::FieldParams& params, const Vec3& q,
                          const PullOptions& opts) {
    RecordedPoint out;
    const int input = tape.input(ad::DualVec3::seeded(q));
    out.d = field::record_sdf(tape, params, input);
    out.grad = tape.grad_of(out.d);
    out.d_value = tape.value(out.d);
    const Vec3 g = tape.value3(out.grad);
    const double len = norm(g);
    if (len < opts.grad_epsilon) {
        out.degenerate = true;
        return out;
    }
    int direction;
    if (opts.detach_direction) {
        direction = tape.const_vec3(g / len);
    } else {
        direction = tape.div_scalar(out.grad, tape.norm(out.grad));
    }
    out.pulled = tape.sub(input, tape.scale(out.d, direction));
    out.pulled_value = tape.value3(out.pulled);
    return out;
}

int record_point_loss(ad::Tape& tape, const RecordedPoint& point, const Vec3& query,
                      const Vec3* emd_target, double gc_nearest, const Vec3* pull_target,
                      const TermWeights& w) {
    std::vector<int> terms;
    std::vector<double> weights;
    if (w.emd != 0.0 && emd_target && !point.degenerate) {
        const int t = tape.const_vec3(*emd_target);
        terms.push_back(tape.norm(tape.sub(point.pulled, t)));
        weights.push_back(w.emd);
    }
    if (w.gc != 0.0 && std::isfinite(gc_nearest)) {
        (void)query;
        terms.push_back(tape.hinge(tape.abs(point.d), gc_nearest));
        weights.push_back(w.gc);
    }
    if (w.pull != 0.0 && pull_target && !point.degenerate) {
        const int t = tape.const_vec3(*pull_target);
        const int diff = tape.sub(point.pulled, t);
        terms.push_back(tape.dot(diff, diff));
        weights.push_back(w.pull);
    }
    if (w.eik != 0.0) {
        const int gnorm = tape.add_const(tape.norm(point.grad), -1.0);
        terms.push_back(tape.mul(gnorm, gnorm));
        weights.push_back(w.eik);
    }
    return tape.weighted_sum(terms, weights);
}

double noise2noise_term(const field::FieldParams& params, std::span<const Vec3> queries,
                        std::span<const Vec3> targets, const PullOptions& opts) {
    if (queries.size() != targets.size())
        throw ContractError("noise2noise_term: query and target batches must match in size");
    (void)opts;
    PointCloud pulled(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) pulled[i] = pull(params, queries[i]);
    return transport::emd_loss(pulled, targets).value;
}

double gc_penalty(const field::FieldParams& params, std::span<const Vec3> queries,
                  std::span<const Vec3> pulled_set) {
    if (queries.empty()) return 0.0;
    if (pulled_set.empty()) throw ContractError("gc_penalty: empty pulled set");
    const KdTree tree(PointCloud(pulled_set.begin(), pulled_set.end()));
    double acc = 0.0;
    for (const Vec3& q : queries) {
        const double nearest = std::sqrt(tree.nearest(q).dist2);
        acc += std::max(0.0, std::fabs(field::sdf(params, q)) - nearest);
    }
    return acc / static_cast<double>(queries.size());
}

double pull_loss(const field::FieldParams& params, std::span<const Vec3> queries,
                 std::span<const Vec3> nearest_targets, const PullOptions& opts) {
    if (queries.size() != nearest_targets.size())
        throw ContractError("pull_loss: query and target sizes must match");
    if (queries.empty()) return 0.0;
    (void)opts;
    double acc = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i)
        acc += norm2(pull(params, queries[i]) - nearest_targets[i]);
    return acc / static_cast<double>(queries.size());
}

double eikonal_loss(const field::FieldParams& params, std::span<const Vec3> queries) {
    if (queries.empty()) return 0.0;
    double acc = 0.0;
    for (const Vec3& q : queries) {
        const double g = norm(field::input_gradient(params, q)) - 1.0;
        acc += g * g;
    }
    return acc / static_cast<double>(queries.size());
}

LossBreakdown total_loss(Mode mode, const field::FieldParams& params, const BatchData& batch,
                         const LossWeights& weights, int64_t iter, const PullOptions& opts) {
    if ((mode == Mode::Fast) != params.fast())
        throw ContractError("total_loss: mode does not match the parameterization");
    validate(weights);
    LossBreakdown out;
    out.emd = noise2noise_term(params, batch.queries, batch.targets, opts);
    if (mode == Mode::Mlp) {
        PointCloud pulled(batch.queries.size());
        for (std::size_t i = 0; i < batch.queries.size(); ++i)
            pulled[i] = pull(params, batch.queries[i]);
        out.gc = gc_penalty(params, batch.queries, pulled);
        out.total = out.emd + weights.lambda * out.gc;
    } else {
        const double l1 = weights.lambda1(iter);
        if (l1 != 0.0) out.pull = pull_loss(params, batch.queries, batch.nearest, opts);
        out.eik = eikonal_loss(params, batch.queries);
        out.total = out.emd + l1 * out.pull + weights.lambda2 * out.eik;
    }
    return out;
}

}  // namespace n2n::objective
