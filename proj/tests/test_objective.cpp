#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/objective.hpp"
#include "n2n/transport.hpp"
#include "test_util.hpp"

using namespace n2n;
using namespace n2n::objective;
using testutil::make_plane_params;
using testutil::rel_err;

namespace {

field::FieldParams fitted_sphere_field() {
    field::MlpConfig cfg;
    cfg.hidden_layers = 2;
    cfg.width = 48;
    cfg.activation_beta = 10.0;  // smoother kinks for a tighter gradient fit
    cfg.geometric_init_radius = 0.5;
    auto p = field::init_field(cfg, std::nullopt, 17);
    testutil::regress_field(
        p, [](const Vec3& q) { return norm(q) - 0.5; }, 3000, 64, 1e-3, 23,
        [](const Vec3& q) { return normalized(q); });
    return p;
}

// Tape route for a full mlp-mode batch loss; the geometric-consistency
// thresholds are passed in as the constants they are during a step.
double record_batch_loss(ad::Tape& tape, const field::FieldParams& params,
                         std::span<const Vec3> queries, std::span<const Vec3> targets,
                         std::span<const double> gc_nearest, double lambda, int* root_out) {
    const std::size_t m = queries.size();
    std::vector<RecordedPoint> points;
    PointCloud pulled;
    for (const Vec3& q : queries) {
        points.push_back(record_pull(tape, params, q));
        REQUIRE(!points.back().degenerate);
        pulled.push_back(points.back().pulled_value);
    }
    const auto asg = transport::min_cost_assignment(pulled, targets);
    std::vector<int> roots;
    std::vector<double> ones;
    for (std::size_t i = 0; i < m; ++i) {
        TermWeights w;
        w.emd = 1.0 / static_cast<double>(m);
        w.gc = lambda / static_cast<double>(m);
        const Vec3 target = targets[asg.perm[i]];
        roots.push_back(record_point_loss(tape, points[i], queries[i], &target, gc_nearest[i],
                                          nullptr, w));
        ones.push_back(1.0);
    }
    const int root = tape.weighted_sum(roots, ones);
    if (root_out) *root_out = root;
    return tape.value(root);
}

}  // namespace

TEST_CASE("pull projects onto the zero set of a plane field") {
    const auto p = make_plane_params({0, 0, 1}, 0.0);
    const Vec3 q{0.3, -0.2, 0.5};
    const Vec3 pulled = pull(p, q);
    CHECK(norm(pulled - Vec3{0.3, -0.2, 0.0}) < 1e-12);

    // A point on the zero set is a fixed point of the pull.
    const Vec3 on{0.1, 0.7, 0.0};
    CHECK(norm(pull(p, on) - on) < 1e-14);
}

TEST_CASE("pull on a fitted sphere field projects toward the surface") {
    const auto p = fitted_sphere_field();
    const Vec3 pulled = pull(p, {1.0, 0, 0});
    CHECK(norm(pulled - Vec3{0.5, 0, 0}) < 1e-2);

    // Applying the pull twice moves less the second time.
    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
        Vec3 q = testutil::random_unit_cube_point(rng) * 0.8;
        const Vec3 p1 = pull(p, q);
        const Vec3 p2 = pull(p, p1);
        CHECK(norm(p2 - p1) <= norm(p1 - q) + 1e-9);
    }
}

TEST_CASE("degenerate gradients raise a numeric error and are flagged on tape") {
    const auto p = make_plane_params({0, 0, 1}, 0.0, 0.0);  // identically zero field
    CHECK_THROWS_AS((void)pull(p, Vec3{0.1, 0.2, 0.3}), NumericError);

    ad::Tape tape({p.data.data(), p.data.size()}, &p.layout);
    const auto rec = record_pull(tape, p, {0.1, 0.2, 0.3});
    CHECK(rec.degenerate);
    CHECK(rec.pulled == -1);
}

TEST_CASE("pull is equivariant under rotations of the field") {
    field::MlpConfig cfg;
    cfg.hidden_layers = 3;
    cfg.width = 24;
    auto p = field::init_field(cfg, std::nullopt, 6);

    const double th = 0.7;
    const double c = std::cos(th), s = std::sin(th);
    auto rotate = [&](const Vec3& v) { return Vec3{c * v.x - s * v.y, s * v.x + c * v.y, v.z}; };

    // Conjugate the field: W0' = W0 R^T so that f'(R q) == f(q).
    field::FieldParams pr = p;
    const auto& wb = p.layout.blocks[static_cast<std::size_t>(p.weight_blocks[0])];
    for (std::size_t r = 0; r < wb.rows; ++r) {
        double* row = pr.data.data() + wb.offset + r * wb.cols;
        const Vec3 w{row[0], row[1], row[2]};
        const Vec3 wr = rotate(w);  // (W R^T) row = R w
        row[0] = wr.x;
        row[1] = wr.y;
        row[2] = wr.z;
    }

    Rng rng(9);
    for (int i = 0; i < 10; ++i) {
        const Vec3 q = testutil::random_unit_cube_point(rng) * 0.7;
        CHECK(rel_err(field::sdf(pr, rotate(q)), field::sdf(p, q)) < 1e-9);
        CHECK(norm(pull(pr, rotate(q)) - rotate(pull(p, q))) < 1e-9);
    }
}

TEST_CASE("noise2noise term vanishes on matched batches") {
    const auto p = make_plane_params({0, 1, 0}, 0.25);
    Rng rng(3);
    PointCloud queries;
    for (int i = 0; i < 12; ++i) {
        Vec3 q = testutil::random_unit_cube_point(rng);
        queries.push_back(q);
    }
    PointCloud pulled;
    for (const Vec3& q : queries) pulled.push_back(pull(p, q));

    // Targets exactly the pulled batch (in shuffled order).
    PointCloud targets = pulled;
    std::reverse(targets.begin(), targets.end());
    CHECK(noise2noise_term(p, queries, targets) < 1e-12);

    // Queries on the zero set with permuted queries as targets.
    PointCloud on;
    for (int i = 0; i < 8; ++i)
        on.push_back({rng.uniform(-1, 1), 0.25, rng.uniform(-1, 1)});
    PointCloud perm = on;
    std::rotate(perm.begin(), perm.begin() + 3, perm.end());
    CHECK(noise2noise_term(p, on, perm) < 1e-12);
}

TEST_CASE("noise2noise term is invariant under batch permutations") {
    const auto p = fitted_sphere_field();
    Rng rng(8);
    PointCloud queries, targets;
    for (int i = 0; i < 10; ++i) {
        queries.push_back(testutil::random_unit_cube_point(rng) * 0.8);
        targets.push_back(testutil::random_unit_cube_point(rng) * 0.8);
    }
    const double base = noise2noise_term(p, queries, targets);
    PointCloud q2 = queries, t2 = targets;
    std::rotate(q2.begin(), q2.begin() + 4, q2.end());
    std::reverse(t2.begin(), t2.end());
    CHECK(rel_err(noise2noise_term(p, q2, t2), base) < 1e-12);
}

TEST_CASE("noise2noise parameter gradient matches finite differences") {
    field::MlpConfig cfg;
    cfg.hidden_layers = 2;
    cfg.width = 8;
    auto params = field::init_field(cfg, std::nullopt, 31);
    Rng rng(14);
    PointCloud queries, targets;
    for (int i = 0; i < 4; ++i) {
        queries.push_back(testutil::random_unit_cube_point(rng) * 0.8);
        targets.push_back(testutil::random_unit_cube_point(rng) * 0.8);
    }

    ad::Tape tape({params.data.data(), params.data.size()}, &params.layout);
    std::vector<double> gc_off(queries.size(), std::numeric_limits<double>::infinity());
    int root = -1;
    (void)record_batch_loss(tape, params, queries, targets, gc_off, 0.0, &root);
    const auto grad = ad::loss_gradient(tape, root);

    const auto fd = testutil::fd_grad(
        [&](const std::vector<double>& d) {
            field::FieldParams p2 = params;
            p2.data = d;
            return noise2noise_term(p2, queries, targets);
        },
        params.data, 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        num += (grad.g[i] - fd[i]) * (grad.g[i] - fd[i]);
        den += fd[i] * fd[i];
    }
    CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-10) < 1e-3);
}

TEST_CASE("full combined loss gradient (emd + gc) matches finite differences") {
    // The geometric-consistency thresholds are constants of the step, so the
    // finite-difference oracle holds them fixed as well.
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        field::MlpConfig cfg;
        cfg.hidden_layers = 2;
        cfg.width = 8;
        auto params = field::init_field(cfg, std::nullopt, 100 + static_cast<uint64_t>(trial));
        PointCloud queries, targets;
        for (int i = 0; i < 4; ++i) {
            queries.push_back(testutil::random_unit_cube_point(rng) * 0.8);
            targets.push_back(testutil::random_unit_cube_point(rng) * 0.8);
        }
        std::vector<double> gc_nearest;
        {
            PointCloud pulled;
            for (const Vec3& q : queries) pulled.push_back(pull(params, q));
            const KdTree tree(pulled);
            for (std::size_t i = 0; i < queries.size(); ++i)
                gc_nearest.push_back(
                    std::sqrt(tree.nearest_excluding(queries[i], static_cast<uint32_t>(i)).dist2));
        }
        const double lambda = 0.1;

        ad::Tape tape({params.data.data(), params.data.size()}, &params.layout);
        int root = -1;
        (void)record_batch_loss(tape, params, queries, targets, gc_nearest, lambda, &root);
        const auto grad = ad::loss_gradient(tape, root);

        const auto fd = testutil::fd_grad(
            [&](const std::vector<double>& d) {
                field::FieldParams p2 = params;
                p2.data = d;
                PointCloud pulled;
                for (const Vec3& q : queries) pulled.push_back(pull(p2, q));
                double loss = transport::emd_loss(pulled, targets).value;
                for (std::size_t i = 0; i < queries.size(); ++i)
                    loss += lambda *
                            std::max(0.0, std::fabs(field::sdf(p2, queries[i])) - gc_nearest[i]) /
                            static_cast<double>(queries.size());
                return loss;
            },
            params.data, 1e-5);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            num += (grad.g[i] - fd[i]) * (grad.g[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-10) < 1e-3);
    }
}

TEST_CASE("gc penalty hinge arithmetic") {
    const auto plane = make_plane_params({0, 0, 1}, 0.0);

    // |f| = 0 everywhere on the zero set.
    PointCloud on = {{0.1, 0.2, 0.0}, {-0.4, 0.3, 0.0}};
    PointCloud pulled = {{0.5, 0.5, 0.0}};
    CHECK(gc_penalty(plane, on, pulled) == 0.0);

    // Inequality satisfied: |f| strictly below the nearest distance.
    PointCloud near_q = {{0.0, 0.0, 0.1}};
    PointCloud far_set = {{2.0, 0.0, 0.1}};
    CHECK(gc_penalty(plane, near_q, far_set) == 0.0);

    // Hinge arithmetic: |f| = 0.5 against nearest distance 0.2.
    PointCloud q1 = {{0.0, 0.0, 0.5}};
    PointCloud s1 = {{0.2, 0.0, 0.5}};
    CHECK(gc_penalty(plane, q1, s1) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("gc hinge passes no gradient where the inequality is satisfied") {
    field::MlpConfig cfg;
    cfg.hidden_layers = 1;
    cfg.width = 8;
    auto params = field::init_field(cfg, std::nullopt, 5);
    ad::Tape tape({params.data.data(), params.data.size()}, &params.layout);
    const auto rec = record_pull(tape, params, {0.3, 0.1, 0.2});
    TermWeights w;
    w.gc = 1.0;
    const int root = record_point_loss(tape, rec, {0.3, 0.1, 0.2}, nullptr,
                                       std::fabs(rec.d_value) + 1.0, nullptr, w);
    CHECK(tape.value(root) == 0.0);
    const auto grad = ad::loss_gradient(tape, root);
    for (double g : grad.g) CHECK(g == 0.0);
}

TEST_CASE("pull loss formula and gradient") {
    const auto plane = make_plane_params({0, 0, 1}, 0.0);

    PointCloud queries = {{0.2, -0.1, 0.4}, {0.0, 0.3, -0.2}};
    PointCloud matched;
    for (const Vec3& q : queries) matched.push_back(pull(plane, q));
    CHECK(pull_loss(plane, queries, matched) < 1e-24);

    PointCloud one_q = {{0.0, 0.0, 0.1}};
    PointCloud target = {{0.1, 0.0, 0.0}};  // pulled point is the origin
    CHECK(pull_loss(plane, one_q, target) == doctest::Approx(0.01).epsilon(1e-10));

    // Finite-difference check through the tape route.
    field::MlpConfig cfg;
    cfg.hidden_layers = 2;
    cfg.width = 8;
    auto params = field::init_field(cfg, std::nullopt, 44);
    Rng rng(15);
    PointCloud qs, ts;
    for (int i = 0; i < 3; ++i) {
        qs.push_back(testutil::random_unit_cube_point(rng) * 0.7);
        ts.push_back(testutil::random_unit_cube_point(rng) * 0.7);
    }
    ad::Tape tape({params.data.data(), params.data.size()}, &params.layout);
    std::vector<int> roots;
    std::vector<double> ones;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto rec = record_pull(tape, params, qs[i]);
        TermWeights w;
        w.pull = 1.0 / static_cast<double>(qs.size());
        roots.push_back(record_point_loss(tape, rec, qs[i], nullptr,
                                          std::numeric_limits<double>::infinity(), &ts[i], w));
        ones.push_back(1.0);
    }
    const int root = tape.weighted_sum(roots, ones);
    CHECK(rel_err(tape.value(root), pull_loss(params, qs, ts)) < 1e-12);
    const auto grad = ad::loss_gradient(tape, root);
    const auto fd = testutil::fd_grad(
        [&](const std::vector<double>& d) {
            field::FieldParams p2 = params;
            p2.data = d;
            return pull_loss(p2, qs, ts);
        },
        params.data, 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        num += (grad.g[i] - fd[i]) * (grad.g[i] - fd[i]);
        den += fd[i] * fd[i];
    }
    CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-10) < 1e-3);
}

TEST_CASE("eikonal loss on exact and scaled plane fields") {
    const auto unit = make_plane_params({0, 0, 1}, 0.1);
    const auto doubled = make_plane_params({0, 0, 1}, 0.1, 2.0);
    Rng rng(2);
    PointCloud qs;
    for (int i = 0; i < 16; ++i) qs.push_back(testutil::random_unit_cube_point(rng));
    CHECK(eikonal_loss(unit, qs) < 1e-12);
    CHECK(eikonal_loss(doubled, qs) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("total loss composition and schedules") {
    CHECK(LossWeights{}.lambda == 0.1);
    CHECK(LossWeights{}.lambda2 == 0.001);

    const LossWeights w;
    CHECK(w.lambda1(0) == 1.0);
    CHECK(w.lambda1(500) == doctest::Approx(0.5));
    CHECK(w.lambda1(1000) == 0.0);
    CHECK(w.lambda1(5000) == 0.0);
    for (int i = 1; i < 2000; i += 7) CHECK(w.lambda1(i) <= w.lambda1(i - 1));

    const auto plane = make_plane_params({1, 0, 0}, 0.0);
    Rng rng(21);
    PointCloud queries, targets;
    for (int i = 0; i < 8; ++i) {
        queries.push_back(testutil::random_unit_cube_point(rng) * 0.6);
        targets.push_back(testutil::random_unit_cube_point(rng) * 0.6);
    }
    BatchData batch{queries, targets, {}};

    LossWeights zero_gc = w;
    zero_gc.lambda = 0.0;
    const auto lb = total_loss(Mode::Mlp, plane, batch, zero_gc, 0);
    CHECK(std::fabs(lb.total - noise2noise_term(plane, queries, targets)) < 1e-12);

    // Exact SDF + noise-free matched batches: the whole mlp loss vanishes.
    PointCloud on;
    for (int i = 0; i < 8; ++i) on.push_back({0.0, rng.uniform(-1, 1), rng.uniform(-1, 1)});
    PointCloud perm = on;
    std::rotate(perm.begin(), perm.begin() + 2, perm.end());
    BatchData clean{on, perm, {}};
    const auto zero = total_loss(Mode::Mlp, plane, clean, w, 0);
    CHECK(zero.total < 1e-12);

    // Fast mode after the ramp: the pull term contributes exactly zero.
    field::MlpConfig mcfg;
    mcfg.hidden_layers = 2;
    mcfg.width = 16;
    field::HashGridConfig gcfg;
    gcfg.levels = 2;
    gcfg.table_size = 4096;
    gcfg.feature_dim = 2;
    gcfg.base_resolution = 4;
    gcfg.finest_resolution = 8;
    auto fast = field::init_field(mcfg, gcfg, 3);
    PointCloud nearest = targets;
    BatchData fb{queries, targets, nearest};
    const auto early = total_loss(Mode::Fast, fast, fb, w, 10);
    const auto late = total_loss(Mode::Fast, fast, fb, w, 1001);
    CHECK(early.pull > 0.0);
    CHECK(late.pull == 0.0);
    CHECK(late.total == doctest::Approx(late.emd + w.lambda2 * late.eik).epsilon(1e-15));

    CHECK_THROWS_AS((void)total_loss(Mode::Fast, plane, fb, w, 0), ContractError);
}
