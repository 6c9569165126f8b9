#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/metrics.hpp"
#include "n2n/surfacing.hpp"
#include "test_util.hpp"

using namespace n2n;
using namespace n2n::metrics;

namespace {

surf::Mesh sphere_mesh(double radius, int res = 64) {
    return surf::extract_mesh_fn([radius](const Vec3& q) { return norm(q) - radius; }, res,
                                 surf::default_bbox());
}

surf::Mesh cube_mesh(double half, int res = 64) {
    return surf::extract_mesh_fn(
        [half](const Vec3& q) {
            const Vec3 d{std::fabs(q.x) - half, std::fabs(q.y) - half, std::fabs(q.z) - half};
            const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
            return norm(outside) + std::min(std::max({d.x, d.y, d.z}), 0.0);
        },
        res, surf::default_bbox());
}

double brute_chamfer(const PointCloud& a, const PointCloud& b, bool squared) {
    auto side = [&](const PointCloud& from, const PointCloud& to) {
        double acc = 0.0;
        for (const Vec3& p : from) {
            double best = 1e300;
            for (const Vec3& q : to) best = std::min(best, norm2(p - q));
            acc += squared ? best : std::sqrt(best);
        }
        return acc / static_cast<double>(from.size());
    };
    return 0.5 * (side(a, b) + side(b, a));
}

PointCloud random_cloud(Rng& rng, std::size_t n) {
    PointCloud out(n);
    for (auto& p : out) p = testutil::random_unit_cube_point(rng);
    return out;
}

}  // namespace

TEST_CASE("chamfer basics and the brute-force oracle") {
    const PointCloud a = {{0, 0, 0}};
    const PointCloud b = {{1, 0, 0}};
    CHECK(chamfer_l2(a, a) == 0.0);
    CHECK(chamfer_l2(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(chamfer_l1(a, a) == 0.0);
    CHECK(chamfer_l1(a, b) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const PointCloud x = random_cloud(rng, 100);
        const PointCloud y = random_cloud(rng, 100);
        CHECK(std::fabs(chamfer_l2(x, y) - brute_chamfer(x, y, true)) < 1e-10);
        CHECK(std::fabs(chamfer_l1(x, y) - brute_chamfer(x, y, false)) < 1e-10);
        // Symmetry under argument swap.
        CHECK(chamfer_l2(x, y) == doctest::Approx(chamfer_l2(y, x)).epsilon(1e-12));
    }

    CHECK_THROWS_AS((void)chamfer_l2({}, b), ContractError);
}

TEST_CASE("chamfer conventions differ exactly as documented") {
    Rng rng(6);
    const PointCloud x = random_cloud(rng, 50);
    const PointCloud y = random_cloud(rng, 150);
    const double halved = chamfer_l2(x, y, ChamferConvention::HalvedSumOfMeans);
    const double pooled = chamfer_l2(x, y, ChamferConvention::MeanOfBothSides);
    CHECK(halved != pooled);  // sizes differ, so the reductions must differ
}

TEST_CASE("point-to-mesh distances are exact") {
    const surf::Mesh sphere = sphere_mesh(0.5, 64);

    // Points on mesh vertices have zero distance.
    PointCloud on(sphere.vertices.begin(), sphere.vertices.begin() + 50);
    CHECK(point_to_mesh(on, sphere) < 1e-14);

    // A point at height h above a large triangle's interior is at distance h.
    surf::Mesh tri;
    tri.vertices = {{-5, -5, 0}, {5, -5, 0}, {0, 5, 0}};
    tri.triangles = {{0, 1, 2}};
    tri.face_normals = {{0, 0, 1}};
    CHECK(point_to_mesh({{0.1, 0.0, 0.25}}, tri) == doctest::Approx(0.25).epsilon(1e-14));
    // Closest feature can also be an edge or a vertex.
    CHECK(point_to_mesh({{6.0, -6.0, 0.0}}, tri) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    // Brute force equivalence on a coarse mesh.
    const surf::Mesh coarse = sphere_mesh(0.5, 16);
    Rng rng(9);
    const PointCloud probes = random_cloud(rng, 40);
    for (const Vec3& p : probes) {
        double best = 1e300;
        for (const auto& t : coarse.triangles) {
            // Exhaustive closest-point search via fine sampling of the triangle.
            const Vec3& a = coarse.vertices[t[0]];
            const Vec3& b = coarse.vertices[t[1]];
            const Vec3& c = coarse.vertices[t[2]];
            for (int i = 0; i <= 20; ++i)
                for (int j = 0; j <= 20 - i; ++j) {
                    const double u = i / 20.0, v = j / 20.0;
                    best = std::min(best, norm(p - (a * (1 - u - v) + b * u + c * v)));
                }
        }
        const double exact = point_to_mesh({p}, coarse);
        CHECK(exact <= best + 1e-12);
        CHECK(exact >= best - 0.01);  // sampling the triangles overestimates
    }

    CHECK_THROWS_AS((void)point_to_mesh({{0, 0, 0}}, surf::Mesh{}), ContractError);
}

TEST_CASE("point-to-mesh matches a dense surface-sampling approximation") {
    const surf::Mesh sphere = sphere_mesh(0.5, 64);
    Rng rng(13);
    PointCloud probes;
    for (int i = 0; i < 200; ++i) {
        Vec3 d{rng.gaussian(), rng.gaussian(), rng.gaussian()};
        probes.push_back(normalized(d) * (0.5 + 0.2 * rng.uniform()));
    }
    const double exact = point_to_mesh(probes, sphere);
    const auto dense = sample_surface(sphere, 200000, 3);
    const KdTree tree(dense.points);
    double approx = 0.0;
    for (const Vec3& p : probes) approx += std::sqrt(tree.nearest(p).dist2);
    approx /= static_cast<double>(probes.size());
    CHECK(std::fabs(exact - approx) / approx < 0.01);
}

TEST_CASE("normal consistency on matched, flipped, and distinct shapes") {
    const surf::Mesh sphere = sphere_mesh(0.5, 48);
    CHECK(normal_consistency(sphere, sphere, 20000, 1) == doctest::Approx(1.0).epsilon(1e-3));

    surf::Mesh flipped = sphere;
    for (auto& t : flipped.triangles) std::swap(t[1], t[2]);
    for (auto& n : flipped.face_normals) n = -n;
    CHECK(normal_consistency(sphere, flipped, 20000, 1) == doctest::Approx(1.0).epsilon(1e-3));

    // Sphere vs cube: compare against a brute-force double-loop oracle.
    const surf::Mesh cube = cube_mesh(0.45, 48);
    const double fast = normal_consistency(sphere, cube, 8000, 2);
    const auto sp = sample_surface(sphere, 8000, 2);
    const auto sc = sample_surface(cube, 8000, 3);
    auto brute_side = [](const SurfaceSamples& from, const SurfaceSamples& to) {
        double acc = 0.0;
        for (std::size_t i = 0; i < from.points.size(); ++i) {
            double best = 1e300;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < to.points.size(); ++j) {
                const double d = norm2(from.points[i] - to.points[j]);
                if (d < best) {
                    best = d;
                    arg = j;
                }
            }
            acc += std::fabs(dot(from.normals[i], to.normals[arg]));
        }
        return acc / static_cast<double>(from.points.size());
    };
    const double brute = 0.5 * (brute_side(sp, sc) + brute_side(sc, sp));
    CHECK(fast == doctest::Approx(brute).epsilon(1e-12));
    CHECK(fast < 0.95);  // genuinely different shapes
}

TEST_CASE("f-score endpoints and oracle") {
    const surf::Mesh sphere = sphere_mesh(0.5, 48);
    CHECK(f_score(sphere, sphere, 0.01, 100000, 5) == doctest::Approx(1.0).epsilon(1e-3));

    surf::Mesh far = sphere;
    for (auto& v : far.vertices) v += Vec3{10, 0, 0};
    CHECK(f_score(sphere, far, 0.01, 5000, 5) == 0.0);

    // Radially perturbed sphere against a brute-force sampled oracle.
    const surf::Mesh bumpy = surf::extract_mesh_fn(
        [](const Vec3& q) {
            return norm(q) - (0.5 + 0.01 * std::sin(20.0 * q.x) * std::cos(20.0 * q.y));
        },
        48, surf::default_bbox());
    const double tau = 0.01;
    const double fast = f_score(sphere, bumpy, tau, 8000, 6);
    const auto sp = sample_surface(sphere, 8000, 6);
    const auto sb = sample_surface(bumpy, 8000, 7);
    auto within = [&](const PointCloud& from, const PointCloud& to) {
        std::size_t hits = 0;
        for (const Vec3& p : from) {
            double best = 1e300;
            for (const Vec3& q : to) best = std::min(best, norm2(p - q));
            if (best <= tau * tau) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(from.size());
    };
    const double precision = within(sp.points, sb.points);
    const double recall = within(sb.points, sp.points);
    const double brute = 2.0 * precision * recall / (precision + recall);
    CHECK(std::fabs(fast - brute) < 0.01);

    CHECK_THROWS_AS((void)f_score(sphere, sphere, 0.0), ContractError);
}

TEST_CASE("metrics are invariant under rigid motion of both arguments") {
    Rng rng(15);
    const PointCloud x = random_cloud(rng, 60);
    const PointCloud y = random_cloud(rng, 60);
    const double th = 0.9;
    auto rot = [&](const Vec3& v) {
        return Vec3{std::cos(th) * v.x - std::sin(th) * v.y,
                    std::sin(th) * v.x + std::cos(th) * v.y, v.z + 0.0} +
               Vec3{0.3, -0.2, 0.7};
    };
    PointCloud xr(x.size()), yr(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) xr[i] = rot(x[i]);
    for (std::size_t i = 0; i < y.size(); ++i) yr[i] = rot(y[i]);
    CHECK(chamfer_l2(xr, yr) == doctest::Approx(chamfer_l2(x, y)).epsilon(1e-10));
    CHECK(chamfer_l1(xr, yr) == doctest::Approx(chamfer_l1(x, y)).epsilon(1e-10));
}

TEST_CASE("metric records serialize to the documented json shape") {
    const std::string j = to_json({"l2cd", "halved-sum-of-means", 1e4, 1.06});
    CHECK(j.find("\"metric\"") != std::string::npos);
    CHECK(j.find("\"convention\"") != std::string::npos);
    CHECK(j.find("\"scale\"") != std::string::npos);
    CHECK(j.find("\"value\"") != std::string::npos);
}
