#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "n2n/errors.hpp"
#include "n2n/surfacing.hpp"
#include "test_util.hpp"

using namespace n2n;
using namespace n2n::surf;

namespace {

double sphere_sdf(const Vec3& q) { return norm(q) - 0.5; }

Mesh sphere_mesh(int res) { return extract_mesh_fn(sphere_sdf, res, default_bbox()); }

double max_radial_error(const Mesh& m) {
    double worst = 0.0;
    for (const Vec3& v : m.vertices) worst = std::max(worst, std::fabs(norm(v) - 0.5));
    return worst;
}

}  // namespace

TEST_CASE("sphere extraction is metrically and topologically sound") {
    const Mesh m = sphere_mesh(128);
    REQUIRE(!m.empty());
    CHECK(m.surface_found);

    const double cell_diag = std::sqrt(3.0) * 2.1 / 128.0;
    CHECK(max_radial_error(m) < cell_diag);

    CHECK(euler_characteristic(m) == 2);
    CHECK(non_manifold_edges(m) == 0);

    // Winding: normals agree with the outward field gradient.
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tri = m.triangles[t];
        const Vec3 c = (m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0;
        CHECK(dot(m.face_normals[t], normalized(c)) > 0.0);
    }
}

TEST_CASE("doubling the resolution does not increase the radial error") {
    const double e64 = max_radial_error(sphere_mesh(64));
    const double e128 = max_radial_error(sphere_mesh(128));
    CHECK(e128 <= e64);
}

TEST_CASE("a field with no zero crossing yields an empty flagged mesh") {
    const Mesh m = extract_mesh_fn([](const Vec3&) { return 1.0; }, 16, default_bbox());
    CHECK(m.empty());
    CHECK(!m.surface_found);
}

TEST_CASE("extraction is deterministic") {
    const Mesh a = sphere_mesh(32);
    const Mesh b = sphere_mesh(32);
    CHECK(a.vertices == b.vertices);
    CHECK(a.triangles == b.triangles);
}

TEST_CASE("random smooth fields extract crack-free surfaces") {
    // Sums of Gaussian blobs exercise a wide range of cube configurations.
    Rng rng(71);
    for (int trial = 0; trial < 6; ++trial) {
        std::vector<Vec3> centers;
        std::vector<double> radii;
        for (int b = 0; b < 4; ++b) {
            centers.push_back(testutil::random_unit_cube_point(rng) * 0.5);
            radii.push_back(0.15 + 0.3 * rng.uniform());
        }
        auto blob_field = [&](const Vec3& q) {
            double v = 0.6;
            for (std::size_t b = 0; b < centers.size(); ++b)
                v -= std::exp(-norm2(q - centers[b]) / (radii[b] * radii[b]));
            return v;
        };
        const Mesh m = extract_mesh_fn(blob_field, 48, default_bbox());
        REQUIRE(!m.empty());
        CHECK(non_manifold_edges(m) == 0);
    }
}

TEST_CASE("lookup tables are internally consistent") {
    CHECK(tables_consistent());
}

TEST_CASE("projection onto the zero set") {
    const auto plane = testutil::make_plane_params({0, 0, 1}, 0.0);

    PointCloud pts = {{0.2, 0.1, 0.4}, {-0.3, 0.2, -0.6}, {0.0, 0.0, 0.0}};
    const auto res = project_to_zero_set(plane, pts, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(res.degenerate[i] == 0);
        CHECK(std::fabs(res.points[i].z) < 1e-12);
        CHECK(res.points[i].x == doctest::Approx(pts[i].x).epsilon(1e-12));
    }

    // Points already on the zero set stay put.
    PointCloud on = {{0.5, -0.5, 0.0}};
    const auto stay = project_to_zero_set(plane, on, 3);
    CHECK(norm(stay.points[0] - on[0]) < 1e-12);

    // Degenerate gradients flag the point and pass it through.
    const auto zero = testutil::make_plane_params({0, 0, 1}, 0.0, 0.0);
    const auto flagged = project_to_zero_set(zero, pts, 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(flagged.degenerate[i] == 1);
        CHECK(flagged.points[i] == pts[i]);
    }
}

TEST_CASE("iterated projection reduces the field residual on a trained field") {
    field::MlpConfig cfg;
    cfg.hidden_layers = 2;
    cfg.width = 24;
    cfg.activation_beta = 10.0;
    auto p = field::init_field(cfg, std::nullopt, 19);
    testutil::regress_field(
        p, [](const Vec3& q) { return norm(q) - 0.5; }, 600, 48, 1e-3, 3);

    Rng rng(7);
    PointCloud pts;
    for (int i = 0; i < 32; ++i) pts.push_back(testutil::random_unit_cube_point(rng) * 0.8);
    double before = 0.0, after = 0.0;
    for (const Vec3& q : pts) before += std::fabs(field::sdf(p, q));
    const auto res = project_to_zero_set(p, pts, 3);
    for (const Vec3& q : res.points) after += std::fabs(field::sdf(p, q));
    CHECK(after < before);
}
