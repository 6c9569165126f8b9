#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/objective.hpp"
#include "n2n/pipelines.hpp"
#include "test_util.hpp"

using namespace n2n;
using namespace n2n::pipe;

namespace {

training::TrainConfig tiny_config(uint64_t seed = 3) {
    training::TrainConfig cfg;
    cfg.batch = 24;
    cfg.iterations = 400;
    cfg.mlp.hidden_layers = 2;
    cfg.mlp.width = 16;
    cfg.pool.queries_per_point = 4;
    cfg.pool.k_scale = 16;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("denoise preserves cardinality and respects the stored frame") {
    // Plane field with a non-trivial frame: world points on the world-frame
    // plane must be fixed points.
    auto plane = testutil::make_plane_params({0, 0, 1}, 0.0);
    plane.frame_center = {10.0, -5.0, 2.0};
    plane.frame_radius = 4.0;

    Rng rng(4);
    PointCloud world;
    for (int i = 0; i < 50; ++i)
        world.push_back({10.0 + rng.uniform(-2, 2), -5.0 + rng.uniform(-2, 2), 2.0});
    const PointCloud out = denoise(world, plane);
    REQUIRE(out.size() == world.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(norm(out[i] - world[i]) < 1e-9);

    // Off-plane world points project back onto the world plane z = 2.
    PointCloud off;
    for (int i = 0; i < 20; ++i)
        off.push_back({10.0 + rng.uniform(-2, 2), -5.0 + rng.uniform(-2, 2),
                       2.0 + rng.uniform(-1, 1)});
    const PointCloud proj = denoise(off, plane);
    for (std::size_t i = 0; i < proj.size(); ++i) {
        CHECK(std::fabs(proj[i].z - 2.0) < 1e-9);
        CHECK(proj[i].x == doctest::Approx(off[i].x).epsilon(1e-12));
    }

    // Frame correctness: unit-frame pull composed with the transform matches.
    sampling::Normalization frame{plane.frame_center, plane.frame_radius};
    for (std::size_t i = 0; i < off.size(); ++i) {
        const Vec3 unit = objective::pull(plane, frame.to_unit(off[i]));
        CHECK(norm(frame.to_unit(proj[i]) - unit) < 1e-6);
    }
}

TEST_CASE("trained pipelines are deterministic per seed") {
    const PointCloud cloud = testutil::sphere_cloud(400, 2.0, 9);  // world radius 2
    const auto a = train_on_world_clouds({cloud}, tiny_config());
    const auto b = train_on_world_clouds({cloud}, tiny_config());
    REQUIRE(!a.aborted);
    CHECK(a.params.data == b.params.data);
    CHECK(a.params.frame_radius == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("upsample multiplies cardinality exactly and degenerates to a pull") {
    const PointCloud sparse = testutil::sphere_cloud(300, 1.0, 5);

    const auto up4 = upsample(sparse, 4, 0.01, tiny_config(7));
    CHECK(up4.points.size() == 4 * sparse.size());

    // t = 1, sigma = 0: the dense cloud is the input itself, so the output is
    // exactly one pull of the input under the trained field.
    const auto up1 = upsample(sparse, 1, 0.0, tiny_config(8));
    REQUIRE(up1.points.size() == sparse.size());
    const PointCloud pulled = denoise(sparse, up1.params);
    for (std::size_t i = 0; i < sparse.size(); ++i) CHECK(norm(up1.points[i] - pulled[i]) < 1e-12);

    CHECK_THROWS_AS((void)upsample(sparse, 0, 0.01, tiny_config()), ConfigError);
}

TEST_CASE("reconstruct returns a world-frame mesh") {
    const double world_radius = 3.0;
    const PointCloud cloud = testutil::sphere_cloud(600, world_radius, 11);
    training::TrainConfig cfg = tiny_config(13);
    cfg.iterations = 1200;
    const auto result = reconstruct({cloud}, cfg, 48);
    REQUIRE(!result.mesh.empty());
    // Vertices should sit near the world sphere, not the unit frame.
    double mean_r = 0.0;
    for (const Vec3& v : result.mesh.vertices) mean_r += norm(v);
    mean_r /= static_cast<double>(result.mesh.vertices.size());
    CHECK(mean_r > 2.0);
    CHECK(mean_r < 4.0);
    CHECK(result.log.entries.size() == 1200);
}

TEST_CASE("chunked reconstruction emits one mesh per populated chunk") {
    // Two separated blobs along x.
    PointCloud cloud = testutil::sphere_cloud(500, 1.0, 17);
    PointCloud right = testutil::sphere_cloud(500, 1.0, 18);
    for (auto& p : right) p.x += 6.0;
    cloud.insert(cloud.end(), right.begin(), right.end());

    training::TrainConfig cfg = tiny_config(19);
    cfg.iterations = 600;
    const auto meshes = reconstruct_chunked(cloud, cfg, 32, 2);
    REQUIRE(meshes.size() == 2);
    for (const auto& m : meshes) CHECK(!m.empty());
    // Each chunk mesh stays near its blob.
    const Aabb b0 = [&] {
        Aabb b;
        for (const Vec3& v : meshes[0].vertices) b.expand(v);
        return b;
    }();
    CHECK(b0.hi.x < 3.5);
}

TEST_CASE("theorem1 report: noise-free observations converge to the clean cloud") {
    const auto report = verify_theorem1(shapes::Kind::Sphere, 48, 0.0, 1, 1200, 5);
    CHECK(report.emd_to_clean < 1e-4);
    const std::string j = report.to_json();
    CHECK(j.find("\"emd_to_clean\"") != std::string::npos);
    CHECK(j.find("\"error_quantiles\"") != std::string::npos);
    CHECK(j.find("\"cd_over_emd\"") != std::string::npos);
}

TEST_CASE("shape samplers lie on their analytic zero sets") {
    for (auto kind : {shapes::Kind::Sphere, shapes::Kind::Cube, shapes::Kind::Torus}) {
        const PointCloud pts = shapes::sample(kind, 500, 3);
        REQUIRE(pts.size() == 500);
        for (const Vec3& p : pts) CHECK(std::fabs(shapes::sdf(kind, p)) < 1e-9);
    }
    CHECK(shapes::parse_kind("torus") == shapes::Kind::Torus);
    CHECK_THROWS_AS((void)shapes::parse_kind("cone"), ConfigError);
}
