#include "n2n/pipelines.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/objective.hpp"
#include "n2n/threads.hpp"
#include "n2n/transport.hpp"

namespace n2n::pipe {

PointCloud denoise(const PointCloud& world_cloud, const field::FieldParams& params) {
    if (world_cloud.empty()) throw ContractError("denoise: empty cloud");
    sampling::Normalization frame{params.frame_center, params.frame_radius};
    PointCloud out(world_cloud.size());
    parallel_chunks(world_cloud.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = frame.to_world(objective::pull(params, frame.to_unit(world_cloud[i])));
    });
    return out;
}

TrainedPipeline train_on_world_clouds(const std::vector<PointCloud>& world_clouds,
                                      const training::TrainConfig& cfg) {
    const sampling::ObservationSet s = sampling::make_observation_set(world_clouds);
    training::TrainResult r = training::train(s, cfg);
    TrainedPipeline out;
    out.frame = s.norm;
    out.params = std::move(r.params);
    out.params.frame_center = s.norm.center;
    out.params.frame_radius = s.norm.radius;
    out.log = std::move(r.log);
    out.aborted = r.aborted;
    out.abort_reason = r.abort_reason;
    return out;
}

UpsampleResult upsample(const PointCloud& sparse_world, int rate, double sigma,
                        const training::TrainConfig& cfg) {
    if (rate < 1) throw ConfigError("upsampling rate must be >= 1");
    if (sparse_world.empty()) throw ContractError("upsample: empty cloud");

    // t independent Gaussian perturbations merged into one dense observation.
    PointCloud dense;
    dense.reserve(sparse_world.size() * static_cast<std::size_t>(rate));
    const sampling::Normalization pre = sampling::compute_normalization(sparse_world);
    for (int t = 0; t < rate; ++t) {
        PointCloud unit(sparse_world.size());
        for (std::size_t i = 0; i < sparse_world.size(); ++i)
            unit[i] = pre.to_unit(sparse_world[i]);
        const PointCloud noisy =
            sampling::synthesize_noisy(unit, sigma, cfg.seed + static_cast<uint64_t>(t));
        for (const Vec3& p : noisy) dense.push_back(pre.to_world(p));
    }

    TrainedPipeline trained = train_on_world_clouds({dense}, cfg);
    if (trained.aborted)
        throw NumericError("upsample: training aborted: " + trained.abort_reason);
    UpsampleResult out;
    out.points = denoise(dense, trained.params);
    out.params = std::move(trained.params);
    return out;
}

ReconstructResult reconstruct(const std::vector<PointCloud>& world_clouds,
                              const training::TrainConfig& cfg, int mc_resolution) {
    TrainedPipeline trained = train_on_world_clouds(world_clouds, cfg);
    if (trained.aborted)
        throw NumericError("reconstruct: training aborted: " + trained.abort_reason);
    ReconstructResult out;
    out.mesh = surf::extract_mesh(trained.params, mc_resolution, surf::default_bbox());
    for (Vec3& v : out.mesh.vertices) v = trained.frame.to_world(v);
    out.params = std::move(trained.params);
    out.log = std::move(trained.log);
    return out;
}

std::vector<surf::Mesh> reconstruct_chunked(const PointCloud& world_cloud,
                                            const training::TrainConfig& cfg, int mc_resolution,
                                            int chunk_count) {
    if (chunk_count < 1) throw ConfigError("chunk count must be >= 1");
    if (chunk_count == 1) return {reconstruct({world_cloud}, cfg, mc_resolution).mesh};

    const Aabb box = bounds(world_cloud);
    const Vec3 ext = box.extent();
    // Integer grid proportional to the extents, covering >= chunk_count cells.
    int sx = 1, sy = 1, sz = 1;
    while (sx * sy * sz < chunk_count) {
        const double cx = ext.x / sx, cy = ext.y / sy, cz = ext.z / sz;
        if (cx >= cy && cx >= cz)
            ++sx;
        else if (cy >= cz)
            ++sy;
        else
            ++sz;
    }

    std::vector<surf::Mesh> meshes;
    for (int ix = 0; ix < sx; ++ix)
        for (int iy = 0; iy < sy; ++iy)
            for (int iz = 0; iz < sz; ++iz) {
                Aabb cell;
                cell.lo = {box.lo.x + ext.x * ix / sx, box.lo.y + ext.y * iy / sy,
                           box.lo.z + ext.z * iz / sz};
                cell.hi = {box.lo.x + ext.x * (ix + 1) / sx, box.lo.y + ext.y * (iy + 1) / sy,
                           box.lo.z + ext.z * (iz + 1) / sz};
                const Vec3 pad = 0.05 * (cell.hi - cell.lo);
                const Vec3 lo = cell.lo - pad, hi = cell.hi + pad;
                PointCloud chunk;
                for (const Vec3& p : world_cloud)
                    if (p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
                        p.z <= hi.z)
                        chunk.push_back(p);
                if (chunk.size() <
                    static_cast<std::size_t>(std::max(cfg.pool.k_scale + 1, 32)))
                    continue;  // not enough support to learn a field
                meshes.push_back(reconstruct({chunk}, cfg, mc_resolution).mesh);
            }
    return meshes;
}

std::string Theorem1Report::to_json() const {
    nlohmann::json j;
    j["shape"] = shape;
    j["m"] = m;
    j["sigma"] = sigma;
    j["observations"] = observations;
    j["iterations"] = iterations;
    j["emd_to_clean"] = emd_to_clean;
    j["mean_error"] = mean_error;
    j["error_quantiles"] = {{"p50", p50}, {"p90", p90}, {"p100", p100}};
    j["cd_baseline_mean_error"] = cd_mean_error;
    j["cd_over_emd"] = cd_over_emd;
    return j.dump(2);
}

Theorem1Report verify_theorem1(shapes::Kind shape, std::size_t m, double sigma,
                               std::size_t observations, int64_t iters, uint64_t seed) {
    if (m < 1 || observations < 1 || iters < 1)
        throw ConfigError("theorem1 needs m >= 1, observations >= 1, iterations >= 1");
    const PointCloud clean = shapes::sample(shape, m, seed);
    sampling::ObservationSet s;  // shapes are already unit-frame
    s.clouds.reserve(observations);
    for (std::size_t i = 0; i < observations; ++i)
        s.clouds.push_back(sampling::synthesize_noisy(clean, sigma, seed + 1 + i));

    const auto emd_run = training::direct_point_optimization(s, m, iters, 5e-3, seed,
                                                             training::DirectLoss::Emd);
    const auto cd_run = training::direct_point_optimization(s, m, iters, 5e-3, seed,
                                                            training::DirectLoss::ChamferSq);

    Theorem1Report rep;
    rep.shape = shapes::kind_name(shape);
    rep.m = m;
    rep.sigma = sigma;
    rep.observations = observations;
    rep.iterations = iters;
    rep.emd_to_clean = transport::emd_loss(emd_run.points, clean).value;

    const KdTree tree(clean);
    std::vector<double> err(m);
    for (std::size_t i = 0; i < m; ++i)
        err[i] = std::sqrt(tree.nearest(emd_run.points[i]).dist2);
    std::vector<double> sorted = err;
    std::sort(sorted.begin(), sorted.end());
    rep.mean_error = 0.0;
    for (double e : err) rep.mean_error += e;
    rep.mean_error /= static_cast<double>(m);
    rep.p50 = sorted[m / 2];
    rep.p90 = sorted[(m * 9) / 10];
    rep.p100 = sorted.back();

    rep.cd_mean_error = 0.0;
    for (const Vec3& p : cd_run.points) rep.cd_mean_error += std::sqrt(tree.nearest(p).dist2);
    rep.cd_mean_error /= static_cast<double>(m);
    rep.cd_over_emd = rep.mean_error > 0.0 ? rep.cd_mean_error / rep.mean_error : 0.0;
    return rep;
}

}  // namespace n2n::pipe
