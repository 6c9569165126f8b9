#include "n2n/sampling.hpp"

#include <cmath>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/threads.hpp"

namespace n2n::sampling {

Normalization compute_normalization(const PointCloud& cloud) {
    if (cloud.empty()) throw ContractError("compute_normalization: empty cloud");
    const Aabb box = bounds(cloud);
    Normalization n;
    n.center = box.center();
    double r2 = 0.0;
    for (const Vec3& p : cloud) r2 = std::max(r2, norm2(p - n.center));
    n.radius = r2 > 0.0 ? std::sqrt(r2) : 1.0;
    return n;
}

std::size_t ObservationSet::min_cloud_size() const {
    std::size_t m = SIZE_MAX;
    for (const auto& c : clouds) m = std::min(m, c.size());
    return clouds.empty() ? 0 : m;
}

ObservationSet make_observation_set(const std::vector<PointCloud>& world_clouds) {
    if (world_clouds.empty()) throw ContractError("observation set needs at least one cloud");
    PointCloud merged;
    for (const auto& c : world_clouds) merged.insert(merged.end(), c.begin(), c.end());
    ObservationSet s;
    s.norm = compute_normalization(merged);
    s.clouds.reserve(world_clouds.size());
    for (const auto& c : world_clouds) {
        PointCloud unit(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) unit[i] = s.norm.to_unit(c[i]);
        s.clouds.push_back(std::move(unit));
    }
    return s;
}

PointCloud synthesize_noisy(const PointCloud& clean, double sigma, uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    Rng rng = Rng::fork(seed, 0x5e15e);
    PointCloud out(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        out[i] = clean[i] +
                 Vec3{sigma * rng.gaussian(), sigma * rng.gaussian(), sigma * rng.gaussian()};
    }
    return out;
}

namespace {

void append_cloud_pool(QueryPool& pool, const PointCloud& noisy, uint32_t cloud_index,
                       const PoolOptions& opts, uint64_t seed) {
    if (static_cast<int>(noisy.size()) < opts.k_scale)
        throw ConfigError("query pool needs at least k_scale points per cloud");
    const KdTree tree(noisy);

    // Local scale per point: distance to the k_scale-th nearest other point.
    std::vector<double> sigma_p(noisy.size());
    parallel_chunks(noisy.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto hits = tree.k_nearest(noisy[i], static_cast<std::size_t>(opts.k_scale) + 1);
            sigma_p[i] = std::sqrt(hits.back().dist2);
        }
    });
    double max_sigma = 0.0;
    for (double s : sigma_p) max_sigma = std::max(max_sigma, s);
    if (max_sigma <= 0.0) throw ConfigError("degenerate cloud: all points coincide");

    pool.cloud_begin.push_back(static_cast<uint32_t>(pool.queries.size()));

    const std::size_t gauss_count = noisy.size() * static_cast<std::size_t>(opts.queries_per_point);
    const std::size_t far_count =
        static_cast<std::size_t>(std::llround(opts.far_field_fraction * static_cast<double>(gauss_count)));
    const std::size_t base = pool.queries.size();
    pool.queries.resize(base + gauss_count + far_count);
    pool.source_point.resize(pool.queries.size());
    pool.source_cloud.resize(pool.queries.size(), cloud_index);
    pool.nearest_in_source.resize(pool.queries.size());

    parallel_chunks(noisy.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng = Rng::fork(seed, (static_cast<uint64_t>(cloud_index) << 40) + i);
            const double s = sigma_p[i];
            for (int k = 0; k < opts.queries_per_point; ++k) {
                Vec3 d;
                do {
                    d = {s * rng.gaussian(), s * rng.gaussian(), s * rng.gaussian()};
                } while (norm(d) > 3.0 * s);
                const std::size_t slot = base + i * static_cast<std::size_t>(opts.queries_per_point) +
                                         static_cast<std::size_t>(k);
                const Vec3 q = noisy[i] + d;
                pool.queries[slot] = q;
                pool.source_point[slot] = static_cast<uint32_t>(i);
                pool.source_cloud[slot] = cloud_index;
                pool.nearest_in_source[slot] = noisy[tree.nearest(q).index];
            }
        }
    });

    if (far_count > 0) {
        Rng rng = Rng::fork(seed, (static_cast<uint64_t>(cloud_index) << 40) + 0xFA'FFFFull);
        for (std::size_t k = 0; k < far_count; ++k) {
            const std::size_t slot = base + gauss_count + k;
            const Vec3 q{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            pool.queries[slot] = q;
            pool.source_point[slot] = QueryPool::NO_SOURCE;
            pool.source_cloud[slot] = cloud_index;
            pool.nearest_in_source[slot] = noisy[tree.nearest(q).index];
        }
    }
    pool.cloud_end.push_back(static_cast<uint32_t>(pool.queries.size()));
}

}  // namespace

QueryPool build_query_pool(const PointCloud& noisy, int queries_per_point, int k_scale,
                           uint64_t seed) {
    if (queries_per_point < 0) throw ConfigError("queries_per_point must be >= 0");
    if (k_scale < 1) throw ConfigError("k_scale must be >= 1");
    PoolOptions opts;
    opts.queries_per_point = queries_per_point;
    opts.k_scale = k_scale;
    opts.far_field_fraction = 0.0;
    QueryPool pool;
    append_cloud_pool(pool, noisy, 0, opts, seed);
    return pool;
}

QueryPool build_pool_set(const ObservationSet& s, const PoolOptions& opts, uint64_t seed) {
    if (s.clouds.empty()) throw ContractError("build_pool_set: empty observation set");
    QueryPool pool;
    for (std::size_t c = 0; c < s.clouds.size(); ++c)
        append_cloud_pool(pool, s.clouds[c], static_cast<uint32_t>(c), opts, seed);
    return pool;
}

BatchPair sample_pair(const QueryPool& pool, const ObservationSet& s, std::size_t batch,
                      Rng& rng) {
    if (s.clouds.empty()) throw ContractError("sample_pair: empty observation set");
    const uint32_t n = static_cast<uint32_t>(s.clouds.size());
    BatchPair out;
    out.source_cloud = static_cast<uint32_t>(rng.below(n));
    out.target_cloud = static_cast<uint32_t>(rng.below(n));

    const std::size_t pool_size = pool.cloud_pool_size(out.source_cloud);
    if (batch > pool_size)
        throw ConfigError("batch size exceeds the query pool for the chosen cloud");
    const PointCloud& target = s.clouds[out.target_cloud];
    if (batch > target.size()) throw ConfigError("batch size exceeds the target cloud size");

    const uint32_t begin = pool.cloud_begin[out.source_cloud];
    const auto qsel = rng.sample_without_replacement(static_cast<uint32_t>(pool_size),
                                                     static_cast<uint32_t>(batch));
    out.queries.reserve(batch);
    out.nearest.reserve(batch);
    out.query_ids.reserve(batch);
    for (uint32_t k : qsel) {
        const uint32_t id = begin + k;
        out.queries.push_back(pool.queries[id]);
        out.nearest.push_back(pool.nearest_in_source[id]);
        out.query_ids.push_back(id);
    }
    const auto tsel = rng.sample_without_replacement(static_cast<uint32_t>(target.size()),
                                                     static_cast<uint32_t>(batch));
    out.targets.reserve(batch);
    for (uint32_t k : tsel) out.targets.push_back(target[k]);
    return out;
}

}  // namespace n2n::sampling
