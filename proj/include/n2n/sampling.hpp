#pragma once

#include <cstdint>
#include <vector>

#include "n2n/rng.hpp"
#include "n2n/vec3.hpp"

namespace n2n::sampling {

// Similarity transform into the unit-sphere working frame.
struct Normalization {
    Vec3 center{0, 0, 0};
    double radius = 1.0;

    Vec3 to_unit(const Vec3& p) const { return (p - center) / radius; }
    Vec3 to_world(const Vec3& p) const { return p * radius + center; }
};

Normalization compute_normalization(const PointCloud& cloud);

// N >= 1 noisy captures of one shape, sharing one normalization.
struct ObservationSet {
    std::vector<PointCloud> clouds;  // unit frame
    Normalization norm;

    std::size_t count() const { return clouds.size(); }
    std::size_t min_cloud_size() const;
};

// Joint normalization over all clouds, then transform each into unit frame.
ObservationSet make_observation_set(const std::vector<PointCloud>& world_clouds);

// Displace each point by iid zero-mean isotropic Gaussian noise with the given
// standard deviation (a fraction of the unit-frame bounding radius).
PointCloud synthesize_noisy(const PointCloud& clean, double sigma, uint64_t seed);

// Queries sampled around noisy clouds. Gaussian queries are truncated at
// 3 sigma_p of their source point; far-field queries (fast mode) carry
// source_point == NO_SOURCE.
struct QueryPool {
    static constexpr uint32_t NO_SOURCE = UINT32_MAX;

    std::vector<Vec3> queries;
    std::vector<uint32_t> source_point;
    std::vector<uint32_t> source_cloud;
    std::vector<Vec3> nearest_in_source;   // nearest noisy point per query
    std::vector<uint32_t> cloud_begin;     // per-cloud segment [begin, end)
    std::vector<uint32_t> cloud_end;

    std::size_t size() const { return queries.size(); }
    std::size_t cloud_pool_size(uint32_t cloud) const {
        return cloud_end[cloud] - cloud_begin[cloud];
    }
};

struct PoolOptions {
    int queries_per_point = 25;
    int k_scale = 50;                 // neighbor rank defining the local scale
    double far_field_fraction = 0.0;  // uniform cube samples added per cloud
};

// Per point p of the cloud, sigma_p is the distance to its k_scale-th nearest
// neighbor and queries_per_point samples are drawn from N(p, sigma_p^2 I).
QueryPool build_query_pool(const PointCloud& noisy, int queries_per_point, int k_scale,
                           uint64_t seed);

QueryPool build_pool_set(const ObservationSet& s, const PoolOptions& opts, uint64_t seed);

struct BatchPair {
    std::vector<Vec3> queries;
    std::vector<Vec3> targets;
    std::vector<Vec3> nearest;        // nearest noisy point per query
    std::vector<uint32_t> query_ids;  // pool indices, for provenance
    uint32_t source_cloud = 0;
    uint32_t target_cloud = 0;
};

// Queries from a uniformly chosen source cloud's pool segment, targets drawn
// uniformly without replacement from a uniformly chosen cloud (the same cloud
// when N == 1).
BatchPair sample_pair(const QueryPool& pool, const ObservationSet& s, std::size_t batch,
                      Rng& rng);

}  // namespace n2n::sampling
