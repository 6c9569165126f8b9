#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "n2n/field.hpp"
#include "n2n/sampling.hpp"
#include "n2n/shapes.hpp"
#include "n2n/surfacing.hpp"
#include "n2n/training.hpp"

namespace n2n::pipe {

// One pull application per input point; positions go through the field's
// stored working frame and come back denormalized.
PointCloud denoise(const PointCloud& world_cloud, const field::FieldParams& params);

struct TrainedPipeline {
    field::FieldParams params;
    training::TrainLog log;
    sampling::Normalization frame;
    bool aborted = false;
    std::string abort_reason;
};

// Normalize the observations jointly, train, and stamp the frame into the
// returned parameters.
TrainedPipeline train_on_world_clouds(const std::vector<PointCloud>& world_clouds,
                                      const training::TrainConfig& cfg);

struct UpsampleResult {
    PointCloud points;  // exactly rate * |sparse| points, world frame
    field::FieldParams params;
};

// Perturb the sparse cloud `rate` times with Gaussian noise, train one field
// on the merged observation, then denoise it.
UpsampleResult upsample(const PointCloud& sparse_world, int rate, double sigma,
                        const training::TrainConfig& cfg);

struct ReconstructResult {
    surf::Mesh mesh;  // world frame
    field::FieldParams params;
    training::TrainLog log;
};

ReconstructResult reconstruct(const std::vector<PointCloud>& world_clouds,
                              const training::TrainConfig& cfg, int mc_resolution);

// Axis-aligned uniform chunking with 5% overlap; one mesh per chunk, no
// stitching. Chunks with too few points for the sampler are skipped.
std::vector<surf::Mesh> reconstruct_chunked(const PointCloud& world_cloud,
                                            const training::TrainConfig& cfg, int mc_resolution,
                                            int chunk_count);

struct Theorem1Report {
    std::string shape;
    std::size_t m = 0;
    double sigma = 0.0;
    std::size_t observations = 0;
    int64_t iterations = 0;
    double emd_to_clean = 0.0;
    double mean_error = 0.0;  // mean nearest distance to the clean cloud
    double p50 = 0.0, p90 = 0.0, p100 = 0.0;
    double cd_mean_error = 0.0;  // squared-Chamfer baseline on the same run
    double cd_over_emd = 0.0;

    std::string to_json() const;
};

// Network-free convergence check: optimize a free point set against noisy
// observations of an analytic shape, and contrast the EMD objective with a
// squared-Chamfer baseline.
Theorem1Report verify_theorem1(shapes::Kind shape, std::size_t m, double sigma,
                               std::size_t observations, int64_t iters, uint64_t seed);

}  // namespace n2n::pipe
