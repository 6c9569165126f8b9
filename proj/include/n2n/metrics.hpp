#pragma once

#include <cstdint>
#include <string>

#include "n2n/surfacing.hpp"
#include "n2n/vec3.hpp"

namespace n2n::metrics {

// The occupancy-network convention halves the sum of per-side means; the
// alternative averages over all points of both sides.
enum class ChamferConvention { HalvedSumOfMeans, MeanOfBothSides };

double chamfer_l2(const PointCloud& a, const PointCloud& b,
                  ChamferConvention convention = ChamferConvention::HalvedSumOfMeans);
double chamfer_l1(const PointCloud& a, const PointCloud& b,
                  ChamferConvention convention = ChamferConvention::HalvedSumOfMeans);

// Mean exact point-to-triangle distance (closest feature among face, edge,
// vertex), accelerated by a bounding-volume hierarchy.
double point_to_mesh(const PointCloud& a, const surf::Mesh& mesh);

// Area-weighted stratified surface samples with their face normals.
struct SurfaceSamples {
    PointCloud points;
    std::vector<Vec3> normals;
};
SurfaceSamples sample_surface(const surf::Mesh& mesh, std::size_t count, uint64_t seed);

// Mean absolute cosine between sampled normals and their nearest-neighbor
// normals on the other mesh, symmetrized.
double normal_consistency(const surf::Mesh& pred, const surf::Mesh& gt,
                          std::size_t samples = 100000, uint64_t seed = 0);

// Harmonic mean of surface precision and recall at distance threshold tau.
double f_score(const surf::Mesh& pred, const surf::Mesh& gt, double tau,
               std::size_t samples = 100000, uint64_t seed = 0);

struct MetricRecord {
    std::string metric;
    std::string convention;
    double scale = 1.0;  // report multiplier (tables use 1e4)
    double value = 0.0;
};

std::string to_json(const MetricRecord& record);

}  // namespace n2n::metrics
