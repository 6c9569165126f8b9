#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "n2n/field.hpp"
#include "n2n/vec3.hpp"

namespace n2n::surf {

// Triangle mesh with welded vertices and per-face unit normals oriented along
// the field gradient (outward for a signed distance field).
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<Vec3> face_normals;
    bool surface_found = true;  // false when the field had no zero crossing

    bool empty() const { return triangles.empty(); }
};

using ScalarField = std::function<double(const Vec3&)>;

// Marching cubes over a dense sampling of an arbitrary scalar field.
Mesh extract_mesh_fn(const ScalarField& f, int resolution, const Aabb& bbox);

// Marching cubes over the learned field (parallel grid evaluation).
Mesh extract_mesh(const field::FieldParams& params, int resolution, const Aabb& bbox);

// Default extraction box: unit cube expanded by 5%.
Aabb default_bbox();

struct ProjectionResult {
    PointCloud points;
    std::vector<uint8_t> degenerate;  // flagged points were passed through
};

// Applies the pull operator `steps` times to every point.
ProjectionResult project_to_zero_set(const field::FieldParams& params, const PointCloud& points,
                                     int steps);

// Topology probes used by verification: V - E + F, and the number of edges not
// shared by exactly two triangles (0 for a crack-free closed surface).
long euler_characteristic(const Mesh& mesh);
std::size_t non_manifold_edges(const Mesh& mesh);

// Structural validation of the lookup tables (every cut edge triangulated,
// every triangle on cut edges, masks consistent with corner signs).
bool tables_consistent();

}  // namespace n2n::surf
