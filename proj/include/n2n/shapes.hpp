#pragma once

#include <cstdint>
#include <string>

#include "n2n/vec3.hpp"

namespace n2n::shapes {

enum class Kind { Sphere, Cube, Torus };

Kind parse_kind(const std::string& name);
std::string kind_name(Kind kind);

// Area-uniform surface samples in the unit working frame (sphere radius 1,
// cube half-extent 0.8, torus radii 0.7 / 0.3).
PointCloud sample(Kind kind, std::size_t count, uint64_t seed);

// Analytic signed distance, used as the test oracle.
double sdf(Kind kind, const Vec3& q);

}  // namespace n2n::shapes
