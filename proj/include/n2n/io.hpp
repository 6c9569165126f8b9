#pragma once

#include <string>

#include "n2n/surfacing.hpp"
#include "n2n/vec3.hpp"

namespace n2n::io {

enum class CloudFormat { Auto, Xyz, PlyBinary, PlyAscii };

// XYZ: one "x y z" line per point, extra columns ignored. PLY: ASCII or
// binary little-endian, positions required, other properties skipped.
PointCloud read_point_cloud(const std::string& path);

// Deterministic, locale-independent output. Binary PLY round-trips through
// the reader bit-exactly.
void write_point_cloud(const PointCloud& cloud, const std::string& path,
                       CloudFormat format = CloudFormat::Auto);

// Meshes: OBJ (text) and binary little-endian PLY. Face normals are
// recomputed on load.
surf::Mesh read_mesh(const std::string& path);
void write_mesh(const surf::Mesh& mesh, const std::string& path);

}  // namespace n2n::io
