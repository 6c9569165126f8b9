#include "n2n/surfacing.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

#include "n2n/errors.hpp"
#include "n2n/objective.hpp"
#include "n2n/threads.hpp"

namespace n2n::surf {

namespace {

#include "mc_tables.inc"

// Corner lattice offsets in Bourke numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

// Each cube edge as a canonical lattice edge: offset of the lower corner and
// the axis it runs along. Both cells sharing an edge agree on this key, which
// is what welds vertices and keeps the mesh crack-free.
constexpr int kEdgeOrigin[12][4] = {{0, 0, 0, 0}, {1, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 0, 1},
                                    {0, 0, 1, 0}, {1, 0, 1, 1}, {0, 1, 1, 0}, {0, 0, 1, 1},
                                    {0, 0, 0, 2}, {1, 0, 0, 2}, {1, 1, 0, 2}, {0, 1, 0, 2}};

}  // namespace

Aabb default_bbox() {
    Aabb b;
    b.lo = {-1.05, -1.05, -1.05};
    b.hi = {1.05, 1.05, 1.05};
    return b;
}

Mesh extract_mesh_fn(const ScalarField& f, int resolution, const Aabb& bbox) {
    if (resolution < 8) throw ConfigError("marching cubes resolution must be >= 8");
    if (!bbox.valid()) throw ConfigError("marching cubes bbox is empty");
    const int r = resolution;
    const std::size_t side = static_cast<std::size_t>(r) + 1;
    const Vec3 ext = bbox.extent();
    const Vec3 cell{ext.x / r, ext.y / r, ext.z / r};

    auto lattice_point = [&](int x, int y, int z) {
        return Vec3{bbox.lo.x + cell.x * x, bbox.lo.y + cell.y * y, bbox.lo.z + cell.z * z};
    };

    // Dense field sampling, parallel over z-slabs.
    std::vector<double> values(side * side * side);
    parallel_chunks(side, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t z = begin; z < end; ++z)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x)
                    values[(z * side + y) * side + x] = f(lattice_point(
                        static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)));
    });
    auto value_at = [&](int x, int y, int z) {
        return values[(static_cast<std::size_t>(z) * side + static_cast<std::size_t>(y)) * side +
                      static_cast<std::size_t>(x)];
    };

    Mesh mesh;
    std::unordered_map<uint64_t, uint32_t> edge_vertex;
    edge_vertex.reserve(1u << 16);

    auto vertex_on_edge = [&](int cx, int cy, int cz, int edge) -> uint32_t {
        const int ox = cx + kEdgeOrigin[edge][0];
        const int oy = cy + kEdgeOrigin[edge][1];
        const int oz = cz + kEdgeOrigin[edge][2];
        const int axis = kEdgeOrigin[edge][3];
        const uint64_t key =
            ((static_cast<uint64_t>(oz) * side + static_cast<uint64_t>(oy)) * side +
             static_cast<uint64_t>(ox)) *
                3 +
            static_cast<uint64_t>(axis);
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;

        int ux = ox, uy = oy, uz = oz;
        (axis == 0 ? ux : axis == 1 ? uy : uz) += 1;
        const double v1 = value_at(ox, oy, oz);
        const double v2 = value_at(ux, uy, uz);
        double t = v1 - v2 != 0.0 ? v1 / (v1 - v2) : 0.5;
        t = std::clamp(t, 0.0, 1.0);
        const Vec3 p1 = lattice_point(ox, oy, oz);
        const Vec3 p2 = lattice_point(ux, uy, uz);
        const uint32_t id = static_cast<uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(p1 + t * (p2 - p1));
        edge_vertex.emplace(key, id);
        return id;
    };

    bool any_crossing = false;
    for (int cz = 0; cz < r; ++cz)
        for (int cy = 0; cy < r; ++cy)
            for (int cx = 0; cx < r; ++cx) {
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (value_at(cx + kCorner[c][0], cy + kCorner[c][1], cz + kCorner[c][2]) < 0.0)
                        cube |= 1 << c;
                if (kEdgeTable[cube] == 0) continue;
                any_crossing = true;
                const int8_t* tris = kTriTable[cube];
                for (int t = 0; tris[t] != -1; t += 3) {
                    // Reversed winding: with inside < 0 the raw table order
                    // faces the negative side; normals must follow grad f.
                    const uint32_t a = vertex_on_edge(cx, cy, cz, tris[t]);
                    const uint32_t b = vertex_on_edge(cx, cy, cz, tris[t + 2]);
                    const uint32_t c = vertex_on_edge(cx, cy, cz, tris[t + 1]);
                    const Vec3 n =
                        cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
                    const double len = norm(n);
                    if (0.5 * len <= 1e-12) continue;  // degenerate sliver
                    mesh.triangles.push_back({a, b, c});
                    mesh.face_normals.push_back(n / len);
                }
            }
    mesh.surface_found = any_crossing;

    // Drop vertices orphaned by degenerate-triangle removal.
    std::vector<uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
    std::vector<Vec3> kept;
    for (auto& tri : mesh.triangles)
        for (uint32_t& v : tri) {
            if (remap[v] == UINT32_MAX) {
                remap[v] = static_cast<uint32_t>(kept.size());
                kept.push_back(mesh.vertices[v]);
            }
            v = remap[v];
        }
    mesh.vertices = std::move(kept);
    return mesh;
}

Mesh extract_mesh(const field::FieldParams& params, int resolution, const Aabb& bbox) {
    return extract_mesh_fn([&params](const Vec3& q) { return field::sdf(params, q); }, resolution,
                           bbox);
}

ProjectionResult project_to_zero_set(const field::FieldParams& params, const PointCloud& points,
                                     int steps) {
    if (steps < 0) throw ConfigError("projection steps must be >= 0");
    ProjectionResult out;
    out.points = points;
    out.degenerate.assign(points.size(), 0);
    parallel_chunks(points.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Vec3 p = out.points[i];
            for (int s = 0; s < steps; ++s) {
                const auto fg = field::sdf_with_gradient(params, p);
                const double len = norm(fg.grad);
                if (len < objective::GRAD_EPSILON) {
                    out.degenerate[i] = 1;
                    break;
                }
                p = p - fg.grad * (fg.d / len);
            }
            if (!out.degenerate[i]) out.points[i] = p;
        }
    });
    return out;
}

namespace {

uint64_t edge_key(uint32_t a, uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | b;
}

}  // namespace

bool tables_consistent() {
    for (int cube = 0; cube < 256; ++cube) {
        const uint16_t mask = kEdgeTable[cube];
        uint16_t used = 0;
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
            for (int k = 0; k < 3; ++k) {
                const int e = kTriTable[cube][t + k];
                if (e < 0 || e > 11) return false;
                if (!(mask & (1 << e))) return false;  // triangle off a cut edge
                used |= static_cast<uint16_t>(1 << e);
            }
        }
        if (used != mask) return false;  // a cut edge never triangulated
        // The edge mask itself must match the corner sign pattern.
        static const int ends[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                        {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
        for (int e = 0; e < 12; ++e) {
            const bool a = cube & (1 << ends[e][0]);
            const bool b = cube & (1 << ends[e][1]);
            if (((mask >> e) & 1) != (a != b)) return false;
        }
    }
    return true;
}

long euler_characteristic(const Mesh& mesh) {
    std::unordered_map<uint64_t, int> edges;
    for (const auto& t : mesh.triangles) {
        edges[edge_key(t[0], t[1])]++;
        edges[edge_key(t[1], t[2])]++;
        edges[edge_key(t[2], t[0])]++;
    }
    return static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
           static_cast<long>(mesh.triangles.size());
}

std::size_t non_manifold_edges(const Mesh& mesh) {
    std::unordered_map<uint64_t, int> edges;
    for (const auto& t : mesh.triangles) {
        edges[edge_key(t[0], t[1])]++;
        edges[edge_key(t[1], t[2])]++;
        edges[edge_key(t[2], t[0])]++;
    }
    std::size_t bad = 0;
    for (const auto& [key, count] : edges)
        if (count != 2) ++bad;
    return bad;
}

}  // namespace n2n::surf
