#include "n2n/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "n2n/errors.hpp"
#include "n2n/kdtree.hpp"
#include "n2n/rng.hpp"
#include "n2n/threads.hpp"

namespace n2n::metrics {

namespace {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

// Small BVH over triangles for exact nearest-triangle distances.
class TriBvh {
  public:
    explicit TriBvh(const surf::Mesh& mesh) : mesh_(mesh) {
        idx_.resize(mesh.triangles.size());
        centroids_.resize(mesh.triangles.size());
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            idx_[t] = static_cast<uint32_t>(t);
            const auto& tri = mesh.triangles[t];
            centroids_[t] =
                (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
        }
        if (!idx_.empty()) root_ = build(0, static_cast<uint32_t>(idx_.size()));
    }

    double distance(const Vec3& p) const {
        double best = 1e300;
        if (root_ >= 0) search(root_, p, best);
        return std::sqrt(best);
    }

  private:
    static constexpr uint32_t LEAF = 8;

    struct Node {
        Aabb box;
        uint32_t begin = 0, end = 0;
        int32_t left = -1, right = -1;
    };

    int32_t build(uint32_t begin, uint32_t end) {
        Node n;
        n.begin = begin;
        n.end = end;
        for (uint32_t i = begin; i < end; ++i) {
            const auto& tri = mesh_.triangles[idx_[i]];
            for (int k = 0; k < 3; ++k) n.box.expand(mesh_.vertices[tri[static_cast<std::size_t>(k)]]);
        }
        const int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.push_back(n);
        if (end - begin > LEAF) {
            const Vec3 ext = n.box.extent();
            const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
            const uint32_t mid = begin + (end - begin) / 2;
            std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                             [&](uint32_t a, uint32_t b) {
                                 return centroids_[a][axis] < centroids_[b][axis];
                             });
            const int32_t l = build(begin, mid);
            const int32_t r = build(mid, end);
            nodes_[static_cast<std::size_t>(id)].left = l;
            nodes_[static_cast<std::size_t>(id)].right = r;
        }
        return id;
    }

    static double box_dist2(const Aabb& b, const Vec3& q) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double d = q[a] < b.lo[a] ? b.lo[a] - q[a] : (q[a] > b.hi[a] ? q[a] - b.hi[a] : 0.0);
            d2 += d * d;
        }
        return d2;
    }

    void search(int32_t id, const Vec3& p, double& best) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (box_dist2(n.box, p) >= best) return;
        if (n.left < 0) {
            for (uint32_t i = n.begin; i < n.end; ++i) {
                const auto& tri = mesh_.triangles[idx_[i]];
                const Vec3 c = closest_on_triangle(p, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]],
                                                   mesh_.vertices[tri[2]]);
                best = std::min(best, norm2(p - c));
            }
            return;
        }
        const double dl = box_dist2(nodes_[static_cast<std::size_t>(n.left)].box, p);
        const double dr = box_dist2(nodes_[static_cast<std::size_t>(n.right)].box, p);
        if (dl <= dr) {
            search(n.left, p, best);
            search(n.right, p, best);
        } else {
            search(n.right, p, best);
            search(n.left, p, best);
        }
    }

    const surf::Mesh& mesh_;
    std::vector<uint32_t> idx_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
    int32_t root_ = -1;
};

double chamfer(const PointCloud& a, const PointCloud& b, bool squared,
               ChamferConvention convention) {
    if (a.empty() || b.empty()) throw ContractError("chamfer distance requires non-empty clouds");
    const KdTree ta(a), tb(b);
    auto side = [&](const PointCloud& from, const KdTree& to) {
        double acc = 0.0;
        for (const Vec3& p : from) {
            const double d2 = to.nearest(p).dist2;
            acc += squared ? d2 : std::sqrt(d2);
        }
        return acc;
    };
    const double sa = side(a, tb);
    const double sb = side(b, ta);
    if (convention == ChamferConvention::HalvedSumOfMeans)
        return 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
    return (sa + sb) / static_cast<double>(a.size() + b.size());
}

}  // namespace

double chamfer_l2(const PointCloud& a, const PointCloud& b, ChamferConvention convention) {
    return chamfer(a, b, true, convention);
}

double chamfer_l1(const PointCloud& a, const PointCloud& b, ChamferConvention convention) {
    return chamfer(a, b, false, convention);
}

double point_to_mesh(const PointCloud& a, const surf::Mesh& mesh) {
    if (a.empty()) throw ContractError("point_to_mesh: empty cloud");
    if (mesh.empty()) throw ContractError("point_to_mesh: empty mesh");
    const TriBvh bvh(mesh);
    std::vector<double> partial(worker_count(), 0.0);
    parallel_chunks(a.size(), [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) acc += bvh.distance(a[i]);
        partial[chunk] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(a.size());
}

SurfaceSamples sample_surface(const surf::Mesh& mesh, std::size_t count, uint64_t seed) {
    if (mesh.empty()) throw ContractError("sample_surface: empty mesh");
    std::vector<double> cdf(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        total += 0.5 * norm(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                                  mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
        cdf[t] = total;
    }
    if (total <= 0.0) throw ContractError("sample_surface: degenerate mesh");

    SurfaceSamples out;
    out.points.resize(count);
    out.normals.resize(count);
    Rng rng = Rng::fork(seed, 0x5a3b1e);
    for (std::size_t i = 0; i < count; ++i) {
        // Stratified over the area CDF.
        const double u =
            (static_cast<double>(i) + rng.uniform()) / static_cast<double>(count) * total;
        const std::size_t t = static_cast<std::size_t>(
            std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        const auto& tri = mesh.triangles[std::min(t, mesh.triangles.size() - 1)];
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        const Vec3& a = mesh.vertices[tri[0]];
        const Vec3& b = mesh.vertices[tri[1]];
        const Vec3& c = mesh.vertices[tri[2]];
        out.points[i] = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        out.normals[i] = mesh.face_normals[std::min(t, mesh.triangles.size() - 1)];
    }
    return out;
}

double normal_consistency(const surf::Mesh& pred, const surf::Mesh& gt, std::size_t samples,
                          uint64_t seed) {
    if (pred.empty() || gt.empty())
        throw ContractError("normal_consistency requires non-empty meshes");
    const SurfaceSamples sp = sample_surface(pred, samples, seed);
    const SurfaceSamples sg = sample_surface(gt, samples, seed + 1);
    const KdTree tp(sp.points), tg(sg.points);
    auto side = [&](const SurfaceSamples& from, const SurfaceSamples& to, const KdTree& to_tree) {
        std::vector<double> partial(worker_count(), 0.0);
        parallel_chunks(from.points.size(), [&](std::size_t chunk, std::size_t begin,
                                                std::size_t end) {
            double acc = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto hit = to_tree.nearest(from.points[i]);
                acc += std::fabs(dot(from.normals[i], to.normals[hit.index]));
            }
            partial[chunk] = acc;
        });
        double total = 0.0;
        for (double p : partial) total += p;
        return total / static_cast<double>(from.points.size());
    };
    return 0.5 * (side(sp, sg, tg) + side(sg, sp, tp));
}

double f_score(const surf::Mesh& pred, const surf::Mesh& gt, double tau, std::size_t samples,
               uint64_t seed) {
    if (tau <= 0.0) throw ContractError("f_score: tau must be > 0");
    if (pred.empty() || gt.empty()) throw ContractError("f_score requires non-empty meshes");
    const SurfaceSamples sp = sample_surface(pred, samples, seed);
    const SurfaceSamples sg = sample_surface(gt, samples, seed + 1);
    const KdTree tp(sp.points), tg(sg.points);
    auto within = [&](const PointCloud& from, const KdTree& to) {
        std::size_t hits = 0;
        for (const Vec3& p : from)
            if (to.nearest(p).dist2 <= tau * tau) ++hits;
        return static_cast<double>(hits) / static_cast<double>(from.size());
    };
    const double precision = within(sp.points, tg);
    const double recall = within(sg.points, tp);
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::string to_json(const MetricRecord& record) {
    nlohmann::json j;
    j["metric"] = record.metric;
    j["convention"] = record.convention;
    j["scale"] = record.scale;
    j["value"] = record.value;
    return j.dump();
}

}  // namespace n2n::metrics
