#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "n2n/vec3.hpp"

namespace n2n {

// Static KD-tree over 3D points with exact nearest-neighbor queries.
class KdTree {
  public:
    struct Hit {
        uint32_t index = UINT32_MAX;
        double dist2 = 1e300;
    };

    KdTree() = default;
    explicit KdTree(const PointCloud& pts) : pts_(pts) {
        idx_.resize(pts_.size());
        std::iota(idx_.begin(), idx_.end(), 0u);
        nodes_.reserve(pts_.size() / LEAF + 2);
        if (!pts_.empty()) root_ = build(0, static_cast<uint32_t>(pts_.size()));
    }

    std::size_t size() const { return pts_.size(); }

    Hit nearest(const Vec3& q) const { return nearest_excluding(q, UINT32_MAX); }

    Hit nearest_excluding(const Vec3& q, uint32_t exclude) const {
        Hit best;
        if (!pts_.empty()) search(root_, q, exclude, best);
        return best;
    }

    // k nearest hits sorted by ascending distance.
    std::vector<Hit> k_nearest(const Vec3& q, std::size_t k) const {
        std::vector<Hit> heap;  // max-heap on dist2
        heap.reserve(k + 1);
        if (k > 0 && !pts_.empty()) search_k(root_, q, k, heap);
        std::sort(heap.begin(), heap.end(),
                  [](const Hit& a, const Hit& b) { return a.dist2 < b.dist2; });
        return heap;
    }

  private:
    static constexpr uint32_t LEAF = 16;

    struct Node {
        Aabb box;
        uint32_t begin = 0, end = 0;  // leaf range in idx_
        int32_t left = -1, right = -1;
    };

    int32_t build(uint32_t begin, uint32_t end) {
        Node n;
        n.begin = begin;
        n.end = end;
        for (uint32_t i = begin; i < end; ++i) n.box.expand(pts_[idx_[i]]);
        const int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.push_back(n);
        if (end - begin > LEAF) {
            const Vec3 ext = n.box.extent();
            const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
            const uint32_t mid = begin + (end - begin) / 2;
            std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                             [&](uint32_t a, uint32_t b) { return pts_[a][axis] < pts_[b][axis]; });
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
            const double lo = b.lo[a], hi = b.hi[a], v = q[a];
            const double d = v < lo ? lo - v : (v > hi ? v - hi : 0.0);
            d2 += d * d;
        }
        return d2;
    }

    void search(int32_t id, const Vec3& q, uint32_t exclude, Hit& best) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (box_dist2(n.box, q) >= best.dist2) return;
        if (n.left < 0) {
            for (uint32_t i = n.begin; i < n.end; ++i) {
                const uint32_t p = idx_[i];
                if (p == exclude) continue;
                const double d2 = norm2(pts_[p] - q);
                if (d2 < best.dist2) best = {p, d2};
            }
            return;
        }
        const double dl = box_dist2(nodes_[static_cast<std::size_t>(n.left)].box, q);
        const double dr = box_dist2(nodes_[static_cast<std::size_t>(n.right)].box, q);
        if (dl <= dr) {
            search(n.left, q, exclude, best);
            search(n.right, q, exclude, best);
        } else {
            search(n.right, q, exclude, best);
            search(n.left, q, exclude, best);
        }
    }

    void search_k(int32_t id, const Vec3& q, std::size_t k, std::vector<Hit>& heap) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const double worst = heap.size() == k ? heap.front().dist2 : 1e300;
        if (box_dist2(n.box, q) >= worst) return;
        if (n.left < 0) {
            auto cmp = [](const Hit& a, const Hit& b) { return a.dist2 < b.dist2; };
            for (uint32_t i = n.begin; i < n.end; ++i) {
                const uint32_t p = idx_[i];
                const double d2 = norm2(pts_[p] - q);
                if (heap.size() < k) {
                    heap.push_back({p, d2});
                    std::push_heap(heap.begin(), heap.end(), cmp);
                } else if (d2 < heap.front().dist2) {
                    std::pop_heap(heap.begin(), heap.end(), cmp);
                    heap.back() = {p, d2};
                    std::push_heap(heap.begin(), heap.end(), cmp);
                }
            }
            return;
        }
        const double dl = box_dist2(nodes_[static_cast<std::size_t>(n.left)].box, q);
        const double dr = box_dist2(nodes_[static_cast<std::size_t>(n.right)].box, q);
        if (dl <= dr) {
            search_k(n.left, q, k, heap);
            search_k(n.right, q, k, heap);
        } else {
            search_k(n.right, q, k, heap);
            search_k(n.left, q, k, heap);
        }
    }

    PointCloud pts_;
    std::vector<uint32_t> idx_;
    std::vector<Node> nodes_;
    int32_t root_ = -1;
};

}  // namespace n2n
