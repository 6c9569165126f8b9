#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "n2n/vec3.hpp"

namespace n2n::ad {

// Flat parameter storage layout: a run of named blocks inside one vector.
// A block is a rows x cols matrix (cols == 1 for biases and tables of
// feature rows are rows x feature_dim).
struct Blocks {
    struct Block {
        std::size_t offset = 0;
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::size_t size() const { return rows * cols; }
    };
    std::vector<Block> blocks;
    std::size_t total = 0;

    int add(std::size_t rows, std::size_t cols) {
        blocks.push_back({total, rows, cols});
        total += rows * cols;
        return static_cast<int>(blocks.size()) - 1;
    }
};

// Gradient with respect to every parameter entry, in block layout order.
struct ParamGrad {
    std::vector<double> g;

    explicit ParamGrad(std::size_t n = 0) : g(n, 0.0) {}
    void reset() { std::fill(g.begin(), g.end(), 0.0); }
    void axpy(double a, const ParamGrad& o) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += a * o.g[i];
    }
};

// Position with a 3 x k tangent seed for forward-mode propagation (k == 3
// with the identity seed, which makes the tangent of a scalar its gradient).
struct DualVec3 {
    Vec3 value;
    std::array<Vec3, 3> tangent{};  // tangent[k] = d value / d seed_k

    static DualVec3 seeded(const Vec3& q) {
        DualVec3 d;
        d.value = q;
        d.tangent[0] = {1, 0, 0};
        d.tangent[1] = {0, 1, 0};
        d.tangent[2] = {0, 0, 1};
        return d;
    }
};

enum class Act : uint8_t { Softplus, Tanh };

enum class Op : uint8_t {
    Input,        // leaf: 3-vector, optional identity tangent seed
    ConstVec,     // leaf: constant vector, no tangent
    Affine,       // y = W x + b
    Activation,   // elementwise smooth activation
    HashGather,   // multi-level trilinear feature gather (leaf position input)
    Concat,       // y = [a; b]
    Add,          // y = a + b (equal dims)
    Sub,          // y = a - b
    Scale,        // y = s * v (scalar node * vector node)
    Norm,         // y = ||v||_2, zero partials at v == 0
    DivScalar,    // y = v / s
    Dot,          // y = a . b
    Mul,          // y = a * b (scalars)
    Abs,          // elementwise |x|, zero partial at 0
    AddConst,     // y = x + c
    MulConst,     // y = c * x
    Hinge,        // y = max(0, x - c), inactive at the boundary
    GradOf,       // y = tangent of a scalar node (3-vector, no tangent of its own)
    WeightedSum,  // y = sum_i w_i t_i over scalar terms (may be empty)
};

// One trilinear gather level: eight table rows blended by weights derived
// from the in-cell fraction t. dscale holds d(cell coordinate)/d(position)
// per axis, zeroed where the position was clamped to the grid domain.
struct GatherLevel {
    int block = -1;
    std::array<uint32_t, 8> slots{};
    std::array<double, 3> t{};
    std::array<double, 3> dscale{};
};

struct Node {
    Op op;
    bool has_tan = false;
    int32_t a = -1, b = -1;
    int32_t dim = 0;
    int64_t val = -1;    // offset into value arena
    int64_t tan = -1;    // offset into tangent arena (dim * 3 doubles)
    int64_t aux_f = -1;  // payload offset (doubles)
    int64_t aux_i = -1;  // payload offset (ints)
    int32_t naux = 0;    // payload element count (op-specific meaning)
    int32_t wblock = -1, bblock = -1;
};

// Recorded computation. Single-writer; values are computed eagerly at record
// time, and replay() recomputes them bit-for-bit from the leaves. backward()
// runs once per recorded scalar and accumulates exact parameter gradients,
// including the mixed second-order path through recorded tangents.
class Tape {
  public:
    Tape() = default;
    Tape(std::span<const double> params, const Blocks* layout)
        : params_(params), layout_(layout) {}

    void bind(std::span<const double> params, const Blocks* layout) {
        params_ = params;
        layout_ = layout;
    }

    void clear();
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    // --- recording -----------------------------------------------------
    int input(const DualVec3& q);
    int input_plain(const Vec3& q);  // no tangent seed
    int const_vec(std::span<const double> v);
    int const_vec3(const Vec3& v);
    int affine(int x, int wblock, int bblock);
    int activation(int x, Act kind, double beta);
    int hash_gather(int x, std::span<const GatherLevel> levels, int feature_dim);
    int concat(int a, int b);
    int add(int a, int b);
    int sub(int a, int b);
    int scale(int s, int v);
    int norm(int v);
    int div_scalar(int v, int s);
    int dot(int a, int b);
    int mul(int a, int b);
    int abs(int x);
    int add_const(int x, double c);
    int mul_const(int x, double c);
    int hinge(int x, double c);
    int grad_of(int x);
    int weighted_sum(std::span<const int> terms, std::span<const double> weights);

    // --- access ----------------------------------------------------------
    double value(int node) const;                       // scalar nodes
    std::span<const double> values(int node) const;     // any node
    Vec3 value3(int node) const;
    Vec3 tangent_of_scalar(int node) const;             // gradient w.r.t. seed
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

    // --- execution ---------------------------------------------------------
    void replay();
    void backward(int root, ParamGrad& grad);

    bool check_finite = true;

  private:
    int push(Node n);
    void compute(std::size_t i);
    void ensure_scalar(int node, const char* what) const;
    double* valp(const Node& n) { return vals_.data() + n.val; }
    const double* valp(const Node& n) const { return vals_.data() + n.val; }
    double* tanp(const Node& n) { return tans_.data() + n.tan; }
    const double* tanp(const Node& n) const { return tans_.data() + n.tan; }
    const double* param(int block) const;

    std::span<const double> params_;
    const Blocks* layout_ = nullptr;
    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> tans_;
    std::vector<double> aux_f_;
    std::vector<int32_t> aux_i_;
    std::vector<double> vbar_;  // reverse-pass value adjoints
    std::vector<double> tbar_;  // reverse-pass tangent adjoints
};

// Exact gradient of the recorded scalar `root` with respect to every
// parameter entry referenced by the tape.
ParamGrad loss_gradient(Tape& tape, int root);

inline double softplus(double x, double beta) {
    const double bx = beta * x;
    if (bx > 30.0) return x + std::log1p(std::exp(-bx)) / beta;
    return std::log1p(std::exp(bx)) / beta;
}
inline double logistic(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace n2n::ad
