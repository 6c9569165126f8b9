#include "n2n/ad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "n2n/errors.hpp"

namespace n2n::ad {

namespace {

struct ActDeriv {
    double d1;  // sigma'
    double d2;  // sigma''
};

inline double act_value(Act kind, double beta, double x) {
    switch (kind) {
        case Act::Softplus: return softplus(x, beta);
        case Act::Tanh: return std::tanh(x);
    }
    return 0.0;
}

inline ActDeriv act_deriv(Act kind, double beta, double x) {
    switch (kind) {
        case Act::Softplus: {
            const double s = logistic(beta * x);
            return {s, beta * s * (1.0 - s)};
        }
        case Act::Tanh: {
            const double t = std::tanh(x);
            const double d1 = 1.0 - t * t;
            return {d1, -2.0 * t * d1};
        }
    }
    return {0.0, 0.0};
}

// Trilinear corner weight and its position derivative for corner bit pattern c.
inline double corner_weight(int c, const double* t) {
    double w = 1.0;
    for (int a = 0; a < 3; ++a) w *= ((c >> a) & 1) ? t[a] : 1.0 - t[a];
    return w;
}

inline void corner_weight_grad(int c, const double* t, const double* dscale, double* gw) {
    for (int a = 0; a < 3; ++a) {
        double g = ((c >> a) & 1) ? 1.0 : -1.0;
        for (int b = 0; b < 3; ++b) {
            if (b == a) continue;
            g *= ((c >> b) & 1) ? t[b] : 1.0 - t[b];
        }
        gw[a] = g * dscale[a];
    }
}

}  // namespace

void Tape::clear() {
    nodes_.clear();
    vals_.clear();
    tans_.clear();
    aux_f_.clear();
    aux_i_.clear();
}

const double* Tape::param(int block) const {
    return params_.data() + layout_->blocks[static_cast<std::size_t>(block)].offset;
}

void Tape::ensure_scalar(int node, const char* what) const {
    if (node < 0 || node >= static_cast<int>(nodes_.size()) ||
        nodes_[static_cast<std::size_t>(node)].dim != 1)
        throw StructuralError(std::string(what) + ": scalar node required");
}

int Tape::push(Node n) {
    n.val = static_cast<int64_t>(vals_.size());
    vals_.resize(vals_.size() + static_cast<std::size_t>(n.dim), 0.0);
    if (n.has_tan) {
        n.tan = static_cast<int64_t>(tans_.size());
        tans_.resize(tans_.size() + 3 * static_cast<std::size_t>(n.dim), 0.0);
    }
    nodes_.push_back(n);
    const std::size_t i = nodes_.size() - 1;
    compute(i);
    if (check_finite) {
        const Node& m = nodes_[i];
        const double* v = valp(m);
        for (int d = 0; d < m.dim; ++d)
            if (!std::isfinite(v[d])) throw NumericError("non-finite value", static_cast<long>(i));
        if (m.has_tan) {
            const double* t = tanp(m);
            for (int d = 0; d < 3 * m.dim; ++d)
                if (!std::isfinite(t[d]))
                    throw NumericError("non-finite tangent", static_cast<long>(i));
        }
    }
    return static_cast<int>(i);
}

int Tape::input(const DualVec3& q) {
    Node n;
    n.op = Op::Input;
    n.has_tan = true;
    n.dim = 3;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 12;
    aux_f_.insert(aux_f_.end(), {q.value.x, q.value.y, q.value.z});
    for (int d = 0; d < 3; ++d)
        for (int k = 0; k < 3; ++k) aux_f_.push_back(q.tangent[static_cast<std::size_t>(k)][d]);
    return push(n);
}

int Tape::input_plain(const Vec3& q) {
    Node n;
    n.op = Op::Input;
    n.has_tan = false;
    n.dim = 3;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 3;
    aux_f_.insert(aux_f_.end(), {q.x, q.y, q.z});
    return push(n);
}

int Tape::const_vec(std::span<const double> v) {
    Node n;
    n.op = Op::ConstVec;
    n.dim = static_cast<int32_t>(v.size());
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = n.dim;
    aux_f_.insert(aux_f_.end(), v.begin(), v.end());
    return push(n);
}

int Tape::const_vec3(const Vec3& v) {
    const double d[3] = {v.x, v.y, v.z};
    return const_vec({d, 3});
}

int Tape::affine(int x, int wblock, int bblock) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    const auto& wb = layout_->blocks[static_cast<std::size_t>(wblock)];
    if (static_cast<int>(wb.cols) != px.dim)
        throw StructuralError("affine: weight cols do not match input dim");
    Node n;
    n.op = Op::Affine;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = static_cast<int32_t>(wb.rows);
    n.wblock = wblock;
    n.bblock = bblock;
    return push(n);
}

int Tape::activation(int x, Act kind, double beta) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    Node n;
    n.op = Op::Activation;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = px.dim;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 2;
    aux_f_.push_back(static_cast<double>(kind));
    aux_f_.push_back(beta);
    return push(n);
}

int Tape::hash_gather(int x, std::span<const GatherLevel> levels, int feature_dim) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    // The mixed second-order path through in-cell weights is only needed when
    // the position is itself parameter-dependent, which this engine does not
    // support; requiring a leaf keeps the reverse rules exact.
    if (px.op != Op::Input) throw StructuralError("hash_gather: position must be a leaf input");
    Node n;
    n.op = Op::HashGather;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = static_cast<int32_t>(levels.size()) * feature_dim;
    n.naux = static_cast<int32_t>(levels.size());
    n.aux_i = static_cast<int64_t>(aux_i_.size());
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    for (const GatherLevel& l : levels) {
        aux_i_.push_back(l.block);
        for (uint32_t s : l.slots) aux_i_.push_back(static_cast<int32_t>(s));
        for (double t : l.t) aux_f_.push_back(t);
        for (double d : l.dscale) aux_f_.push_back(d);
    }
    return push(n);
}

int Tape::concat(int a, int b) {
    const Node& pa = nodes_[static_cast<std::size_t>(a)];
    const Node& pb = nodes_[static_cast<std::size_t>(b)];
    Node n;
    n.op = Op::Concat;
    n.a = a;
    n.b = b;
    n.has_tan = pa.has_tan || pb.has_tan;
    n.dim = pa.dim + pb.dim;
    return push(n);
}

int Tape::add(int a, int b) {
    const Node& pa = nodes_[static_cast<std::size_t>(a)];
    const Node& pb = nodes_[static_cast<std::size_t>(b)];
    if (pa.dim != pb.dim) throw StructuralError("add: dim mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.has_tan = pa.has_tan || pb.has_tan;
    n.dim = pa.dim;
    return push(n);
}

int Tape::sub(int a, int b) {
    const Node& pa = nodes_[static_cast<std::size_t>(a)];
    const Node& pb = nodes_[static_cast<std::size_t>(b)];
    if (pa.dim != pb.dim) throw StructuralError("sub: dim mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.has_tan = pa.has_tan || pb.has_tan;
    n.dim = pa.dim;
    return push(n);
}

int Tape::scale(int s, int v) {
    ensure_scalar(s, "scale");
    const Node& pv = nodes_[static_cast<std::size_t>(v)];
    Node n;
    n.op = Op::Scale;
    n.a = s;
    n.b = v;
    n.has_tan = nodes_[static_cast<std::size_t>(s)].has_tan || pv.has_tan;
    n.dim = pv.dim;
    return push(n);
}

int Tape::norm(int v) {
    const Node& pv = nodes_[static_cast<std::size_t>(v)];
    Node n;
    n.op = Op::Norm;
    n.a = v;
    n.has_tan = pv.has_tan;
    n.dim = 1;
    return push(n);
}

int Tape::div_scalar(int v, int s) {
    ensure_scalar(s, "div_scalar");
    const Node& pv = nodes_[static_cast<std::size_t>(v)];
    Node n;
    n.op = Op::DivScalar;
    n.a = v;
    n.b = s;
    n.has_tan = pv.has_tan || nodes_[static_cast<std::size_t>(s)].has_tan;
    n.dim = pv.dim;
    return push(n);
}

int Tape::dot(int a, int b) {
    const Node& pa = nodes_[static_cast<std::size_t>(a)];
    const Node& pb = nodes_[static_cast<std::size_t>(b)];
    if (pa.dim != pb.dim) throw StructuralError("dot: dim mismatch");
    Node n;
    n.op = Op::Dot;
    n.a = a;
    n.b = b;
    n.has_tan = pa.has_tan || pb.has_tan;
    n.dim = 1;
    return push(n);
}

int Tape::mul(int a, int b) {
    ensure_scalar(a, "mul");
    ensure_scalar(b, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.has_tan =
        nodes_[static_cast<std::size_t>(a)].has_tan || nodes_[static_cast<std::size_t>(b)].has_tan;
    n.dim = 1;
    return push(n);
}

int Tape::abs(int x) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    Node n;
    n.op = Op::Abs;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = px.dim;
    return push(n);
}

int Tape::add_const(int x, double c) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    Node n;
    n.op = Op::AddConst;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = px.dim;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 1;
    aux_f_.push_back(c);
    return push(n);
}

int Tape::mul_const(int x, double c) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    Node n;
    n.op = Op::MulConst;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = px.dim;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 1;
    aux_f_.push_back(c);
    return push(n);
}

int Tape::hinge(int x, double c) {
    const Node& px = nodes_[static_cast<std::size_t>(x)];
    Node n;
    n.op = Op::Hinge;
    n.a = x;
    n.has_tan = px.has_tan;
    n.dim = px.dim;
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    n.naux = 1;
    aux_f_.push_back(c);
    return push(n);
}

int Tape::grad_of(int x) {
    ensure_scalar(x, "grad_of");
    if (!nodes_[static_cast<std::size_t>(x)].has_tan)
        throw StructuralError("grad_of: node has no recorded tangent (unseeded leaf upstream)");
    Node n;
    n.op = Op::GradOf;
    n.a = x;
    n.has_tan = false;
    n.dim = 3;
    return push(n);
}

int Tape::weighted_sum(std::span<const int> terms, std::span<const double> weights) {
    if (terms.size() != weights.size()) throw StructuralError("weighted_sum: size mismatch");
    Node n;
    n.op = Op::WeightedSum;
    n.dim = 1;
    n.naux = static_cast<int32_t>(terms.size());
    n.aux_i = static_cast<int64_t>(aux_i_.size());
    n.aux_f = static_cast<int64_t>(aux_f_.size());
    for (int t : terms) {
        ensure_scalar(t, "weighted_sum");
        if (nodes_[static_cast<std::size_t>(t)].has_tan) n.has_tan = true;
        aux_i_.push_back(t);
    }
    aux_f_.insert(aux_f_.end(), weights.begin(), weights.end());
    return push(n);
}

double Tape::value(int node) const {
    ensure_scalar(node, "value");
    return vals_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].val)];
}

std::span<const double> Tape::values(int node) const {
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    return {vals_.data() + n.val, static_cast<std::size_t>(n.dim)};
}

Vec3 Tape::value3(int node) const {
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.dim != 3) throw StructuralError("value3: node is not a 3-vector");
    const double* v = valp(n);
    return {v[0], v[1], v[2]};
}

Vec3 Tape::tangent_of_scalar(int node) const {
    ensure_scalar(node, "tangent_of_scalar");
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (!n.has_tan) throw StructuralError("tangent_of_scalar: node has no tangent");
    const double* t = tanp(n);
    return {t[0], t[1], t[2]};
}

void Tape::compute(std::size_t i) {
    Node& n = nodes_[i];
    double* y = valp(n);
    double* yt = n.has_tan ? tanp(n) : nullptr;
    const Node* pa = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
    const Node* pb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;

    switch (n.op) {
        case Op::Input: {
            const double* f = aux_f_.data() + n.aux_f;
            y[0] = f[0];
            y[1] = f[1];
            y[2] = f[2];
            if (yt) std::memcpy(yt, f + 3, 9 * sizeof(double));
            break;
        }
        case Op::ConstVec: {
            std::memcpy(y, aux_f_.data() + n.aux_f, static_cast<std::size_t>(n.dim) * sizeof(double));
            break;
        }
        case Op::Affine: {
            const auto& wb = layout_->blocks[static_cast<std::size_t>(n.wblock)];
            const double* W = param(n.wblock);
            const double* b = param(n.bblock);
            const double* x = valp(*pa);
            const int in = pa->dim;
            if (yt) {
                const double* xt = tanp(*pa);
                for (int r = 0; r < n.dim; ++r) {
                    const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                    double a0 = b[r], a1 = 0.0, a2 = 0.0, a3 = 0.0;
                    for (int j = 0; j < in; ++j) {
                        const double w = row[j];
                        a0 += w * x[j];
                        a1 += w * xt[3 * j + 0];
                        a2 += w * xt[3 * j + 1];
                        a3 += w * xt[3 * j + 2];
                    }
                    y[r] = a0;
                    yt[3 * r + 0] = a1;
                    yt[3 * r + 1] = a2;
                    yt[3 * r + 2] = a3;
                }
            } else {
                for (int r = 0; r < n.dim; ++r) {
                    const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                    double acc = b[r];
                    for (int j = 0; j < in; ++j) acc += row[j] * x[j];
                    y[r] = acc;
                }
            }
            break;
        }
        case Op::Activation: {
            const Act kind = static_cast<Act>(static_cast<int>(aux_f_[static_cast<std::size_t>(n.aux_f)]));
            const double beta = aux_f_[static_cast<std::size_t>(n.aux_f) + 1];
            const double* x = valp(*pa);
            if (yt) {
                const double* xt = tanp(*pa);
                for (int d = 0; d < n.dim; ++d) {
                    y[d] = act_value(kind, beta, x[d]);
                    const double d1 = act_deriv(kind, beta, x[d]).d1;
                    yt[3 * d + 0] = d1 * xt[3 * d + 0];
                    yt[3 * d + 1] = d1 * xt[3 * d + 1];
                    yt[3 * d + 2] = d1 * xt[3 * d + 2];
                }
            } else {
                for (int d = 0; d < n.dim; ++d) y[d] = act_value(kind, beta, x[d]);
            }
            break;
        }
        case Op::HashGather: {
            const double* x_unused = valp(*pa);
            (void)x_unused;
            const double* xt = pa->has_tan ? tanp(*pa) : nullptr;
            std::fill(y, y + n.dim, 0.0);
            if (yt) std::fill(yt, yt + 3 * n.dim, 0.0);
            const int levels = n.naux;
            const int fdim = n.dim / levels;
            for (int l = 0; l < levels; ++l) {
                const int32_t* li = aux_i_.data() + n.aux_i + 9 * l;
                const double* lf = aux_f_.data() + n.aux_f + 6 * l;
                const double* table = param(li[0]);
                double* yl = y + l * fdim;
                double* ytl = yt ? yt + 3 * static_cast<std::size_t>(l) * fdim : nullptr;
                for (int c = 0; c < 8; ++c) {
                    const double w = corner_weight(c, lf);
                    const double* feat = table + static_cast<std::size_t>(li[1 + c]) * fdim;
                    double coef[3] = {0, 0, 0};
                    if (ytl) {
                        double gw[3];
                        corner_weight_grad(c, lf, lf + 3, gw);
                        for (int k = 0; k < 3; ++k)
                            coef[k] = gw[0] * xt[0 + k] + gw[1] * xt[3 + k] + gw[2] * xt[6 + k];
                    }
                    for (int f = 0; f < fdim; ++f) {
                        yl[f] += w * feat[f];
                        if (ytl) {
                            ytl[3 * f + 0] += coef[0] * feat[f];
                            ytl[3 * f + 1] += coef[1] * feat[f];
                            ytl[3 * f + 2] += coef[2] * feat[f];
                        }
                    }
                }
            }
            break;
        }
        case Op::Concat: {
            const double* a = valp(*pa);
            const double* b = valp(*pb);
            std::memcpy(y, a, static_cast<std::size_t>(pa->dim) * sizeof(double));
            std::memcpy(y + pa->dim, b, static_cast<std::size_t>(pb->dim) * sizeof(double));
            if (yt) {
                if (pa->has_tan)
                    std::memcpy(yt, tanp(*pa), 3 * static_cast<std::size_t>(pa->dim) * sizeof(double));
                else
                    std::fill(yt, yt + 3 * pa->dim, 0.0);
                if (pb->has_tan)
                    std::memcpy(yt + 3 * pa->dim, tanp(*pb),
                                3 * static_cast<std::size_t>(pb->dim) * sizeof(double));
                else
                    std::fill(yt + 3 * pa->dim, yt + 3 * n.dim, 0.0);
            }
            break;
        }
        case Op::Add:
        case Op::Sub: {
            const double sgn = n.op == Op::Add ? 1.0 : -1.0;
            const double* a = valp(*pa);
            const double* b = valp(*pb);
            for (int d = 0; d < n.dim; ++d) y[d] = a[d] + sgn * b[d];
            if (yt) {
                for (int d = 0; d < 3 * n.dim; ++d) {
                    const double at = pa->has_tan ? tanp(*pa)[d] : 0.0;
                    const double bt = pb->has_tan ? tanp(*pb)[d] : 0.0;
                    yt[d] = at + sgn * bt;
                }
            }
            break;
        }
        case Op::Scale: {
            const double s = valp(*pa)[0];
            const double* v = valp(*pb);
            for (int d = 0; d < n.dim; ++d) y[d] = s * v[d];
            if (yt) {
                const double* st = pa->has_tan ? tanp(*pa) : nullptr;
                const double* vt = pb->has_tan ? tanp(*pb) : nullptr;
                for (int d = 0; d < n.dim; ++d)
                    for (int k = 0; k < 3; ++k) {
                        double t = 0.0;
                        if (st) t += st[k] * v[d];
                        if (vt) t += s * vt[3 * d + k];
                        yt[3 * d + k] = t;
                    }
            }
            break;
        }
        case Op::Norm: {
            const double* v = valp(*pa);
            double acc = 0.0;
            for (int d = 0; d < pa->dim; ++d) acc += v[d] * v[d];
            const double r = std::sqrt(acc);
            y[0] = r;
            if (yt) {
                const double* vt = tanp(*pa);
                for (int k = 0; k < 3; ++k) {
                    double t = 0.0;
                    if (r > 0.0) {
                        for (int d = 0; d < pa->dim; ++d) t += v[d] * vt[3 * d + k];
                        t /= r;
                    }
                    yt[k] = t;
                }
            }
            break;
        }
        case Op::DivScalar: {
            const double* v = valp(*pa);
            const double s = valp(*pb)[0];
            for (int d = 0; d < n.dim; ++d) y[d] = v[d] / s;
            if (yt) {
                const double* vt = pa->has_tan ? tanp(*pa) : nullptr;
                const double* st = pb->has_tan ? tanp(*pb) : nullptr;
                for (int d = 0; d < n.dim; ++d)
                    for (int k = 0; k < 3; ++k) {
                        double t = 0.0;
                        if (vt) t += vt[3 * d + k] / s;
                        if (st) t -= v[d] * st[k] / (s * s);
                        yt[3 * d + k] = t;
                    }
            }
            break;
        }
        case Op::Dot: {
            const double* a = valp(*pa);
            const double* b = valp(*pb);
            double acc = 0.0;
            for (int d = 0; d < pa->dim; ++d) acc += a[d] * b[d];
            y[0] = acc;
            if (yt) {
                const double* at = pa->has_tan ? tanp(*pa) : nullptr;
                const double* bt = pb->has_tan ? tanp(*pb) : nullptr;
                for (int k = 0; k < 3; ++k) {
                    double t = 0.0;
                    for (int d = 0; d < pa->dim; ++d) {
                        if (at) t += at[3 * d + k] * b[d];
                        if (bt) t += a[d] * bt[3 * d + k];
                    }
                    yt[k] = t;
                }
            }
            break;
        }
        case Op::Mul: {
            const double a = valp(*pa)[0];
            const double b = valp(*pb)[0];
            y[0] = a * b;
            if (yt) {
                const double* at = pa->has_tan ? tanp(*pa) : nullptr;
                const double* bt = pb->has_tan ? tanp(*pb) : nullptr;
                for (int k = 0; k < 3; ++k)
                    yt[k] = (at ? at[k] * b : 0.0) + (bt ? a * bt[k] : 0.0);
            }
            break;
        }
        case Op::Abs: {
            const double* x = valp(*pa);
            for (int d = 0; d < n.dim; ++d) y[d] = std::fabs(x[d]);
            if (yt) {
                const double* xt = tanp(*pa);
                for (int d = 0; d < n.dim; ++d) {
                    const double s = x[d] > 0.0 ? 1.0 : (x[d] < 0.0 ? -1.0 : 0.0);
                    yt[3 * d + 0] = s * xt[3 * d + 0];
                    yt[3 * d + 1] = s * xt[3 * d + 1];
                    yt[3 * d + 2] = s * xt[3 * d + 2];
                }
            }
            break;
        }
        case Op::AddConst:
        case Op::MulConst: {
            const double c = aux_f_[static_cast<std::size_t>(n.aux_f)];
            const double* x = valp(*pa);
            if (n.op == Op::AddConst)
                for (int d = 0; d < n.dim; ++d) y[d] = x[d] + c;
            else
                for (int d = 0; d < n.dim; ++d) y[d] = c * x[d];
            if (yt) {
                const double* xt = tanp(*pa);
                const double f = n.op == Op::AddConst ? 1.0 : c;
                for (int d = 0; d < 3 * n.dim; ++d) yt[d] = f * xt[d];
            }
            break;
        }
        case Op::Hinge: {
            const double c = aux_f_[static_cast<std::size_t>(n.aux_f)];
            const double* x = valp(*pa);
            for (int d = 0; d < n.dim; ++d) y[d] = x[d] > c ? x[d] - c : 0.0;
            if (yt) {
                const double* xt = tanp(*pa);
                for (int d = 0; d < n.dim; ++d) {
                    const double f = x[d] > c ? 1.0 : 0.0;
                    yt[3 * d + 0] = f * xt[3 * d + 0];
                    yt[3 * d + 1] = f * xt[3 * d + 1];
                    yt[3 * d + 2] = f * xt[3 * d + 2];
                }
            }
            break;
        }
        case Op::GradOf: {
            const double* at = tanp(*pa);
            y[0] = at[0];
            y[1] = at[1];
            y[2] = at[2];
            break;
        }
        case Op::WeightedSum: {
            const int32_t* terms = aux_i_.data() + n.aux_i;
            const double* w = aux_f_.data() + n.aux_f;
            double acc = 0.0;
            double tacc[3] = {0, 0, 0};
            for (int t = 0; t < n.naux; ++t) {
                const Node& pt = nodes_[static_cast<std::size_t>(terms[t])];
                acc += w[t] * valp(pt)[0];
                if (yt && pt.has_tan) {
                    const double* tt = tanp(pt);
                    tacc[0] += w[t] * tt[0];
                    tacc[1] += w[t] * tt[1];
                    tacc[2] += w[t] * tt[2];
                }
            }
            y[0] = acc;
            if (yt) {
                yt[0] = tacc[0];
                yt[1] = tacc[1];
                yt[2] = tacc[2];
            }
            break;
        }
    }
}

void Tape::replay() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) compute(i);
}

void Tape::backward(int root, ParamGrad& grad) {
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
        throw StructuralError("backward: root out of range");
    const Node& rn = nodes_[static_cast<std::size_t>(root)];
    if (rn.dim != 1) throw StructuralError("backward: root must be scalar");
    if (!layout_) throw StructuralError("backward: no parameter layout bound");
    if (grad.g.size() != layout_->total) grad.g.assign(layout_->total, 0.0);

    vbar_.assign(vals_.size(), 0.0);
    tbar_.assign(tans_.size(), 0.0);
    vbar_[static_cast<std::size_t>(rn.val)] = 1.0;

    for (int i = root; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        const double* yb = vbar_.data() + n.val;
        const double* ytb = n.has_tan ? tbar_.data() + n.tan : nullptr;
        Node* pa = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
        Node* pb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
        double* ab = pa ? vbar_.data() + pa->val : nullptr;
        double* bb = pb ? vbar_.data() + pb->val : nullptr;
        double* atb = (pa && pa->has_tan) ? tbar_.data() + pa->tan : nullptr;
        double* btb = (pb && pb->has_tan) ? tbar_.data() + pb->tan : nullptr;

        switch (n.op) {
            case Op::Input:
            case Op::ConstVec:
                break;
            case Op::Affine: {
                const auto& wb = layout_->blocks[static_cast<std::size_t>(n.wblock)];
                const double* W = param(n.wblock);
                const double* x = valp(*pa);
                double* gw = grad.g.data() + wb.offset;
                double* gb = grad.g.data() + layout_->blocks[static_cast<std::size_t>(n.bblock)].offset;
                const int in = pa->dim;
                if (n.has_tan && pa->has_tan) {
                    const double* xt = tanp(*pa);
                    for (int r = 0; r < n.dim; ++r) {
                        const double y0 = yb[r];
                        const double t0 = ytb[3 * r + 0], t1 = ytb[3 * r + 1], t2 = ytb[3 * r + 2];
                        gb[r] += y0;
                        const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                        double* grow = gw + static_cast<std::size_t>(r) * wb.cols;
                        for (int j = 0; j < in; ++j) {
                            grow[j] += y0 * x[j] + t0 * xt[3 * j + 0] + t1 * xt[3 * j + 1] +
                                       t2 * xt[3 * j + 2];
                            const double w = row[j];
                            ab[j] += w * y0;
                            atb[3 * j + 0] += w * t0;
                            atb[3 * j + 1] += w * t1;
                            atb[3 * j + 2] += w * t2;
                        }
                    }
                } else {
                    for (int r = 0; r < n.dim; ++r) {
                        const double y0 = yb[r];
                        gb[r] += y0;
                        const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                        double* grow = gw + static_cast<std::size_t>(r) * wb.cols;
                        for (int j = 0; j < in; ++j) {
                            grow[j] += y0 * x[j];
                            ab[j] += row[j] * y0;
                        }
                    }
                }
                break;
            }
            case Op::Activation: {
                const Act kind =
                    static_cast<Act>(static_cast<int>(aux_f_[static_cast<std::size_t>(n.aux_f)]));
                const double beta = aux_f_[static_cast<std::size_t>(n.aux_f) + 1];
                const double* x = valp(*pa);
                if (n.has_tan && pa->has_tan) {
                    const double* xt = tanp(*pa);
                    for (int d = 0; d < n.dim; ++d) {
                        const ActDeriv ad = act_deriv(kind, beta, x[d]);
                        double mixed = 0.0;
                        for (int k = 0; k < 3; ++k) {
                            mixed += xt[3 * d + k] * ytb[3 * d + k];
                            atb[3 * d + k] += ad.d1 * ytb[3 * d + k];
                        }
                        ab[d] += ad.d1 * yb[d] + ad.d2 * mixed;
                    }
                } else {
                    for (int d = 0; d < n.dim; ++d)
                        ab[d] += act_deriv(kind, beta, x[d]).d1 * yb[d];
                }
                break;
            }
            case Op::HashGather: {
                const int levels = n.naux;
                const int fdim = n.dim / levels;
                const double* xt = pa->has_tan ? tanp(*pa) : nullptr;
                for (int l = 0; l < levels; ++l) {
                    const int32_t* li = aux_i_.data() + n.aux_i + 9 * l;
                    const double* lf = aux_f_.data() + n.aux_f + 6 * l;
                    double* gt = grad.g.data() + layout_->blocks[static_cast<std::size_t>(li[0])].offset;
                    const double* ybl = yb + l * fdim;
                    const double* ytbl = ytb ? ytb + 3 * static_cast<std::size_t>(l) * fdim : nullptr;
                    for (int c = 0; c < 8; ++c) {
                        const double w = corner_weight(c, lf);
                        double coef[3] = {0, 0, 0};
                        if (ytbl && xt) {
                            double gwv[3];
                            corner_weight_grad(c, lf, lf + 3, gwv);
                            for (int k = 0; k < 3; ++k)
                                coef[k] = gwv[0] * xt[0 + k] + gwv[1] * xt[3 + k] + gwv[2] * xt[6 + k];
                        }
                        double* slot = gt + static_cast<std::size_t>(li[1 + c]) * fdim;
                        for (int f = 0; f < fdim; ++f) {
                            double acc = w * ybl[f];
                            if (ytbl)
                                acc += coef[0] * ytbl[3 * f + 0] + coef[1] * ytbl[3 * f + 1] +
                                       coef[2] * ytbl[3 * f + 2];
                            slot[f] += acc;
                        }
                    }
                }
                break;
            }
            case Op::Concat: {
                for (int d = 0; d < pa->dim; ++d) ab[d] += yb[d];
                for (int d = 0; d < pb->dim; ++d) bb[d] += yb[d + pa->dim];
                if (ytb) {
                    if (atb)
                        for (int d = 0; d < 3 * pa->dim; ++d) atb[d] += ytb[d];
                    if (btb)
                        for (int d = 0; d < 3 * pb->dim; ++d) btb[d] += ytb[d + 3 * pa->dim];
                }
                break;
            }
            case Op::Add:
            case Op::Sub: {
                const double sgn = n.op == Op::Add ? 1.0 : -1.0;
                for (int d = 0; d < n.dim; ++d) {
                    ab[d] += yb[d];
                    bb[d] += sgn * yb[d];
                }
                if (ytb) {
                    if (atb)
                        for (int d = 0; d < 3 * n.dim; ++d) atb[d] += ytb[d];
                    if (btb)
                        for (int d = 0; d < 3 * n.dim; ++d) btb[d] += sgn * ytb[d];
                }
                break;
            }
            case Op::Scale: {
                const double s = valp(*pa)[0];
                const double* v = valp(*pb);
                const double* st = pa->has_tan ? tanp(*pa) : nullptr;
                const double* vt = pb->has_tan ? tanp(*pb) : nullptr;
                double sb = 0.0;
                for (int d = 0; d < n.dim; ++d) {
                    sb += v[d] * yb[d];
                    bb[d] += s * yb[d];
                }
                if (ytb) {
                    for (int d = 0; d < n.dim; ++d)
                        for (int k = 0; k < 3; ++k) {
                            const double t = ytb[3 * d + k];
                            if (vt) sb += vt[3 * d + k] * t;
                            if (st) bb[d] += st[k] * t;
                            if (atb) atb[k] += v[d] * t;
                            if (btb) btb[3 * d + k] += s * t;
                        }
                }
                ab[0] += sb;
                break;
            }
            case Op::Norm: {
                const double r = valp(n)[0];
                if (r == 0.0) break;
                const double* v = valp(*pa);
                const double rb = yb[0];
                for (int d = 0; d < pa->dim; ++d) ab[d] += rb * v[d] / r;
                if (ytb && pa->has_tan) {
                    const double* vt = tanp(*pa);
                    for (int k = 0; k < 3; ++k) {
                        const double tk = ytb[k];
                        if (tk == 0.0) continue;
                        double uv = 0.0;
                        for (int d = 0; d < pa->dim; ++d) uv += v[d] * vt[3 * d + k];
                        uv /= r;  // u . v_dot
                        for (int d = 0; d < pa->dim; ++d) {
                            const double u = v[d] / r;
                            ab[d] += tk * (vt[3 * d + k] - uv * u) / r;
                            atb[3 * d + k] += tk * u;
                        }
                    }
                }
                break;
            }
            case Op::DivScalar: {
                const double* v = valp(*pa);
                const double s = valp(*pb)[0];
                const double* vt = pa->has_tan ? tanp(*pa) : nullptr;
                const double* st = pb->has_tan ? tanp(*pb) : nullptr;
                double sb = 0.0;
                for (int d = 0; d < n.dim; ++d) {
                    ab[d] += yb[d] / s;
                    sb -= v[d] * yb[d] / (s * s);
                }
                if (ytb) {
                    for (int d = 0; d < n.dim; ++d)
                        for (int k = 0; k < 3; ++k) {
                            const double t = ytb[3 * d + k];
                            if (t == 0.0) continue;
                            if (atb) atb[3 * d + k] += t / s;
                            if (st) ab[d] -= st[k] * t / (s * s);
                            if (vt) sb -= vt[3 * d + k] * t / (s * s);
                            if (st) sb += 2.0 * st[k] * v[d] * t / (s * s * s);
                            if (btb) btb[k] -= v[d] * t / (s * s);
                        }
                }
                bb[0] += sb;
                break;
            }
            case Op::Dot: {
                const double* a = valp(*pa);
                const double* b = valp(*pb);
                const double* at = pa->has_tan ? tanp(*pa) : nullptr;
                const double* bt = pb->has_tan ? tanp(*pb) : nullptr;
                const double y0 = yb[0];
                for (int d = 0; d < pa->dim; ++d) {
                    ab[d] += y0 * b[d];
                    bb[d] += y0 * a[d];
                }
                if (ytb) {
                    for (int k = 0; k < 3; ++k) {
                        const double t = ytb[k];
                        if (t == 0.0) continue;
                        for (int d = 0; d < pa->dim; ++d) {
                            if (bt) ab[d] += t * bt[3 * d + k];
                            if (at) bb[d] += t * at[3 * d + k];
                            if (atb) atb[3 * d + k] += t * b[d];
                            if (btb) btb[3 * d + k] += t * a[d];
                        }
                    }
                }
                break;
            }
            case Op::Mul: {
                const double a = valp(*pa)[0];
                const double b = valp(*pb)[0];
                const double* at = pa->has_tan ? tanp(*pa) : nullptr;
                const double* bt = pb->has_tan ? tanp(*pb) : nullptr;
                ab[0] += yb[0] * b;
                bb[0] += yb[0] * a;
                if (ytb) {
                    for (int k = 0; k < 3; ++k) {
                        const double t = ytb[k];
                        if (t == 0.0) continue;
                        if (bt) ab[0] += t * bt[k];
                        if (at) bb[0] += t * at[k];
                        if (atb) atb[k] += t * b;
                        if (btb) btb[k] += t * a;
                    }
                }
                break;
            }
            case Op::Abs: {
                const double* x = valp(*pa);
                for (int d = 0; d < n.dim; ++d) {
                    const double s = x[d] > 0.0 ? 1.0 : (x[d] < 0.0 ? -1.0 : 0.0);
                    ab[d] += s * yb[d];
                    if (ytb && atb)
                        for (int k = 0; k < 3; ++k) atb[3 * d + k] += s * ytb[3 * d + k];
                }
                break;
            }
            case Op::AddConst: {
                for (int d = 0; d < n.dim; ++d) ab[d] += yb[d];
                if (ytb && atb)
                    for (int d = 0; d < 3 * n.dim; ++d) atb[d] += ytb[d];
                break;
            }
            case Op::MulConst: {
                const double c = aux_f_[static_cast<std::size_t>(n.aux_f)];
                for (int d = 0; d < n.dim; ++d) ab[d] += c * yb[d];
                if (ytb && atb)
                    for (int d = 0; d < 3 * n.dim; ++d) atb[d] += c * ytb[d];
                break;
            }
            case Op::Hinge: {
                const double c = aux_f_[static_cast<std::size_t>(n.aux_f)];
                const double* x = valp(*pa);
                for (int d = 0; d < n.dim; ++d) {
                    const double f = x[d] > c ? 1.0 : 0.0;
                    ab[d] += f * yb[d];
                    if (ytb && atb)
                        for (int k = 0; k < 3; ++k) atb[3 * d + k] += f * ytb[3 * d + k];
                }
                break;
            }
            case Op::GradOf: {
                atb[0] += yb[0];
                atb[1] += yb[1];
                atb[2] += yb[2];
                break;
            }
            case Op::WeightedSum: {
                const int32_t* terms = aux_i_.data() + n.aux_i;
                const double* w = aux_f_.data() + n.aux_f;
                for (int t = 0; t < n.naux; ++t) {
                    const Node& pt = nodes_[static_cast<std::size_t>(terms[t])];
                    vbar_[static_cast<std::size_t>(pt.val)] += w[t] * yb[0];
                    if (ytb && pt.has_tan) {
                        double* ttb = tbar_.data() + pt.tan;
                        ttb[0] += w[t] * ytb[0];
                        ttb[1] += w[t] * ytb[1];
                        ttb[2] += w[t] * ytb[2];
                    }
                }
                break;
            }
        }
    }
}

ParamGrad loss_gradient(Tape& tape, int root) {
    ParamGrad grad;
    tape.backward(root, grad);
    return grad;
}

}  // namespace n2n::ad
