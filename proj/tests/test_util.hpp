#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "n2n/field.hpp"
#include "n2n/rng.hpp"
#include "n2n/vec3.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

inline double rel_err(const n2n::Vec3& a, const n2n::Vec3& b) {
    return n2n::norm(a - b) / std::max(n2n::norm(b), 1e-8);
}

// Central finite difference of a scalar function of one parameter vector.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> params, double h) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = f(params);
        params[i] = saved - h;
        const double dn = f(params);
        params[i] = saved;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline n2n::Vec3 random_unit_cube_point(n2n::Rng& rng) {
    return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
}

// Small random MLP configuration for gradient-check sweeps.
inline n2n::field::MlpConfig random_tiny_mlp(n2n::Rng& rng) {
    n2n::field::MlpConfig cfg;
    cfg.hidden_layers = 1 + static_cast<int>(rng.below(3));
    cfg.width = 4 + static_cast<int>(rng.below(13));
    cfg.activation = rng.below(2) ? n2n::ad::Act::Tanh : n2n::ad::Act::Softplus;
    cfg.activation_beta = 100.0;
    cfg.geometric_init_radius = 0.5;
    return cfg;
}

// Width-4 single-hidden-layer net computing exactly scale * (n . q - c):
// softplus(x) - softplus(-x) == x, so a +/- unit pair reproduces the plane
// SDF to machine precision.
inline n2n::field::FieldParams make_plane_params(const n2n::Vec3& normal, double offset,
                                                 double scale = 1.0) {
    using namespace n2n;
    field::MlpConfig cfg;
    cfg.hidden_layers = 1;
    cfg.width = 4;
    cfg.activation = ad::Act::Softplus;
    cfg.activation_beta = 100.0;
    auto p = field::init_field(cfg, std::nullopt, 0);
    std::fill(p.data.begin(), p.data.end(), 0.0);
    auto block = [&](int b) {
        return p.data.data() + p.layout.blocks[static_cast<std::size_t>(b)].offset;
    };
    double* w0 = block(p.weight_blocks[0]);
    double* b0 = block(p.bias_blocks[0]);
    for (int d = 0; d < 3; ++d) {
        w0[d] = normal[d];
        w0[3 + d] = -normal[d];
    }
    b0[0] = -offset;
    b0[1] = offset;
    double* w1 = block(p.weight_blocks[1]);
    w1[0] = scale;
    w1[1] = -scale;
    return p;
}

// Supervised regression of a field onto an analytic target; a test-only
// optimizer used to manufacture fields close to exact SDFs.
inline void regress_field(n2n::field::FieldParams& p,
                          const std::function<double(const n2n::Vec3&)>& target, int steps,
                          int batch, double lr, uint64_t seed,
                          const std::function<n2n::Vec3(const n2n::Vec3&)>& grad_target = {}) {
    using namespace n2n;
    std::vector<double> m(p.data.size(), 0.0), v(p.data.size(), 0.0);
    Rng rng(seed);
    for (int t = 1; t <= steps; ++t) {
        ad::Tape tape({p.data.data(), p.data.size()}, &p.layout);
        std::vector<int> terms;
        std::vector<double> w;
        for (int b = 0; b < batch; ++b) {
            Vec3 dir{rng.gaussian(), rng.gaussian(), rng.gaussian()};
            const double len = norm(dir);
            if (len < 1e-9) continue;
            const Vec3 q = dir * (1.4 * std::cbrt(rng.uniform()) / len);
            const int in = grad_target ? tape.input(ad::DualVec3::seeded(q)) : tape.input_plain(q);
            const int f = field::record_sdf(tape, p, in);
            const int diff = tape.add_const(f, -target(q));
            terms.push_back(tape.mul(diff, diff));
            w.push_back(1.0 / batch);
            if (grad_target) {
                const int gdiff = tape.sub(tape.grad_of(f), tape.const_vec3(grad_target(q)));
                terms.push_back(tape.dot(gdiff, gdiff));
                w.push_back(2.0 / batch);
            }
        }
        const auto grad = ad::loss_gradient(tape, tape.weighted_sum(terms, w));
        const double b1c = 1.0 - std::pow(0.9, t);
        const double b2c = 1.0 - std::pow(0.999, t);
        const double lr_t = lr * (1.0 - static_cast<double>(t - 1) / steps);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m[i] = 0.9 * m[i] + 0.1 * grad.g[i];
            v[i] = 0.999 * v[i] + 0.001 * grad.g[i] * grad.g[i];
            p.data[i] -= lr_t * (m[i] / b1c) / (std::sqrt(v[i] / b2c) + 1e-8);
        }
    }
}

// Uniformly sampled points on a sphere surface.
inline n2n::PointCloud sphere_cloud(std::size_t n, double radius, uint64_t seed) {
    n2n::Rng rng(seed);
    n2n::PointCloud out;
    out.reserve(n);
    while (out.size() < n) {
        n2n::Vec3 d{rng.gaussian(), rng.gaussian(), rng.gaussian()};
        const double len = n2n::norm(d);
        if (len < 1e-9) continue;
        out.push_back(d * (radius / len));
    }
    return out;
}

}  // namespace testutil
