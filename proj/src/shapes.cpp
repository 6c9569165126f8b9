#include "n2n/shapes.hpp"

#include <cmath>
#include <numbers>

#include "n2n/errors.hpp"
#include "n2n/rng.hpp"

namespace n2n::shapes {

namespace {
constexpr double CUBE_HALF = 0.8;
constexpr double TORUS_R = 0.7;
constexpr double TORUS_r = 0.3;
}  // namespace

Kind parse_kind(const std::string& name) {
    if (name == "sphere") return Kind::Sphere;
    if (name == "cube") return Kind::Cube;
    if (name == "torus") return Kind::Torus;
    throw ConfigError("unknown shape: " + name + " (want sphere, cube, or torus)");
}

std::string kind_name(Kind kind) {
    switch (kind) {
        case Kind::Sphere: return "sphere";
        case Kind::Cube: return "cube";
        case Kind::Torus: return "torus";
    }
    return "?";
}

PointCloud sample(Kind kind, std::size_t count, uint64_t seed) {
    Rng rng = Rng::fork(seed, 0x5aeed);
    PointCloud out;
    out.reserve(count);
    switch (kind) {
        case Kind::Sphere:
            while (out.size() < count) {
                const Vec3 d{rng.gaussian(), rng.gaussian(), rng.gaussian()};
                const double len = norm(d);
                if (len < 1e-12) continue;
                out.push_back(d / len);
            }
            break;
        case Kind::Cube:
            while (out.size() < count) {
                const int face = static_cast<int>(rng.below(6));
                const int axis = face / 2;
                const double sign = face % 2 ? 1.0 : -1.0;
                Vec3 p{rng.uniform(-CUBE_HALF, CUBE_HALF), rng.uniform(-CUBE_HALF, CUBE_HALF),
                       sign * CUBE_HALF};
                if (axis == 0) p = {p.z, p.x, p.y};
                if (axis == 1) p = {p.x, p.z, p.y};
                out.push_back(p);
            }
            break;
        case Kind::Torus:
            while (out.size() < count) {
                const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
                // Area weight over the tube angle keeps the sampling uniform.
                if (rng.uniform() * (TORUS_R + TORUS_r) > TORUS_R + TORUS_r * std::cos(phi))
                    continue;
                const double ring = TORUS_R + TORUS_r * std::cos(phi);
                out.push_back({ring * std::cos(theta), ring * std::sin(theta),
                               TORUS_r * std::sin(phi)});
            }
            break;
    }
    return out;
}

double sdf(Kind kind, const Vec3& q) {
    switch (kind) {
        case Kind::Sphere: return norm(q) - 1.0;
        case Kind::Cube: {
            const Vec3 d{std::fabs(q.x) - CUBE_HALF, std::fabs(q.y) - CUBE_HALF,
                         std::fabs(q.z) - CUBE_HALF};
            const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
            return norm(outside) + std::min(std::max({d.x, d.y, d.z}), 0.0);
        }
        case Kind::Torus: {
            const double ring = std::sqrt(q.x * q.x + q.y * q.y) - TORUS_R;
            return std::sqrt(ring * ring + q.z * q.z) - TORUS_r;
        }
    }
    return 0.0;
}

}  // namespace n2n::shapes
