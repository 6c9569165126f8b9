#include "n2n/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "n2n/errors.hpp"
#include "n2n/rng.hpp"

namespace n2n::field {

namespace {

using ad::GatherLevel;
using nlohmann::json;

constexpr char MAGIC[8] = {'N', '2', 'N', 'S', 'D', 'F', '1', '\0'};
constexpr uint32_t CHECKPOINT_VERSION = 1;

bool is_pow2(uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct AxisCell {
    int i0;
    double t;
    double dscale;
};

AxisCell axis_cell(double q, int cells) {
    const double qc = std::clamp(q, -1.0, 1.0);
    const double u = (qc + 1.0) * 0.5 * static_cast<double>(cells);
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, 0, cells - 1);
    AxisCell c;
    c.i0 = i0;
    c.t = u - static_cast<double>(i0);
    c.dscale = (q > -1.0 && q < 1.0) ? 0.5 * static_cast<double>(cells) : 0.0;
    return c;
}

uint32_t corner_slot(uint32_t cx, uint32_t cy, uint32_t cz, int cells, bool dense, uint32_t mask) {
    if (dense) {
        const uint32_t side = static_cast<uint32_t>(cells) + 1;
        return cx + side * (cy + side * cz);
    }
    return (cx * 1u ^ cy * 2654435761u ^ cz * 805459861u) & mask;
}

bool level_dense(const HashGridConfig& cfg, int cells) {
    const uint64_t side = static_cast<uint64_t>(cells) + 1;
    return side * side * side <= cfg.table_size;
}

GatherLevel make_level(const HashGridConfig& cfg, int level, const Vec3& q, int block) {
    const int cells = level_resolution(cfg, level);
    const bool dense = level_dense(cfg, cells);
    const uint32_t mask = cfg.table_size - 1;
    const AxisCell ax = axis_cell(q.x, cells);
    const AxisCell ay = axis_cell(q.y, cells);
    const AxisCell az = axis_cell(q.z, cells);
    GatherLevel l;
    l.block = block;
    l.t = {ax.t, ay.t, az.t};
    l.dscale = {ax.dscale, ay.dscale, az.dscale};
    for (int c = 0; c < 8; ++c) {
        const uint32_t cx = static_cast<uint32_t>(ax.i0 + ((c >> 0) & 1));
        const uint32_t cy = static_cast<uint32_t>(ay.i0 + ((c >> 1) & 1));
        const uint32_t cz = static_cast<uint32_t>(az.i0 + ((c >> 2) & 1));
        l.slots[static_cast<std::size_t>(c)] = corner_slot(cx, cy, cz, cells, dense, mask);
    }
    return l;
}

double trilinear_weight(int c, const std::array<double, 3>& t) {
    double w = 1.0;
    for (int a = 0; a < 3; ++a) w *= ((c >> a) & 1) ? t[static_cast<std::size_t>(a)]
                                                    : 1.0 - t[static_cast<std::size_t>(a)];
    return w;
}

void trilinear_weight_grad(int c, const std::array<double, 3>& t,
                           const std::array<double, 3>& dscale, double* gw) {
    for (int a = 0; a < 3; ++a) {
        double g = ((c >> a) & 1) ? 1.0 : -1.0;
        for (int b = 0; b < 3; ++b) {
            if (b == a) continue;
            g *= ((c >> b) & 1) ? t[static_cast<std::size_t>(b)]
                                : 1.0 - t[static_cast<std::size_t>(b)];
        }
        gw[a] = g * dscale[static_cast<std::size_t>(a)];
    }
}

// Blend one level's features; loop order matches the tape kernel so the two
// evaluation paths agree bit-for-bit.
void blend_level(const GatherLevel& l, const double* table, int fdim, double* out, double* out_tan) {
    for (int c = 0; c < 8; ++c) {
        const double w = trilinear_weight(c, l.t);
        const double* feat = table + static_cast<std::size_t>(l.slots[static_cast<std::size_t>(c)]) * fdim;
        double gw[3] = {0, 0, 0};
        if (out_tan) trilinear_weight_grad(c, l.t, l.dscale, gw);
        for (int f = 0; f < fdim; ++f) {
            out[f] += w * feat[f];
            if (out_tan) {
                out_tan[3 * f + 0] += gw[0] * feat[f];
                out_tan[3 * f + 1] += gw[1] * feat[f];
                out_tan[3 * f + 2] += gw[2] * feat[f];
            }
        }
    }
}

ad::Act act_from_name(const std::string& s) {
    if (s == "softplus") return ad::Act::Softplus;
    if (s == "tanh") return ad::Act::Tanh;
    throw ConfigError("unknown activation: " + s);
}

std::string act_name(ad::Act a) { return a == ad::Act::Softplus ? "softplus" : "tanh"; }

FieldParams build_skeleton(const MlpConfig& mlp_cfg, const std::optional<HashGridConfig>& grid_cfg) {
    validate(mlp_cfg);
    if (grid_cfg) validate(*grid_cfg);
    FieldParams p;
    p.mlp = mlp_cfg;
    p.grid = grid_cfg;
    const int in = p.input_dim();
    const int w = mlp_cfg.width;
    const int affines = mlp_cfg.hidden_layers + 1;
    for (int a = 0; a < affines; ++a) {
        const int rows = a == affines - 1 ? 1 : w;
        const int cols = a == 0 ? in : w;
        p.weight_blocks.push_back(p.layout.add(static_cast<std::size_t>(rows),
                                               static_cast<std::size_t>(cols)));
        p.bias_blocks.push_back(p.layout.add(static_cast<std::size_t>(rows), 1));
    }
    if (grid_cfg)
        for (int l = 0; l < grid_cfg->levels; ++l)
            p.table_blocks.push_back(p.layout.add(level_rows(*grid_cfg, l),
                                                  static_cast<std::size_t>(grid_cfg->feature_dim)));
    p.data.assign(p.layout.total, 0.0);
    return p;
}

// Forward evaluation shared by sdf() and sdf_with_gradient(); tangents are
// propagated when `tan` buffers are supplied.
double forward_eval(const FieldParams& p, const Vec3& q, Vec3* grad_out) {
    thread_local std::vector<double> xv, yv, xt, yt;
    const int in_dim = p.input_dim();
    const int w = p.mlp.width;
    const int buf = std::max(in_dim, w);
    xv.assign(static_cast<std::size_t>(buf), 0.0);
    yv.assign(static_cast<std::size_t>(buf), 0.0);
    const bool want_tan = grad_out != nullptr;
    if (want_tan) {
        xt.assign(static_cast<std::size_t>(3 * buf), 0.0);
        yt.assign(static_cast<std::size_t>(3 * buf), 0.0);
    }

    int cur = 3;
    if (p.fast()) {
        const int fdim = p.grid->feature_dim;
        const int feat_total = p.grid->levels * fdim;
        for (int l = 0; l < p.grid->levels; ++l) {
            const GatherLevel gl = make_level(*p.grid, l, q, p.table_blocks[static_cast<std::size_t>(l)]);
            const double* table = p.block(gl.block).data();
            blend_level(gl, table, fdim, xv.data() + l * fdim,
                        want_tan ? xt.data() + 3 * static_cast<std::size_t>(l) * fdim : nullptr);
        }
        xv[static_cast<std::size_t>(feat_total) + 0] = q.x;
        xv[static_cast<std::size_t>(feat_total) + 1] = q.y;
        xv[static_cast<std::size_t>(feat_total) + 2] = q.z;
        if (want_tan)
            for (int k = 0; k < 3; ++k)
                xt[3 * (static_cast<std::size_t>(feat_total) + static_cast<std::size_t>(k)) +
                   static_cast<std::size_t>(k)] = 1.0;
        cur = in_dim;
    } else {
        xv[0] = q.x;
        xv[1] = q.y;
        xv[2] = q.z;
        if (want_tan)
            for (int k = 0; k < 3; ++k) xt[static_cast<std::size_t>(3 * k + k)] = 1.0;
    }

    const int affines = p.mlp.hidden_layers + 1;
    for (int a = 0; a < affines; ++a) {
        const auto& wb = p.layout.blocks[static_cast<std::size_t>(p.weight_blocks[static_cast<std::size_t>(a)])];
        const double* W = p.data.data() + wb.offset;
        const double* b =
            p.data.data() +
            p.layout.blocks[static_cast<std::size_t>(p.bias_blocks[static_cast<std::size_t>(a)])].offset;
        const int out = static_cast<int>(wb.rows);
        if (want_tan) {
            for (int r = 0; r < out; ++r) {
                const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                double a0 = b[r], a1 = 0.0, a2 = 0.0, a3 = 0.0;
                for (int j = 0; j < cur; ++j) {
                    const double wv = row[j];
                    a0 += wv * xv[static_cast<std::size_t>(j)];
                    a1 += wv * xt[static_cast<std::size_t>(3 * j + 0)];
                    a2 += wv * xt[static_cast<std::size_t>(3 * j + 1)];
                    a3 += wv * xt[static_cast<std::size_t>(3 * j + 2)];
                }
                yv[static_cast<std::size_t>(r)] = a0;
                yt[static_cast<std::size_t>(3 * r + 0)] = a1;
                yt[static_cast<std::size_t>(3 * r + 1)] = a2;
                yt[static_cast<std::size_t>(3 * r + 2)] = a3;
            }
        } else {
            for (int r = 0; r < out; ++r) {
                const double* row = W + static_cast<std::size_t>(r) * wb.cols;
                double acc = b[r];
                for (int j = 0; j < cur; ++j) acc += row[j] * xv[static_cast<std::size_t>(j)];
                yv[static_cast<std::size_t>(r)] = acc;
            }
        }
        if (a < affines - 1) {
            for (int r = 0; r < out; ++r) {
                const double x = yv[static_cast<std::size_t>(r)];
                double v = 0.0, d1 = 0.0;
                if (p.mlp.activation == ad::Act::Softplus) {
                    v = ad::softplus(x, p.mlp.activation_beta);
                    d1 = ad::logistic(p.mlp.activation_beta * x);
                } else {
                    v = std::tanh(x);
                    d1 = 1.0 - v * v;
                }
                yv[static_cast<std::size_t>(r)] = v;
                if (want_tan) {
                    yt[static_cast<std::size_t>(3 * r + 0)] *= d1;
                    yt[static_cast<std::size_t>(3 * r + 1)] *= d1;
                    yt[static_cast<std::size_t>(3 * r + 2)] *= d1;
                }
            }
        }
        std::swap(xv, yv);
        if (want_tan) std::swap(xt, yt);
        cur = out;
    }
    if (grad_out) *grad_out = {xt[0], xt[1], xt[2]};
    return xv[0];
}

template <typename T>
void put_raw(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    // Host is assumed little-endian (checked at load time via the magic and a
    // marker); x86-64 and aarch64 both qualify.
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_raw(std::istream& is, const std::string& path) {
    T v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw ParseError(path, -1, static_cast<long>(is.tellg()), "unexpected end of checkpoint");
    return v;
}

}  // namespace

void validate(const MlpConfig& cfg) {
    if (cfg.hidden_layers < 1) throw ConfigError("mlp.hidden_layers must be >= 1");
    if (cfg.width < 4) throw ConfigError("mlp.width must be >= 4");
    if (!(cfg.geometric_init_radius > 0.0 && cfg.geometric_init_radius <= 1.0))
        throw ConfigError("mlp.geometric_init_radius must be in (0, 1]");
    if (cfg.activation == ad::Act::Softplus && cfg.activation_beta <= 0.0)
        throw ConfigError("mlp.activation_beta must be > 0");
}

void validate(const HashGridConfig& cfg) {
    if (cfg.levels < 1) throw ConfigError("grid.levels must be >= 1");
    if (!is_pow2(cfg.table_size)) throw ConfigError("grid.table_size must be a power of two");
    if (cfg.feature_dim < 1) throw ConfigError("grid.feature_dim must be >= 1");
    if (cfg.base_resolution < 1) throw ConfigError("grid.base_resolution must be >= 1");
    if (cfg.finest_resolution < cfg.base_resolution)
        throw ConfigError("grid.finest_resolution must be >= grid.base_resolution");
}

int level_resolution(const HashGridConfig& cfg, int level) {
    if (cfg.levels == 1) return cfg.base_resolution;
    const double b = std::exp((std::log(static_cast<double>(cfg.finest_resolution)) -
                               std::log(static_cast<double>(cfg.base_resolution))) /
                              static_cast<double>(cfg.levels - 1));
    const double n = static_cast<double>(cfg.base_resolution) * std::pow(b, level);
    return static_cast<int>(std::floor(n * (1.0 + 1e-12)));
}

std::size_t level_rows(const HashGridConfig& cfg, int level) {
    const uint64_t side = static_cast<uint64_t>(level_resolution(cfg, level)) + 1;
    const uint64_t dense = side * side * side;
    return static_cast<std::size_t>(std::min<uint64_t>(dense, cfg.table_size));
}

std::vector<ad::GatherLevel> gather_levels(const HashGridConfig& grid, const Vec3& q,
                                           const std::vector<int>& table_blocks) {
    std::vector<ad::GatherLevel> out;
    out.reserve(static_cast<std::size_t>(grid.levels));
    for (int l = 0; l < grid.levels; ++l)
        out.push_back(make_level(grid, l, q,
                                 table_blocks.empty() ? l : table_blocks[static_cast<std::size_t>(l)]));
    return out;
}

std::vector<double> hash_encode(const HashGridConfig& grid, std::span<const double> tables,
                                const Vec3& q) {
    std::size_t total_rows = 0;
    for (int l = 0; l < grid.levels; ++l) total_rows += level_rows(grid, l);
    if (tables.size() != total_rows * static_cast<std::size_t>(grid.feature_dim))
        throw ContractError("hash_encode: table data size does not match grid config");
    std::vector<double> out(static_cast<std::size_t>(grid.levels * grid.feature_dim), 0.0);
    std::size_t offset = 0;
    for (int l = 0; l < grid.levels; ++l) {
        const GatherLevel gl = make_level(grid, l, q, -1);
        blend_level(gl, tables.data() + offset, grid.feature_dim,
                    out.data() + static_cast<std::size_t>(l * grid.feature_dim), nullptr);
        offset += level_rows(grid, l) * static_cast<std::size_t>(grid.feature_dim);
    }
    return out;
}

void quantize_f32(std::vector<double>& data) {
    for (double& v : data) v = as_f32(v);
}

FieldParams init_field(const MlpConfig& mlp_cfg, const std::optional<HashGridConfig>& grid_cfg,
                       uint64_t seed) {
    FieldParams p = build_skeleton(mlp_cfg, grid_cfg);
    Rng rng = Rng::fork(seed, 0);

    // Geometric start: the first layer holds +/- direction pairs on the
    // coordinate part of the input, so each rectified pair sums to ~|u . q|
    // and their average approximates ||q|| (mean of |cos| over the sphere is
    // 1/2). Middle layers are near-identity pass-throughs. A least-squares
    // calibration below absorbs the remaining scale and offset error.
    const int affines = mlp_cfg.hidden_layers + 1;
    const int width = mlp_cfg.width;
    const int pairs = width / 2;
    const double jitter = 0.01 / std::sqrt(static_cast<double>(width));
    for (int a = 0; a < affines; ++a) {
        const auto& wb = p.layout.blocks[static_cast<std::size_t>(p.weight_blocks[static_cast<std::size_t>(a)])];
        double* W = p.data.data() + wb.offset;
        double* b = p.data.data() +
                    p.layout.blocks[static_cast<std::size_t>(p.bias_blocks[static_cast<std::size_t>(a)])].offset;
        if (a == affines - 1) {
            const double c = 2.0 / static_cast<double>(pairs);
            for (std::size_t i = 0; i < wb.size(); ++i)
                W[i] = (i < static_cast<std::size_t>(2 * pairs) ? c : 0.0) +
                       jitter * rng.gaussian();
            b[0] = -mlp_cfg.geometric_init_radius;
        } else if (a == 0) {
            const std::size_t qcol = wb.cols - 3;  // coordinate part of the input
            const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
            for (std::size_t i = 0; i < wb.size(); ++i)
                W[i] = qcol == 0 ? 0.0 : 0.2 * rng.gaussian() / std::sqrt(double(wb.cols));
            for (int i = 0; i < pairs; ++i) {
                const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(pairs);
                const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
                const double th = ga * static_cast<double>(i);
                const Vec3 u{rad * std::cos(th), rad * std::sin(th), z};
                for (int d = 0; d < 3; ++d) {
                    W[static_cast<std::size_t>(2 * i) * wb.cols + qcol + static_cast<std::size_t>(d)] = u[d];
                    W[static_cast<std::size_t>(2 * i + 1) * wb.cols + qcol + static_cast<std::size_t>(d)] = -u[d];
                }
            }
            for (std::size_t i = 0; i < wb.rows; ++i) b[i] = 0.0;
        } else {
            for (std::size_t r = 0; r < wb.rows; ++r)
                for (std::size_t cidx = 0; cidx < wb.cols; ++cidx)
                    W[r * wb.cols + cidx] = (r == cidx ? 1.0 : 0.0) + jitter * rng.gaussian();
            for (std::size_t i = 0; i < wb.rows; ++i) b[i] = 0.0;
        }
    }
    if (grid_cfg)
        for (int l = 0; l < grid_cfg->levels; ++l) {
            const auto& tb =
                p.layout.blocks[static_cast<std::size_t>(p.table_blocks[static_cast<std::size_t>(l)])];
            double* T = p.data.data() + tb.offset;
            for (std::size_t i = 0; i < tb.size(); ++i) T[i] = rng.uniform(-1e-4, 1e-4);
        }
    quantize_f32(p.data);

    // Least-squares fit of output scale and bias against ||q|| - r over seeded
    // probes; tightens the geometric start without changing its shape.
    {
        Rng probe = Rng::fork(seed, 1);
        const int n = 512;
        double sff = 0.0, sf = 0.0, sfy = 0.0, sy = 0.0;
        for (int i = 0; i < n; ++i) {
            Vec3 dir{probe.gaussian(), probe.gaussian(), probe.gaussian()};
            const double len = norm(dir);
            if (len < 1e-12) continue;
            const double radius = std::cbrt(probe.uniform());
            const Vec3 q = dir * (radius / len);
            const double f = forward_eval(p, q, nullptr);
            const double y = norm(q) - mlp_cfg.geometric_init_radius;
            sff += f * f;
            sf += f;
            sfy += f * y;
            sy += y;
        }
        const double det = sff * n - sf * sf;
        if (std::fabs(det) > 1e-9 * (1.0 + sff) * n) {
            const double alpha = (sfy * n - sf * sy) / det;
            const double beta = (sff * sy - sf * sfy) / det;
            const auto& wb =
                p.layout.blocks[static_cast<std::size_t>(p.weight_blocks[static_cast<std::size_t>(affines - 1)])];
            double* W = p.data.data() + wb.offset;
            for (std::size_t i = 0; i < wb.size(); ++i) W[i] *= alpha;
            double* b =
                p.data.data() +
                p.layout
                    .blocks[static_cast<std::size_t>(p.bias_blocks[static_cast<std::size_t>(affines - 1)])]
                    .offset;
            b[0] = alpha * b[0] + beta;
        }
        quantize_f32(p.data);
    }
    return p;
}

double sdf(const FieldParams& params, const Vec3& q) {
    if (!finite(q)) throw ContractError("sdf: non-finite query");
    const double d = forward_eval(params, q, nullptr);
    if (!std::isfinite(d)) throw NumericError("sdf produced non-finite value");
    return d;
}

Vec3 input_gradient(const FieldParams& params, const Vec3& q) {
    if (!finite(q)) throw ContractError("input_gradient: non-finite query");
    Vec3 g;
    const double d = forward_eval(params, q, &g);
    if (!std::isfinite(d) || !finite(g))
        throw NumericError("input_gradient produced non-finite value");
    return g;
}

SdfGrad sdf_with_gradient(const FieldParams& params, const Vec3& q) {
    if (!finite(q)) throw ContractError("sdf_with_gradient: non-finite query");
    SdfGrad r;
    r.d = forward_eval(params, q, &r.grad);
    if (!std::isfinite(r.d) || !finite(r.grad))
        throw NumericError("sdf_with_gradient produced non-finite value");
    return r;
}

int record_sdf(ad::Tape& tape, const FieldParams& params, int input_node) {
    int x = input_node;
    if (params.fast()) {
        const Vec3 q = tape.value3(input_node);
        const auto levels = gather_levels(*params.grid, q, params.table_blocks);
        const int h = tape.hash_gather(input_node, levels, params.grid->feature_dim);
        x = tape.concat(h, input_node);
    }
    const int affines = params.mlp.hidden_layers + 1;
    for (int a = 0; a < affines; ++a) {
        x = tape.affine(x, params.weight_blocks[static_cast<std::size_t>(a)],
                        params.bias_blocks[static_cast<std::size_t>(a)]);
        if (a < affines - 1)
            x = tape.activation(x, params.mlp.activation, params.mlp.activation_beta);
    }
    return x;
}

void save_field(const FieldParams& params, const std::string& path, const OptimState* optim) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open checkpoint for writing: " + path);
    os.write(MAGIC, sizeof(MAGIC));
    put_raw<uint32_t>(os, CHECKPOINT_VERSION);

    json cfg;
    cfg["mlp"] = {{"hidden_layers", params.mlp.hidden_layers},
                  {"width", params.mlp.width},
                  {"activation", act_name(params.mlp.activation)},
                  {"activation_beta", params.mlp.activation_beta},
                  {"geometric_init_radius", params.mlp.geometric_init_radius}};
    if (params.grid)
        cfg["grid"] = {{"levels", params.grid->levels},
                       {"table_size", params.grid->table_size},
                       {"feature_dim", params.grid->feature_dim},
                       {"base_resolution", params.grid->base_resolution},
                       {"finest_resolution", params.grid->finest_resolution}};
    else
        cfg["grid"] = nullptr;
    cfg["frame"] = {{"center", {params.frame_center.x, params.frame_center.y,
                                params.frame_center.z}},
                    {"radius", params.frame_radius}};
    const std::string s = cfg.dump();
    put_raw<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));

    put_raw<uint32_t>(os, static_cast<uint32_t>(params.layout.blocks.size()));
    for (const auto& b : params.layout.blocks) {
        put_raw<uint64_t>(os, b.rows);
        put_raw<uint64_t>(os, b.cols);
    }
    for (double v : params.data) put_raw<float>(os, static_cast<float>(v));

    put_raw<uint8_t>(os, optim ? 1 : 0);
    if (optim) {
        if (optim->m.size() != params.data.size() || optim->v.size() != params.data.size())
            throw ContractError("optimizer state size does not match parameters");
        put_raw<uint64_t>(os, optim->step);
        for (double v : optim->m) put_raw<float>(os, static_cast<float>(v));
        for (double v : optim->v) put_raw<float>(os, static_cast<float>(v));
    }
    if (!os) throw ContractError("checkpoint write failed: " + path);
}

FieldParams load_field(const std::string& path, OptimState* optim) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, MAGIC, 8) != 0)
        throw ParseError(path, -1, 0, "not a field checkpoint (bad magic)");
    const uint32_t version = get_raw<uint32_t>(is, path);
    if (version != CHECKPOINT_VERSION)
        throw ParseError(path, -1, 8, "unsupported checkpoint version " + std::to_string(version));

    const uint32_t json_len = get_raw<uint32_t>(is, path);
    std::string s(json_len, '\0');
    if (!is.read(s.data(), json_len)) throw ParseError(path, -1, 16, "truncated config block");
    json cfg;
    try {
        cfg = json::parse(s);
    } catch (const json::exception& e) {
        throw ParseError(path, -1, 16, std::string("config block: ") + e.what());
    }

    MlpConfig mlp;
    mlp.hidden_layers = cfg.at("mlp").at("hidden_layers").get<int>();
    mlp.width = cfg.at("mlp").at("width").get<int>();
    mlp.activation = act_from_name(cfg.at("mlp").at("activation").get<std::string>());
    mlp.activation_beta = cfg.at("mlp").at("activation_beta").get<double>();
    mlp.geometric_init_radius = cfg.at("mlp").at("geometric_init_radius").get<double>();
    std::optional<HashGridConfig> grid;
    if (!cfg.at("grid").is_null()) {
        HashGridConfig g;
        g.levels = cfg["grid"].at("levels").get<int>();
        g.table_size = cfg["grid"].at("table_size").get<uint32_t>();
        g.feature_dim = cfg["grid"].at("feature_dim").get<int>();
        g.base_resolution = cfg["grid"].at("base_resolution").get<int>();
        g.finest_resolution = cfg["grid"].at("finest_resolution").get<int>();
        grid = g;
    }

    FieldParams p = build_skeleton(mlp, grid);
    if (cfg.contains("frame")) {
        const auto& fr = cfg["frame"];
        p.frame_center = {fr.at("center")[0].get<double>(), fr.at("center")[1].get<double>(),
                          fr.at("center")[2].get<double>()};
        p.frame_radius = fr.at("radius").get<double>();
    }
    const uint32_t nblocks = get_raw<uint32_t>(is, path);
    if (nblocks != p.layout.blocks.size())
        throw ParseError(path, -1, -1, "block table does not match config");
    for (const auto& b : p.layout.blocks) {
        const uint64_t rows = get_raw<uint64_t>(is, path);
        const uint64_t cols = get_raw<uint64_t>(is, path);
        if (rows != b.rows || cols != b.cols)
            throw ParseError(path, -1, -1, "block shape does not match config");
    }
    for (double& v : p.data) v = static_cast<double>(get_raw<float>(is, path));

    const uint8_t has_optim = get_raw<uint8_t>(is, path);
    if (optim) {
        if (has_optim) {
            optim->step = get_raw<uint64_t>(is, path);
            optim->m.resize(p.data.size());
            optim->v.resize(p.data.size());
            for (double& v : optim->m) v = static_cast<double>(get_raw<float>(is, path));
            for (double& v : optim->v) v = static_cast<double>(get_raw<float>(is, path));
        } else {
            optim->step = 0;
            optim->m.assign(p.data.size(), 0.0);
            optim->v.assign(p.data.size(), 0.0);
        }
    }
    return p;
}

}  // namespace n2n::field
