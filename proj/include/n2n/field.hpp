#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "n2n/ad.hpp"
#include "n2n/vec3.hpp"

namespace n2n::field {

struct MlpConfig {
    int hidden_layers = 8;
    int width = 256;
    ad::Act activation = ad::Act::Softplus;
    double activation_beta = 100.0;       // softplus sharpness
    double geometric_init_radius = 0.5;   // unit-frame radius of the initial zero set
};

struct HashGridConfig {
    int levels = 14;
    uint32_t table_size = 1u << 19;  // entries per level, power of two
    int feature_dim = 2;
    int base_resolution = 16;
    int finest_resolution = 2048;
};

void validate(const MlpConfig& cfg);
void validate(const HashGridConfig& cfg);

// Cells per axis at level l (geometric progression base..finest).
int level_resolution(const HashGridConfig& cfg, int level);
// Rows actually stored for a level: the dense corner lattice when it fits
// in the table, the hashed table otherwise.
std::size_t level_rows(const HashGridConfig& cfg, int level);

// All learnable state: MLP weights/biases plus optional per-level hash
// tables, stored flat in block-layout order (layers first, tables after).
// Values are kept exactly float32-representable so checkpoints round-trip
// bit-exactly.
struct FieldParams {
    MlpConfig mlp;
    std::optional<HashGridConfig> grid;
    std::vector<double> data;
    ad::Blocks layout;
    std::vector<int> weight_blocks;  // per affine layer
    std::vector<int> bias_blocks;
    std::vector<int> table_blocks;   // per hash level (fast mode only)
    // Similarity transform from world coordinates into the unit working frame
    // the field was trained in; stored with the checkpoint.
    Vec3 frame_center{0, 0, 0};
    double frame_radius = 1.0;

    bool fast() const { return grid.has_value(); }
    std::size_t size() const { return data.size(); }
    int input_dim() const {
        return grid ? grid->levels * grid->feature_dim + 3 : 3;
    }
    std::span<const double> block(int b) const {
        const auto& bl = layout.blocks[static_cast<std::size_t>(b)];
        return {data.data() + bl.offset, bl.size()};
    }
};

// Deterministic initialization: geometric (f ~= ||q|| - r) in mlp mode via a
// seeded least-squares calibration of the output layer; hash features drawn
// uniform in [-1e-4, 1e-4] in fast mode.
FieldParams init_field(const MlpConfig& mlp_cfg, const std::optional<HashGridConfig>& grid_cfg,
                       uint64_t seed);

// Signed distance d = f_theta(q).
double sdf(const FieldParams& params, const Vec3& q);

// Gradient of the field with respect to the query position, computed by
// forward-mode propagation through the same evaluation path.
Vec3 input_gradient(const FieldParams& params, const Vec3& q);

struct SdfGrad {
    double d;
    Vec3 grad;
};
SdfGrad sdf_with_gradient(const FieldParams& params, const Vec3& q);

// Multi-level trilinear hash encoding of q; `tables` is the concatenation of
// the per-level feature tables (level_rows(l) * feature_dim doubles each).
std::vector<double> hash_encode(const HashGridConfig& grid, std::span<const double> tables,
                                const Vec3& q);

// Gather payload for the tape/plain evaluators.
std::vector<ad::GatherLevel> gather_levels(const HashGridConfig& grid, const Vec3& q,
                                           const std::vector<int>& table_blocks);

// Records a full field evaluation on the tape; returns the scalar output node.
// `input_node` must be a (possibly seeded) tape input.
int record_sdf(ad::Tape& tape, const FieldParams& params, int input_node);

// Checkpoint I/O. Versioned binary blob: magic, config block, little-endian
// float32 parameter arrays. The optional optimizer section makes training
// checkpoints resumable.
struct OptimState {
    std::vector<double> m, v;
    uint64_t step = 0;
};
void save_field(const FieldParams& params, const std::string& path,
                const OptimState* optim = nullptr);
FieldParams load_field(const std::string& path, OptimState* optim = nullptr);

// Rounds every entry to the nearest float32 value (identity for values that
// are already float32-exact).
void quantize_f32(std::vector<double>& data);

}  // namespace n2n::field
