#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "n2n/field.hpp"
#include "n2n/objective.hpp"
#include "n2n/sampling.hpp"
#include "n2n/vec3.hpp"

namespace n2n::training {

struct TrainConfig {
    objective::Mode mode = objective::Mode::Mlp;
    int64_t iterations = 100000;  // desk-scale default; fast mode uses 10000
    std::size_t batch = 250;
    double lr = 1e-3;
    double lr_tables = 1e-2;  // hash-feature learning rate (fast mode)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double lr_decay = 0.0;  // 0 = constant, 1 = linear to zero
    objective::LossWeights weights;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;       // 0 = no scheduled checkpoints
    std::string checkpoint_prefix;      // "<prefix>_iter<k>.n2nf"
    std::string log_path;               // CSV; empty = keep in memory only
    field::MlpConfig mlp;
    std::optional<field::HashGridConfig> grid;  // required in fast mode
    sampling::PoolOptions pool{25, 50, 0.0};
    double far_field_fraction = -1.0;  // auto: 0.1 in fast mode, 0 otherwise
    bool detach_pull_direction = false;
    bool clip_gradients = false;  // divergence policy is abort; clipping is opt-in
    double clip_norm = 10.0;
    std::size_t auction_above = 0;  // use the approximate solver for batches above this (0 = never)

    void validate() const;
};

struct TrainLogEntry {
    int64_t iter = 0;
    double total = 0.0, emd = 0.0, gc = 0.0, pull = 0.0, eik = 0.0;
    double ms = 0.0;
    double gnorm = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

// CSV with header iter,total,emd,gc,pull,eik,ms,gnorm.
void write_csv(const TrainLog& log, const std::string& path);

struct TrainResult {
    field::FieldParams params;
    TrainLog log;
    bool aborted = false;
    int64_t abort_iter = -1;
    std::string abort_reason;
};

// Minimize the combined objective with a moment-based adaptive first-order
// update. Deterministic given the config seed (per-iteration RNG streams are
// derived from it, so resuming reproduces the uninterrupted run).
TrainResult train(const sampling::ObservationSet& s, const TrainConfig& cfg);

// Continue a checkpointed run up to cfg.iterations.
TrainResult resume(const std::string& checkpoint_path, const sampling::ObservationSet& s,
                   const TrainConfig& cfg);

enum class DirectLoss { Emd, ChamferSq };

struct DirectResult {
    PointCloud points;
    std::vector<double> loss_trace;
};

// Network-free optimization of a free point set against random observations,
// using EMD subgradients (or squared Chamfer for the contrast baseline).
// The learning rate decays linearly to zero.
DirectResult direct_point_optimization(const sampling::ObservationSet& s, std::size_t m,
                                       int64_t iters, double lr, uint64_t seed,
                                       DirectLoss loss = DirectLoss::Emd);

}  // namespace n2n::training
