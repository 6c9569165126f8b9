#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "n2n/metrics.hpp"
#include "n2n/training.hpp"

namespace n2n::config {

// One document per run; archived alongside outputs for provenance.
struct RunConfig {
    std::string task;  // train|denoise|upsample|reconstruct|eval|theorem1|synth-noise
    std::vector<std::string> inputs;
    std::string output = "out";
    std::string field_path;
    std::string gt_path;

    training::TrainConfig train;
    bool iterations_explicit = false;  // fast mode defaults to 10000 when not set

    double sigma = 0.01;
    int n_observations = 200;
    uint64_t noise_seed = UINT64_MAX;  // UINT64_MAX: derive from train.seed

    int mc_resolution = 256;
    int chunks = 1;
    int upsample_rate = 4;

    metrics::ChamferConvention convention = metrics::ChamferConvention::HalvedSumOfMeans;
    double metric_scale = 1e4;
    double fscore_tau = 0.01;

    std::string shape = "sphere";
    int t1_m = 200;
    double t1_sigma = 0.03;
    int t1_observations = 100;
    int64_t t1_iterations = 2000;

    int threads = 0;  // 0 = hardware default (capped by SDF_N2N_THREADS)

    uint64_t resolved_noise_seed() const {
        return noise_seed == UINT64_MAX ? train.seed + 0x9E37 : noise_seed;
    }
};

// Total parser: unknown keys and type mismatches raise ConfigError naming the
// offending key.
RunConfig parse_run_config(const std::string& json_text, const std::string& source_name);

std::string to_json(const RunConfig& cfg);

}  // namespace n2n::config
