#include "n2n/config.hpp"

#include <set>

#include <json.hpp>

#include "n2n/errors.hpp"

namespace n2n::config {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + prefix + key + "'");
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& prefix, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for key '" + prefix + key + "'");
    }
}

void parse_mlp(const json& j, field::MlpConfig& mlp, const std::string& prefix) {
    check_keys(j, {"hidden_layers", "width", "activation", "activation_beta",
                   "geometric_init_radius"},
               prefix);
    mlp.hidden_layers = get_field(j, "hidden_layers", prefix, mlp.hidden_layers);
    mlp.width = get_field(j, "width", prefix, mlp.width);
    if (j.contains("activation")) {
        const std::string a = get_field<std::string>(j, "activation", prefix, "softplus");
        if (a == "softplus")
            mlp.activation = ad::Act::Softplus;
        else if (a == "tanh")
            mlp.activation = ad::Act::Tanh;
        else
            throw ConfigError("config: bad value for key '" + prefix + "activation'");
    }
    mlp.activation_beta = get_field(j, "activation_beta", prefix, mlp.activation_beta);
    mlp.geometric_init_radius =
        get_field(j, "geometric_init_radius", prefix, mlp.geometric_init_radius);
}

void parse_grid(const json& j, field::HashGridConfig& grid, const std::string& prefix) {
    check_keys(j, {"levels", "table_size", "feature_dim", "base_resolution", "finest_resolution"},
               prefix);
    grid.levels = get_field(j, "levels", prefix, grid.levels);
    grid.table_size = get_field(j, "table_size", prefix, grid.table_size);
    grid.feature_dim = get_field(j, "feature_dim", prefix, grid.feature_dim);
    grid.base_resolution = get_field(j, "base_resolution", prefix, grid.base_resolution);
    grid.finest_resolution = get_field(j, "finest_resolution", prefix, grid.finest_resolution);
}

void parse_train(const json& j, RunConfig& cfg) {
    const std::string p = "train.";
    check_keys(j,
               {"mode", "iterations", "batch", "lr", "lr_tables", "lr_decay", "seed",
                "checkpoint_every", "checkpoint_prefix", "log_path", "lambda", "lambda2",
                "lambda1_ramp", "clip_gradients", "clip_norm", "detach_pull_direction",
                "auction_above", "queries_per_point", "k_scale", "far_field_fraction", "mlp",
                "grid"},
               p);
    auto& t = cfg.train;
    if (j.contains("mode")) {
        const std::string m = get_field<std::string>(j, "mode", p, "mlp");
        if (m == "mlp")
            t.mode = objective::Mode::Mlp;
        else if (m == "fast")
            t.mode = objective::Mode::Fast;
        else
            throw ConfigError("config: bad value for key 'train.mode'");
    }
    if (j.contains("iterations")) {
        t.iterations = get_field<int64_t>(j, "iterations", p, t.iterations);
        cfg.iterations_explicit = true;
    }
    t.batch = get_field<std::size_t>(j, "batch", p, t.batch);
    t.lr = get_field(j, "lr", p, t.lr);
    t.lr_tables = get_field(j, "lr_tables", p, t.lr_tables);
    t.lr_decay = get_field(j, "lr_decay", p, t.lr_decay);
    t.seed = get_field<uint64_t>(j, "seed", p, t.seed);
    t.checkpoint_every = get_field<int64_t>(j, "checkpoint_every", p, t.checkpoint_every);
    t.checkpoint_prefix = get_field<std::string>(j, "checkpoint_prefix", p, t.checkpoint_prefix);
    t.log_path = get_field<std::string>(j, "log_path", p, t.log_path);
    t.weights.lambda = get_field(j, "lambda", p, t.weights.lambda);
    t.weights.lambda2 = get_field(j, "lambda2", p, t.weights.lambda2);
    t.weights.lambda1_ramp = get_field<int64_t>(j, "lambda1_ramp", p, t.weights.lambda1_ramp);
    t.clip_gradients = get_field(j, "clip_gradients", p, t.clip_gradients);
    t.clip_norm = get_field(j, "clip_norm", p, t.clip_norm);
    t.detach_pull_direction =
        get_field(j, "detach_pull_direction", p, t.detach_pull_direction);
    t.auction_above = get_field<std::size_t>(j, "auction_above", p, t.auction_above);
    t.pool.queries_per_point = get_field(j, "queries_per_point", p, t.pool.queries_per_point);
    t.pool.k_scale = get_field(j, "k_scale", p, t.pool.k_scale);
    t.far_field_fraction = get_field(j, "far_field_fraction", p, t.far_field_fraction);
    if (j.contains("mlp")) parse_mlp(j.at("mlp"), t.mlp, p + "mlp.");
    if (j.contains("grid")) {
        field::HashGridConfig g;
        if (t.grid) g = *t.grid;
        parse_grid(j.at("grid"), g, p + "grid.");
        t.grid = g;
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& source_name) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("config " + source_name + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + source_name + ": expected a JSON object");
    check_keys(j,
               {"task", "input", "output", "field", "gt", "train", "noise", "metrics", "theorem1",
                "mc_resolution", "chunks", "upsample_rate", "threads"},
               "");
    RunConfig cfg;
    cfg.task = get_field<std::string>(j, "task", "", "");
    if (j.contains("input")) {
        if (j["input"].is_string())
            cfg.inputs = {j["input"].get<std::string>()};
        else if (j["input"].is_array())
            for (const auto& v : j["input"]) cfg.inputs.push_back(v.get<std::string>());
        else
            throw ConfigError("config: bad value for key 'input'");
    }
    cfg.output = get_field<std::string>(j, "output", "", cfg.output);
    cfg.field_path = get_field<std::string>(j, "field", "", cfg.field_path);
    cfg.gt_path = get_field<std::string>(j, "gt", "", cfg.gt_path);
    cfg.mc_resolution = get_field(j, "mc_resolution", "", cfg.mc_resolution);
    cfg.chunks = get_field(j, "chunks", "", cfg.chunks);
    cfg.upsample_rate = get_field(j, "upsample_rate", "", cfg.upsample_rate);
    cfg.threads = get_field(j, "threads", "", cfg.threads);

    if (j.contains("train")) parse_train(j.at("train"), cfg);
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        check_keys(n, {"sigma", "n_observations", "seed"}, "noise.");
        cfg.sigma = get_field(n, "sigma", "noise.", cfg.sigma);
        cfg.n_observations = get_field(n, "n_observations", "noise.", cfg.n_observations);
        if (n.contains("seed") && !n.at("seed").is_null())
            cfg.noise_seed = get_field<uint64_t>(n, "seed", "noise.", cfg.noise_seed);
    }
    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        check_keys(m, {"convention", "scale", "fscore_tau"}, "metrics.");
        if (m.contains("convention")) {
            const std::string c = get_field<std::string>(m, "convention", "metrics.", "");
            if (c == "halved-sum-of-means")
                cfg.convention = metrics::ChamferConvention::HalvedSumOfMeans;
            else if (c == "mean-of-both-sides")
                cfg.convention = metrics::ChamferConvention::MeanOfBothSides;
            else
                throw ConfigError("config: bad value for key 'metrics.convention'");
        }
        cfg.metric_scale = get_field(m, "scale", "metrics.", cfg.metric_scale);
        cfg.fscore_tau = get_field(m, "fscore_tau", "metrics.", cfg.fscore_tau);
    }
    if (j.contains("theorem1")) {
        const json& t = j.at("theorem1");
        check_keys(t, {"shape", "m", "sigma", "observations", "iterations"}, "theorem1.");
        cfg.shape = get_field<std::string>(t, "shape", "theorem1.", cfg.shape);
        cfg.t1_m = get_field(t, "m", "theorem1.", cfg.t1_m);
        cfg.t1_sigma = get_field(t, "sigma", "theorem1.", cfg.t1_sigma);
        cfg.t1_observations = get_field(t, "observations", "theorem1.", cfg.t1_observations);
        cfg.t1_iterations = get_field<int64_t>(t, "iterations", "theorem1.", cfg.t1_iterations);
    }
    return cfg;
}

std::string to_json(const RunConfig& cfg) {
    json j;
    j["task"] = cfg.task;
    j["input"] = cfg.inputs;
    j["output"] = cfg.output;
    if (!cfg.field_path.empty()) j["field"] = cfg.field_path;
    if (!cfg.gt_path.empty()) j["gt"] = cfg.gt_path;
    j["mc_resolution"] = cfg.mc_resolution;
    j["chunks"] = cfg.chunks;
    j["upsample_rate"] = cfg.upsample_rate;
    j["threads"] = cfg.threads;

    json t;
    t["mode"] = cfg.train.mode == objective::Mode::Fast ? "fast" : "mlp";
    t["iterations"] = cfg.train.iterations;
    t["batch"] = cfg.train.batch;
    t["lr"] = cfg.train.lr;
    t["lr_tables"] = cfg.train.lr_tables;
    t["lr_decay"] = cfg.train.lr_decay;
    t["seed"] = cfg.train.seed;
    t["checkpoint_every"] = cfg.train.checkpoint_every;
    t["lambda"] = cfg.train.weights.lambda;
    t["lambda2"] = cfg.train.weights.lambda2;
    t["lambda1_ramp"] = cfg.train.weights.lambda1_ramp;
    t["clip_gradients"] = cfg.train.clip_gradients;
    t["clip_norm"] = cfg.train.clip_norm;
    t["detach_pull_direction"] = cfg.train.detach_pull_direction;
    t["auction_above"] = cfg.train.auction_above;
    t["queries_per_point"] = cfg.train.pool.queries_per_point;
    t["k_scale"] = cfg.train.pool.k_scale;
    t["far_field_fraction"] = cfg.train.far_field_fraction;
    t["mlp"] = {{"hidden_layers", cfg.train.mlp.hidden_layers},
                {"width", cfg.train.mlp.width},
                {"activation", cfg.train.mlp.activation == ad::Act::Tanh ? "tanh" : "softplus"},
                {"activation_beta", cfg.train.mlp.activation_beta},
                {"geometric_init_radius", cfg.train.mlp.geometric_init_radius}};
    if (cfg.train.grid)
        t["grid"] = {{"levels", cfg.train.grid->levels},
                     {"table_size", cfg.train.grid->table_size},
                     {"feature_dim", cfg.train.grid->feature_dim},
                     {"base_resolution", cfg.train.grid->base_resolution},
                     {"finest_resolution", cfg.train.grid->finest_resolution}};
    j["train"] = t;

    j["noise"] = {{"sigma", cfg.sigma}, {"n_observations", cfg.n_observations}};
    if (cfg.noise_seed != UINT64_MAX) j["noise"]["seed"] = cfg.noise_seed;
    j["metrics"] = {{"convention",
                     cfg.convention == metrics::ChamferConvention::HalvedSumOfMeans
                         ? "halved-sum-of-means"
                         : "mean-of-both-sides"},
                    {"scale", cfg.metric_scale},
                    {"fscore_tau", cfg.fscore_tau}};
    j["theorem1"] = {{"shape", cfg.shape},
                     {"m", cfg.t1_m},
                     {"sigma", cfg.t1_sigma},
                     {"observations", cfg.t1_observations},
                     {"iterations", cfg.t1_iterations}};
    return j.dump(2);
}

}  // namespace n2n::config
