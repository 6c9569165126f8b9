#include "n2n/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "n2n/config.hpp"
#include "n2n/errors.hpp"
#include "n2n/io.hpp"
#include "n2n/metrics.hpp"
#include "n2n/pipelines.hpp"
#include "n2n/sampling.hpp"
#include "n2n/shapes.hpp"
#include "n2n/surfacing.hpp"
#include "n2n/training.hpp"

namespace n2n::cli {

namespace {

namespace fs = std::filesystem;
using config::RunConfig;

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool has_extension(const std::string& path, const char* ext) {
    const auto dot = path.find_last_of('.');
    return dot != std::string::npos && path.substr(dot + 1) == ext;
}

bool is_file_output(const std::string& out) {
    return has_extension(out, "xyz") || has_extension(out, "ply") || has_extension(out, "obj");
}

fs::path prepare_output_dir(const RunConfig& cfg) {
    const fs::path dir = is_file_output(cfg.output)
                             ? fs::path(cfg.output).parent_path()
                             : fs::path(cfg.output);
    if (!dir.empty()) fs::create_directories(dir);
    return dir.empty() ? fs::path(".") : dir;
}

void archive_config(const RunConfig& cfg, const fs::path& dir) {
    std::ofstream os(dir / "run_config.json");
    os << config::to_json(cfg) << "\n";
}

// Observations for training tasks: several input files are taken as the
// observation set; a single file is perturbed into n_observations noisy
// captures unless sigma == 0 or n_observations == 1.
std::vector<PointCloud> load_observations(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no --input given");
    std::vector<PointCloud> clouds;
    for (const auto& path : cfg.inputs) clouds.push_back(io::read_point_cloud(path));
    if (clouds.size() > 1) return clouds;

    const int n = std::max(1, cfg.n_observations);
    if (cfg.sigma <= 0.0 || n == 1) {
        if (cfg.sigma > 0.0 && n == 1) {
            const auto norm = sampling::compute_normalization(clouds[0]);
            PointCloud unit(clouds[0].size());
            for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = norm.to_unit(clouds[0][i]);
            PointCloud noisy = sampling::synthesize_noisy(unit, cfg.sigma,
                                                          cfg.resolved_noise_seed());
            for (auto& p : noisy) p = norm.to_world(p);
            return {noisy};
        }
        return clouds;
    }
    const auto norm = sampling::compute_normalization(clouds[0]);
    PointCloud unit(clouds[0].size());
    for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = norm.to_unit(clouds[0][i]);
    std::vector<PointCloud> out;
    for (int i = 0; i < n; ++i) {
        PointCloud noisy =
            sampling::synthesize_noisy(unit, cfg.sigma, cfg.resolved_noise_seed() + i);
        for (auto& p : noisy) p = norm.to_world(p);
        out.push_back(std::move(noisy));
    }
    return out;
}

training::TrainConfig finalize_train_config(const RunConfig& cfg, const fs::path& dir) {
    training::TrainConfig t = cfg.train;
    if (t.mode == objective::Mode::Fast) {
        if (!t.grid) t.grid = field::HashGridConfig{};
        if (!cfg.iterations_explicit) t.iterations = 10000;
    }
    if (t.log_path.empty()) t.log_path = (dir / "log.csv").string();
    if (t.checkpoint_every > 0 && t.checkpoint_prefix.empty())
        t.checkpoint_prefix = (dir / "checkpoint").string();
    return t;
}

int run_train(const RunConfig& cfg) {
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const auto clouds = load_observations(cfg);
    const auto t = finalize_train_config(cfg, dir);
    const auto result = pipe::train_on_world_clouds(clouds, t);
    field::save_field(result.params, (dir / "field.n2nf").string());
    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason << "\n";
        return 3;
    }
    std::cout << "trained field written to " << (dir / "field.n2nf").string() << "\n";
    return 0;
}

int run_denoise(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no --input given");
    if (cfg.field_path.empty()) throw ConfigError("denoise needs --field <checkpoint>");
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const PointCloud noisy = io::read_point_cloud(cfg.inputs[0]);
    const auto params = field::load_field(cfg.field_path);
    const PointCloud denoised = pipe::denoise(noisy, params);
    const std::string out =
        is_file_output(cfg.output) ? cfg.output : (dir / "denoised.xyz").string();
    io::write_point_cloud(denoised, out);
    std::cout << "denoised cloud written to " << out << "\n";
    return 0;
}

int run_upsample(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no --input given");
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const PointCloud sparse = io::read_point_cloud(cfg.inputs[0]);
    const auto t = finalize_train_config(cfg, dir);
    const auto result = pipe::upsample(sparse, cfg.upsample_rate, cfg.sigma, t);
    const std::string out =
        is_file_output(cfg.output) ? cfg.output : (dir / "upsampled.xyz").string();
    io::write_point_cloud(result.points, out);
    field::save_field(result.params, (dir / "field.n2nf").string());
    std::cout << "upsampled cloud written to " << out << "\n";
    return 0;
}

int run_reconstruct(const RunConfig& cfg) {
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const auto clouds = load_observations(cfg);
    const auto t = finalize_train_config(cfg, dir);
    if (cfg.chunks > 1) {
        if (clouds.size() != 1)
            throw ConfigError("chunked reconstruction expects a single input cloud");
        const auto meshes = pipe::reconstruct_chunked(clouds[0], t, cfg.mc_resolution, cfg.chunks);
        for (std::size_t i = 0; i < meshes.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "mesh_%03zu.ply", i);
            io::write_mesh(meshes[i], (dir / name).string());
        }
        std::cout << meshes.size() << " chunk meshes written to " << dir.string() << "\n";
        return 0;
    }
    const auto result = pipe::reconstruct(clouds, t, cfg.mc_resolution);
    const std::string out = is_file_output(cfg.output) ? cfg.output : (dir / "mesh.ply").string();
    io::write_mesh(result.mesh, out);
    field::save_field(result.params, (dir / "field.n2nf").string());
    std::cout << "mesh written to " << out << " (" << result.mesh.triangles.size()
              << " triangles)\n";
    return 0;
}

int run_eval(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no --input given");
    if (cfg.gt_path.empty()) throw ConfigError("eval needs --gt <reference>");
    const fs::path dir = prepare_output_dir(cfg);

    auto load_any = [](const std::string& path, PointCloud& cloud, surf::Mesh& mesh, bool& is_mesh) {
        if (has_extension(path, "obj")) {
            mesh = io::read_mesh(path);
            is_mesh = true;
            return;
        }
        if (has_extension(path, "ply")) {
            mesh = io::read_mesh(path);
            if (!mesh.triangles.empty()) {
                is_mesh = true;
                return;
            }
        }
        cloud = io::read_point_cloud(path);
        is_mesh = false;
    };

    PointCloud pc, gc;
    surf::Mesh pm, gm;
    bool pred_mesh = false, gt_mesh = false;
    load_any(cfg.inputs[0], pc, pm, pred_mesh);
    load_any(cfg.gt_path, gc, gm, gt_mesh);

    const std::string conv = cfg.convention == metrics::ChamferConvention::HalvedSumOfMeans
                                 ? "halved-sum-of-means"
                                 : "mean-of-both-sides";
    std::vector<metrics::MetricRecord> records;
    if (!pred_mesh && gt_mesh) {
        records.push_back({"p2m", "exact", cfg.metric_scale,
                           metrics::point_to_mesh(pc, gm) * cfg.metric_scale});
        const auto samples = metrics::sample_surface(gm, 100000, cfg.train.seed);
        records.push_back({"l2cd", conv, cfg.metric_scale,
                           metrics::chamfer_l2(pc, samples.points, cfg.convention) *
                               cfg.metric_scale});
    } else if (pred_mesh && gt_mesh) {
        const auto sp = metrics::sample_surface(pm, 100000, cfg.train.seed);
        const auto sg = metrics::sample_surface(gm, 100000, cfg.train.seed + 1);
        records.push_back({"l2cd", conv, cfg.metric_scale,
                           metrics::chamfer_l2(sp.points, sg.points, cfg.convention) *
                               cfg.metric_scale});
        records.push_back({"l1cd", conv, 1.0,
                           metrics::chamfer_l1(sp.points, sg.points, cfg.convention)});
        records.push_back(
            {"nc", "absolute-cosine", 1.0, metrics::normal_consistency(pm, gm, 100000, 7)});
        records.push_back(
            {"f-score", "tau=" + std::to_string(cfg.fscore_tau), 1.0,
             metrics::f_score(pm, gm, cfg.fscore_tau, 100000, 7)});
    } else if (!pred_mesh && !gt_mesh) {
        records.push_back({"l2cd", conv, cfg.metric_scale,
                           metrics::chamfer_l2(pc, gc, cfg.convention) * cfg.metric_scale});
        records.push_back({"l1cd", conv, 1.0, metrics::chamfer_l1(pc, gc, cfg.convention)});
    } else {
        const auto sp = metrics::sample_surface(pm, 100000, cfg.train.seed);
        records.push_back({"l2cd", conv, cfg.metric_scale,
                           metrics::chamfer_l2(sp.points, gc, cfg.convention) *
                               cfg.metric_scale});
    }

    nlohmann::json all = nlohmann::json::array();
    for (const auto& r : records) {
        std::cout << metrics::to_json(r) << "\n";
        all.push_back(nlohmann::json::parse(metrics::to_json(r)));
    }
    std::ofstream os(dir / "metrics.json");
    os << all.dump(2) << "\n";
    return 0;
}

int run_theorem1(const RunConfig& cfg) {
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const auto report = pipe::verify_theorem1(
        shapes::parse_kind(cfg.shape), static_cast<std::size_t>(cfg.t1_m), cfg.t1_sigma,
        static_cast<std::size_t>(cfg.t1_observations), cfg.t1_iterations, cfg.train.seed);
    const std::string j = report.to_json();
    std::cout << j << "\n";
    std::ofstream os(dir / "theorem1.json");
    os << j << "\n";
    return 0;
}

int run_synth_noise(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ConfigError("no --input given");
    const fs::path dir = prepare_output_dir(cfg);
    archive_config(cfg, dir);
    const PointCloud clean = io::read_point_cloud(cfg.inputs[0]);
    const auto norm = sampling::compute_normalization(clean);
    PointCloud unit(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) unit[i] = norm.to_unit(clean[i]);
    const int n = std::max(1, cfg.n_observations);
    for (int i = 0; i < n; ++i) {
        PointCloud noisy = sampling::synthesize_noisy(unit, cfg.sigma,
                                                      cfg.resolved_noise_seed() + i);
        for (auto& p : noisy) p = norm.to_world(p);
        std::string out;
        if (n == 1 && is_file_output(cfg.output)) {
            out = cfg.output;
        } else {
            char name[64];
            std::snprintf(name, sizeof(name), "noisy_%03d.xyz", i);
            out = (dir / name).string();
        }
        io::write_point_cloud(noisy, out);
    }
    std::cout << n << " noisy observation(s) written to " << dir.string() << "\n";
    return 0;
}

void add_common_options(CLI::App* sub, RunConfig& cfg, std::string& config_path,
                        std::string& mode) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--input", cfg.inputs, "input file(s)");
    sub->add_option("--output", cfg.output, "output directory or file");
    sub->add_option("--mode", mode, "field parameterization: mlp|fast");
    sub->add_option("--batch", cfg.train.batch, "training batch size B");
    sub->add_option("--iters", cfg.train.iterations, "training iterations");
    sub->add_option("--lambda", cfg.train.weights.lambda, "geometric-consistency weight");
    sub->add_option("--sigma", cfg.sigma, "noise standard deviation (fraction of radius)");
    sub->add_option("--n-observations", cfg.n_observations, "observation count N");
    sub->add_option("--seed", cfg.train.seed, "seed for all randomness");
    sub->add_option("--mc-res", cfg.mc_resolution, "marching cubes resolution");
    sub->add_option("--threads", cfg.threads, "worker thread cap");
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"learns signed distance fields from noisy point clouds by noise-to-noise "
                 "mapping; denoises, upsamples, and reconstructs surfaces"};
    app.require_subcommand(1);

    struct SubState {
        CLI::App* sub = nullptr;
        std::string config_path;
        std::string mode;
    };
    RunConfig flags;  // flag values land here, then override the config file
    std::map<std::string, SubState> subs;
    const std::pair<const char*, const char*> names[] = {
        {"train", "learn a field from noisy observations"},
        {"denoise", "pull a noisy cloud onto a trained field's surface"},
        {"upsample", "densify a sparse cloud by perturb-then-denoise"},
        {"reconstruct", "train and extract a watertight mesh"},
        {"eval", "compare a result against a reference"},
        {"theorem1", "network-free convergence check on an analytic shape"},
        {"synth-noise", "write noisy observations of a clean cloud"}};
    for (const auto& [name, desc] : names) {
        SubState& st = subs[name];  // map storage keeps the references stable
        st.sub = app.add_subcommand(name, desc);
        add_common_options(st.sub, flags, st.config_path, st.mode);
    }
    subs["denoise"].sub->add_option("--field", flags.field_path, "trained field checkpoint");
    subs["eval"].sub->add_option("--field", flags.field_path, "trained field checkpoint");
    subs["eval"].sub->add_option("--gt", flags.gt_path, "reference cloud or mesh");
    subs["upsample"].sub->add_option("--rate", flags.upsample_rate, "upsampling rate t");
    subs["reconstruct"].sub->add_option("--chunks", flags.chunks, "split into chunk fields");
    subs["theorem1"].sub->add_option("--shape", flags.shape, "sphere|cube|torus");
    subs["theorem1"].sub->add_option("--m", flags.t1_m, "points per cloud");
    auto* t1sigma = subs["theorem1"].sub->add_option("--t1-sigma", flags.t1_sigma,
                                                     "noise level for the harness");
    subs["theorem1"].sub->add_option("--t1-iters", flags.t1_iterations, "optimization steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        const std::string task = active->get_name();
        const SubState& st = subs.at(task);

        RunConfig cfg;
        if (!st.config_path.empty())
            cfg = config::parse_run_config(read_file(st.config_path), st.config_path);
        cfg.task = task;

        // Flags override config-file values.
        auto seen = [&](const std::string& flag) { return active->count(flag) > 0; };
        if (seen("--input")) cfg.inputs = flags.inputs;
        if (seen("--output")) cfg.output = flags.output;
        if (seen("--batch")) cfg.train.batch = flags.train.batch;
        if (seen("--iters")) {
            cfg.train.iterations = flags.train.iterations;
            cfg.iterations_explicit = true;
        }
        if (seen("--lambda")) cfg.train.weights.lambda = flags.train.weights.lambda;
        if (seen("--sigma")) cfg.sigma = flags.sigma;
        if (seen("--n-observations")) cfg.n_observations = flags.n_observations;
        if (seen("--seed")) cfg.train.seed = flags.train.seed;
        if (seen("--mc-res")) cfg.mc_resolution = flags.mc_resolution;
        if (seen("--threads")) cfg.threads = flags.threads;
        if (!st.mode.empty()) {
            if (st.mode == "mlp")
                cfg.train.mode = objective::Mode::Mlp;
            else if (st.mode == "fast")
                cfg.train.mode = objective::Mode::Fast;
            else
                throw ConfigError("--mode must be mlp or fast");
        }
        if (task == "denoise" || task == "eval")
            if (seen("--field")) cfg.field_path = flags.field_path;
        if (task == "eval" && seen("--gt")) cfg.gt_path = flags.gt_path;
        if (task == "upsample" && seen("--rate")) cfg.upsample_rate = flags.upsample_rate;
        if (task == "reconstruct" && seen("--chunks")) cfg.chunks = flags.chunks;
        if (task == "theorem1") {
            if (seen("--shape")) cfg.shape = flags.shape;
            if (seen("--m")) cfg.t1_m = flags.t1_m;
            if (t1sigma->count() > 0) cfg.t1_sigma = flags.t1_sigma;
            if (seen("--t1-iters")) cfg.t1_iterations = flags.t1_iterations;
            if (seen("--sigma")) cfg.t1_sigma = flags.sigma;
            if (seen("--n-observations")) cfg.t1_observations = flags.n_observations;
            if (seen("--iters")) cfg.t1_iterations = flags.train.iterations;
        }

        if (cfg.threads > 0) {
            const std::string v = std::to_string(cfg.threads);
            setenv("SDF_N2N_THREADS", v.c_str(), 1);
        }

        if (task == "train") return run_train(cfg);
        if (task == "denoise") return run_denoise(cfg);
        if (task == "upsample") return run_upsample(cfg);
        if (task == "reconstruct") return run_reconstruct(cfg);
        if (task == "eval") return run_eval(cfg);
        if (task == "theorem1") return run_theorem1(cfg);
        if (task == "synth-noise") return run_synth_noise(cfg);
        throw ConfigError("unknown task: " + task);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace n2n::cli
