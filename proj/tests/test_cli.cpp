#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "n2n/cli.hpp"
#include "n2n/config.hpp"
#include "n2n/errors.hpp"
#include "n2n/io.hpp"
#include "test_util.hpp"

using namespace n2n;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<const char*> args) {
    std::vector<const char*> argv = {"sdfn2n"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli::cli_main(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& p) const { return (path / p).string(); }
};

std::string tiny_train_json(const TempDir& dir) {
    const std::string cfg = R"({
        "train": {
            "iterations": 60, "batch": 16, "seed": 4,
            "mlp": {"hidden_layers": 2, "width": 8},
            "queries_per_point": 3, "k_scale": 10
        },
        "noise": {"sigma": 0.02, "n_observations": 2}
    })";
    const std::string path = dir / "cfg.json";
    std::ofstream os(path);
    os << cfg;
    return path;
}

}  // namespace

TEST_CASE("unknown flags and missing subcommands exit with usage code 1") {
    CHECK(run({"--definitely-not-a-flag"}) == 1);
    CHECK(run({"train", "--bogus"}) == 1);
    CHECK(run({}) == 1);
}

TEST_CASE("config errors exit 1 and data errors exit 2") {
    TempDir dir("n2n_cli_err");
    const std::string bad = dir / "bad.json";
    {
        std::ofstream os(bad);
        os << R"({"train": {"not_a_real_key": 1}})";
    }
    CHECK(run({"train", "--config", bad.c_str(), "--input", "x.xyz"}) == 1);

    CHECK(run({"denoise", "--input", "missing.xyz", "--field", "missing.n2nf"}) == 2);

    const std::string malformed = dir / "bad.xyz";
    {
        std::ofstream os(malformed);
        os << "1 2 notanumber\n";
    }
    const std::string cfg = tiny_train_json(dir);
    CHECK(run({"train", "--config", cfg.c_str(), "--input", malformed.c_str(),
               "--output", (dir / "out").c_str()}) == 2);
}

TEST_CASE("synth-noise is deterministic and honors the seed") {
    TempDir dir("n2n_cli_synth");
    const PointCloud clean = testutil::sphere_cloud(300, 1.0, 3);
    const std::string in = dir / "clean.xyz";
    io::write_point_cloud(clean, in);

    const std::string out1 = dir / "a";
    const std::string out2 = dir / "b";
    CHECK(run({"synth-noise", "--input", in.c_str(), "--sigma", "0.02", "--n-observations", "2",
               "--seed", "9", "--output", out1.c_str()}) == 0);
    CHECK(run({"synth-noise", "--input", in.c_str(), "--sigma", "0.02", "--n-observations", "2",
               "--seed", "9", "--output", out2.c_str()}) == 0);
    const auto a = io::read_point_cloud(out1 + "/noisy_000.xyz");
    const auto b = io::read_point_cloud(out2 + "/noisy_000.xyz");
    CHECK(a == b);
    CHECK(fs::exists(out1 + "/noisy_001.xyz"));
    CHECK(fs::exists(out1 + "/run_config.json"));
}

TEST_CASE("train, denoise, reconstruct, and eval round-trip through the CLI") {
    TempDir dir("n2n_cli_full");
    const PointCloud cloud = testutil::sphere_cloud(400, 1.0, 7);
    const std::string in = dir / "cloud.xyz";
    io::write_point_cloud(cloud, in);
    const std::string cfg = tiny_train_json(dir);

    const std::string train_out = dir / "train";
    REQUIRE(run({"train", "--config", cfg.c_str(), "--input", in.c_str(), "--output",
                 train_out.c_str()}) == 0);
    CHECK(fs::exists(train_out + "/field.n2nf"));
    CHECK(fs::exists(train_out + "/log.csv"));
    CHECK(fs::exists(train_out + "/run_config.json"));

    const std::string den_out = dir / "denoised.xyz";
    REQUIRE(run({"denoise", "--input", in.c_str(), "--field",
                 (train_out + "/field.n2nf").c_str(), "--output", den_out.c_str()}) == 0);
    const PointCloud denoised = io::read_point_cloud(den_out);
    CHECK(denoised.size() == cloud.size());

    const std::string rec_out = dir / "rec";
    REQUIRE(run({"reconstruct", "--config", cfg.c_str(), "--input", in.c_str(), "--output",
                 rec_out.c_str(), "--mc-res", "24", "--iters", "300"}) == 0);
    CHECK(fs::exists(rec_out + "/mesh.ply"));
    const auto mesh = io::read_mesh(rec_out + "/mesh.ply");
    CHECK(!mesh.triangles.empty());

    const std::string eval_out = dir / "eval";
    REQUIRE(run({"eval", "--input", den_out.c_str(), "--gt", in.c_str(), "--output",
                 eval_out.c_str()}) == 0);
    CHECK(fs::exists(eval_out + "/metrics.json"));
}

TEST_CASE("theorem1 subcommand emits the report") {
    TempDir dir("n2n_cli_t1");
    REQUIRE(run({"theorem1", "--shape", "sphere", "--m", "32", "--t1-sigma", "0.03",
                 "--n-observations", "20", "--iters", "200", "--seed", "3", "--output",
                 (dir / "t1").c_str()}) == 0);
    CHECK(fs::exists(dir / "t1/theorem1.json"));
    CHECK(run({"theorem1", "--shape", "cone"}) == 1);
}

TEST_CASE("run configs parse totally and name offending keys") {
    CHECK_THROWS_AS((void)config::parse_run_config("{", "s"), ConfigError);
    CHECK_THROWS_AS((void)config::parse_run_config(R"({"wat": 1})", "s"), ConfigError);
    try {
        (void)config::parse_run_config(R"({"train": {"batch": "many"}})", "s");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.batch") != std::string::npos);
    }
    try {
        (void)config::parse_run_config(R"({"metrics": {"sclae": 1}})", "s");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("metrics.sclae") != std::string::npos);
    }

    const auto cfg = config::parse_run_config(
        R"({"task": "train", "input": ["a.xyz"], "train": {"mode": "fast", "lambda": 0.2}})", "s");
    CHECK(cfg.train.mode == objective::Mode::Fast);
    CHECK(cfg.train.weights.lambda == 0.2);
    // Round-trip through the archive format.
    const auto back = config::parse_run_config(config::to_json(cfg), "archive");
    CHECK(back.train.weights.lambda == 0.2);
}
