#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cbdae/cli.hpp"
#include "cbdae/csv.hpp"
#include "cbdae/model.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("CBDAE_CLI");
    REQUIRE_MESSAGE(p != nullptr, "CBDAE_CLI env var must point at the binary");
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file: ", p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cbdae_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string s(const std::string& rel) const { return (path / rel).string(); }
};

// small everything: quick to simulate and train
void write_smoke_config(const fs::path& to, const std::string& data_dir) {
    std::ofstream f(to);
    f << R"({
  "seed": 5,
  "simulate": {
    "out_dir": ")" << data_dir
      << R"(",
    "sigma": [1],
    "duration": 1500
  },
  "train": {
    "data": ")" << data_dir
      << R"(/quadtank_sigma_1.csv",
    "out": ")" << data_dir
      << R"(/model.ckpt",
    "window": 10,
    "batch": 8,
    "seq_members": 4,
    "rand_members": 4,
    "hidden": [8, 8],
    "proj_inner": 8,
    "proj_dim": 4,
    "epochs": 2,
    "c_d": 0.5
  },
  "denoise": {
    "input": ")" << data_dir
      << R"(/quadtank_sigma_1.csv",
    "checkpoint": ")" << data_dir
      << R"(/model.ckpt",
    "out": ")" << data_dir
      << R"(/denoised.csv"
  }
})";
}

}  // namespace

TEST_CASE("simulate is byte-identical under a repeated seed") {
    TempDir tmp;
    REQUIRE(run("simulate --seed 9 --sigma 0.5 --out-dir " + tmp.s("a")) == 0);
    REQUIRE(run("simulate --seed 9 --sigma 0.5 --out-dir " + tmp.s("b")) == 0);
    CHECK(slurp(tmp.s("a") + "/quadtank_sigma_0.5.csv") ==
          slurp(tmp.s("b") + "/quadtank_sigma_0.5.csv"));

    REQUIRE(run("simulate --seed 10 --sigma 0.5 --out-dir " + tmp.s("c")) == 0);
    CHECK(slurp(tmp.s("a") + "/quadtank_sigma_0.5.csv") !=
          slurp(tmp.s("c") + "/quadtank_sigma_0.5.csv"));
}

TEST_CASE("sigma overrides drive both filenames and content") {
    TempDir tmp;
    REQUIRE(run("simulate --seed 3 --sigma 0.25 --sigma 2.5 --out-dir " +
                tmp.s("d")) == 0);
    CHECK(fs::exists(tmp.s("d") + "/quadtank_sigma_0.25.csv"));
    CHECK(fs::exists(tmp.s("d") + "/quadtank_sigma_2.5.csv"));
    auto a = cbdae::read_csv(tmp.s("d") + "/quadtank_sigma_0.25.csv");
    auto b = cbdae::read_csv(tmp.s("d") + "/quadtank_sigma_2.5.csv");
    // shared clean trajectory, different corruption
    CHECK(*a.rows[5][3] == *b.rows[5][3]);
    CHECK(*a.rows[5][7] != *b.rows[5][7]);
}

TEST_CASE("train, denoise and the full smoke pipeline") {
    TempDir tmp;
    write_smoke_config(tmp.path / "config.json", tmp.s("work"));
    fs::create_directories(tmp.s("work"));
    const std::string cfg = " --config " + (tmp.path / "config.json").string();

    REQUIRE(run("simulate" + cfg) == 0);
    REQUIRE(run("train" + cfg) == 0);
    REQUIRE(fs::exists(tmp.s("work") + "/model.ckpt"));
    REQUIRE(fs::exists(tmp.s("work") + "/model.ckpt.log.csv"));

    auto model = cbdae::CbdaeModel::load(tmp.s("work") + "/model.ckpt");
    CHECK(model.epochs_trained == 2);

    REQUIRE(run("denoise" + cfg) == 0);
    auto in_csv = cbdae::read_csv(tmp.s("work") + "/quadtank_sigma_1.csv");
    auto out_csv = cbdae::read_csv(tmp.s("work") + "/denoised.csv");
    CHECK(out_csv.rows.size() == in_csv.rows.size());
    // warm-up rows blank, later rows populated
    CHECK_FALSE(out_csv.rows[0][1].has_value());
    CHECK(out_csv.rows[model.arch.window][1].has_value());

    // re-running reproduces the output byte for byte
    const std::string first = slurp(tmp.s("work") + "/denoised.csv");
    REQUIRE(run("denoise" + cfg) == 0);
    CHECK(first == slurp(tmp.s("work") + "/denoised.csv"));

    // resume continues epoch numbering
    {
        std::ifstream in(tmp.path / "config.json");
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        const std::string needle = "\"epochs\": 2";
        text.replace(text.find(needle), needle.size(),
                     "\"epochs\": 1, \"resume\": \"" + tmp.s("work") +
                         "/model.ckpt\"");
        std::ofstream out(tmp.path / "config2.json");
        out << text;
    }
    REQUIRE(run("train --config " + (tmp.path / "config2.json").string()) == 0);
    auto resumed = cbdae::CbdaeModel::load(tmp.s("work") + "/model.ckpt");
    CHECK(resumed.epochs_trained == 3);
}

TEST_CASE("effective config reproduces the run") {
    TempDir tmp;
    REQUIRE(run("simulate --seed 21 --sigma 1.5 --out-dir " + tmp.s("e1")) == 0);
    REQUIRE(run("simulate --config " + tmp.s("e1") +
                "/simulate.effective.json --out-dir " + tmp.s("e2")) == 0);
    CHECK(slurp(tmp.s("e1") + "/quadtank_sigma_1.5.csv") ==
          slurp(tmp.s("e2") + "/quadtank_sigma_1.5.csv"));
}

TEST_CASE("unknown config keys are rejected") {
    TempDir tmp;
    {
        std::ofstream f(tmp.path / "bad.json");
        f << R"({"seed": 1, "simulate": {"duratoin": 500}})";
    }
    CHECK(run("simulate --config " + (tmp.path / "bad.json").string()) != 0);
    {
        std::ofstream f(tmp.path / "bad2.json");
        f << R"({"sneed": 1})";
    }
    CHECK(run("simulate --config " + (tmp.path / "bad2.json").string()) != 0);
}

TEST_CASE("denoise rejects a channel mismatch against the checkpoint") {
    TempDir tmp;
    write_smoke_config(tmp.path / "config.json", tmp.s("work"));
    fs::create_directories(tmp.s("work"));
    const std::string cfg = " --config " + (tmp.path / "config.json").string();
    REQUIRE(run("simulate" + cfg) == 0);
    REQUIRE(run("train" + cfg) == 0);

    // external csv with a different channel set plus a sidecar schema
    {
        std::ofstream f(tmp.s("other.csv"));
        f << "step,a,b\n";
        for (int t = 0; t < 50; ++t)
            f << t << "," << 0.1 * t << "," << 0.2 * t << "\n";
    }
    {
        std::ofstream f(tmp.s("other.schema.json"));
        f << R"({"step_column": "step", "columns": [
            {"name": "a", "role": "input"},
            {"name": "b", "role": "measurement"}]})";
    }
    {
        std::ofstream f(tmp.path / "dcfg.json");
        f << R"({"denoise": {"input": ")" << tmp.s("other.csv")
          << R"(", "schema": ")" << tmp.s("other.schema.json")
          << R"(", "checkpoint": ")" << tmp.s("work") + "/model.ckpt"
          << R"(", "out": ")" << tmp.s("bad_out.csv") << R"("}})";
    }
    CHECK(run("denoise --config " + (tmp.path / "dcfg.json").string()) != 0);
}

TEST_CASE("external series loader enforces uniform sampling") {
    TempDir tmp;
    {
        std::ofstream f(tmp.s("gap.csv"));
        f << "step,a,b\n0,1,2\n1,1,2\n3,1,2\n";
    }
    {
        std::ofstream f(tmp.s("gap.schema.json"));
        f << R"({"step_column": "step", "columns": [
            {"name": "a", "role": "input"},
            {"name": "b", "role": "measurement"}]})";
    }
    CHECK_THROWS_AS(
        (void)cbdae::load_external_series(tmp.s("gap.csv"), tmp.s("gap.schema.json")),
        cbdae::IoError);

    {
        std::ofstream f(tmp.s("ok.csv"));
        f << "step,a,b,b_clean\n";
        for (int t = 0; t < 30; ++t)
            f << t << "," << t * 0.1 << "," << t * 0.2 << "," << t * 0.19 << "\n";
    }
    {
        std::ofstream f(tmp.s("ok.schema.json"));
        f << R"({"step_column": "step", "columns": [
            {"name": "a", "role": "input"},
            {"name": "b", "role": "measurement"},
            {"name": "b_clean", "role": "clean", "of": "b"}]})";
    }
    std::optional<cbdae::Series> clean;
    auto s = cbdae::load_external_series(tmp.s("ok.csv"), tmp.s("ok.schema.json"),
                                         &clean);
    CHECK(s.channels == std::vector<std::string>{"a", "b"});
    CHECK(s.is_input == std::vector<std::uint8_t>{1, 0});
    REQUIRE(clean.has_value());
    CHECK(clean->at(10, 1) == doctest::Approx(10 * 0.19));
}

TEST_CASE("latent emits one trace file per variant plus a summary") {
    TempDir tmp;
    {
        std::ofstream f(tmp.path / "latent.json");
        f << R"({
  "seed": 4,
  "latent": {
    "out_dir": ")" << tmp.s("lat")
          << R"(",
    "sigma": 1,
    "variants": ["cbdae", "bdae_noreg"],
    "sim": {"duration": 1500},
    "train": {"window": 8, "batch": 8, "seq_members": 4, "rand_members": 4,
              "hidden": [8], "proj_inner": 8, "proj_dim": 4, "epochs": 1,
              "c_d": 1.0},
    "trajectory_length": 120,
    "perturbation": 0.05
  }
})";
    }
    REQUIRE(run("latent --config " + (tmp.path / "latent.json").string()) == 0);
    CHECK(fs::exists(tmp.s("lat") + "/latent_cbdae.csv"));
    CHECK(fs::exists(tmp.s("lat") + "/latent_bdae_noreg.csv"));
    std::ifstream in(tmp.s("lat") + "/latent_cbdae.csv");
    std::string header;
    REQUIRE(std::getline(in, header));
    CHECK(header == "t,pc1,pc2,label");
    CHECK(fs::exists(tmp.s("lat") + "/latent_summary.csv"));
}

TEST_CASE("bench runs with classical methods only, no checkpoint involved") {
    TempDir tmp;
    {
        std::ofstream f(tmp.path / "bench.json");
        f << R"({
  "seed": 2,
  "bench": {
    "out_dir": ")" << tmp.s("bench")
          << R"(",
    "sigma": [1],
    "methods": ["noisy", "median", "ema"],
    "sim": {"duration": 1200},
    "train": {"window": 10},
    "window_scan": [3, 5]
  }
})";
    }
    REQUIRE(run("bench --config " + (tmp.path / "bench.json").string()) == 0);
    std::ifstream in(tmp.s("bench") + "/report.csv");
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "method,sigma,rmse,paper_reference,runtime_s");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        // runtime column (last cell) must be populated for every cell
        CHECK(line.rfind(',') < line.size() - 1);
    }
    CHECK(rows == 3);
}
