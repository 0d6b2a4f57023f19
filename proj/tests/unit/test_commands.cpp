#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "lilkit/commands.hpp"
#include "lilkit/errors.hpp"

using namespace lilkit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_lil(int workers) {
    const json doc = json::parse(R"({
        "model": {"kind": "iid"},
        "run": {"seed": 4, "n": 2000, "trajectories": 8},
        "task": {"lil": {"sigma2_states": 2000, "rhat_from": 100, "path_lengths": [1000, 2000],
                         "path_nodes": 256, "series_length": 256, "series_trajectories": 8,
                         "regression_length": 500, "regression_trajectories": 2,
                         "identity_states": 2, "identity_outer": 50}}
    })");
    ExperimentConfig c = parse_config(doc, "lil");
    c.run.workers = workers;
    return c;
}

int run_shell(const std::string& cmd) {
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Commands, MedianEstimate) {
    const MedianEstimate m = median_estimate({5.0, 1.0, 3.0, 2.0, 4.0});
    EXPECT_EQ(m.median, 3.0);
    EXPECT_LE(m.ci_lo, 3.0);
    EXPECT_GE(m.ci_hi, 3.0);
    EXPECT_EQ(median_estimate({1.0, 2.0}).median, 1.5);
    EXPECT_THROW(median_estimate({}), InputError);
}

TEST(Commands, LilOnCoinIsExact) {
    const CommandOutput out = run_command(small_lil(1));
    EXPECT_EQ(out.status, RunStatus::pass) << out.summary.dump(2);
    EXPECT_EQ(out.summary["truncation_N"], 0);
    EXPECT_EQ(out.summary["centering"]["exact"], true);
    EXPECT_EQ(out.summary["sigma2_by_average"]["value"], 1.0);
}

TEST(Commands, DigestIndependentOfWorkers) {
    EXPECT_EQ(run_command(small_lil(1)).digest(), run_command(small_lil(3)).digest());
}

TEST(Commands, ExecuteWritesManifestAndFiles) {
    ExperimentConfig c = parse_config(json::parse(R"({"model": {"kind": "ar1"},
        "run": {"n": 5, "trajectories": 2}})"), "simulate");
    c.output.directory = (fs::path(::testing::TempDir()) / "lilkit_exec").string();
    fs::remove_all(c.output.directory);
    EXPECT_EQ(execute(c), 0);
    std::ifstream in(fs::path(c.output.directory) / "manifest.json");
    const json m = json::parse(in);
    EXPECT_EQ(m["tasks"][0]["status"], "pass");
    EXPECT_EQ(m["tasks"][0]["files"].size(), 2u);
    EXPECT_TRUE(fs::exists(fs::path(c.output.directory) / "trajectories.csv"));
    EXPECT_EQ(m["config"]["run"]["seed"], 1);
}

TEST(Commands, CliRejectsMalformedConfig) {
    const fs::path dir = fs::path(::testing::TempDir()) / "lilkit_cli_bad";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "bad.json";
    std::ofstream(cfg) << R"({"run": {"seeds": 1}})";
    const fs::path out = dir / "out";
    const std::string cli = LILKIT_CLI_PATH;
    EXPECT_EQ(run_shell(cli + " simulate --config " + cfg.string() + " --out " + out.string() + " 2>/dev/null"), 2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run_shell(cli + " simulate --bogus 2>/dev/null"), 2);
    EXPECT_EQ(run_shell("LILKIT_RUN__N=x " + cli + " simulate --out " + out.string() + " 2>/dev/null"), 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Commands, CliRunsAndHonoursFlags) {
    const fs::path dir = fs::path(::testing::TempDir()) / "lilkit_cli_ok";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "c.json";
    std::ofstream(cfg) << R"({"model": {"kind": "iid"}, "run": {"n": 4, "trajectories": 2}})";
    const std::string cli = LILKIT_CLI_PATH;
    ASSERT_EQ(run_shell(cli + " simulate --config " + cfg.string() + " --seed 9 --workers 2 --format json --out " +
                        (dir / "o").string() + " >/dev/null"),
              0);
    std::ifstream in(dir / "o" / "manifest.json");
    const json m = json::parse(in);
    EXPECT_EQ(m["seed"], 9);
    EXPECT_FALSE(fs::exists(dir / "o" / "trajectories.csv"));
    EXPECT_TRUE(fs::exists(dir / "o" / "simulate.json"));
}
