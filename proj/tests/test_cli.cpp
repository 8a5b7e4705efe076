#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "coinfer/cli.hpp"
#include "coinfer/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace coinfer;

namespace {

const fs::path kFixtures = COINFER_FIXTURES;

struct Outcome {
  int rc;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "coinfer");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / ("coinfer_cli_" + std::string(info->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    unsetenv(cli::kConfigDirEnv);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::vector<std::string> plan_inputs() const {
    return {"--profile", (kFixtures / "resnet18_cifar10.json").string(),
            "--env", (kFixtures / "raspberry_pi3_edge.json").string(),
            "--accuracy", (kFixtures / "resnet18_cifar10_accuracy.json").string(),
            "--grid", (kFixtures / "resnet18_cifar10_grid.json").string()};
  }
  std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) const {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  }

  fs::path dir;
};

} // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).rc, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).rc, 2);
  EXPECT_EQ(run_cli({"--threads", "0", "inspect"}).rc, 2);
  EXPECT_EQ(run_cli({"plan", "--bogus"}).rc, 2);
  // No profile flag and no config directory.
  EXPECT_EQ(run_cli({"inspect"}).rc, 2);
  EXPECT_EQ(run_cli({"channel", "--kind", "laser"}).rc, 2);
  EXPECT_EQ(run_cli({"--help"}).rc, 0);
}

TEST_F(Cli, DomainErrorsExitOneAndWriteNothing) {
  const auto out = dir / "plan.json";
  const auto bad_env = dir / "env.json";
  std::ofstream(bad_env) << R"({"device_flops_per_s": -1})";
  auto args = plan_inputs();
  args[3] = bad_env.string();
  const auto r = run_cli(with({"plan"}, with(args, {"--out", out.string()})));
  EXPECT_EQ(r.rc, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(out));

  std::ofstream(bad_env) << "{ broken";
  EXPECT_EQ(run_cli(with({"plan"}, args)).rc, 1);
  EXPECT_EQ(run_cli({"inspect", "--profile", (dir / "missing.json").string()}).rc, 1);
  EXPECT_EQ(run_cli({"channel", "--kind", "bsc", "--p", "0.7", "--symbol-rate", "1000"}).rc, 2);
}

TEST_F(Cli, ChannelCapacity) {
  const auto r = run_cli({"channel", "--kind", "awgn", "--bandwidth", "1e6", "--snr-db", "0"});
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("capacity: 1e+06 bits/s"), std::string::npos) << r.out;
  const auto csv = dir / "snr.csv";
  EXPECT_EQ(run_cli({"--self-check", "channel", "--kind", "awgn", "--bandwidth", "1e6", "--snr-range", "0:20:lin:5",
                     "--csv", csv.string()})
                .rc,
            0);
  EXPECT_EQ(parse_csv(slurp(csv)).rows.size(), 5u);
  const auto dead = run_cli({"channel", "--kind", "bsc", "--p", "0.5", "--symbol-rate", "1000", "--bits", "10"});
  EXPECT_EQ(dead.rc, 0);
  EXPECT_NE(dead.out.find("latency: unreachable"), std::string::npos) << dead.out;
}

TEST_F(Cli, InspectUsesConfigDir) {
  setenv(cli::kConfigDirEnv, kFixtures.c_str(), 1);
  const auto csv = dir / "inspect.csv";
  const auto r = run_cli({"--self-check", "inspect", "--csv", csv.string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto t = parse_csv(slurp(csv));
  EXPECT_EQ(t.header.front(), "split");
  EXPECT_EQ(t.number(1, "feature_bits"), 2'097'152.0);
  EXPECT_EQ(t.meta["command"], "inspect");
  unsetenv(cli::kConfigDirEnv);
}

TEST_F(Cli, PlanOutputsAndMetadata) {
  const auto out = dir / "plan.json";
  const auto csv = dir / "plans.csv";
  const auto r =
      run_cli(with({"--self-check", "--threads", "3", "plan"}, with(plan_inputs(), {"--out", out.string(), "--plans-csv", csv.string()})));
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  for (const char* key : {"meta", "environment", "best", "evaluated", "feasible", "infeasible_counts", "frontier"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_FALSE(j["meta"].contains("threads"));
  EXPECT_EQ(j["meta"]["inputs"].size(), 4u);
  const auto t = parse_csv(slurp(csv));
  EXPECT_EQ(t.rows.size(), j["evaluated"].get<std::size_t>());
}

TEST_F(Cli, SweepAndLookup) {
  const auto sweep = dir / "sweep.csv";
  ASSERT_EQ(run_cli(with({"--self-check", "sweep"}, with(plan_inputs(), {"--rates", "1000:1000000:log:4", "--out", sweep.string()}))).rc, 0);
  const auto t = parse_csv(slurp(sweep));
  EXPECT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.header.front(), "rate_bps");

  const auto table = dir / "lookup.json";
  ASSERT_EQ(run_cli(with({"lookup-build"}, with(plan_inputs(), {"--rate-buckets", "1000,100000", "--out", table.string()}))).rc, 0);
  const auto q = run_cli({"lookup-query", "--table", table.string(), "--rate", "5000"});
  EXPECT_EQ(q.rc, 0) << q.err;
  EXPECT_FALSE(q.out.empty());
  EXPECT_EQ(run_cli({"lookup-query", "--table", table.string(), "--rate", "10"}).rc, 1);
}

TEST_F(Cli, PruneCodecAndJscc) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  WeightTensor conv1{"conv1", {64, 3, 3, 3}, std::vector<float>(64 * 27)};
  for (auto& v : conv1.values) v = g(rng);
  const auto weights = dir / "weights.json";
  write_tensors(weights, "weights.bin", {conv1});
  const auto report = dir / "report.json";
  const auto r = run_cli({"prune", "--profile", (kFixtures / "resnet18_cifar10.json").string(), "--weights",
                          weights.string(), "--split", "1", "--ramp", "0.5,2", "--out", report.string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rep = report_from_json(nlohmann::json::parse(slurp(report)).at("report"));
  EXPECT_EQ(rep.masks.at(0).kept_count(), 32u);
  EXPECT_EQ(run_cli({"prune", "--weights", weights.string(), "--split", "1"}).rc, 2);

  WeightTensor samples{"features", {400, 4}, std::vector<float>(1600)};
  for (auto& v : samples.values) v = g(rng);
  const auto sidecar = dir / "samples.json";
  write_tensors(sidecar, "samples.bin", {samples});
  const auto cb = dir / "codebook.json";
  const auto reducer = dir / "reducer.json";
  ASSERT_EQ(run_cli({"codec-fit", "--samples", sidecar.string(), "--reduced-dim", "2", "--bits", "2", "--codebook-out",
                     cb.string(), "--reducer-out", reducer.string()})
                .rc,
            0);
  EXPECT_EQ(codebook_from_json(nlohmann::json::parse(slurp(cb))).size(), 4u);
  EXPECT_EQ(run_cli({"codec-fit", "--samples", sidecar.string(), "--reduced-dim", "9"}).rc, 1);

  const auto jscc = dir / "jscc.csv";
  const auto j = run_cli({"--self-check", "jscc-sweep", "--codebook", cb.string(), "--gaussian", "5000", "--p-values",
                          "0,0.1,0.5", "--symbol-rate", "1000", "--out", jscc.string()});
  ASSERT_EQ(j.rc, 0) << j.err;
  const auto t = parse_csv(slurp(jscc));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[2][t.column("latency_s")], "unreachable");
  EXPECT_LE(t.number(0, "distortion"), t.number(1, "distortion"));
}

TEST_F(Cli, ThreadCountDoesNotChangeOutput) {
  const auto a = dir / "a.csv";
  const auto b = dir / "b.csv";
  ASSERT_EQ(run_cli(with({"--threads", "1", "plan"}, with(plan_inputs(), {"--plans-csv", a.string()}))).rc, 0);
  ASSERT_EQ(run_cli(with({"--threads", "4", "plan"}, with(plan_inputs(), {"--plans-csv", b.string()}))).rc, 0);
  EXPECT_EQ(slurp(a), slurp(b));
}
