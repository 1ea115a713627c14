#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "accord/graph_sim.hpp"
#include "accord/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace accord;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("accord_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = "cd '" + workdir().string() + "' && '" ACCORD_CLI "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(Cli, SimulateChainMatchesGenerator) {
  ASSERT_EQ(run("simulate --kind chain --p 120 --rho 0.3 --n 500 --seed 7 --out chain"), 0);
  const auto dir = workdir() / "chain";
  for (auto f : {"X.bin", "theta_true.mtx", "edges.tsv", "metadata.json", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(io::read_matrix_market(dir / "theta_true.mtx").to_dense(), sim::gen_chain(120, 0.3).theta_true.to_dense());
  const auto x = io::read_data(dir / "X.bin");
  EXPECT_EQ(x.rows(), 500);
  EXPECT_EQ(x.cols(), 120);
  const auto man = read_json(dir / "manifest.json");
  EXPECT_EQ(man["command"], "simulate");
  EXPECT_EQ(man["parameters"]["rho"], "0.3");
  EXPECT_EQ(man["seeds"]["seed"], 7);
}

TEST(Cli, SimulateRejectsSmallStar) { EXPECT_EQ(run("simulate --kind star --d 5 --out star"), 2); }

TEST(Cli, SimulateIsDeterministic) {
  ASSERT_EQ(run("simulate --kind hub --seed 1 --n 50 --out hub_a"), 0);
  ASSERT_EQ(run("simulate --kind hub --seed 1 --n 50 --out hub_b"), 0);
  for (auto f : {"X.bin", "theta_true.mtx", "edges.tsv"}) {
    EXPECT_EQ(slurp(workdir() / "hub_a" / f), slurp(workdir() / "hub_b" / f)) << f;
  }
  EXPECT_EQ(read_json(workdir() / "hub_a" / "metadata.json")["edges"], 1000);
}

TEST(Cli, FitHugeLambdaGivesNoEdges) {
  ASSERT_EQ(run("simulate --kind chain --p 30 --n 100 --seed 2 --out small"), 0);
  ASSERT_EQ(run("fit --data small/X.bin --lambda 1e6 --out huge"), 0);
  const auto omega = io::read_matrix_market(workdir() / "huge" / "omega.mtx");
  EXPECT_EQ(omega.offdiag_nnz(), 0);
  EXPECT_TRUE(io::read_edge_pairs(workdir() / "huge" / "rho.tsv").empty());
  EXPECT_TRUE(fs::exists(workdir() / "huge" / "trace.csv"));
  EXPECT_TRUE(fs::exists(workdir() / "huge" / "manifest.json"));
}

TEST(Cli, StepModesAgree) {
  ASSERT_EQ(run("simulate --kind chain --p 30 --n 100 --seed 3 --out steps"), 0);
  ASSERT_EQ(run("fit --data steps/X.bin --lambda 0.1 --tol 1e-12 --step fixed --out fixed"), 0);
  ASSERT_EQ(run("fit --data steps/X.bin --lambda 0.1 --tol 1e-12 --step backtracking --out bt"), 0);
  const auto a = io::read_matrix_market(workdir() / "fixed" / "omega.mtx").to_dense();
  const auto b = io::read_matrix_market(workdir() / "bt" / "omega.mtx").to_dense();
  EXPECT_LE((a - b).norm(), 1e-6);
}

TEST(Cli, PathSelectDebiasReportsBothErrors) {
  ASSERT_EQ(run("simulate --kind chain --p 40 --n 200 --seed 4 --out pipe"), 0);
  ASSERT_EQ(run("fit --data pipe/X.bin --truth pipe/theta_true.mtx --K 8 --debias --out pipe_fit"), 0);
  const auto rep = read_json(workdir() / "pipe_fit" / "report.json");
  EXPECT_EQ(rep["mode"], "path");
  EXPECT_EQ(rep["fits"].size(), 8u);
  EXPECT_TRUE(rep["evaluation"]["biased"]["tse_theta"].is_number());
  EXPECT_TRUE(rep["evaluation"]["debiased"]["tse_theta"].is_number());
  EXPECT_TRUE(rep["evaluation"]["biased"]["auprc"].is_number());
  EXPECT_TRUE(fs::exists(workdir() / "pipe_fit" / "omega_biased.mtx"));
}

TEST(Cli, NonConvergenceExitCode) {
  ASSERT_EQ(run("simulate --kind chain --p 30 --n 100 --seed 5 --out nc"), 0);
  EXPECT_EQ(run("fit --data nc/X.bin --lambda 0.05 --max-iter 1 --out nc_fit"), 3);
  EXPECT_EQ(read_json(workdir() / "nc_fit" / "report.json")["converged"], false);
}

TEST(Cli, IoAndUsageExitCodes) {
  EXPECT_EQ(run("fit --data does_not_exist.bin --lambda 0.1"), 4);
  EXPECT_EQ(run("fit --lambda 0.1"), 2);
  EXPECT_EQ(run("nonsense"), 2);
}

TEST(Cli, EvalExactAndEmptyEstimates) {
  const auto truth = sim::gen_chain(10, 0.3);
  io::write_matrix_market(workdir() / "ev_theta.mtx", truth.theta_true);
  io::write_matrix_market(workdir() / "ev_omega.mtx", truth.omega_true);
  io::write_matrix_market(workdir() / "ev_empty.mtx", SparseSquare::identity(10));
  ASSERT_EQ(run("eval --estimate ev_omega.mtx --truth ev_theta.mtx --out ev/exact.json"), 0);
  EXPECT_EQ(read_json(workdir() / "ev" / "exact.json")["mcc"], 1.0);
  ASSERT_EQ(run("eval --estimate ev_empty.mtx --truth ev_theta.mtx --out ev/empty.json"), 0);
  EXPECT_EQ(read_json(workdir() / "ev" / "empty.json")["tp"], 0);
  EXPECT_EQ(run("eval --estimate ev_empty.mtx --truth ev_empty_missing.mtx"), 4);
}

TEST(Cli, EvalHandFourNodeCase) {
  const auto theta = sim::symmetric_from_edges(4, {{0, 1}, {1, 2}}, {0.2, 0.2}, {1, 1, 1, 1});
  const auto est = SparseSquare::from_triplets(4, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}, {0, 1, 0.3}, {3, 2, -0.1}});
  io::write_matrix_market(workdir() / "h_theta.mtx", theta);
  io::write_matrix_market(workdir() / "h_est.mtx", est);
  ASSERT_EQ(run("eval --estimate h_est.mtx --truth h_theta.mtx --out h/report.json"), 0);
  const auto r = read_json(workdir() / "h" / "report.json");
  EXPECT_EQ(r["tp"], 1);
  EXPECT_EQ(r["fp"], 1);
  EXPECT_EQ(r["fn"], 1);
  EXPECT_EQ(r["tn"], 3);
  EXPECT_DOUBLE_EQ(r["mcc"].get<double>(), 0.25);
}

TEST(Cli, BenchVerifiesEveryWorkerCount) {
  ASSERT_EQ(run("bench --p 64 --n 16 --density 0.05 --workers 1 --repeats 1 --out bench/one.json"), 0);
  EXPECT_EQ(read_json(workdir() / "bench" / "one.json").size(), 1u);
  ASSERT_EQ(run("bench --p 64 --n 16 --density 0.05 --workers 1,2 --repeats 1 --out bench/two.json"), 0);
  const auto recs = read_json(workdir() / "bench" / "two.json");
  ASSERT_EQ(recs.size(), 2u);
  for (const auto& r : recs) EXPECT_TRUE(r["verified"].get<bool>());
  EXPECT_GT(recs[1]["bytes_communicated"].get<double>(), 0.0);
}

TEST(Cli, ReplicateAggregates) {
  ASSERT_EQ(run("replicate --kind chain --p 20 --n 100 --replicates 3 --K 5 --jobs 2 --out rep"), 0);
  const auto reps = read_json(workdir() / "rep" / "replicates.json");
  ASSERT_EQ(reps.size(), 3u);
  EXPECT_EQ(reps[2]["seed"], 3);
  const auto sum = read_json(workdir() / "rep" / "summary.json");
  EXPECT_EQ(sum["biased.auprc"]["count"], 3);
  EXPECT_TRUE(sum["debiased.tse_theta"]["mean"].is_number());
}
