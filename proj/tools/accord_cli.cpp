// accord: simulate, fit, eval, bench, replicate.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "accord/accord.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace accord;

namespace {

using Clock = std::chrono::steady_clock;

int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------- manifest

json resolved_options(const CLI::App& cmd) {
  json out = json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt == cmd.get_help_ptr()) continue;
    const std::string name = opt->get_name(false, true);
    std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->get_type_size() == 0) {
      out[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      out[key] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      out[key] = opt->get_default_str();
    }
  }
  return out;
}

struct Manifest {
  std::string command;
  json parameters;
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  Clock::time_point start = Clock::now();

  Manifest(std::string cmd, json params) : command(std::move(cmd)), parameters(std::move(params)) {}

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["parameters"] = parameters;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["tool_version"] = kVersion;
    j["wall_time_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- simulate

struct SimOptions {
  std::string kind = "er";
  Index p = 0;  // 0: per-kind default
  Index n = 500;
  std::uint64_t seed = 1;
  double rho = 0.3;
  Index d = 21;
  Index edges = -1;  // er: -1 means 15% of pairs
  int precision = 0;  // er: 51 (default) or 53
  double avg_degree = 10.3;
};

struct Simulated {
  sim::GraphModel model;
  DenseData data;
  std::optional<sim::TriangularFactor> factor;
};

// Per-stage seeds derived from the user seed so stages are independent.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) { return seed * 0x9E3779B97F4A7C15ull + stage; }

Simulated simulate(const SimOptions& o) {
  Simulated s;
  const std::uint64_t g_seed = stage_seed(o.seed, 1), w_seed = stage_seed(o.seed, 2), x_seed = stage_seed(o.seed, 3);
  if (o.n < 1) throw UsageError("--n must be >= 1");
  if (o.kind == "er") {
    const Index p = o.p ? o.p : 1000;
    const Index m = o.edges >= 0 ? o.edges : static_cast<Index>(std::llround(0.15 * static_cast<double>(p * (p - 1) / 2)));
    const auto edges = sim::gen_erdos_renyi(p, m, g_seed);
    const int rule = o.precision ? o.precision : 51;
    if (rule == 51) {
      s.model = sim::build_precision_51(edges, p, w_seed);
    } else if (rule == 53) {
      s.model = sim::build_precision_53(edges, p, w_seed);
    } else {
      throw UsageError("--precision must be 51 or 53");
    }
  } else if (o.kind == "hub" || o.kind == "scalefree") {
    if (o.p && o.p != 1000) throw UsageError("--p is fixed at 1000 for cluster graphs");
    const auto edges = sim::gen_cluster_graph(o.kind == "hub" ? sim::ClusterKind::Hub : sim::ClusterKind::ScaleFree, g_seed);
    s.model = o.precision == 51 ? sim::build_precision_51(edges, 1000, w_seed) : sim::build_precision_53(edges, 1000, w_seed);
  } else if (o.kind == "chain") {
    s.model = sim::gen_chain(o.p ? o.p : 120, o.rho);
  } else if (o.kind == "star") {
    s.model = sim::gen_star(o.p ? o.p : 200, o.d);
  } else if (o.kind == "cholesky") {
    const Index p = o.p ? o.p : 1000;
    s.factor = sim::gen_cholesky_factor(p, o.avg_degree, g_seed);
    auto theta = sim::factor_precision(*s.factor);
    s.model = sim::finish_model(theta, sim::factor_precision_edges(*s.factor),
                                {"cholesky", {{"p", static_cast<double>(p)}, {"avg_degree", o.avg_degree}}, g_seed});
  } else {
    throw UsageError("unknown --kind '" + o.kind + "' (expected er, hub, scalefree, chain, star or cholesky)");
  }
  s.model.generator.seed = o.seed;
  s.data = s.factor ? sim::sample_from_factor(*s.factor, o.n, x_seed) : sim::sample_gaussian(s.model.theta_true, o.n, x_seed);
  return s;
}

void add_sim_options(CLI::App* cmd, SimOptions& o) {
  cmd->add_option("--kind", o.kind, "er, hub, scalefree, chain, star or cholesky")
      ->check(CLI::IsMember({"er", "hub", "scalefree", "chain", "star", "cholesky"}));
  cmd->add_option("--p", o.p, "dimension (0: per-kind default)");
  cmd->add_option("--n", o.n, "sample size");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--rho", o.rho, "chain off-diagonal value");
  cmd->add_option("--d", o.d, "star: hub degree + 1");
  cmd->add_option("--edges", o.edges, "er: edge count (-1: 15% of pairs)");
  cmd->add_option("--precision", o.precision, "precision recipe for er/hub/scalefree: 51 or 53 (0: kind default)");
  cmd->add_option("--avg-degree", o.avg_degree, "cholesky: target average degree of L L^T");
}

json model_metadata(const sim::GraphModel& m) {
  json j;
  j["kind"] = m.generator.kind;
  json params = json::object();
  for (const auto& [k, v] : m.generator.params) params[k] = v;
  j["params"] = params;
  j["seed"] = m.generator.seed;
  j["p"] = m.p;
  j["edges"] = m.edges.size();
  j["max_degree"] = m.max_degree;
  j["min_eigenvalue"] = std::isnan(m.min_eigenvalue) ? json(nullptr) : json(m.min_eigenvalue);
  j["warnings"] = m.warnings;
  return j;
}

int cmd_simulate(const CLI::App& cmd, const SimOptions& o, const fs::path& out_dir, const std::string& format) {
  Manifest man{"simulate", resolved_options(cmd)};
  man.seeds = {{"seed", o.seed}, {"graph", stage_seed(o.seed, 1)}, {"weights", stage_seed(o.seed, 2)}, {"samples", stage_seed(o.seed, 3)}};
  const auto s = simulate(o);
  fs::create_directories(out_dir);
  const fs::path x_path = out_dir / (format == "csv" ? "X.csv" : "X.bin");
  if (format == "csv") {
    io::write_csv(x_path, s.data.values);
  } else {
    io::write_binary(x_path, s.data.values);
  }
  io::write_matrix_market(out_dir / "theta_true.mtx", s.model.theta_true);
  {
    std::ofstream e(out_dir / "edges.tsv");
    e << "i\tj\ttheta\n" << std::setprecision(17);
    for (const auto& edge : s.model.edges) e << edge.i << '\t' << edge.j << '\t' << s.model.theta_true.coeff(edge.i, edge.j) << '\n';
    if (!e) throw IoError("cannot write edges.tsv");
  }
  man.outputs = {x_path.string(), (out_dir / "theta_true.mtx").string(), (out_dir / "edges.tsv").string(),
                 (out_dir / "metadata.json").string()};
  if (s.factor) {
    io::write_matrix_market(out_dir / "factor.mtx", s.factor->lower);
    man.outputs.push_back((out_dir / "factor.mtx").string());
  }
  json meta = model_metadata(s.model);
  meta["n"] = o.n;
  write_json(out_dir / "metadata.json", meta);
  man.write(out_dir / "manifest.json");
  for (const auto& w : s.model.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << meta.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::optional<double> lambda;
  std::optional<double> lambda_scale;  // lambda = scale * sqrt(1/n)
  int path_count = 30;
  Index max_nnz = -1;  // stop the path once an estimate is denser than this
  double ratio = 0.01;
  std::string select = "epbic";
  double gamma = 0.5;
  bool do_debias = false;
  double phi = 0.0;
  std::string step = "backtracking";
  double tol = 1e-8;
  double beta = 0.5;
  int max_iter = 10000;
  std::optional<double> tau0;
  int workers = default_workers();
};

void add_fit_options(CLI::App* cmd, FitOptions& o) {
  cmd->add_option("--lambda", o.lambda, "single-lambda fit");
  cmd->add_option("--lambda-scale", o.lambda_scale, "single fit at lambda = scale * sqrt(1/n)");
  cmd->add_option("--K", o.path_count, "path length when no single lambda is given");
  cmd->add_option("--ratio", o.ratio, "lambda_min / lambda_max on the path");
  cmd->add_option("--max-nnz", o.max_nnz, "stop the path after an estimate exceeds this many off-diagonal nonzeros (-1: off)");
  cmd->add_option("--select", o.select, "path selection rule")->check(CLI::IsMember({"epbic"}));
  cmd->add_option("--gamma", o.gamma, "epBIC gamma in [0, 1]");
  cmd->add_flag("--debias", o.do_debias, "refit on the selected support");
  cmd->add_option("--phi", o.phi, "debias penalty factor in [0, 1]");
  cmd->add_option("--step", o.step, "fixed or backtracking")->check(CLI::IsMember({"fixed", "backtracking"}));
  cmd->add_option("--tol", o.tol, "stop when ||Omega_new - Omega||_F < tol");
  cmd->add_option("--beta", o.beta, "backtracking shrink factor");
  cmd->add_option("--max-iter", o.max_iter, "iteration cap per fit");
  cmd->add_option("--tau0", o.tau0, "initial / fixed step size");
  cmd->add_option("--workers", o.workers, "ring workers for the gradient product");
}

SolverConfig base_config(const FitOptions& o) {
  SolverConfig c;
  c.step_mode = o.step == "fixed" ? StepMode::Fixed : StepMode::Backtracking;
  c.tol = o.tol;
  c.beta = o.beta;
  c.max_iter = o.max_iter;
  c.tau0 = o.tau0;
  c.workers = std::max(1, o.workers);
  return c;
}

json eval_json(const metrics::EvalReport& r) {
  json j;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  j["tn"] = r.counts.tn;
  j["mcc"] = r.mcc;
  j["auprc"] = r.auprc ? json(*r.auprc) : json(nullptr);
  j["tse_theta"] = r.tse_theta;
  j["tse_omega"] = r.tse_omega;
  j["max_error_omega"] = r.max_error_omega;
  j["sign_accuracy"] = r.sign_accuracy;
  return j;
}

json fit_row(double lambda, const FitResult& f, std::optional<double> score) {
  json j;
  j["lambda"] = lambda;
  j["nnz_offdiag"] = f.omega.offdiag_nnz();
  j["objective"] = f.objective_trace.empty() ? json(nullptr) : json(f.objective_trace.back());
  j["epbic"] = score ? json(*score) : json(nullptr);
  j["converged"] = f.converged;
  j["kkt_residual"] = f.kkt_residual;
  j["iterations"] = f.iterations;
  return j;
}

/// Result of one fit pipeline: single fit or path + selection, optional
/// debias, optional evaluation against truth.
struct Pipeline {
  std::optional<PathResult> path;
  FitResult selected;
  std::optional<FitResult> debiased;
  json report;
  bool ok = true;  // false when the final estimate did not converge
};

Pipeline run_pipeline(DenseData& data, const FitOptions& o, const sim::GraphModel* truth) {
  Pipeline out;
  const SolverConfig base = base_config(o);
  json& rep = out.report;
  std::optional<double> single = o.lambda;
  if (o.lambda && o.lambda_scale) throw UsageError("--lambda and --lambda-scale are mutually exclusive");
  if (o.lambda_scale) single = *o.lambda_scale * std::sqrt(1.0 / static_cast<double>(data.n()));
  if (single) {
    SolverConfig cfg = base;
    cfg.penalty = PenaltyPolicy::uniform(*single);
    out.selected = solve(data, cfg);
    rep["mode"] = "single";
    rep["fits"] = json::array({fit_row(*single, out.selected, epbic(out.selected, data, o.gamma))});
    rep["selected_lambda"] = *single;
    out.ok = out.selected.converged;
  } else {
    const auto grid = lambda_grid(data, o.path_count, o.ratio);
    out.path = fit_path(data, grid, base, o.gamma, o.max_nnz);
    rep["mode"] = "path";
    rep["gamma"] = o.gamma;
    json rows = json::array();
    for (std::size_t k = 0; k < out.path->fits.size(); ++k) {
      rows.push_back(fit_row(grid[k], out.path->fits[k], out.path->epbic_scores[k]));
    }
    rep["fits"] = rows;
    rep["warnings"] = out.path->warnings;
    if (!out.path->selected_index) {
      rep["selected_index"] = nullptr;
      out.ok = false;
      out.selected = out.path->fits.back();
    } else {
      rep["selected_index"] = *out.path->selected_index;
      rep["selected_lambda"] = grid[*out.path->selected_index];
      out.selected = out.path->fits[*out.path->selected_index];
    }
  }
  if (o.do_debias && out.ok) {
    out.debiased = debias(data, out.selected, o.phi, base);
    rep["debiased"] = fit_row(out.debiased->lambda, *out.debiased, std::nullopt);
    out.ok = out.debiased->converged;
  }
  rep["converged"] = out.ok;
  if (truth) {
    json ev;
    auto biased = metrics::evaluate(out.selected.omega, *truth);
    if (out.path) {
      std::vector<std::string> warnings;
      biased.auprc = metrics::auprc(*out.path, *truth, &warnings);
      for (auto& w : warnings) rep["warnings"].push_back(w);
      // plain pseudo-BIC selection for comparison
      if (auto k0 = select_index(*out.path, data, 0.0)) {
        ev["gamma0"] = eval_json(metrics::evaluate(out.path->fits[*k0].omega, *truth));
        ev["gamma0"]["lambda"] = out.path->lambdas[*k0];
      }
    }
    ev["biased"] = eval_json(biased);
    if (out.debiased) ev["debiased"] = eval_json(metrics::evaluate(out.debiased->omega, *truth));
    rep["evaluation"] = ev;
  }
  return out;
}

sim::GraphModel truth_from_theta(const SparseSquare& theta) {
  sim::EdgeList e;
  for (Index i = 0; i < theta.dim(); ++i) {
    const auto c = theta.row_cols(i);
    const auto v = theta.row_values(i);
    for (std::size_t k = 0; k < c.size(); ++k)
      if (c[k] > i && v[k] != 0.0) e.push_back({i, c[k]});
  }
  return sim::finish_model(theta, std::move(e), {"file", {}, 0});
}

int cmd_fit(const CLI::App& cmd, const FitOptions& o, const fs::path& data_path, const std::optional<fs::path>& truth_path,
            const fs::path& out_dir) {
  Manifest man{"fit", resolved_options(cmd)};
  man.inputs.push_back(data_path.string());
  DenseData data = center_columns(io::read_data(data_path));
  std::optional<sim::GraphModel> truth;
  if (truth_path) {
    man.inputs.push_back(truth_path->string());
    truth = truth_from_theta(io::read_matrix_market(*truth_path));
    if (truth->p != data.p()) throw UsageError("truth dimension does not match the data");
  }
  auto pipe = run_pipeline(data, o, truth ? &*truth : nullptr);
  const FitResult& final_fit = pipe.debiased ? *pipe.debiased : pipe.selected;
  fs::create_directories(out_dir);
  io::write_matrix_market(out_dir / "omega.mtx", final_fit.omega);
  io::write_edge_list(out_dir / "rho.tsv", partial_correlations(final_fit.omega));
  io::write_trace(out_dir / "trace.csv", final_fit);
  man.outputs = {(out_dir / "omega.mtx").string(), (out_dir / "rho.tsv").string(), (out_dir / "trace.csv").string(),
                 (out_dir / "report.json").string()};
  if (pipe.debiased) {
    io::write_matrix_market(out_dir / "omega_biased.mtx", pipe.selected.omega);
    man.outputs.push_back((out_dir / "omega_biased.mtx").string());
  }
  write_json(out_dir / "report.json", pipe.report);
  man.write(out_dir / "manifest.json");
  if (!pipe.ok) {
    std::cerr << "error: the final estimate did not converge; outputs are flagged \"converged\": false\n";
    return static_cast<int>(ErrorKind::NonConvergence);
  }
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const CLI::App& cmd, const fs::path& estimate, const fs::path& truth_path, const std::optional<fs::path>& out) {
  Manifest man{"eval", resolved_options(cmd)};
  man.inputs = {estimate.string(), truth_path.string()};
  const auto est = io::read_matrix_market(estimate);
  const auto truth = truth_from_theta(io::read_matrix_market(truth_path));
  const json j = eval_json(metrics::evaluate(est, truth));
  std::cout << j.dump(2) << '\n';
  if (out) {
    write_json(*out, j);
    man.outputs.push_back(out->string());
    man.write(out->parent_path() / "manifest.json");
  }
  return 0;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const CLI::App& cmd, Index p, Index n, double density, const std::vector<int>& workers, int repeats,
              std::uint64_t seed, const std::optional<fs::path>& out) {
  Manifest man{"bench", resolved_options(cmd)};
  man.seeds = {{"seed", seed}};
  if (p < 1 || n < 1 || !(density >= 0.0 && density <= 1.0)) throw UsageError("bench: need p, n >= 1 and density in [0, 1]");
  Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  const DenseData data = center_columns(x);
  SparseSquare omega(p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) {
      if (i == j) {
        omega.push(j, 1.0);
      } else if (rng.uniform() < density) {
        omega.push(j, rng.normal());
      }
    }
    omega.finish_row(i);
  }
  const Eigen::MatrixXd reference = parallel::two_step_gradient(omega, data, 1).gradient.assemble();
  json records = json::array();
  for (int P : workers) {
    if (P < 1) throw UsageError("bench: worker counts must be >= 1");
    double best = std::numeric_limits<double>::infinity();
    parallel::TwoStepResult r;
    for (int rep = 0; rep < std::max(1, repeats); ++rep) {
      const auto t0 = Clock::now();
      r = parallel::two_step_gradient(omega, data, P);
      best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    const double rel = (r.gradient.assemble() - reference).norm() / std::max(reference.norm(), 1e-300);
    json rec;
    rec["p"] = p;
    rec["n"] = n;
    rec["nnz"] = omega.nnz();
    rec["P"] = r.gradient.rows.workers();
    rec["seconds"] = best;
    rec["bytes_communicated"] = r.first.bytes + r.second.bytes;
    rec["relative_difference"] = rel;
    rec["verified"] = rel <= 1e-10;
    records.push_back(rec);
    if (rel > 1e-10) {
      std::cerr << "error: result with P = " << P << " differs from P = 1 by " << rel << '\n';
      std::cout << records.dump(2) << '\n';
      return static_cast<int>(ErrorKind::Numeric);
    }
  }
  std::cout << records.dump(2) << '\n';
  if (out) {
    write_json(*out, records);
    man.outputs.push_back(out->string());
    man.write(out->parent_path() / "manifest.json");
  }
  return 0;
}

// ---------------------------------------------------------------- replicate

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Collects every numeric leaf of the per-replicate evaluation objects.
void collect(const json& j, const std::string& prefix, std::map<std::string, std::vector<double>>& acc) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      collect(*it, key, acc);
    } else if (it->is_number()) {
      acc[key].push_back(it->get<double>());
    }
  }
}

int cmd_replicate(const CLI::App& cmd, const SimOptions& sim_opt, const FitOptions& fit_opt, int replicates, int jobs,
                  const fs::path& out_dir) {
  Manifest man{"replicate", resolved_options(cmd)};
  if (replicates < 1) throw UsageError("--replicates must be >= 1");
  std::vector<json> results(static_cast<std::size_t>(replicates));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(replicates));
  std::mutex log_mutex;
  auto run_one = [&](int r) {
    try {
      SimOptions so = sim_opt;
      so.seed = sim_opt.seed + static_cast<std::uint64_t>(r);
      auto s = simulate(so);
      FitOptions fo = fit_opt;
      fo.workers = 1;  // parallelism is across replicates here
      auto pipe = run_pipeline(s.data, fo, &s.model);
      json j;
      j["replicate"] = r;
      j["seed"] = so.seed;
      j["converged"] = pipe.ok;
      j["selected_lambda"] = pipe.report.contains("selected_lambda") ? pipe.report["selected_lambda"] : json(nullptr);
      j["evaluation"] = pipe.report["evaluation"];
      results[static_cast<std::size_t>(r)] = std::move(j);
      std::lock_guard lock(log_mutex);
      std::cerr << "replicate " << r << " done\n";
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  };
  const int J = std::clamp(jobs, 1, replicates);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < J; ++t) {
      pool.emplace_back([&, t] {
        for (int r = t; r < replicates; r += J) run_one(r);
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::map<std::string, std::vector<double>> acc;
  bool all_converged = true;
  for (const auto& j : results) {
    collect(j["evaluation"], "", acc);
    all_converged = all_converged && j["converged"].get<bool>();
  }
  json summary = json::object();
  for (const auto& [k, v] : acc) summary[k] = {{"mean", mean_of(v)}, {"sd", sd_of(v)}, {"count", v.size()}};
  fs::create_directories(out_dir);
  write_json(out_dir / "replicates.json", results);
  write_json(out_dir / "summary.json", summary);
  man.seeds = {{"first", sim_opt.seed}, {"last", sim_opt.seed + static_cast<std::uint64_t>(replicates - 1)}};
  man.outputs = {(out_dir / "replicates.json").string(), (out_dir / "summary.json").string()};
  man.write(out_dir / "manifest.json");
  std::cout << summary.dump(2) << '\n';
  return all_converged ? 0 : static_cast<int>(ErrorKind::NonConvergence);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACCORD sparse precision estimation"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimOptions sim_opt;
  fs::path sim_out = "sim";
  std::string format = "bin";
  auto* sim_cmd = app.add_subcommand("simulate", "generate a ground-truth model and data");
  add_sim_options(sim_cmd, sim_opt);
  sim_cmd->add_option("--out", sim_out, "output directory");
  sim_cmd->add_option("--format", format, "data format")->check(CLI::IsMember({"bin", "csv"}));

  FitOptions fit_opt;
  fs::path data_path, fit_out = "fit";
  std::optional<fs::path> truth_path;
  auto* fit_cmd = app.add_subcommand("fit", "fit a single lambda or a path");
  fit_cmd->add_option("--data", data_path, "data file (ACRD binary or CSV)")->required();
  fit_cmd->add_option("--truth", truth_path, "theta_true MatrixMarket file for evaluation");
  fit_cmd->add_option("--out", fit_out, "output directory");
  add_fit_options(fit_cmd, fit_opt);

  fs::path est_path, eval_truth;
  std::optional<fs::path> eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "compare an estimate with the truth");
  eval_cmd->add_option("--estimate", est_path, "estimated Omega (MatrixMarket)")->required();
  eval_cmd->add_option("--truth", eval_truth, "theta_true (MatrixMarket)")->required();
  eval_cmd->add_option("--out", eval_out, "report JSON path");

  Index b_p = 1024, b_n = 256;
  double b_density = 0.01;
  std::vector<int> b_workers{1, 2, 4};
  int b_repeats = 3;
  std::uint64_t b_seed = 1;
  std::optional<fs::path> b_out;
  auto* bench_cmd = app.add_subcommand("bench", "time the ring gradient for several worker counts");
  bench_cmd->add_option("--p", b_p);
  bench_cmd->add_option("--n", b_n);
  bench_cmd->add_option("--density", b_density);
  bench_cmd->add_option("--workers", b_workers)->delimiter(',');
  bench_cmd->add_option("--repeats", b_repeats);
  bench_cmd->add_option("--seed", b_seed);
  bench_cmd->add_option("--out", b_out, "records JSON path");

  SimOptions rep_sim;
  rep_sim.kind = "hub";
  FitOptions rep_fit;
  rep_fit.do_debias = true;
  int replicates = 10;
  int jobs = default_workers();
  fs::path rep_out = "replicate";
  auto* rep_cmd = app.add_subcommand("replicate", "run simulate -> fit -> eval for several seeds");
  add_sim_options(rep_cmd, rep_sim);
  add_fit_options(rep_cmd, rep_fit);
  rep_cmd->add_option("--replicates", replicates);
  rep_cmd->add_option("--jobs", jobs, "replicates run concurrently");
  rep_cmd->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }

  try {
    if (*sim_cmd) return cmd_simulate(*sim_cmd, sim_opt, sim_out, format);
    if (*fit_cmd) return cmd_fit(*fit_cmd, fit_opt, data_path, truth_path, fit_out);
    if (*eval_cmd) return cmd_eval(*eval_cmd, est_path, eval_truth, eval_out);
    if (*bench_cmd) return cmd_bench(*bench_cmd, b_p, b_n, b_density, b_workers, b_repeats, b_seed, b_out);
    if (*rep_cmd) return cmd_replicate(*rep_cmd, rep_sim, rep_fit, replicates, jobs, rep_out);
  } catch (const accord::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Numeric);
  }
  return static_cast<int>(ErrorKind::Usage);
}
