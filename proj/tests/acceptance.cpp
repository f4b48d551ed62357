#include "crom/harness.hpp"

#include "test_support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

using namespace crom;
using namespace crom::testing;

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int report(int criterion, const std::string& title, Verdict& v) {
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << criterion << " (" << title << "):" << v.detail.str()
            << std::endl;
  return v.pass ? 0 : 1;
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

// Max-norm difference relative to the largest oracle entry.
double block_error(const Matrix& reduced, const Matrix& oracle) {
  if (reduced.rows() != oracle.rows() || reduced.cols() != oracle.cols()) return 1.0;
  const double scale = max_abs(oracle);
  return scale == 0.0 ? max_abs(reduced) : max_abs(reduced - oracle) / scale;
}

/// Acceptance setting: the default experiment with single timing runs.
ExperimentConfig acceptance_config() {
  ExperimentConfig c = default_config();
  c.timing_repeats = 1;
  return c;
}

double max_missing_energy(const std::map<std::string, SnapshotSet>& sets, int rank) {
  double eps = 0.0;
  for (const auto& [name, set] : sets) {
    const Vector sigma = pod(set.velocity).singular_values;
    eps = std::max(eps, missing_energy(sigma, std::min<int>(rank, static_cast<int>(sigma.size()))));
  }
  return eps;
}

int criterion_1() {
  Verdict v;
  Timer timer;
  double worst_u = 0.0, worst_p = 0.0;
  int worst_iterations = 0;
  const double nu = acceptance_config().viscosity();
  const ComponentLibrary library(empty_registry(acceptance_config().n_per_side), nu);
  for (auto [rows, cols] : {std::pair{1, 1}, std::pair{1, 3}, std::pair{2, 2}, std::pair{3, 2}, std::pair{4, 4}}) {
    const GlobalFomSystem system(channel_grid(rows, cols, nu), library);
    const FomSolution sol = solve_newton(system);
    const ChannelErrors e = channel_errors(system, sol.state);
    v.check(sol.report.converged, "Newton converged on " + std::to_string(rows) + "x" + std::to_string(cols));
    worst_u = std::max(worst_u, e.velocity);
    worst_p = std::max(worst_p, e.pressure);
    worst_iterations = std::max(worst_iterations, sol.report.newton_iterations);
  }
  const double t = timer.seconds();
  v.detail << " max velocity error " << worst_u << ", max pressure error " << worst_p << ", max Newton iterations "
           << worst_iterations << ", " << t << " s";
  v.check(worst_u <= 1e-8, "velocity error <= 1e-8");
  v.check(worst_p <= 1e-8, "pressure error <= 1e-8");
  v.check(worst_iterations <= 2, "<= 2 Newton iterations");
  v.check(t < 10.0, "runtime < 10 s");
  return report(1, "channel flow exactness", v);
}

int criterion_2() {
  Verdict v;
  Timer timer;
  const double nu = 1.0;
  for (auto [rows, cols] : {std::pair{1, 1}, std::pair{2, 2}}) {
    const MmsStudy s = mms_convergence(taylor_green(nu), rows, cols, nu, {4, 8, 16});
    const std::string grid = std::to_string(rows) + "x" + std::to_string(cols);
    v.detail << " " << grid << " velocity orders";
    for (double o : s.velocity_orders) {
      v.detail << " " << o;
      v.check(o >= 2.7 && o <= 3.3, grid + " velocity order in [2.7, 3.3]");
    }
    v.detail << ", pressure orders";
    for (double o : s.pressure_orders) {
      v.detail << " " << o;
      v.check(o >= 1.7 && o <= 2.5, grid + " pressure order in [1.7, 2.5]");
    }
    v.detail << ";";
    for (bool c : s.converged) v.check(c, grid + " Newton converged");
  }
  const double t = timer.seconds();
  v.detail << " " << t << " s";
  v.check(t < 120.0, "runtime < 2 min");
  return report(2, "manufactured solution convergence", v);
}

int criterion_3() {
  Verdict v;
  ExperimentConfig config = acceptance_config();
  config.train_samples = 40;
  const ComponentLibrary library(build_meshes(config), config.viscosity());
  const SnapshotReport snaps = generate_snapshots(config, library);
  TrainedModel model = train_model(library, snaps.sets, config.rank_u, config.rank_p, config.supremizers, true, true,
                                   config.eqp_epsilon);

  // (a) Singular values against the eigenvalues of the snapshot Gram matrices.
  double pod_error = 0.0;
  {
    std::mt19937_64 rng(2024);
    Matrix random(50, 10);
    for (Index j = 0; j < 10; ++j) random.col(j) = random_vector(50, rng);
    std::vector<Matrix> inputs = {random};
    for (const auto& [name, set] : snaps.sets) {
      inputs.push_back(set.velocity);
      inputs.push_back(set.pressure);
    }
    for (const Matrix& a : inputs) {
      const Vector sigma = pod(a).singular_values;
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a);
      const Vector lambda = eig.eigenvalues().reverse().cwiseMax(0.0);
      for (Index k = 0; k < sigma.size(); ++k)
        pod_error = std::max(pod_error, std::abs(sigma[k] * sigma[k] - lambda[k]) / lambda[0]);
      for (Index k = sigma.size(); k < lambda.size(); ++k) pod_error = std::max(pod_error, lambda[k] / lambda[0]);
    }
  }
  v.detail << " (a) max |σ² - λ| / λ_max " << pod_error << ";";
  v.check(pod_error <= 1e-9, "POD matches the eigen-oracle to 1e-9");

  // (b) Every projected block against dense triple products.
  double block = 0.0;
  for (const auto& [name, rc] : model.reduced.components) {
    const ComponentOperators& ops = *rc.fom;
    const Matrix& pu = rc.basis.velocity;
    const Matrix& pp = rc.basis.pressure;
    block = std::max(block, block_error(rc.viscous, pu.transpose() * Matrix(ops.viscous) * pu));
    block = std::max(block, block_error(rc.divergence, pp.transpose() * Matrix(ops.divergence) * pu));
    for (int t = 0; t < kNumTags; ++t) {
      block = std::max(block, block_error(rc.dirichlet_viscous[t], pu.transpose() * Matrix(ops.dirichlet[t].viscous) * pu));
      block = std::max(block,
                       block_error(rc.dirichlet_divergence[t], pp.transpose() * Matrix(ops.dirichlet[t].divergence) * pu));
    }
    for (BoundaryTag side : kSides) {
      const int t = tag_index(side);
      block = std::max(block, block_error(rc.loads[t].dirichlet_velocity,
                                          pu.transpose() * Matrix(ops.loads[t].dirichlet_velocity)));
      block = std::max(block, block_error(rc.loads[t].dirichlet_pressure,
                                          pp.transpose() * Matrix(ops.loads[t].dirichlet_pressure)));
      block = std::max(block, block_error(rc.loads[t].neumann_velocity,
                                          pu.transpose() * Matrix(ops.loads[t].neumann_velocity)));
    }
    const Vector ones = Vector::Ones(ops.num_pressure_dofs());
    block = std::max(block, block_error(rc.pressure_mean, pp.transpose() * (ops.space->pressure_mass() * ones)));
  }
  for (const auto& [key, blocks] : library.interfaces()) {
    const ReducedInterface& ri = model.reduced.interface(key);
    const Matrix& um = model.reduced.component(key.component_m).basis.velocity;
    const Matrix& un = model.reduced.component(key.component_n).basis.velocity;
    const Matrix& pm = model.reduced.component(key.component_m).basis.pressure;
    const Matrix& pn = model.reduced.component(key.component_n).basis.pressure;
    block = std::max(block, block_error(ri.viscous_mm, um.transpose() * Matrix(blocks.viscous_mm) * um));
    block = std::max(block, block_error(ri.viscous_mn, um.transpose() * Matrix(blocks.viscous_mn) * un));
    block = std::max(block, block_error(ri.viscous_nm, un.transpose() * Matrix(blocks.viscous_nm) * um));
    block = std::max(block, block_error(ri.viscous_nn, un.transpose() * Matrix(blocks.viscous_nn) * un));
    block = std::max(block, block_error(ri.divergence_mm, pm.transpose() * Matrix(blocks.divergence_mm) * um));
    block = std::max(block, block_error(ri.divergence_mn, pm.transpose() * Matrix(blocks.divergence_mn) * un));
    block = std::max(block, block_error(ri.divergence_nm, pn.transpose() * Matrix(blocks.divergence_nm) * um));
    block = std::max(block, block_error(ri.divergence_nn, pn.transpose() * Matrix(blocks.divergence_nn) * un));
  }
  v.detail << " (b) max relative block difference " << block << ";";
  v.check(block <= 1e-12, "reduced blocks match the triple products to 1e-12");

  // (c) Tensor contraction against the full advection evaluator for random reduced states.
  double contraction = 0.0;
  {
    std::mt19937_64 rng(77);
    for (const auto& [name, rc] : model.reduced.components) {
      const Matrix& phi = rc.basis.velocity;
      for (int trial = 0; trial < 100; ++trial) {
        const Vector a = random_vector(phi.cols(), rng);
        const Vector oracle = phi.transpose() * rc.fom->advection.value(phi * a);
        contraction = std::max(contraction, (rc.tensor.contract(a) - oracle).norm() / oracle.norm());
      }
    }
  }
  v.detail << " (c) max relative contraction difference " << contraction << ";";
  v.check(contraction <= 1e-11, "tensor contraction matches the FOM projection to 1e-11");

  // (d) Stored rules re-checked against freshly built manifests.
  const auto dir = std::filesystem::temp_directory_path() / "crom_acceptance_3";
  std::filesystem::remove_all(dir);
  save_trained(model, config, dir);
  const TrainedModel stored = load_trained(library, dir);
  double worst_ratio = 0.0;
  double min_weight = std::numeric_limits<double>::infinity();
  std::size_t points = 0;
  for (const auto& [name, rule] : stored.rules) {
    const ComponentOperators& ops = library.component(name);
    const EqpManifest m =
        build_manifest(*ops.space, stored.bases.at(name).velocity, snaps.sets.at(name).velocity, rule.epsilon);
    for (const EqpPoint& p : rule.points) min_weight = std::min(min_weight, p.weight);
    points += rule.size();
    const double residual = (m.G * rule.dense_weights(*ops.space) - m.d).norm();
    worst_ratio = std::max(worst_ratio, residual / (rule.epsilon * m.d.norm()));
    v.check(rule_satisfies(rule, *ops.space, m), "stored rule for '" + name + "' satisfies its criterion");
  }
  std::filesystem::remove_all(dir);
  v.detail << " (d) " << points << " EQP points, min weight " << min_weight << ", max ||Gw-d|| / (ε||d||) "
           << worst_ratio;
  v.check(min_weight > 0.0, "EQP weights non-negative");
  v.check(worst_ratio <= 1.0, "EQP residual within ε||d||");
  return report(3, "oracle equivalence", v);
}

int criterion_4() {
  Verdict v;
  Timer timer;
  ExperimentConfig config = acceptance_config();
  config.rank_u = config.rank_p = 30;
  config.ablation_size = 4;
  config.ablation_supremizers = {0, config.rank_p / 2, config.rank_p};
  const ComponentLibrary library(build_meshes(config), config.viscosity());
  const SnapshotReport snaps = generate_snapshots(config, library);
  const std::vector<ResultRow> rows = run_supremizer_ablation(config, library, snaps.sets, &std::clog);
  std::vector<double> velocity, pressure;
  for (const ResultRow& r : rows)
    if (r.row == "summary") {
      velocity.push_back(r.velocity_error);
      pressure.push_back(r.pressure_error);
      v.detail << " " << r.parameter << ": velocity " << r.velocity_error << ", pressure " << r.pressure_error
               << ", ROM converged " << r.rom_converged << ";";
    }
  if (velocity.size() != 3) {
    v.check(false, "three supremizer settings");
    return report(4, "supremizer ablation", v);
  }
  const double pressure_ratio = pressure.front() / pressure.back();
  const auto [vmin, vmax] = std::minmax_element(velocity.begin(), velocity.end());
  const double velocity_ratio = *vmax / *vmin;
  const double t = timer.seconds();
  v.detail << " pressure ratio Z=0 / Z=R_p " << pressure_ratio << ", velocity max/min " << velocity_ratio << ", " << t
           << " s";
  v.check(pressure_ratio >= 10.0, "pressure error at Z=0 >= 10x error at Z=R_p");
  v.check(velocity_ratio < 2.0, "velocity error changes by < 2x across Z");
  v.check(t < 600.0, "runtime < 10 min");
  return report(4, "supremizer ablation", v);
}

int criterion_5() {
  Verdict v;
  Timer timer;
  ExperimentConfig config = acceptance_config();
  config.comparison_size = 4;
  config.comparison_ranks = {30};
  const ComponentLibrary library(build_meshes(config), config.viscosity());
  const SnapshotReport snaps = generate_snapshots(config, library);
  const std::vector<ResultRow> rows = run_backend_comparison(config, library, snaps.sets, &std::clog);
  const double eps = max_missing_energy(snaps.sets, 30);
  const double bound = std::max(2.0 * eps, 0.005);
  double worst = 0.0, mean = 0.0;
  int cases = 0, both_converged = 0;
  std::map<int, double> tensorial_converged;
  for (const ResultRow& r : rows)
    if (r.row == "case" && r.backend == "tensorial") tensorial_converged[r.case_index] = r.rom_converged;
  for (const ResultRow& r : rows)
    if (r.row == "case" && r.backend == "eqp") {
      ++cases;
      if (r.rom_converged > 0.0 && tensorial_converged[r.case_index] > 0.0) ++both_converged;
      worst = std::max(worst, r.backend_difference);
      mean += r.backend_difference;
    }
  mean /= std::max(cases, 1);
  const double t = timer.seconds();
  v.detail << " ε_EQP " << eps << ", bound " << bound << ", " << cases << " cases (" << both_converged
           << " converged with both backends), max difference " << worst << ", mean difference " << mean << ", " << t
           << " s";
  v.check(cases == 20, "20 test cases");
  v.check(both_converged == cases, "both backends converged on every case");
  v.check(worst <= bound, "every lifted difference within max(2ε, 0.5%)");
  v.check(t < 600.0, "runtime < 10 min");
  return report(5, "tensorial and EQP backend agreement", v);
}

int criterion_6() {
  Verdict v;
  Timer timer;
  ExperimentConfig config = acceptance_config();
  config.sizes = {8};
  config.n_test = 20;
  const ComponentLibrary library(build_meshes(config), config.viscosity());
  const SnapshotReport snaps = generate_snapshots(config, library);
  const TrainedModel model = train_model(library, snaps.sets, config.rank_u, config.rank_p, config.supremizers, true,
                                         false, {});
  const std::vector<ResultRow> rows = run_scaling_study(config, library, model, &std::clog);
  const auto summary = std::find_if(rows.begin(), rows.end(), [](const ResultRow& r) { return r.row == "summary"; });
  if (summary == rows.end()) {
    v.check(false, "scaling summary row");
    return report(6, "scaled-up generalization", v);
  }
  v.detail << " 8x8 mean velocity error " << summary->velocity_error << " ± " << summary->velocity_error_ci95
           << ", mean pressure error " << summary->pressure_error << ", ROM converged fraction "
           << summary->rom_converged << ", speedup " << summary->speedup << " (FOM " << summary->fom_time_s
           << " s, ROM " << summary->rom_solve_s << " s), ROM dimension " << summary->rom_dim << ";";
  v.check(summary->velocity_error <= 0.10, "mean velocity error <= 10%");
  v.check(summary->rom_converged >= 0.9, "ROM converged on >= 90% of cases");

  // The reduced dimension is fixed by the ranks and the grid, not by the component mesh.
  std::vector<Index> dims;
  for (int n : {6, 10}) {
    ExperimentConfig refined = config;
    refined.n_per_side = n;
    refined.train_samples = 60;
    const ComponentLibrary lib(build_meshes(refined), refined.viscosity());
    const SnapshotReport s = generate_snapshots(refined, lib);
    const TrainedModel m = train_model(lib, s.sets, refined.rank_u, refined.rank_p, refined.supremizers, true, false, {});
    const ProblemInstance p = random_problem(refined, 8, 8, refined.test_seed, 1008, 0);
    const GlobalRomSystem rom(p.grid, m.reduced, AdvectionBackend::Tensorial);
    dims.push_back(rom.size());
  }
  dims.push_back(summary->rom_dim);
  v.detail << " ROM dimension at n_per_side 6, 10, " << config.n_per_side << ": " << dims[0] << ", " << dims[1] << ", "
           << dims[2] << "; " << timer.seconds() << " s";
  v.check(dims[0] == dims[2] && dims[1] == dims[2], "ROM dimension invariant under mesh refinement");
  return report(6, "scaled-up generalization", v);
}

int criterion_7() {
  Verdict v;
  ExperimentConfig config = acceptance_config();
  config.n_per_side = 6;
  config.train_samples = 12;
  config.rank_u = config.rank_p = 6;
  config.sizes = {2, 3};
  config.n_test = 3;
  config.backend = AdvectionBackend::Eqp;
  config.identity_check = true;
  config.train_seed = 11;
  config.test_seed = 12;

  const auto dir = std::filesystem::temp_directory_path() / "crom_acceptance_7";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> runs;
  for (int run = 0; run < 2; ++run) {
    const ComponentLibrary library(build_meshes(config), config.viscosity());
    const SnapshotReport snaps = generate_snapshots(config, library);
    const TrainedModel model = train_model(library, snaps.sets, config.rank_u, config.rank_p, config.supremizers, true,
                                           true, config.eqp_epsilon);
    const auto path = dir / ("results_" + std::to_string(run) + ".csv");
    write_results_csv(run_scaling_study(config, library, model), path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    runs.push_back(text.str());
  }
  std::filesystem::remove_all(dir);

  std::vector<bool> keep;
  for (const auto& name : result_columns()) keep.push_back(!is_timing_column(name));
  auto strip = [&](const std::string& csv) {
    std::vector<std::string> lines;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string field, kept;
      for (std::size_t k = 0; std::getline(fields, field, ','); ++k)
        if (k < keep.size() && keep[k]) kept += field + ',';
      lines.push_back(kept);
    }
    return lines;
  };
  const auto a = strip(runs[0]);
  const auto b = strip(runs[1]);
  std::size_t differing = a.size() == b.size() ? 0 : std::max(a.size(), b.size());
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) differing += a[k] != b[k];
  v.detail << " " << a.size() << " CSV lines per run, " << differing << " differing in non-timing columns";
  v.check(a.size() > 1, "non-empty results");
  v.check(differing == 0, "identical non-timing columns");
  return report(7, "determinism", v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the component reduced-order model"};
  std::vector<int> criteria;
  app.add_option("--criterion", criteria, "criterion number(s) 1-7; all when omitted")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7};

  int failures = 0;
  for (int c : criteria) {
    try {
      switch (c) {
        case 1: failures += criterion_1(); break;
        case 2: failures += criterion_2(); break;
        case 3: failures += criterion_3(); break;
        case 4: failures += criterion_4(); break;
        case 5: failures += criterion_5(); break;
        case 6: failures += criterion_6(); break;
        case 7: failures += criterion_7(); break;
      }
    } catch (const std::exception& e) {
      std::cout << "FAIL criterion " << c << ": error: " << e.what() << std::endl;
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
