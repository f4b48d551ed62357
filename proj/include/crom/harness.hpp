#pragma once

#include "crom/rom.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace crom {

/// Random inflow: constant mean velocity plus one sinusoidal perturbation per component.
struct InflowSample {
  std::array<double, 2> mean{};       // g_1, g_2 ~ U[-1, 1]
  std::array<double, 2> amplitude{};  // Δg_1, Δg_2 ~ U[-0.1, 0.1]
  std::array<Point2, 2> wavevector{Point2::Zero(), Point2::Zero()};  // k_1, k_2 ~ U[-0.5, 0.5]^2
  std::array<double, 2> phase{};      // θ_1, θ_2 ~ U[0, 1]
  std::uint64_t seed = 0;
};

InflowSample sample_inflow(std::mt19937_64& rng);

/// g_di(x) = (g_1 + Δg_1 sin 2π(k_1·x + θ_1), g_2 + Δg_2 sin 2π(k_2·x + θ_2)) in global coordinates.
VelocityFunction inflow_velocity(const InflowSample& sample);

/// Dirichlet on strictly upwind sides (g_1 > 0: Left, g_1 < 0: Right, g_2 > 0: Bottom, g_2 < 0: Top),
/// homogeneous Neumann elsewhere.
std::array<BoundaryCondition, 4> bc_from_sample(const InflowSample& sample);

struct ComponentSpec {
  std::string name;
  std::string shape = "empty";  // empty | square | circle | file
  double half_width = 0.25;
  std::string path;             // mesh file for shape == "file"
};

struct ExperimentConfig {
  int n_per_side = 8;
  std::vector<ComponentSpec> components;
  double reynolds = 25.0;

  int train_samples = 200;
  int train_rows = 2;
  int train_cols = 2;
  std::uint64_t train_seed = 1;

  int rank_u = 30;
  int rank_p = 30;
  int supremizers = -1;  // -1: Z = R_p

  AdvectionBackend backend = AdvectionBackend::Tensorial;
  bool eqp_enabled = true;
  std::optional<double> eqp_epsilon;  // default ε(σ_u, R_u) per component

  std::vector<int> sizes = {2, 4, 8};
  int n_test = 20;
  std::uint64_t test_seed = 2;
  std::optional<std::array<double, 2>> fixed_inflow;  // mean velocity; no perturbation
  bool rom_stokes_initial = false;
  bool identity_check = false;  // adds a no-reduction sanity row to the scaling study

  int ablation_size = 4;
  std::vector<int> ablation_supremizers;  // default {0, R_p/2, R_p}
  int comparison_size = 4;
  std::vector<int> comparison_ranks = {10, 20, 30};

  int timing_repeats = 3;
  NewtonOptions newton;

  double viscosity() const { return 1.0 / reynolds; }
  std::vector<std::string> component_names() const;
};

ExperimentConfig default_config();
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

MeshRegistry build_meshes(const ExperimentConfig& config);

/// One randomly drawn problem: a component per cell plus an inflow.
struct ProblemInstance {
  GridConfig grid;
  InflowSample inflow;
};

/// Deterministic in (seed, stream, index) regardless of call order.
ProblemInstance random_problem(const ExperimentConfig& config, int rows, int cols, std::uint64_t seed,
                               std::uint64_t stream, std::uint64_t index);

struct SnapshotReport {
  std::map<std::string, SnapshotSet> sets;
  int attempted = 0;
  int converged = 0;
  double max_residual = 0.0;  // largest final FOM residual among accepted samples
};

/// Solves train_samples random small arrays; each converged solve contributes one snapshot per cell.
SnapshotReport generate_snapshots(const ExperimentConfig& config, const ComponentLibrary& library,
                                  std::ostream* log = nullptr);

/// Bases, projected operators and (optionally) advection tensors and EQP rules.
struct TrainedModel {
  std::map<std::string, PodBasis> bases;
  ReducedModel reduced;
  std::map<std::string, EqpRule> rules;
  std::map<std::string, std::size_t> full_points;
};

TrainedModel train_model(const ComponentLibrary& library, const std::map<std::string, SnapshotSet>& snapshots,
                         int rank_u, int rank_p, int supremizers, bool tensors, bool eqp,
                         std::optional<double> eqp_epsilon);

/// Re-binds the EQP rules after a move or load.
void bind_rules(TrainedModel& model);

/// Artifacts: basis_<name>.bin, tensor_<name>.bin, eqp_<name>.bin and model.json.
void save_trained(const TrainedModel& model, const ExperimentConfig& config, const std::filesystem::path& dir);
TrainedModel load_trained(const ComponentLibrary& library, const std::filesystem::path& dir);

/// One row of results.csv; summary rows carry means and 95% half-widths.
struct ResultRow {
  std::string study;
  std::string row;  // case | summary
  int grid = 0;
  std::string parameter;
  int case_index = -1;
  std::string backend;
  Index fom_dofs = 0;
  Index rom_dim = 0;
  double fom_residual = 0.0;
  double fom_converged = 0.0;
  double rom_converged = 0.0;
  double rom_newton_iterations = 0.0;
  double velocity_error = 0.0, velocity_error_ci95 = 0.0;
  double pressure_error = 0.0, pressure_error_ci95 = 0.0;
  double backend_difference = 0.0;
  double eqp_points = 0.0;
  double fom_assembly_s = 0.0;
  double fom_time_s = 0.0, fom_time_s_ci95 = 0.0;
  double rom_assembly_s = 0.0, rom_assembly_s_ci95 = 0.0;
  double rom_solve_s = 0.0, rom_solve_s_ci95 = 0.0;
  double speedup = 0.0;
};

/// Column names; timing columns end in "_s", "_s_ci95" or are "speedup".
const std::vector<std::string>& result_columns();
bool is_timing_column(const std::string& name);
void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::string csv_escape(const std::string& field);

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};
/// Mean and Student-t 95% confidence half-width.
MeanCi mean_ci95(const std::vector<double>& values);

/// Runs an experiment-scale study and returns its rows (case rows and summary rows).
std::vector<ResultRow> run_scaling_study(const ExperimentConfig& config, const ComponentLibrary& library,
                                         const TrainedModel& model, std::ostream* log = nullptr);
std::vector<ResultRow> run_supremizer_ablation(const ExperimentConfig& config, const ComponentLibrary& library,
                                               const std::map<std::string, SnapshotSet>& snapshots,
                                               std::ostream* log = nullptr);
std::vector<ResultRow> run_backend_comparison(const ExperimentConfig& config, const ComponentLibrary& library,
                                              const std::map<std::string, SnapshotSet>& snapshots,
                                              std::ostream* log = nullptr);

/// Fitted slope of log(y) against log(x) by least squares.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace crom
