#include "crom/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace crom;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "crom_out";
};

ExperimentConfig resolve_config(const CommonOptions& common) {
  ExperimentConfig config = common.config_path.empty() ? default_config() : load_config(common.config_path);
  if (common.seed) {
    config.train_seed = *common.seed;
    config.test_seed = *common.seed + 1;
  }
  return config;
}

fs::path snapshot_path(const fs::path& out, const std::string& name) { return out / ("snapshots_" + name + ".bin"); }

std::map<std::string, SnapshotSet> load_all_snapshots(const ExperimentConfig& config, const fs::path& out) {
  std::map<std::string, SnapshotSet> sets;
  for (const auto& name : config.component_names()) {
    const fs::path path = snapshot_path(out, name);
    if (!fs::exists(path)) {
      std::clog << "note: no snapshots for component '" << name << "'\n";
      continue;
    }
    sets.emplace(name, load_snapshots(path));
  }
  require(!sets.empty(), "no snapshots in " + out.string() + " (run sample first)");
  return sets;
}

std::map<std::string, SnapshotSet> sample_and_save(const ExperimentConfig& config, const ComponentLibrary& library,
                                                   const fs::path& out) {
  SnapshotReport report = generate_snapshots(config, library, &std::clog);
  fs::create_directories(out);
  nlohmann::json summary{{"attempted", report.attempted},
                         {"converged", report.converged},
                         {"max_residual", report.max_residual},
                         {"components", nlohmann::json::object()}};
  for (const auto& [name, set] : report.sets) {
    save_snapshots(set, snapshot_path(out, name));
    summary["components"][name] = set.size();
  }
  std::ofstream(out / "snapshots.json") << summary.dump(2) << '\n';
  return std::move(report.sets);
}

void train_eqp_rules(TrainedModel& model, const ComponentLibrary& library,
                     const std::map<std::string, SnapshotSet>& snapshots, std::optional<double> epsilon) {
  for (const auto& [name, set] : snapshots) {
    const PodBasis& basis = model.bases.at(name);
    const auto& space = *library.component(name).space;
    const double eps = epsilon ? *epsilon : basis.velocity_missing_energy();
    const EqpRule rule = train_rule(space, build_manifest(space, basis.velocity, set.velocity, eps));
    std::clog << "EQP '" << name << "': " << rule.size() << " of " << space.quadrature_points().size()
              << " points, eps " << eps << ", residual " << rule.residual << '\n';
    model.rules.insert_or_assign(name, rule);
    model.full_points[name] = space.quadrature_points().size();
  }
  bind_rules(model);
}

ProblemInstance test_problem(const ExperimentConfig& config, int size, int index) {
  return random_problem(config, size, size, config.test_seed, 5000 + static_cast<std::uint64_t>(size),
                        static_cast<std::uint64_t>(index));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component reduced-order models for steady incompressible Navier-Stokes"};
  app.require_subcommand(1);
  app.fallthrough();
  CommonOptions common;
  app.add_option("--config", common.config_path, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Seed for training (seed) and test (seed + 1) sampling");
  app.add_option("--out-dir", common.out_dir, "Directory for artifacts and results")->capture_default_str();

  auto* mesh_gen = app.add_subcommand("mesh-gen", "Write the reference component meshes");
  auto* sample = app.add_subcommand("sample", "Generate FOM snapshots on random training arrays");
  auto* train = app.add_subcommand("train", "POD, supremizers, projection and advection tensors");
  bool train_with_eqp = false;
  train->add_flag("--eqp", train_with_eqp, "Also train EQP rules");
  auto* train_eqp = app.add_subcommand("train-eqp", "Train EQP rules for an existing model");
  std::optional<double> eps_override;
  train_eqp->add_option("--epsilon", eps_override, "EQP tolerance (default: missing energy per component)");

  int size = 2, index = 0;
  std::string vtk_path;
  auto* predict_fom = app.add_subcommand("predict-fom", "Solve one random test problem with the FOM");
  auto* predict_rom = app.add_subcommand("predict-rom", "Solve one random test problem with the ROM");
  std::string backend_label_arg;
  for (auto* sub : {predict_fom, predict_rom}) {
    sub->add_option("--size", size, "Array size L (L x L components)")->capture_default_str();
    sub->add_option("--index", index, "Test case index")->capture_default_str();
    sub->add_option("--vtk", vtk_path, "Write the velocity and pressure fields to this VTK file");
  }
  predict_rom->add_option("--backend", backend_label_arg, "tensorial | eqp (default from config)");

  auto* study = app.add_subcommand("study", "Run an experiment study and write results.csv");
  std::string study_name;
  study->add_option("name", study_name, "scaling | supremizer | backend")
      ->required()
      ->check(CLI::IsMember({"scaling", "supremizer", "backend"}));

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = resolve_config(common);
    const fs::path out(common.out_dir);
    fs::create_directories(out);

    if (mesh_gen->parsed()) {
      const MeshRegistry meshes = build_meshes(config);
      fs::create_directories(out / "meshes");
      for (const auto& [name, mesh] : meshes) {
        save_mesh(*mesh, out / "meshes" / (name + ".mesh"));
        std::cout << name << ": " << mesh->triangles().size() << " triangles\n";
      }
      return 0;
    }

    const ComponentLibrary library(build_meshes(config), config.viscosity());

    if (sample->parsed()) {
      const auto sets = sample_and_save(config, library, out);
      for (const auto& [name, set] : sets) std::cout << name << ": " << set.size() << " snapshots\n";
    } else if (train->parsed()) {
      const auto sets = load_all_snapshots(config, out);
      TrainedModel model =
          train_model(library, sets, config.rank_u, config.rank_p, config.supremizers, true, false, {});
      if (train_with_eqp && config.eqp_enabled) train_eqp_rules(model, library, sets, config.eqp_epsilon);
      save_trained(model, config, out / "model");
      for (const auto& [name, basis] : model.bases)
        std::cout << name << ": R_u " << basis.rank_u << ", Z " << basis.velocity_dim() - basis.rank_u << ", R_p "
                  << basis.pressure_dim()
                  << ", missing energy " << basis.velocity_missing_energy() << '\n';
    } else if (train_eqp->parsed()) {
      const auto sets = load_all_snapshots(config, out);
      TrainedModel model = load_trained(library, out / "model");
      train_eqp_rules(model, library, sets, eps_override ? eps_override : config.eqp_epsilon);
      save_trained(model, config, out / "model");
    } else if (predict_fom->parsed()) {
      const ProblemInstance p = test_problem(config, size, index);
      const GlobalFomSystem system(p.grid, library);
      const FomSolution sol = solve_newton(system, config.newton);
      std::cout << "FOM " << size << "x" << size << " case " << index << ": "
                << (sol.report.converged ? "converged" : "NOT converged") << ", " << sol.report.newton_iterations
                << " Newton iterations, residual " << sol.report.final_residual() << ", " << system.size()
                << " dofs, " << sol.report.total_seconds << " s\n";
      save_fom_solution(system, sol.state, out / ("fom_" + std::to_string(size) + "_" + std::to_string(index) + ".bin"));
      if (!vtk_path.empty()) write_vtk(system, sol.state, vtk_path);
      return sol.report.converged ? 0 : 2;
    } else if (predict_rom->parsed()) {
      const AdvectionBackend backend = backend_label_arg.empty() ? config.backend : parse_backend(backend_label_arg);
      const TrainedModel model = load_trained(library, out / "model");
      const ProblemInstance p = test_problem(config, size, index);
      const GlobalFomSystem fom(p.grid, library);
      const GlobalRomSystem rom(p.grid, model.reduced, backend, &model.rules);
      const RomSolution sol = solve_rom_newton(rom, config.newton);
      const Vector lifted = lift(rom, fom, sol.state);
      std::cout << "ROM " << size << "x" << size << " case " << index << " (" << backend_label(backend)
                << "): " << (sol.report.converged ? "converged" : "NOT converged") << ", "
                << sol.report.newton_iterations << " Newton iterations, " << rom.size() << " reduced dofs, "
                << sol.report.total_seconds << " s\n";
      const fs::path fom_file = out / ("fom_" + std::to_string(size) + "_" + std::to_string(index) + ".bin");
      if (fs::exists(fom_file)) {
        const FieldErrors e = relative_errors(fom, load_fom_solution(fom, fom_file), lifted);
        std::cout << "relative error vs FOM: velocity " << e.velocity << ", pressure " << e.pressure << '\n';
      }
      save_rom_solution(rom, sol.state, out / ("rom_" + std::to_string(size) + "_" + std::to_string(index) + ".bin"));
      if (!vtk_path.empty()) write_vtk(fom, lifted, vtk_path);
      return sol.report.converged ? 0 : 2;
    } else if (study->parsed()) {
      std::vector<ResultRow> rows;
      if (study_name == "scaling") {
        const fs::path model_dir = out / "model";
        TrainedModel model;
        if (fs::exists(model_dir / "model.json")) {
          model = load_trained(library, model_dir);
        } else {
          const auto sets = sample_and_save(config, library, out);
          model = train_model(library, sets, config.rank_u, config.rank_p, config.supremizers, true,
                              config.eqp_enabled && config.backend == AdvectionBackend::Eqp, config.eqp_epsilon);
          save_trained(model, config, model_dir);
        }
        rows = run_scaling_study(config, library, model, &std::clog);
      } else {
        const auto sets = fs::exists(snapshot_path(out, config.component_names().front()))
                              ? load_all_snapshots(config, out)
                              : sample_and_save(config, library, out);
        rows = study_name == "supremizer" ? run_supremizer_ablation(config, library, sets, &std::clog)
                                          : run_backend_comparison(config, library, sets, &std::clog);
      }
      write_results_csv(rows, out / "results.csv");
      std::cout << "wrote " << rows.size() << " rows to " << (out / "results.csv").string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
