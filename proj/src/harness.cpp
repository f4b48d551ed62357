#include "crom/harness.hpp"

#include "crom/timer.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

namespace crom {

using nlohmann::json;

InflowSample sample_inflow(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mean(-1.0, 1.0), amplitude(-0.1, 0.1), wave(-0.5, 0.5), phase(0.0, 1.0);
  InflowSample s;
  for (int c = 0; c < 2; ++c) s.mean[c] = mean(rng);
  for (int c = 0; c < 2; ++c) s.amplitude[c] = amplitude(rng);
  for (int c = 0; c < 2; ++c) {
    const double kx = wave(rng);
    const double ky = wave(rng);
    s.wavevector[c] = Point2(kx, ky);
  }
  for (int c = 0; c < 2; ++c) s.phase[c] = phase(rng);
  return s;
}

VelocityFunction inflow_velocity(const InflowSample& sample) {
  return [sample](const Point2& x) {
    Point2 g;
    for (int c = 0; c < 2; ++c)
      g[c] = sample.mean[c] +
             sample.amplitude[c] * std::sin(2.0 * std::numbers::pi * (sample.wavevector[c].dot(x) + sample.phase[c]));
    return g;
  };
}

std::array<BoundaryCondition, 4> bc_from_sample(const InflowSample& sample) {
  std::array<BoundaryCondition, 4> bc{BoundaryCondition::neumann(), BoundaryCondition::neumann(),
                                      BoundaryCondition::neumann(), BoundaryCondition::neumann()};
  const VelocityFunction g = inflow_velocity(sample);
  auto set = [&](BoundaryTag side) { bc[tag_index(side)] = BoundaryCondition::dirichlet(g); };
  if (sample.mean[0] > 0.0) set(BoundaryTag::Left);
  if (sample.mean[0] < 0.0) set(BoundaryTag::Right);
  if (sample.mean[1] > 0.0) set(BoundaryTag::Bottom);
  if (sample.mean[1] < 0.0) set(BoundaryTag::Top);
  return bc;
}

std::vector<std::string> ExperimentConfig::component_names() const {
  std::vector<std::string> out;
  for (const auto& c : components) out.push_back(c.name);
  return out;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.components = {{"empty", "empty", 0.0, {}}, {"square", "square", 0.25, {}}, {"circle", "circle", 0.25, {}}};
  return c;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), "config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    require(allowed.count(key) == 1, "config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

ComponentMesh make_mesh(const ComponentSpec& spec, int n) {
  if (spec.shape == "empty") return generate_empty_mesh(n);
  if (spec.shape == "square") return generate_obstacle_mesh(n, ObstacleShape::Square, spec.half_width);
  if (spec.shape == "circle") return generate_obstacle_mesh(n, ObstacleShape::Circle, spec.half_width);
  if (spec.shape == "file") return load_mesh(spec.path);
  throw Error("unknown component shape '" + spec.shape + "'");
}

double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = default_config();
  check_keys(j, {"mesh", "reynolds", "training", "basis", "rom", "eqp", "prediction", "studies", "timing_repeats",
                 "newton"},
             "config");
  if (j.contains("mesh")) {
    const json& m = j.at("mesh");
    check_keys(m, {"n_per_side", "components"}, "mesh");
    read(m, "n_per_side", c.n_per_side);
    if (m.contains("components")) {
      c.components.clear();
      for (const json& e : m.at("components")) {
        check_keys(e, {"name", "shape", "half_width", "path"}, "mesh.components");
        ComponentSpec spec;
        read(e, "name", spec.name);
        read(e, "shape", spec.shape);
        read(e, "half_width", spec.half_width);
        read(e, "path", spec.path);
        require(!spec.name.empty(), "config: component without a name");
        c.components.push_back(spec);
      }
    }
  }
  read(j, "reynolds", c.reynolds);
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, {"samples", "rows", "cols", "seed"}, "training");
    read(t, "samples", c.train_samples);
    read(t, "rows", c.train_rows);
    read(t, "cols", c.train_cols);
    read(t, "seed", c.train_seed);
  }
  if (j.contains("basis")) {
    const json& b = j.at("basis");
    check_keys(b, {"R_u", "R_p", "Z"}, "basis");
    read(b, "R_u", c.rank_u);
    read(b, "R_p", c.rank_p);
    read(b, "Z", c.supremizers);
  }
  if (j.contains("rom")) {
    const json& r = j.at("rom");
    check_keys(r, {"backend", "stokes_initial"}, "rom");
    if (r.contains("backend")) c.backend = parse_backend(r.at("backend").get<std::string>());
    read(r, "stokes_initial", c.rom_stokes_initial);
  }
  if (j.contains("eqp")) {
    const json& e = j.at("eqp");
    check_keys(e, {"enabled", "epsilon"}, "eqp");
    read(e, "enabled", c.eqp_enabled);
    if (e.contains("epsilon") && !e.at("epsilon").is_null()) c.eqp_epsilon = e.at("epsilon").get<double>();
  }
  if (j.contains("prediction")) {
    const json& p = j.at("prediction");
    check_keys(p, {"sizes", "n_test", "seed", "fixed_inflow", "identity_check"}, "prediction");
    read(p, "sizes", c.sizes);
    read(p, "n_test", c.n_test);
    read(p, "seed", c.test_seed);
    read(p, "identity_check", c.identity_check);
    if (p.contains("fixed_inflow") && !p.at("fixed_inflow").is_null())
      c.fixed_inflow = p.at("fixed_inflow").get<std::array<double, 2>>();
  }
  if (j.contains("studies")) {
    const json& s = j.at("studies");
    check_keys(s, {"supremizer", "backend"}, "studies");
    if (s.contains("supremizer")) {
      check_keys(s.at("supremizer"), {"size", "Z"}, "studies.supremizer");
      read(s.at("supremizer"), "size", c.ablation_size);
      read(s.at("supremizer"), "Z", c.ablation_supremizers);
    }
    if (s.contains("backend")) {
      check_keys(s.at("backend"), {"size", "R"}, "studies.backend");
      read(s.at("backend"), "size", c.comparison_size);
      read(s.at("backend"), "R", c.comparison_ranks);
    }
  }
  read(j, "timing_repeats", c.timing_repeats);
  if (j.contains("newton")) {
    const json& n = j.at("newton");
    check_keys(n, {"tol_rel", "tol_abs", "max_iter", "line_search"}, "newton");
    read(n, "tol_rel", c.newton.tol_rel);
    read(n, "tol_abs", c.newton.tol_abs);
    read(n, "max_iter", c.newton.max_iter);
    read(n, "line_search", c.newton.line_search);
  }

  require(c.n_per_side >= 2, "config: n_per_side must be at least 2");
  require(!c.components.empty(), "config: component pool is empty");
  require(c.reynolds > 0.0, "config: reynolds must be positive");
  require(c.train_samples >= 0 && c.train_rows >= 1 && c.train_cols >= 1, "config: invalid training layout");
  require(c.rank_u >= 1 && c.rank_p >= 1, "config: basis ranks must be positive");
  require(c.n_test >= 1, "config: n_test must be positive");
  require(c.timing_repeats >= 1, "config: timing_repeats must be positive");
  for (int s : c.sizes) require(s >= 1, "config: grid sizes must be positive");
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json comps = json::array();
  for (const auto& s : c.components) {
    json e{{"name", s.name}, {"shape", s.shape}};
    if (s.shape == "square" || s.shape == "circle") e["half_width"] = s.half_width;
    if (s.shape == "file") e["path"] = s.path;
    comps.push_back(e);
  }
  json j;
  j["mesh"] = {{"n_per_side", c.n_per_side}, {"components", comps}};
  j["reynolds"] = c.reynolds;
  j["training"] = {{"samples", c.train_samples}, {"rows", c.train_rows}, {"cols", c.train_cols}, {"seed", c.train_seed}};
  j["basis"] = {{"R_u", c.rank_u}, {"R_p", c.rank_p}, {"Z", c.supremizers}};
  j["rom"] = {{"backend", backend_label(c.backend)}, {"stokes_initial", c.rom_stokes_initial}};
  j["eqp"] = {{"enabled", c.eqp_enabled}, {"epsilon", c.eqp_epsilon ? json(*c.eqp_epsilon) : json(nullptr)}};
  j["prediction"] = {{"sizes", c.sizes},
                     {"n_test", c.n_test},
                     {"seed", c.test_seed},
                     {"fixed_inflow", c.fixed_inflow ? json(*c.fixed_inflow) : json(nullptr)},
                     {"identity_check", c.identity_check}};
  j["studies"] = {{"supremizer", {{"size", c.ablation_size}, {"Z", c.ablation_supremizers}}},
                  {"backend", {{"size", c.comparison_size}, {"R", c.comparison_ranks}}}};
  j["timing_repeats"] = c.timing_repeats;
  j["newton"] = {{"tol_rel", c.newton.tol_rel},
                 {"tol_abs", c.newton.tol_abs},
                 {"max_iter", c.newton.max_iter},
                 {"line_search", c.newton.line_search}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed config " + path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw Error("invalid config " + path.string() + ": " + e.what());
  }
}

MeshRegistry build_meshes(const ExperimentConfig& config) {
  MeshRegistry registry;
  for (const auto& spec : config.components) {
    require(registry.count(spec.name) == 0, "duplicate component name '" + spec.name + "'");
    registry.emplace(spec.name, std::make_shared<const ComponentMesh>(make_mesh(spec, config.n_per_side)));
  }
  return registry;
}

ProblemInstance random_problem(const ExperimentConfig& config, int rows, int cols, std::uint64_t seed,
                               std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const auto names = config.component_names();
  std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
  ProblemInstance p;
  p.grid = uniform_grid(rows, cols, names.front(), config.viscosity());
  for (auto& cell : p.grid.cell_component) cell = names[pick(rng)];
  p.inflow = sample_inflow(rng);
  if (config.fixed_inflow) {
    p.inflow.mean = *config.fixed_inflow;
    p.inflow.amplitude = {0.0, 0.0};
  }
  p.inflow.seed = index;
  p.grid.bc = bc_from_sample(p.inflow);
  return p;
}

SnapshotReport generate_snapshots(const ExperimentConfig& config, const ComponentLibrary& library, std::ostream* log) {
  SnapshotReport report;
  for (int i = 0; i < config.train_samples; ++i) {
    const ProblemInstance p =
        random_problem(config, config.train_rows, config.train_cols, config.train_seed, 0, static_cast<std::uint64_t>(i));
    ++report.attempted;
    try {
      const GlobalFomSystem system(p.grid, library);
      const FomSolution sol = solve_newton(system, config.newton);
      if (!sol.report.converged) {
        if (log) *log << "sample " << i << ": Newton did not converge (residual " << sol.report.final_residual()
                      << "), skipped\n";
        continue;
      }
      ++report.converged;
      report.max_residual = std::max(report.max_residual, sol.report.final_residual());
      for (int m = 0; m < p.grid.num_cells(); ++m) {
        auto& set = report.sets[p.grid.cell_component[m]];
        set.component = p.grid.cell_component[m];
        set.append(system.cell_velocity(sol.state, m), system.cell_pressure(sol.state, m), static_cast<std::uint64_t>(i));
      }
    } catch (const Error& e) {
      if (log) *log << "sample " << i << ": " << e.what() << ", skipped\n";
    }
  }
  if (log)
    *log << "snapshots: " << report.converged << "/" << report.attempted << " samples converged\n";
  return report;
}

TrainedModel train_model(const ComponentLibrary& library, const std::map<std::string, SnapshotSet>& snapshots,
                         int rank_u, int rank_p, int supremizers, bool tensors, bool eqp,
                         std::optional<double> eqp_epsilon) {
  TrainedModel model;
  for (const auto& [name, set] : snapshots)
    model.bases.emplace(name, build_basis(set, library.component(name), rank_u, rank_p, supremizers));
  model.reduced = project_linear(library, model.bases, tensors);
  if (eqp) {
    for (const auto& [name, set] : snapshots) {
      const PodBasis& basis = model.bases.at(name);
      const auto& space = *library.component(name).space;
      const double eps = eqp_epsilon ? *eqp_epsilon : basis.velocity_missing_energy();
      const EqpManifest manifest = build_manifest(space, basis.velocity, set.velocity, eps);
      model.rules.emplace(name, train_rule(space, manifest));
      model.full_points[name] = space.quadrature_points().size();
    }
    bind_rules(model);
  }
  return model;
}

void bind_rules(TrainedModel& model) {
  for (auto& [name, rule] : model.rules) {
    const ReducedComponent& rc = model.reduced.component(name);
    rule.bind(*rc.fom->space, rc.basis.velocity);
  }
}

void save_trained(const TrainedModel& model, const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta;
  meta["config"] = config_to_json(config);
  meta["eqp_basis"] = "enriched";
  json comps = json::object();
  for (const auto& [name, basis] : model.bases) {
    save_basis(basis, dir / ("basis_" + name + ".bin"));
    json c{{"R_u", basis.rank_u},
           {"R_p", basis.rank_p},
           {"Z", basis.supremizers},
           {"Z_dropped", basis.supremizers_dropped},
           {"missing_energy_u", basis.velocity_missing_energy()},
           {"missing_energy_p", basis.pressure_missing_energy()},
           {"snapshots", basis.sigma_u.size()}};
    const ReducedComponent& rc = model.reduced.component(name);
    if (rc.tensor.rank() > 0) {
      save_tensor(rc.tensor, dir / ("tensor_" + name + ".bin"));
      c["tensor"] = true;
    }
    if (auto it = model.rules.find(name); it != model.rules.end()) {
      save_rule(it->second, dir / ("eqp_" + name + ".bin"));
      c["eqp_points"] = it->second.size();
      c["eqp_epsilon"] = it->second.epsilon;
      c["eqp_residual"] = it->second.residual;
      if (auto f = model.full_points.find(name); f != model.full_points.end()) c["quadrature_points"] = f->second;
    }
    comps[name] = c;
  }
  meta["components"] = comps;
  std::ofstream out(dir / "model.json");
  require(out.good(), "cannot write " + (dir / "model.json").string());
  out << meta.dump(2) << '\n';
}

TrainedModel load_trained(const ComponentLibrary& library, const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  require(in.good(), "no trained model in " + dir.string() + " (run train first)");
  json meta;
  in >> meta;
  TrainedModel model;
  for (const auto& [name, info] : meta.at("components").items())
    model.bases.emplace(name, load_basis(dir / ("basis_" + name + ".bin")));
  model.reduced = project_linear(library, model.bases, false);
  for (auto& [name, rc] : model.reduced.components) {
    const auto tensor_path = dir / ("tensor_" + name + ".bin");
    if (std::filesystem::exists(tensor_path)) {
      rc.tensor = load_tensor(tensor_path);
      require(rc.tensor.rank() == rc.velocity_dim(), tensor_path.string() + ": rank does not match the basis");
    }
    const auto rule_path = dir / ("eqp_" + name + ".bin");
    if (std::filesystem::exists(rule_path)) model.rules.emplace(name, load_rule(rule_path));
  }
  bind_rules(model);
  return model;
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> columns = {
      "study",          "row",           "grid",           "parameter",
      "case",           "backend",       "fom_dofs",       "rom_dim",
      "fom_residual",   "fom_converged", "rom_converged",  "rom_newton_iterations",
      "velocity_error", "velocity_error_ci95",             "pressure_error",
      "pressure_error_ci95",             "backend_difference",                 "eqp_points",
      "fom_assembly_s", "fom_time_s",    "fom_time_s_ci95", "rom_assembly_s",
      "rom_assembly_s_ci95",             "rom_solve_s",    "rom_solve_s_ci95", "speedup"};
  return columns;
}

bool is_timing_column(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with("_s") || ends_with("_s_ci95") || name == "speedup";
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> row_fields(const ResultRow& r) {
  return {r.study,
          r.row,
          std::to_string(r.grid),
          r.parameter,
          r.case_index < 0 ? std::string() : std::to_string(r.case_index),
          r.backend,
          std::to_string(r.fom_dofs),
          std::to_string(r.rom_dim),
          num(r.fom_residual),
          num(r.fom_converged),
          num(r.rom_converged),
          num(r.rom_newton_iterations),
          num(r.velocity_error),
          num(r.velocity_error_ci95),
          num(r.pressure_error),
          num(r.pressure_error_ci95),
          num(r.backend_difference),
          num(r.eqp_points),
          num(r.fom_assembly_s),
          num(r.fom_time_s),
          num(r.fom_time_s_ci95),
          num(r.rom_assembly_s),
          num(r.rom_assembly_s_ci95),
          num(r.rom_solve_s),
          num(r.rom_solve_s_ci95),
          num(r.speedup)};
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) out << (k ? "," : "") << csv_escape(fields[k]);
    out << "\r\n";
  };
  line(result_columns());
  for (const auto& r : rows) line(row_fields(r));
  require(out.good(), "write failed on " + path.string());
}

MeanCi mean_ci95(const std::vector<double>& values) {
  MeanCi out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() < 2) return out;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  var /= n - 1.0;
  const boost::math::students_t dist(n - 1.0);
  out.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * std::sqrt(var / n);
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    require(x[k] > 0.0 && y[k] > 0.0, "loglog_slope needs positive data");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  require(denom > 0.0, "loglog_slope needs distinct abscissae");
  return (n * sxy - sx * sy) / denom;
}

namespace {

/// A solved FOM reference for one test problem.
struct FomCase {
  ProblemInstance problem;
  std::unique_ptr<GlobalFomSystem> system;
  FomSolution solution;
  double assembly_s = 0.0;
  double time_s = 0.0;
};

FomCase solve_fom_case(const ExperimentConfig& config, const ComponentLibrary& library, ProblemInstance problem) {
  FomCase c;
  c.problem = std::move(problem);
  std::vector<double> assembly, solve;
  for (int k = 0; k < config.timing_repeats; ++k) {
    Stopwatch a;
    auto system = std::make_unique<GlobalFomSystem>(c.problem.grid, library);
    assembly.push_back(a.seconds());
    Stopwatch s;
    FomSolution sol = solve_newton(*system, config.newton);
    solve.push_back(s.seconds());
    if (k == 0) {
      c.system = std::move(system);
      c.solution = std::move(sol);
    }
  }
  c.assembly_s = median(assembly);
  c.time_s = median(solve);
  return c;
}

struct RomCase {
  RomSolution solution;
  Vector lifted;
  FieldErrors errors;
  Index dim = 0;
  double assembly_s = 0.0;
  double solve_s = 0.0;
};

RomCase solve_rom_case(const ExperimentConfig& config, const FomCase& fom, const TrainedModel& model,
                       AdvectionBackend backend) {
  RomCase c;
  std::vector<double> assembly, solve;
  for (int k = 0; k < config.timing_repeats; ++k) {
    Stopwatch a;
    const GlobalRomSystem rom(fom.problem.grid, model.reduced, backend, &model.rules);
    assembly.push_back(a.seconds());
    Vector initial;
    if (config.rom_stokes_initial) initial = project_state(rom, *fom.system, solve_stokes(*fom.system).state);
    Stopwatch s;
    RomSolution sol = solve_rom_newton(rom, config.newton, config.rom_stokes_initial ? &initial : nullptr);
    solve.push_back(s.seconds());
    if (k == 0) {
      c.dim = rom.size();
      c.lifted = lift(rom, *fom.system, sol.state);
      c.errors = relative_errors(*fom.system, fom.solution.state, c.lifted);
      c.solution = std::move(sol);
    }
  }
  c.assembly_s = median(assembly);
  c.solve_s = median(solve);
  return c;
}

ResultRow case_row(const std::string& study, int grid, const std::string& parameter, int index,
                   AdvectionBackend backend, const FomCase& fom, const RomCase& rom) {
  ResultRow r;
  r.study = study;
  r.row = "case";
  r.grid = grid;
  r.parameter = parameter;
  r.case_index = index;
  r.backend = backend_label(backend);
  r.fom_dofs = fom.system->size();
  r.rom_dim = rom.dim;
  r.fom_residual = fom.solution.report.final_residual();
  r.fom_converged = fom.solution.report.converged ? 1.0 : 0.0;
  r.rom_converged = rom.solution.report.converged ? 1.0 : 0.0;
  r.rom_newton_iterations = rom.solution.report.newton_iterations;
  r.velocity_error = rom.errors.velocity;
  r.pressure_error = rom.errors.pressure;
  r.fom_assembly_s = fom.assembly_s;
  r.fom_time_s = fom.time_s;
  r.rom_assembly_s = rom.assembly_s;
  r.rom_solve_s = rom.solve_s;
  r.speedup = rom.solve_s > 0.0 ? fom.time_s / rom.solve_s : 0.0;
  return r;
}

ResultRow summarize(const std::vector<ResultRow>& cases) {
  require(!cases.empty(), "summary of no cases");
  ResultRow s = cases.front();
  s.row = "summary";
  s.case_index = -1;
  auto collect = [&](double ResultRow::*field) {
    std::vector<double> v;
    for (const auto& c : cases) v.push_back(c.*field);
    return mean_ci95(v);
  };
  double max_residual = 0.0;
  for (const auto& c : cases) max_residual = std::max(max_residual, c.fom_residual);
  s.fom_residual = max_residual;
  s.fom_converged = collect(&ResultRow::fom_converged).mean;
  s.rom_converged = collect(&ResultRow::rom_converged).mean;
  s.rom_newton_iterations = collect(&ResultRow::rom_newton_iterations).mean;
  s.backend_difference = collect(&ResultRow::backend_difference).mean;
  s.eqp_points = collect(&ResultRow::eqp_points).mean;
  const MeanCi ve = collect(&ResultRow::velocity_error), pe = collect(&ResultRow::pressure_error);
  s.velocity_error = ve.mean;
  s.velocity_error_ci95 = ve.half_width;
  s.pressure_error = pe.mean;
  s.pressure_error_ci95 = pe.half_width;
  s.fom_assembly_s = collect(&ResultRow::fom_assembly_s).mean;
  const MeanCi ft = collect(&ResultRow::fom_time_s), ra = collect(&ResultRow::rom_assembly_s),
               rs = collect(&ResultRow::rom_solve_s);
  s.fom_time_s = ft.mean;
  s.fom_time_s_ci95 = ft.half_width;
  s.rom_assembly_s = ra.mean;
  s.rom_assembly_s_ci95 = ra.half_width;
  s.rom_solve_s = rs.mean;
  s.rom_solve_s_ci95 = rs.half_width;
  s.speedup = rs.mean > 0.0 ? ft.mean / rs.mean : 0.0;
  return s;
}

double model_points(const TrainedModel& model) {
  double total = 0.0;
  for (const auto& [name, rule] : model.rules) total += static_cast<double>(rule.size());
  return total;
}

std::vector<FomCase> reference_cases(const ExperimentConfig& config, const ComponentLibrary& library, int size,
                                     std::uint64_t stream, std::ostream* log) {
  std::vector<FomCase> cases;
  for (int i = 0; i < config.n_test; ++i) {
    cases.push_back(solve_fom_case(config, library,
                                   random_problem(config, size, size, config.test_seed, stream,
                                                  static_cast<std::uint64_t>(i))));
    if (log)
      *log << "  FOM " << size << "x" << size << " case " << i << ": "
           << (cases.back().solution.report.converged ? "converged" : "NOT converged") << " in "
           << cases.back().solution.report.newton_iterations << " iterations, " << cases.back().time_s << " s\n";
  }
  return cases;
}

}  // namespace

std::vector<ResultRow> run_scaling_study(const ExperimentConfig& config, const ComponentLibrary& library,
                                         const TrainedModel& model, std::ostream* log) {
  std::vector<ResultRow> rows;
  std::vector<double> cells, solve_times;
  for (int size : config.sizes) {
    if (log) *log << "scaling: grid " << size << "x" << size << '\n';
    const std::vector<FomCase> fom = reference_cases(config, library, size, 1000 + size, log);
    std::vector<ResultRow> cases;
    for (int i = 0; i < config.n_test; ++i) {
      const RomCase rom = solve_rom_case(config, fom[i], model, config.backend);
      ResultRow r = case_row("scaling", size, "R_u=" + std::to_string(config.rank_u), i, config.backend, fom[i], rom);
      r.eqp_points = config.backend == AdvectionBackend::Eqp ? model_points(model) : 0.0;
      if (log)
        *log << "  ROM case " << i << ": velocity error " << r.velocity_error << ", pressure error " << r.pressure_error
             << (r.rom_converged > 0 ? "" : " (NOT converged)") << '\n';
      cases.push_back(r);
    }
    rows.insert(rows.end(), cases.begin(), cases.end());
    const ResultRow summary = summarize(cases);
    rows.push_back(summary);
    cells.push_back(static_cast<double>(size) * size);
    solve_times.push_back(summary.rom_solve_s);
  }
  if (cells.size() >= 2 && std::all_of(solve_times.begin(), solve_times.end(), [](double t) { return t > 0.0; })) {
    ResultRow fit;
    fit.study = "scaling";
    fit.row = "fit";
    fit.parameter = "rom_solve_s_vs_cells_loglog_slope";
    fit.backend = backend_label(config.backend);
    fit.rom_solve_s = loglog_slope(cells, solve_times);
    rows.push_back(fit);
  }
  if (config.identity_check) {
    const int size = config.train_rows;
    const FomCase fom = solve_fom_case(config, library, random_problem(config, size, size, config.test_seed, 4000, 0));
    TrainedModel identity;
    for (const auto& name : config.component_names())
      identity.bases.emplace(name, identity_basis(library.component(name), name));
    identity.reduced = project_linear(library, identity.bases, false);
    for (const auto& name : config.component_names())
      identity.rules.emplace(name, full_rule(*library.component(name).space));
    bind_rules(identity);
    const RomCase rom = solve_rom_case(config, fom, identity, AdvectionBackend::Eqp);
    ResultRow r = case_row("scaling", size, "identity", 0, AdvectionBackend::Eqp, fom, rom);
    r.eqp_points = model_points(identity);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ResultRow> run_supremizer_ablation(const ExperimentConfig& config, const ComponentLibrary& library,
                                               const std::map<std::string, SnapshotSet>& snapshots,
                                               std::ostream* log) {
  std::vector<int> counts = config.ablation_supremizers;
  if (counts.empty()) counts = {0, config.rank_p / 2, config.rank_p};
  const int size = config.ablation_size;
  if (log) *log << "supremizer ablation: grid " << size << "x" << size << '\n';
  const std::vector<FomCase> fom = reference_cases(config, library, size, 2000 + size, log);
  std::vector<ResultRow> rows;
  for (int z : counts) {
    const TrainedModel model = train_model(library, snapshots, config.rank_u, config.rank_p, z, true, false, {});
    std::vector<ResultRow> cases;
    for (int i = 0; i < config.n_test; ++i) {
      const RomCase rom = solve_rom_case(config, fom[i], model, AdvectionBackend::Tensorial);
      cases.push_back(case_row("supremizer", size, "Z=" + std::to_string(z), i, AdvectionBackend::Tensorial, fom[i], rom));
    }
    rows.insert(rows.end(), cases.begin(), cases.end());
    rows.push_back(summarize(cases));
    if (log)
      *log << "  Z=" << z << ": mean velocity error " << rows.back().velocity_error << ", mean pressure error "
           << rows.back().pressure_error << '\n';
  }
  return rows;
}

std::vector<ResultRow> run_backend_comparison(const ExperimentConfig& config, const ComponentLibrary& library,
                                              const std::map<std::string, SnapshotSet>& snapshots,
                                              std::ostream* log) {
  const int size = config.comparison_size;
  if (log) *log << "backend comparison: grid " << size << "x" << size << '\n';
  const std::vector<FomCase> fom = reference_cases(config, library, size, 3000 + size, log);
  std::vector<ResultRow> rows;
  std::vector<double> ranks, tensor_times, eqp_times;
  for (int rank : config.comparison_ranks) {
    const TrainedModel model = train_model(library, snapshots, rank, rank, rank, true, true, config.eqp_epsilon);
    double eps = 0.0;
    for (const auto& [name, rule] : model.rules) eps = std::max(eps, rule.epsilon);
    std::vector<ResultRow> tensorial, eqp;
    for (int i = 0; i < config.n_test; ++i) {
      const RomCase a = solve_rom_case(config, fom[i], model, AdvectionBackend::Tensorial);
      const RomCase b = solve_rom_case(config, fom[i], model, AdvectionBackend::Eqp);
      const std::string param = "R=" + std::to_string(rank);
      tensorial.push_back(case_row("backend", size, param, i, AdvectionBackend::Tensorial, fom[i], a));
      ResultRow rb = case_row("backend", size, param, i, AdvectionBackend::Eqp, fom[i], b);
      rb.eqp_points = model_points(model);
      rb.backend_difference = relative_field_errors(*fom[i].system, a.lifted, b.lifted).velocity;
      eqp.push_back(rb);
    }
    rows.insert(rows.end(), tensorial.begin(), tensorial.end());
    rows.insert(rows.end(), eqp.begin(), eqp.end());
    rows.push_back(summarize(tensorial));
    rows.push_back(summarize(eqp));
    ranks.push_back(rank);
    tensor_times.push_back(rows[rows.size() - 2].rom_solve_s);
    eqp_times.push_back(rows.back().rom_solve_s);
    if (log)
      *log << "  R=" << rank << ": eps_EQP " << eps << ", mean backend difference " << rows.back().backend_difference
           << ", tensorial error " << rows[rows.size() - 2].velocity_error << ", EQP error "
           << rows.back().velocity_error << '\n';
  }
  if (ranks.size() >= 2) {
    for (auto [label, times] : {std::pair{"tensorial", &tensor_times}, std::pair{"eqp", &eqp_times}}) {
      if (!std::all_of(times->begin(), times->end(), [](double t) { return t > 0.0; })) continue;
      ResultRow fit;
      fit.study = "backend";
      fit.row = "fit";
      fit.grid = size;
      fit.parameter = "rom_solve_s_vs_R_loglog_slope";
      fit.backend = label;
      fit.rom_solve_s = loglog_slope(ranks, *times);
      rows.push_back(fit);
    }
  }
  return rows;
}

}  // namespace crom
