#include "crom/fom.hpp"

#include "crom/binary_io.hpp"
#include "crom/sparse_lu.hpp"
#include "crom/timer.hpp"

#include <cmath>
#include <fstream>

namespace crom {

namespace {

void add_block(std::vector<Triplet>& out, const SparseMatrix& block, Index row_offset, Index col_offset,
               bool also_transpose = false) {
  for (Index k = 0; k < block.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(block, k); it; ++it) {
      out.emplace_back(row_offset + it.row(), col_offset + it.col(), it.value());
      if (also_transpose) out.emplace_back(col_offset + it.col(), row_offset + it.row(), it.value());
    }
}

}  // namespace

SubdomainBoundaryData subdomain_boundary(const GridConfig& grid, int m) {
  SubdomainBoundaryData data;
  const int col = m % grid.cols, row = m / grid.cols;
  data.offset = grid.cell_origin(m);
  if (col == 0) data.sides[tag_index(BoundaryTag::Left)] = &grid.side_bc(BoundaryTag::Left);
  if (col == grid.cols - 1) data.sides[tag_index(BoundaryTag::Right)] = &grid.side_bc(BoundaryTag::Right);
  if (row == 0) data.sides[tag_index(BoundaryTag::Bottom)] = &grid.side_bc(BoundaryTag::Bottom);
  if (row == grid.rows - 1) data.sides[tag_index(BoundaryTag::Top)] = &grid.side_bc(BoundaryTag::Top);
  return data;
}

ComponentLibrary::ComponentLibrary(const MeshRegistry& meshes, double viscosity)
    : viscosity_(viscosity), meshes_(meshes) {
  require(viscosity > 0.0, "viscosity must be positive");
  require(!meshes.empty(), "component registry is empty");
  for (const auto& [name, mesh] : meshes) {
    auto space = std::make_shared<const TaylorHoodSpace>(mesh);
    components_.emplace(name, assemble_component(space, viscosity));
  }
  const double penalty = penalty_parameter(viscosity);
  for (const auto& [name_m, ops_m] : components_)
    for (const auto& [name_n, ops_n] : components_)
      for (Orientation o : {Orientation::Horizontal, Orientation::Vertical})
        interfaces_.emplace(InterfaceKey{name_m, name_n, o},
                            assemble_interface_blocks(*ops_m.space, *ops_n.space, o, viscosity, penalty));
}

const ComponentOperators& ComponentLibrary::component(const std::string& name) const {
  auto it = components_.find(name);
  require(it != components_.end(), "missing operators for component '" + name + "'");
  return it->second;
}

const InterfaceBlocks& ComponentLibrary::interface(const InterfaceKey& key) const {
  auto it = interfaces_.find(key);
  require(it != interfaces_.end(), "missing interface operator for " + key.component_m + "/" + key.component_n);
  return it->second;
}

std::vector<std::string> ComponentLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, ops] : components_) out.push_back(name);
  return out;
}

double dirichlet_net_flux(const GridConfig& grid, const ComponentLibrary& library) {
  double flux = 0.0;
  for (int m = 0; m < grid.num_cells(); ++m) {
    const auto& ops = library.component(grid.cell_component[m]);
    const auto data = subdomain_boundary(grid, m);
    for (BoundaryTag side : kSides) {
      const auto* bc = data.sides[tag_index(side)];
      if (bc == nullptr || !bc->is_dirichlet()) continue;
      const auto& load = ops.loads[tag_index(side)];
      const Vector g = sample_velocity(load, bc->velocity, data.offset);
      // Column sums of the pressure load are the quadrature weights times n.
      const Vector ones = Vector::Ones(ops.num_pressure_dofs());
      flux += ones.dot(load.dirichlet_pressure * g);
    }
  }
  return flux;
}

GlobalFomSystem::GlobalFomSystem(GridConfig grid, const ComponentLibrary& library)
    : grid_(std::move(grid)), library_(&library) {
  Stopwatch timer;
  interfaces_ = build_interfaces(grid_, library.meshes());
  const int M = grid_.num_cells();
  cells_.resize(M);
  u_offset_.resize(M);
  p_offset_.resize(M);
  for (int m = 0; m < M; ++m) {
    cells_[m] = &library.component(grid_.cell_component[m]);
    u_offset_[m] = num_u_;
    num_u_ += cells_[m]->num_velocity_dofs();
  }
  for (int m = 0; m < M; ++m) {
    p_offset_[m] = num_u_ + num_p_;
    num_p_ += cells_[m]->num_pressure_dofs();
  }
  mean_constraint_ = grid_.mean_zero_pressure || !grid_.has_neumann();
  size_ = num_u_ + num_p_ + (mean_constraint_ ? 1 : 0);

  if (!grid_.has_neumann()) {
    double scale = 0.0;
    for (int m = 0; m < M; ++m) {
      const auto data = subdomain_boundary(grid_, m);
      for (BoundaryTag side : kSides) {
        const auto* bc = data.sides[tag_index(side)];
        if (bc == nullptr) continue;
        const auto& load = cells_[m]->loads[tag_index(side)];
        scale += sample_velocity(load, bc->velocity, data.offset).cwiseAbs().sum() / std::max(1, load.num_points());
      }
    }
    require(std::abs(dirichlet_net_flux(grid_, library)) <= 1e-10 * std::max(1.0, scale),
            "incompatible Dirichlet data: net boundary flux must vanish without an outflow boundary");
  }

  std::vector<Triplet> t;
  rhs_ = Vector::Zero(size_);
  for (int m = 0; m < M; ++m) {
    const auto& ops = *cells_[m];
    add_block(t, ops.viscous, u_offset_[m], u_offset_[m]);
    add_block(t, ops.divergence, p_offset_[m], u_offset_[m], true);
    const auto data = subdomain_boundary(grid_, m);
    for (BoundaryTag side : kSides) {
      const auto* bc = data.sides[tag_index(side)];
      if (bc == nullptr || !bc->is_dirichlet()) continue;
      add_block(t, ops.dirichlet[tag_index(side)].viscous, u_offset_[m], u_offset_[m]);
      add_block(t, ops.dirichlet[tag_index(side)].divergence, p_offset_[m], u_offset_[m], true);
    }
    const auto& wall = ops.dirichlet[tag_index(BoundaryTag::Obstacle)];
    add_block(t, wall.viscous, u_offset_[m], u_offset_[m]);
    add_block(t, wall.divergence, p_offset_[m], u_offset_[m], true);

    const RhsVectors rhs = assemble_rhs(ops, data, grid_.forcing);
    rhs_.segment(u_offset_[m], ops.num_velocity_dofs()) += rhs.forcing + rhs.velocity;
    rhs_.segment(p_offset_[m], ops.num_pressure_dofs()) += rhs.pressure;
  }
  for (const auto& entry : interfaces_.entries) {
    const auto& blocks = library.interface(
        InterfaceKey{grid_.cell_component[entry.m], grid_.cell_component[entry.n], entry.orientation});
    const Index um = u_offset_[entry.m], un = u_offset_[entry.n];
    const Index pm = p_offset_[entry.m], pn = p_offset_[entry.n];
    add_block(t, blocks.viscous_mm, um, um);
    add_block(t, blocks.viscous_mn, um, un);
    add_block(t, blocks.viscous_nm, un, um);
    add_block(t, blocks.viscous_nn, un, un);
    add_block(t, blocks.divergence_mm, pm, um, true);
    add_block(t, blocks.divergence_mn, pm, un, true);
    add_block(t, blocks.divergence_nm, pn, um, true);
    add_block(t, blocks.divergence_nn, pn, un, true);
  }
  if (mean_constraint_) {
    const Index row = size_ - 1;
    for (int m = 0; m < M; ++m) {
      const Vector w = cells_[m]->space->pressure_mass() * Vector::Ones(cells_[m]->num_pressure_dofs());
      for (Index i = 0; i < w.size(); ++i) {
        t.emplace_back(row, p_offset_[m] + i, w[i]);
        t.emplace_back(p_offset_[m] + i, row, w[i]);
      }
    }
  }
  linear_.resize(size_, size_);
  linear_.setFromTriplets(t.begin(), t.end());
  assembly_seconds_ = timer.seconds();
}

Vector GlobalFomSystem::advection(const Vector& state) const {
  Vector out = Vector::Zero(size_);
  for (int m = 0; m < grid_.num_cells(); ++m) {
    const Index n = cells_[m]->num_velocity_dofs();
    out.segment(u_offset_[m], n) = cells_[m]->advection.value(state.segment(u_offset_[m], n));
  }
  return out;
}

Vector GlobalFomSystem::residual(const Vector& state) const {
  require(state.size() == size_, "state size mismatch");
  return linear_ * state + advection(state) - rhs_;
}

SparseMatrix GlobalFomSystem::jacobian(const Vector& state) const {
  std::vector<Triplet> t;
  for (int m = 0; m < grid_.num_cells(); ++m) {
    const Index n = cells_[m]->num_velocity_dofs();
    cells_[m]->advection.jacobian_triplets(state.segment(u_offset_[m], n), u_offset_[m], t);
  }
  SparseMatrix jc(size_, size_);
  jc.setFromTriplets(t.begin(), t.end());
  SparseMatrix j = linear_ + jc;
  j.makeCompressed();
  return j;
}

Vector GlobalFomSystem::cell_velocity(const Vector& state, int m) const {
  return state.segment(u_offset_[m], cells_[m]->num_velocity_dofs());
}

Vector GlobalFomSystem::cell_pressure(const Vector& state, int m) const {
  return state.segment(p_offset_[m], cells_[m]->num_pressure_dofs());
}

FomSolution solve_stokes(const GlobalFomSystem& system) {
  Stopwatch total;
  FomSolution sol;
  SparseDirectSolver solver;
  SparseMatrix a = system.linear_operator();
  a.makeCompressed();
  Stopwatch factor;
  solver.factorize(a);
  sol.state = solver.solve(system.rhs());
  sol.report.factorization_seconds = factor.seconds();
  const double r = (a * sol.state - system.rhs()).norm();
  sol.report.residual_history = {r};
  sol.report.converged = r <= 1e-10 * std::max(1.0, system.rhs().norm());
  sol.report.total_seconds = total.seconds();
  sol.report.assembly_seconds = system.assembly_seconds();
  return sol;
}

FomSolution solve_newton(const GlobalFomSystem& system, const NewtonOptions& options, const Vector* initial) {
  Stopwatch total;
  FomSolution sol;
  double setup_factor = 0.0;
  if (initial != nullptr) {
    require(initial->size() == system.size(), "initial state size mismatch");
    sol.state = *initial;
  } else {
    FomSolution stokes = solve_stokes(system);
    sol.state = std::move(stokes.state);
    setup_factor = stokes.report.factorization_seconds;
  }
  const NonlinearProblem problem{[&](const Vector& x) { return system.residual(x); },
                                 [&](const Vector& x) { return system.jacobian(x); }};
  sol.report = newton_solve(problem, sol.state, options);
  sol.report.factorization_seconds += setup_factor;
  sol.report.assembly_seconds += system.assembly_seconds();
  sol.report.total_seconds = total.seconds();
  return sol;
}

FieldErrors relative_field_errors(const GlobalFomSystem& system, const Vector& reference, const Vector& candidate) {
  double eu = 0.0, nu = 0.0, ep = 0.0, np = 0.0;
  for (int m = 0; m < system.grid().num_cells(); ++m) {
    const auto& space = *system.cell_operators(m).space;
    const Vector ur = system.cell_velocity(reference, m);
    const Vector du = system.cell_velocity(candidate, m) - ur;
    const Vector pr = system.cell_pressure(reference, m);
    const Vector dp = system.cell_pressure(candidate, m) - pr;
    eu += du.dot(space.velocity_mass() * du);
    nu += ur.dot(space.velocity_mass() * ur);
    ep += dp.dot(space.pressure_mass() * dp);
    np += pr.dot(space.pressure_mass() * pr);
  }
  auto ratio = [](double e, double n) { return n > 0.0 ? std::sqrt(e / n) : std::sqrt(e); };
  return {ratio(eu, nu), ratio(ep, np)};
}

MmsStudy mms_convergence(const ManufacturedSolution& exact, int rows, int cols, double viscosity,
                         const std::vector<int>& resolutions, const NewtonOptions& options) {
  MmsStudy study;
  for (int n : resolutions) {
    MeshRegistry meshes{{"empty", std::make_shared<const ComponentMesh>(generate_empty_mesh(n))}};
    ComponentLibrary library(meshes, viscosity);
    GridConfig grid = uniform_grid(rows, cols, "empty", viscosity);
    for (auto& b : grid.bc) b = BoundaryCondition::dirichlet(exact.velocity);
    grid.forcing = exact.forcing;
    GlobalFomSystem system(grid, library);
    const FomSolution sol = solve_newton(system, options);

    double area = 0.0, p_mean = 0.0;
    for (int m = 0; m < grid.num_cells(); ++m) {
      for (const auto& qp : system.cell_operators(m).space->quadrature_points()) {
        area += qp.weight;
        p_mean += qp.weight * exact.pressure(qp.x + grid.cell_origin(m));
      }
    }
    p_mean /= area;
    const auto shifted = [&](const Point2& x) { return exact.pressure(x) - p_mean; };
    double eu = 0.0, ep = 0.0;
    for (int m = 0; m < grid.num_cells(); ++m) {
      const auto& space = *system.cell_operators(m).space;
      eu += std::pow(velocity_l2_error(space, system.cell_velocity(sol.state, m), exact.velocity, grid.cell_origin(m)), 2);
      ep += std::pow(pressure_l2_error(space, system.cell_pressure(sol.state, m), shifted, grid.cell_origin(m)), 2);
    }
    study.resolutions.push_back(n);
    study.velocity_errors.push_back(std::sqrt(eu));
    study.pressure_errors.push_back(std::sqrt(ep));
    study.converged.push_back(sol.report.converged);
  }
  for (std::size_t k = 1; k < study.resolutions.size(); ++k) {
    const double ratio = std::log(double(study.resolutions[k]) / study.resolutions[k - 1]);
    study.velocity_orders.push_back(std::log(study.velocity_errors[k - 1] / study.velocity_errors[k]) / ratio);
    study.pressure_orders.push_back(std::log(study.pressure_errors[k - 1] / study.pressure_errors[k]) / ratio);
  }
  return study;
}

void save_fom_solution(const GlobalFomSystem& system, const Vector& state, const std::filesystem::path& path) {
  require(state.size() == system.size(), "state size mismatch");
  BinaryWriter w(path, "CROMSOL1");
  const int M = system.grid().num_cells();
  w.u64(static_cast<std::uint64_t>(M));
  w.u64(static_cast<std::uint64_t>(system.num_velocity_dofs()));
  w.u64(static_cast<std::uint64_t>(system.num_pressure_dofs()));
  for (int m = 0; m < M; ++m) {
    w.u64(static_cast<std::uint64_t>(system.cell_operators(m).num_velocity_dofs()));
    w.u64(static_cast<std::uint64_t>(system.cell_operators(m).num_pressure_dofs()));
  }
  w.f64_array(state.data(), static_cast<std::size_t>(system.num_velocity_dofs() + system.num_pressure_dofs()));
  w.finish();
}

Vector load_fom_solution(const GlobalFomSystem& system, const std::filesystem::path& path) {
  BinaryReader r(path, "CROMSOL1");
  const int M = system.grid().num_cells();
  require(r.u64() == static_cast<std::uint64_t>(M), path.string() + ": subdomain count mismatch");
  require(r.u64() == static_cast<std::uint64_t>(system.num_velocity_dofs()) &&
              r.u64() == static_cast<std::uint64_t>(system.num_pressure_dofs()),
          path.string() + ": dof count mismatch");
  for (int m = 0; m < M; ++m) {
    require(r.u64() == static_cast<std::uint64_t>(system.cell_operators(m).num_velocity_dofs()) &&
                r.u64() == static_cast<std::uint64_t>(system.cell_operators(m).num_pressure_dofs()),
            path.string() + ": subdomain layout mismatch");
  }
  Vector state = Vector::Zero(system.size());
  r.f64_array(state.data(), static_cast<std::size_t>(system.num_velocity_dofs() + system.num_pressure_dofs()));
  return state;
}

void write_vtk(const GlobalFomSystem& system, const Vector& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path.string() + " for writing");
  const auto& grid = system.grid();
  std::size_t npts = 0, ncells = 0;
  for (int m = 0; m < grid.num_cells(); ++m) {
    npts += system.cell_operators(m).space->mesh().num_vertices();
    ncells += system.cell_operators(m).space->mesh().num_triangles();
  }
  out.precision(12);
  out << "# vtk DataFile Version 3.0\ncrom solution\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << npts << " double\n";
  for (int m = 0; m < grid.num_cells(); ++m)
    for (const auto& v : system.cell_operators(m).space->mesh().vertices()) {
      const Point2 x = v + grid.cell_origin(m);
      out << x.x() << ' ' << x.y() << " 0\n";
    }
  out << "CELLS " << ncells << ' ' << 4 * ncells << '\n';
  std::size_t base = 0;
  for (int m = 0; m < grid.num_cells(); ++m) {
    const auto& mesh = system.cell_operators(m).space->mesh();
    for (const auto& t : mesh.triangles()) out << "3 " << base + t[0] << ' ' << base + t[1] << ' ' << base + t[2] << '\n';
    base += mesh.num_vertices();
  }
  out << "CELL_TYPES " << ncells << '\n';
  for (std::size_t k = 0; k < ncells; ++k) out << "5\n";
  out << "POINT_DATA " << npts << "\nVECTORS velocity double\n";
  for (int m = 0; m < grid.num_cells(); ++m) {
    const auto& space = *system.cell_operators(m).space;
    const Vector u = system.cell_velocity(state, m);
    for (int v = 0; v < space.mesh().num_vertices(); ++v)
      out << u[space.velocity_dof(v, 0)] << ' ' << u[space.velocity_dof(v, 1)] << " 0\n";
  }
  out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int m = 0; m < grid.num_cells(); ++m) {
    const Vector p = system.cell_pressure(state, m);
    for (Index v = 0; v < p.size(); ++v) out << p[v] << '\n';
  }
  require(out.good(), "write failed on " + path.string());
}

}  // namespace crom
