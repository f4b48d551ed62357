#include "crom/rom.hpp"

#include "crom/binary_io.hpp"
#include "crom/block_lu.hpp"
#include "crom/timer.hpp"

#include <cmath>

namespace crom {

std::string backend_label(AdvectionBackend backend) {
  return backend == AdvectionBackend::Tensorial ? "tensorial" : "eqp";
}

AdvectionBackend parse_backend(const std::string& label) {
  if (label == "tensorial") return AdvectionBackend::Tensorial;
  if (label == "eqp") return AdvectionBackend::Eqp;
  throw Error("unknown advection backend '" + label + "' (expected tensorial or eqp)");
}

namespace {

void add_dense(std::vector<Triplet>& out, const Matrix& block, Index row_offset, Index col_offset,
               bool also_transpose = false) {
  for (Index j = 0; j < block.cols(); ++j)
    for (Index i = 0; i < block.rows(); ++i) {
      out.emplace_back(row_offset + i, col_offset + j, block(i, j));
      if (also_transpose) out.emplace_back(col_offset + j, row_offset + i, block(i, j));
    }
}

}  // namespace

GlobalRomSystem::GlobalRomSystem(GridConfig grid, const ReducedModel& model, AdvectionBackend backend,
                                 const std::map<std::string, EqpRule>* rules)
    : grid_(std::move(grid)), model_(&model), backend_(backend) {
  Stopwatch timer;
  require(model.library != nullptr, "reduced model has no component library");
  const InterfaceList interfaces = build_interfaces(grid_, model.library->meshes());
  const int M = grid_.num_cells();
  cells_.resize(M);
  rules_.assign(M, nullptr);
  u_offset_.resize(M);
  p_offset_.resize(M);
  Index offset = 0;
  for (int m = 0; m < M; ++m) {
    cells_[m] = &model.component(grid_.cell_component[m]);
    u_offset_[m] = offset;
    offset += cells_[m]->velocity_dim();
    if (backend_ == AdvectionBackend::Tensorial) {
      require(cells_[m]->tensor.rank() == cells_[m]->velocity_dim(),
              "missing advection tensor for component '" + grid_.cell_component[m] + "'");
    } else {
      require(rules != nullptr, "EQP backend requires trained rules");
      auto it = rules->find(grid_.cell_component[m]);
      require(it != rules->end(), "missing EQP rule for component '" + grid_.cell_component[m] + "'");
      require(it->second.bound(), "EQP rule for '" + grid_.cell_component[m] + "' is not bound to its basis");
      rules_[m] = &it->second;
    }
  }
  for (int m = 0; m < M; ++m) {
    p_offset_[m] = offset;
    offset += cells_[m]->pressure_dim();
  }
  mean_constraint_ = grid_.mean_zero_pressure || !grid_.has_neumann();
  size_ = offset + (mean_constraint_ ? 1 : 0);

  std::vector<Triplet> t;
  rhs_ = Vector::Zero(size_);
  for (int m = 0; m < M; ++m) {
    const ReducedComponent& rc = *cells_[m];
    const ComponentOperators& ops = *rc.fom;
    add_dense(t, rc.viscous, u_offset_[m], u_offset_[m]);
    add_dense(t, rc.divergence, p_offset_[m], u_offset_[m], true);
    const auto data = subdomain_boundary(grid_, m);
    Vector fu = Vector::Zero(rc.velocity_dim());
    Vector fp = Vector::Zero(rc.pressure_dim());
    for (BoundaryTag side : kSides) {
      const int s = tag_index(side);
      const BoundaryCondition* bc = data.sides[s];
      if (bc == nullptr) continue;
      if (bc->is_dirichlet()) {
        add_dense(t, rc.dirichlet_viscous[s], u_offset_[m], u_offset_[m]);
        add_dense(t, rc.dirichlet_divergence[s], p_offset_[m], u_offset_[m], true);
        const Vector g = sample_velocity(ops.loads[s], bc->velocity, data.offset);
        fu += rc.loads[s].dirichlet_velocity * g;
        fp += rc.loads[s].dirichlet_pressure * g;
      } else if (bc->traction) {
        fu += rc.loads[s].neumann_velocity * sample_traction(ops.loads[s], bc->traction, data.offset);
      }
    }
    const int wall = tag_index(BoundaryTag::Obstacle);
    add_dense(t, rc.dirichlet_viscous[wall], u_offset_[m], u_offset_[m]);
    add_dense(t, rc.dirichlet_divergence[wall], p_offset_[m], u_offset_[m], true);
    if (grid_.forcing) {
      const RhsVectors f = assemble_rhs(ops, SubdomainBoundaryData{{}, data.offset}, grid_.forcing);
      fu += rc.basis.velocity.transpose() * f.forcing;
    }
    rhs_.segment(u_offset_[m], rc.velocity_dim()) = fu;
    rhs_.segment(p_offset_[m], rc.pressure_dim()) = fp;
  }
  for (const auto& entry : interfaces.entries) {
    const auto& blocks = model.interface(
        InterfaceKey{grid_.cell_component[entry.m], grid_.cell_component[entry.n], entry.orientation});
    const Index um = u_offset_[entry.m], un = u_offset_[entry.n];
    const Index pm = p_offset_[entry.m], pn = p_offset_[entry.n];
    add_dense(t, blocks.viscous_mm, um, um);
    add_dense(t, blocks.viscous_mn, um, un);
    add_dense(t, blocks.viscous_nm, un, um);
    add_dense(t, blocks.viscous_nn, un, un);
    add_dense(t, blocks.divergence_mm, pm, um, true);
    add_dense(t, blocks.divergence_mn, pm, un, true);
    add_dense(t, blocks.divergence_nm, pn, um, true);
    add_dense(t, blocks.divergence_nn, pn, un, true);
  }
  if (mean_constraint_) {
    const Index row = size_ - 1;
    for (int m = 0; m < M; ++m) {
      const Vector& w = cells_[m]->pressure_mean;
      for (Index i = 0; i < w.size(); ++i) {
        t.emplace_back(row, p_offset_[m] + i, w[i]);
        t.emplace_back(p_offset_[m] + i, row, w[i]);
      }
    }
  }
  linear_.resize(size_, size_);
  linear_.setFromTriplets(t.begin(), t.end());
  linear_.makeCompressed();
  assembly_seconds_ = timer.seconds();
}

Vector GlobalRomSystem::advection(const Vector& state) const {
  require(state.size() == size_, "reduced state size mismatch");
  Vector out = Vector::Zero(size_);
  for (int m = 0; m < grid_.num_cells(); ++m) {
    const Index n = cells_[m]->velocity_dim();
    const Vector u = state.segment(u_offset_[m], n);
    out.segment(u_offset_[m], n) =
        backend_ == AdvectionBackend::Tensorial ? cells_[m]->tensor.contract(u) : rules_[m]->value(u);
  }
  return out;
}

Vector GlobalRomSystem::residual(const Vector& state) const {
  return linear_ * state + advection(state) - rhs_;
}

SparseMatrix GlobalRomSystem::jacobian(const Vector& state) const {
  std::vector<Triplet> t;
  for (int m = 0; m < grid_.num_cells(); ++m) {
    const Index n = cells_[m]->velocity_dim();
    const Vector u = state.segment(u_offset_[m], n);
    const Matrix j = backend_ == AdvectionBackend::Tensorial ? cells_[m]->tensor.jacobian(u) : rules_[m]->jacobian(u);
    add_dense(t, j, u_offset_[m], u_offset_[m]);
  }
  SparseMatrix jc(size_, size_);
  jc.setFromTriplets(t.begin(), t.end());
  SparseMatrix out = linear_ + jc;
  out.makeCompressed();
  return out;
}

Vector GlobalRomSystem::cell_velocity(const Vector& state, int m) const {
  return state.segment(u_offset_[m], cells_[m]->velocity_dim());
}

Vector GlobalRomSystem::cell_pressure(const Vector& state, int m) const {
  return state.segment(p_offset_[m], cells_[m]->pressure_dim());
}

std::vector<std::vector<Index>> GlobalRomSystem::block_partition() const {
  std::vector<std::vector<Index>> blocks;
  for (int m = 0; m < grid_.num_cells(); ++m) {
    std::vector<Index> b;
    for (Index i = 0; i < cells_[m]->velocity_dim(); ++i) b.push_back(u_offset_[m] + i);
    for (Index i = 0; i < cells_[m]->pressure_dim(); ++i) b.push_back(p_offset_[m] + i);
    blocks.push_back(std::move(b));
  }
  if (mean_constraint_) blocks.push_back({size_ - 1});
  return blocks;
}

RomSolution solve_rom_newton(const GlobalRomSystem& system, const NewtonOptions& options, const Vector* initial) {
  Stopwatch total;
  RomSolution sol;
  if (initial != nullptr) {
    require(initial->size() == system.size(), "initial reduced state size mismatch");
    sol.state = *initial;
  } else {
    sol.state = Vector::Zero(system.size());
  }
  const NonlinearProblem problem{[&](const Vector& x) { return system.residual(x); },
                                 [&](const Vector& x) { return system.jacobian(x); }};
  BlockSparseLU solver(system.block_partition());
  try {
    sol.report = newton_solve(problem, sol.state, options, &solver);
  } catch (const Error&) {
    sol.report = SolveReport{};
    sol.report.residual_history = {system.residual(sol.state).norm()};
    sol.report.converged = false;
  }
  sol.report.assembly_seconds += system.assembly_seconds();
  sol.report.total_seconds = total.seconds();
  return sol;
}

Vector lift(const GlobalRomSystem& system, const GlobalFomSystem& fom, const Vector& reduced) {
  require(reduced.size() == system.size(), "reduced state size mismatch");
  require(fom.grid().num_cells() == system.grid().num_cells(), "lift: grid mismatch");
  Vector full = Vector::Zero(fom.size());
  for (int m = 0; m < system.grid().num_cells(); ++m) {
    const PodBasis& b = system.cell(m).basis;
    full.segment(fom.velocity_offset(m), b.velocity.rows()) = b.velocity * system.cell_velocity(reduced, m);
    full.segment(fom.pressure_offset(m), b.pressure.rows()) = b.pressure * system.cell_pressure(reduced, m);
  }
  if (system.has_mean_constraint() && fom.has_mean_constraint()) full[fom.size() - 1] = reduced[system.size() - 1];
  return full;
}

Vector project_state(const GlobalRomSystem& system, const GlobalFomSystem& fom, const Vector& full) {
  require(full.size() == fom.size(), "FOM state size mismatch");
  Vector reduced = Vector::Zero(system.size());
  for (int m = 0; m < system.grid().num_cells(); ++m) {
    const PodBasis& b = system.cell(m).basis;
    reduced.segment(system.velocity_offset(m), b.velocity_dim()) = b.velocity.transpose() * fom.cell_velocity(full, m);
    reduced.segment(system.pressure_offset(m), b.pressure_dim()) = b.pressure.transpose() * fom.cell_pressure(full, m);
  }
  if (system.has_mean_constraint() && fom.has_mean_constraint()) reduced[system.size() - 1] = full[fom.size() - 1];
  return reduced;
}

FieldErrors relative_errors(const GlobalFomSystem& fom, const Vector& fom_state, const Vector& lifted_state) {
  return relative_field_errors(fom, fom_state, lifted_state);
}

void save_rom_solution(const GlobalRomSystem& system, const Vector& state, const std::filesystem::path& path) {
  require(state.size() == system.size(), "reduced state size mismatch");
  BinaryWriter w(path, "CROMRSOL1");
  const int M = system.grid().num_cells();
  w.u64(static_cast<std::uint64_t>(M));
  for (int m = 0; m < M; ++m) {
    w.u64(static_cast<std::uint64_t>(system.cell(m).velocity_dim()));
    w.u64(static_cast<std::uint64_t>(system.cell(m).pressure_dim()));
  }
  w.u64(static_cast<std::uint64_t>(state.size()));
  w.f64_array(state.data(), static_cast<std::size_t>(state.size()));
  w.finish();
}

Vector load_rom_solution(const GlobalRomSystem& system, const std::filesystem::path& path) {
  BinaryReader r(path, "CROMRSOL1");
  const int M = system.grid().num_cells();
  require(r.u64() == static_cast<std::uint64_t>(M), path.string() + ": subdomain count mismatch");
  for (int m = 0; m < M; ++m) {
    require(r.u64() == static_cast<std::uint64_t>(system.cell(m).velocity_dim()) &&
                r.u64() == static_cast<std::uint64_t>(system.cell(m).pressure_dim()),
            path.string() + ": reduced layout mismatch");
  }
  require(r.u64() == static_cast<std::uint64_t>(system.size()), path.string() + ": reduced size mismatch");
  Vector state(system.size());
  r.f64_array(state.data(), static_cast<std::size_t>(state.size()));
  return state;
}

}  // namespace crom
