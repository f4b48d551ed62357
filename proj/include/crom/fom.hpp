#pragma once

#include "crom/newton.hpp"
#include "crom/weakforms.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace crom {

/// Reference components with their operators, and the interface blocks for every
/// (component, component, orientation) configuration. Immutable once built.
class ComponentLibrary {
 public:
  ComponentLibrary(const MeshRegistry& meshes, double viscosity);

  double viscosity() const { return viscosity_; }
  const MeshRegistry& meshes() const { return meshes_; }
  const ComponentOperators& component(const std::string& name) const;
  const InterfaceBlocks& interface(const InterfaceKey& key) const;
  const std::map<InterfaceKey, InterfaceBlocks>& interfaces() const { return interfaces_; }
  std::vector<std::string> names() const;

 private:
  double viscosity_;
  MeshRegistry meshes_;
  std::map<std::string, ComponentOperators> components_;
  std::map<InterfaceKey, InterfaceBlocks> interfaces_;
};

/// Global DG domain-decomposed saddle-point system. State layout:
/// [u_1, ..., u_M, p_1, ..., p_M (, λ)], λ being the mean-pressure multiplier.
class GlobalFomSystem {
 public:
  GlobalFomSystem(GridConfig grid, const ComponentLibrary& library);

  const GridConfig& grid() const { return grid_; }
  const ComponentLibrary& library() const { return *library_; }
  const ComponentOperators& cell_operators(int m) const { return *cells_[m]; }
  const InterfaceList& interfaces() const { return interfaces_; }

  Index size() const { return size_; }
  Index num_velocity_dofs() const { return num_u_; }
  Index num_pressure_dofs() const { return num_p_; }
  Index velocity_offset(int m) const { return u_offset_[m]; }
  Index pressure_offset(int m) const { return p_offset_[m]; }
  bool has_mean_constraint() const { return mean_constraint_; }

  /// [[K, B^T], [B, 0]] including interface and Dirichlet blocks.
  const SparseMatrix& linear_operator() const { return linear_; }
  const Vector& rhs() const { return rhs_; }
  double assembly_seconds() const { return assembly_seconds_; }

  Vector residual(const Vector& state) const;
  SparseMatrix jacobian(const Vector& state) const;
  /// Global advection vector (zero outside the velocity block).
  Vector advection(const Vector& state) const;

  Vector cell_velocity(const Vector& state, int m) const;
  Vector cell_pressure(const Vector& state, int m) const;

 private:
  GridConfig grid_;
  const ComponentLibrary* library_;
  std::vector<const ComponentOperators*> cells_;
  InterfaceList interfaces_;
  std::vector<Index> u_offset_, p_offset_;
  Index num_u_ = 0, num_p_ = 0, size_ = 0;
  bool mean_constraint_ = false;
  SparseMatrix linear_;
  Vector rhs_;
  double assembly_seconds_ = 0.0;
};

/// Global-boundary sides of cell m; nullptr entries are interface sides.
SubdomainBoundaryData subdomain_boundary(const GridConfig& grid, int m);

/// Total net outflow ∫ n·g_di over Dirichlet sides for the grid's boundary data.
double dirichlet_net_flux(const GridConfig& grid, const ComponentLibrary& library);

struct FomSolution {
  Vector state;
  SolveReport report;
};

/// Linear Stokes solve (advection dropped).
FomSolution solve_stokes(const GlobalFomSystem& system);

/// Newton iteration from the Stokes solution, or from `initial` when given.
FomSolution solve_newton(const GlobalFomSystem& system, const NewtonOptions& options = {},
                         const Vector* initial = nullptr);

/// Relative field-space L2 errors summed over all subdomains.
struct FieldErrors {
  double velocity = 0.0;
  double pressure = 0.0;
};
FieldErrors relative_field_errors(const GlobalFomSystem& system, const Vector& reference, const Vector& candidate);

struct ManufacturedSolution {
  VelocityFunction velocity;
  std::function<double(const Point2&)> pressure;
  VelocityFunction forcing;  // -ν∇²u + ∇p + u·∇u
};

struct MmsStudy {
  std::vector<int> resolutions;
  std::vector<double> velocity_errors;
  std::vector<double> pressure_errors;
  std::vector<double> velocity_orders;  // between consecutive resolutions
  std::vector<double> pressure_orders;
  std::vector<bool> converged;
};

/// Fully Dirichlet MMS study on empty grids; pressure compared up to its mean.
MmsStudy mms_convergence(const ManufacturedSolution& exact, int rows, int cols, double viscosity,
                         const std::vector<int>& resolutions, const NewtonOptions& options = {});

/// Binary solution dump CROMSOL1: u64 M, total N_u, total N_p, then (N_u,m, N_p,m) per
/// subdomain, then the f64 state (velocity block, then pressure block).
void save_fom_solution(const GlobalFomSystem& system, const Vector& state, const std::filesystem::path& path);
Vector load_fom_solution(const GlobalFomSystem& system, const std::filesystem::path& path);

/// Legacy-VTK unstructured grid: vertex velocity vectors and vertex pressure per subdomain.
void write_vtk(const GlobalFomSystem& system, const Vector& state, const std::filesystem::path& path);

}  // namespace crom
