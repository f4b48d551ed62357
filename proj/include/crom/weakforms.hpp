#pragma once

#include "crom/femspace.hpp"

#include <array>
#include <compare>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace crom {

/// Interior-penalty strength γ = ν (k+1)^2 with k = 2 the velocity polynomial degree.
inline double penalty_parameter(double viscosity) { return 9.0 * viscosity; }

SparseMatrix assemble_viscous(const TaylorHoodSpace& space, double viscosity);
SparseMatrix assemble_divergence(const TaylorHoodSpace& space);

struct DirichletBlocks {
  SparseMatrix viscous;     // N_u x N_u
  SparseMatrix divergence;  // N_p x N_u
};

/// Weak (Nitsche) Dirichlet blocks on every face carrying `tag`.
DirichletBlocks assemble_dirichlet_blocks(const TaylorHoodSpace& space, BoundaryTag tag, double viscosity,
                                          double penalty);

/// Couplings across one interface: m is the left/lower subdomain, n the right/upper one.
struct InterfaceBlocks {
  SparseMatrix viscous_mm, viscous_mn, viscous_nm, viscous_nn;
  SparseMatrix divergence_mm, divergence_mn, divergence_nm, divergence_nn;
};

InterfaceBlocks assemble_interface_blocks(const TaylorHoodSpace& space_m, const TaylorHoodSpace& space_n,
                                          Orientation orientation, double viscosity, double penalty);

/// Face quadrature on one boundary tag plus the linear maps from sampled boundary
/// data to load vectors. Sampled data is laid out as [g_x(x_0), g_y(x_0), g_x(x_1), ...].
struct BoundaryLoad {
  BoundaryTag tag = BoundaryTag::Left;
  std::vector<Point2> points;   // local coordinates
  std::vector<Point2> normals;  // outward
  SparseMatrix dirichlet_velocity;  // N_u x 2Q: penalty and consistency loads from g_di
  SparseMatrix dirichlet_pressure;  // N_p x 2Q: <p†, n·g_di>
  SparseMatrix neumann_velocity;    // N_u x 2Q: <u†, g_ne>

  int num_points() const { return static_cast<int>(points.size()); }
};

BoundaryLoad assemble_boundary_load(const TaylorHoodSpace& space, BoundaryTag tag, double viscosity,
                                    double penalty);

Vector sample_velocity(const BoundaryLoad& load, const VelocityFunction& g, const Point2& offset);
/// Neumann data g_ne = n·(ν∇u - pI) sampled with the face normals.
Vector sample_traction(const BoundaryLoad& load, const TractionFunction& g, const Point2& offset);

/// Domain advection <u†, u·∇u>. No interface or boundary advection terms exist.
class AdvectionOperator {
 public:
  explicit AdvectionOperator(std::shared_ptr<const TaylorHoodSpace> space) : space_(std::move(space)) {}

  Vector value(const Vector& u) const;
  /// Directional form <u†, v·∇w>.
  Vector bilinear(const Vector& v, const Vector& w) const;
  SparseMatrix jacobian(const Vector& u) const;
  /// Appends Jacobian entries shifted by `offset` on both axes.
  void jacobian_triplets(const Vector& u, Index offset, std::vector<Triplet>& out) const;

 private:
  std::shared_ptr<const TaylorHoodSpace> space_;
};

/// Side-by-side boundary data for one subdomain; unset entries mean "no weak terms on that tag".
struct SubdomainBoundaryData {
  std::array<const BoundaryCondition*, 4> sides{};  // nullptr: interface side
  Point2 offset = Point2::Zero();
};

struct RhsVectors {
  Vector forcing;   // L[f]
  Vector velocity;  // L_u[g]
  Vector pressure;  // L_p[g]
};

/// All reference-level operators of one component for a given viscosity.
struct ComponentOperators {
  std::shared_ptr<const TaylorHoodSpace> space;
  double viscosity = 0.0;
  double penalty = 0.0;
  SparseMatrix viscous;
  SparseMatrix divergence;
  std::array<DirichletBlocks, kNumTags> dirichlet;
  std::array<BoundaryLoad, kNumTags> loads;
  AdvectionOperator advection;

  int num_velocity_dofs() const { return space->num_velocity_dofs(); }
  int num_pressure_dofs() const { return space->num_pressure_dofs(); }
};

ComponentOperators assemble_component(std::shared_ptr<const TaylorHoodSpace> space, double viscosity);

RhsVectors assemble_rhs(const ComponentOperators& ops, const SubdomainBoundaryData& data,
                        const VelocityFunction& forcing);

struct InterfaceKey {
  std::string component_m;
  std::string component_n;
  Orientation orientation = Orientation::Horizontal;
  auto operator<=>(const InterfaceKey&) const = default;
};

/// Binary operator cache (CROMOP1): viscous, divergence, then the Dirichlet pairs per tag.
void save_operators(const ComponentOperators& ops, const std::filesystem::path& path);
/// Loads matrices into `ops`, which must already carry the matching space.
void load_operators(ComponentOperators& ops, const std::filesystem::path& path);

}  // namespace crom
