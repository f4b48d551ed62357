#pragma once

#include "crom/fom.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace crom {

/// Per-component snapshot matrices; column s of both matrices comes from one converged solve.
struct SnapshotSet {
  std::string component;
  Matrix velocity;  // N_u x S
  Matrix pressure;  // N_p x S
  std::vector<std::uint64_t> sample_ids;

  Index size() const { return velocity.cols(); }
  void append(const Vector& u, const Vector& p, std::uint64_t sample_id);
};

/// Binary CROMSNP1: component string, u64 N_u, N_p, S, U and P column-major, then S u64 sample ids.
void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path);
SnapshotSet load_snapshots(const std::filesystem::path& path);

struct PodModes {
  Matrix modes;                 // left singular vectors, descending order
  Vector singular_values;
};

/// Thin SVD of a snapshot matrix. Modes with zero singular value are omitted.
PodModes pod(const Matrix& snapshots);

/// ε(σ, R) = 1 - Σ_{i<R} σ_i / Σ σ_i (first powers). An all-zero σ gives 0.
double missing_energy(const Vector& singular_values, int rank);

/// Z̃ = Bᵀ Φ̃_p[:, :Z] without mass weighting.
Matrix supremizers(const SparseMatrix& divergence, const Matrix& pressure_modes, int count);

struct EnrichedBasis {
  Matrix basis;
  int kept = 0;     // appended columns that survived
  int dropped = 0;  // appended columns dependent on the current span
};

/// Appends `extra` to the orthonormal `basis` by modified Gram–Schmidt with one reorthogonalization
/// pass. A column whose norm after projection falls below `drop_tol` times its original norm is dropped.
EnrichedBasis enrich_and_orthonormalize(const Matrix& basis, const Matrix& extra, double drop_tol = 1e-10);

/// Orthonormal component bases. The first R_u velocity columns are POD modes; the last Z are supremizers.
struct PodBasis {
  std::string component;
  Matrix velocity;   // N_u x (R_u + Z)
  Matrix pressure;   // N_p x R_p
  Vector sigma_u;    // full velocity spectrum
  Vector sigma_p;    // full pressure spectrum
  int rank_u = 0;
  int rank_p = 0;
  int supremizers = 0;
  int supremizers_dropped = 0;

  int velocity_dim() const { return static_cast<int>(velocity.cols()); }
  int pressure_dim() const { return static_cast<int>(pressure.cols()); }
  double velocity_missing_energy() const { return missing_energy(sigma_u, rank_u); }
  double pressure_missing_energy() const { return missing_energy(sigma_p, rank_p); }
};

/// POD + supremizer enrichment. Ranks are capped at the number of available modes;
/// `num_supremizers` < 0 selects Z = R_p.
PodBasis build_basis(const SnapshotSet& snapshots, const ComponentOperators& ops, int rank_u, int rank_p,
                     int num_supremizers = -1);

/// Basis file CROMBAS1: component string, u64 N_u, N_p, R_u, R_p, Z; Φ_u, Φ_p column-major; σ_u, σ_p with sizes.
void save_basis(const PodBasis& basis, const std::filesystem::path& path);
PodBasis load_basis(const std::filesystem::path& path);

/// Identity "basis" spanning the whole component space (no reduction).
PodBasis identity_basis(const ComponentOperators& ops, const std::string& component);

/// Values and gradients of velocity vectors at every element quadrature point of a space.
struct FieldSamples {
  std::array<Matrix, 2> value;                 // value[c](q, i) = (v_i)_c(x_q)
  std::array<std::array<Matrix, 2>, 2> grad;   // grad[c][d](q, i) = ∂_d (v_i)_c(x_q)
  Vector weights;                              // physical quadrature weights
};

FieldSamples sample_fields(const TaylorHoodSpace& space, const Matrix& velocity_vectors);

/// Ĉ_ijk = <φ_i, φ_j·∇φ_k> stored row-major in (i, j, k).
class AdvectionTensor {
 public:
  AdvectionTensor() = default;
  AdvectionTensor(int rank, std::vector<double> data);

  int rank() const { return rank_; }
  const std::vector<double>& data() const { return data_; }
  double operator()(int i, int j, int k) const { return data_[(static_cast<std::size_t>(i) * rank_ + j) * rank_ + k]; }

  /// value_i = Σ_jk Ĉ_ijk û_j û_k.
  Vector contract(const Vector& coeffs) const;
  /// J_ik = Σ_j Ĉ_ijk û_j + Σ_j Ĉ_ikj û_j.
  Matrix jacobian(const Vector& coeffs) const;

 private:
  int rank_ = 0;
  std::vector<double> data_;
};

AdvectionTensor build_advection_tensor(const TaylorHoodSpace& space, const Matrix& velocity_basis);

/// Tensor file CROMTEN1: u64 R (three times), then R³ f64 in (i, j, k) row-major order.
void save_tensor(const AdvectionTensor& tensor, const std::filesystem::path& path);
AdvectionTensor load_tensor(const std::filesystem::path& path);

/// Φᵀ W for one boundary tag: reduced maps from sampled boundary data to reduced loads.
struct ReducedBoundaryLoad {
  Matrix dirichlet_velocity;  // (R_u + Z) x 2Q
  Matrix dirichlet_pressure;  // R_p x 2Q
  Matrix neumann_velocity;    // (R_u + Z) x 2Q
};

struct ReducedComponent {
  const ComponentOperators* fom = nullptr;
  PodBasis basis;
  Matrix viscous;     // Φ_uᵀ K Φ_u
  Matrix divergence;  // Φ_pᵀ B Φ_u
  std::array<Matrix, kNumTags> dirichlet_viscous;
  std::array<Matrix, kNumTags> dirichlet_divergence;
  std::array<ReducedBoundaryLoad, kNumTags> loads;
  Vector pressure_mean;  // Φ_pᵀ M_p 1, the reduced ∫p functional
  AdvectionTensor tensor;

  int velocity_dim() const { return basis.velocity_dim(); }
  int pressure_dim() const { return basis.pressure_dim(); }
};

struct ReducedInterface {
  Matrix viscous_mm, viscous_mn, viscous_nm, viscous_nn;
  Matrix divergence_mm, divergence_mn, divergence_nm, divergence_nn;
};

/// Galerkin-projected operators for every component and interface configuration of a library.
struct ReducedModel {
  const ComponentLibrary* library = nullptr;
  std::map<std::string, ReducedComponent> components;
  std::map<InterfaceKey, ReducedInterface> interfaces;

  const ReducedComponent& component(const std::string& name) const;
  const ReducedInterface& interface(const InterfaceKey& key) const;
};

/// Projects every linear block; `with_tensor` also builds the advection tensors.
ReducedModel project_linear(const ComponentLibrary& library, const std::map<std::string, PodBasis>& bases,
                            bool with_tensor = true);

}  // namespace crom
