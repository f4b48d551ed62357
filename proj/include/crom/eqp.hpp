#pragma once

#include "crom/reduction.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace crom {

/// Constraint system of the empirical quadrature problem for one component.
/// Row s * R + b holds the unit-weight contributions of every element quadrature
/// point to <φ_b, u_s·∇u_s>; d = G w_full.
struct EqpManifest {
  Matrix G;
  Vector d;
  Vector full_weights;
  double epsilon = 0.0;
  Index num_modes = 0;
  Index num_snapshots = 0;
};

/// Smallest usable threshold. Requests below it, such as a zero missing energy, are raised to it.
inline constexpr double kMinEqpEpsilon = 1e-12;

EqpManifest build_manifest(const TaylorHoodSpace& space, const Matrix& velocity_basis, const Matrix& snapshots,
                           double epsilon);

struct NnlsResult {
  Vector w;
  double residual = 0.0;       // ||G w - d||
  bool criterion_met = false;  // residual <= epsilon * ||d||
  int iterations = 0;
};

/// Lawson–Hanson active-set NNLS, stopped as soon as ||G w - d|| <= epsilon ||d||.
/// Entering columns are chosen by the largest gradient component (lowest index on ties).
/// The active-set least-squares problems use an incrementally updated QR factorization
/// that is rebuilt whenever a variable leaves the set.
NnlsResult nnls(const Matrix& G, const Vector& d, double epsilon, int max_iterations = -1);

struct EqpPoint {
  std::uint32_t element = 0;
  std::uint8_t local = 0;
  double weight = 0.0;
};

/// Sparse quadrature for the reduced advection term of one component.
class EqpRule {
 public:
  std::vector<EqpPoint> points;
  double epsilon = 0.0;
  double residual = 0.0;  // achieved ||G w - d|| / ||d|| (0 when d = 0)

  std::size_t size() const { return points.size(); }

  /// Caches the basis values and gradients at the rule points.
  void bind(const TaylorHoodSpace& space, const Matrix& velocity_basis);
  bool bound() const { return bound_; }

  /// value_i = Σ_q w_q φ_i(x_q)·(u·∇u)(x_q) with u = Σ_k φ_k û_k.
  Vector value(const Vector& coeffs) const;
  Matrix jacobian(const Vector& coeffs) const;

  /// Full weight vector over every element quadrature point of `space`.
  Vector dense_weights(const TaylorHoodSpace& space) const;

 private:
  bool bound_ = false;
  Vector w_;
  std::array<Matrix, 2> value_;
  std::array<std::array<Matrix, 2>, 2> grad_;
};

/// Rule built from every quadrature point with its full weight.
EqpRule full_rule(const TaylorHoodSpace& space);

/// Solves the manifest NNLS; throws crom::Error with the best residual if the criterion is unreachable.
EqpRule train_rule(const TaylorHoodSpace& space, const EqpManifest& manifest);

/// Checks w > 0 and ||G w - d|| <= epsilon ||d|| for a rule against its manifest.
bool rule_satisfies(const EqpRule& rule, const TaylorHoodSpace& space, const EqpManifest& manifest);

/// Rule file CROMEQP1: u64 count, then (element u32, local u8, weight f64) per point, then ε_EQP and residual.
void save_rule(const EqpRule& rule, const std::filesystem::path& path);
EqpRule load_rule(const std::filesystem::path& path);

}  // namespace crom
