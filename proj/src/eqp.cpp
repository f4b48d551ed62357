#include "crom/eqp.hpp"

#include "crom/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace crom {

EqpManifest build_manifest(const TaylorHoodSpace& space, const Matrix& velocity_basis, const Matrix& snapshots,
                           double epsilon) {
  require(epsilon >= 0.0, "EQP threshold must be non-negative");
  require(snapshots.rows() == space.num_velocity_dofs(), "manifest: snapshot size mismatch");
  const FieldSamples phi = sample_fields(space, velocity_basis);
  const FieldSamples u = sample_fields(space, snapshots);
  const Index r = velocity_basis.cols(), s = snapshots.cols(), q = phi.weights.size();

  // a[c](q, s) = (u_s·∇u_s)_c at point q
  std::array<Matrix, 2> a;
  for (int c = 0; c < 2; ++c)
    a[c] = u.value[0].cwiseProduct(u.grad[c][0]) + u.value[1].cwiseProduct(u.grad[c][1]);

  EqpManifest m;
  m.epsilon = std::max(epsilon, kMinEqpEpsilon);
  m.num_modes = r;
  m.num_snapshots = s;
  m.full_weights = phi.weights;
  m.G.resize(r * s, q);
  for (Index k = 0; k < s; ++k) {
    m.G.middleRows(k * r, r) =
        (a[0].col(k).asDiagonal() * phi.value[0] + a[1].col(k).asDiagonal() * phi.value[1]).transpose();
  }
  m.d = m.G * m.full_weights;
  return m;
}

namespace {

/// Thin QR of a growing column subset of G by modified Gram–Schmidt with reorthogonalization.
class IncrementalQr {
 public:
  IncrementalQr(const Matrix& g, const Vector& d) : g_(g), d_(d) {}

  const std::vector<Index>& columns() const { return cols_; }

  bool add(Index j) {
    Vector v = g_.col(j);
    const double original = v.norm();
    const Index k = static_cast<Index>(q_.size());
    Vector coeff = Vector::Zero(k);
    for (int pass = 0; pass < 2; ++pass)
      for (Index i = 0; i < k; ++i) {
        const double c = q_[i].dot(v);
        coeff[i] += c;
        v -= c * q_[i];
      }
    const double norm = v.norm();
    if (original == 0.0 || norm <= 1e-12 * original) return false;
    r_.conservativeResize(k + 1, k + 1);
    r_.col(k).head(k) = coeff;
    r_.row(k).setZero();
    r_(k, k) = norm;
    q_.push_back(v / norm);
    qtd_.conservativeResize(k + 1);
    qtd_[k] = q_.back().dot(d_);
    cols_.push_back(j);
    return true;
  }

  Vector solve() const {
    if (cols_.empty()) return Vector();
    return r_.triangularView<Eigen::Upper>().solve(qtd_);
  }

  /// Refactors from scratch; returns the columns that turned out dependent.
  std::vector<Index> rebuild(const std::vector<Index>& cols) {
    cols_.clear();
    q_.clear();
    r_.resize(0, 0);
    qtd_.resize(0);
    std::vector<Index> rejected;
    for (Index j : cols)
      if (!add(j)) rejected.push_back(j);
    return rejected;
  }

 private:
  const Matrix& g_;
  const Vector& d_;
  std::vector<Index> cols_;
  std::vector<Vector> q_;
  Matrix r_;
  Vector qtd_;
};

}  // namespace

NnlsResult nnls(const Matrix& G, const Vector& d, double epsilon, int max_iterations) {
  require(epsilon >= 0.0, "nnls: epsilon must be non-negative");
  require(G.rows() == d.size(), "nnls: dimension mismatch");
  const Index n = G.cols();
  const int max_iter = max_iterations < 0 ? static_cast<int>(3 * n + 10) : max_iterations;
  NnlsResult out;
  out.w = Vector::Zero(n);
  const double target = epsilon * d.norm();
  double max_col = 0.0;
  for (Index j = 0; j < n; ++j) max_col = std::max(max_col, G.col(j).norm());

  std::vector<char> active(n, 0), excluded(n, 0);
  IncrementalQr qr(G, d);
  Vector r = d - G * out.w;
  out.residual = r.norm();

  while (out.residual > target && out.iterations < max_iter) {
    const Vector grad = G.transpose() * r;
    const double tol = 1e-13 * max_col * out.residual;
    Index entering = -1;
    double best = tol;
    for (Index j = 0; j < n; ++j)
      if (!active[j] && !excluded[j] && grad[j] > best) {
        best = grad[j];
        entering = j;
      }
    if (entering < 0) break;
    ++out.iterations;
    if (!qr.add(entering)) {
      excluded[entering] = 1;
      continue;
    }
    active[entering] = 1;

    bool entering_removed = false;
    for (;;) {
      const Vector z = qr.solve();
      const auto& cols = qr.columns();
      bool feasible = true;
      double alpha = 1.0;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (z[i] <= 0.0) {
          feasible = false;
          const double wi = out.w[cols[i]];
          alpha = std::min(alpha, wi / (wi - z[i]));
        }
      }
      if (feasible) {
        for (std::size_t i = 0; i < cols.size(); ++i) out.w[cols[i]] = z[i];
        break;
      }
      std::vector<Index> keep;
      double wmax = 0.0;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        const Index j = cols[i];
        out.w[j] += alpha * (z[i] - out.w[j]);
        wmax = std::max(wmax, std::abs(out.w[j]));
      }
      for (std::size_t i = 0; i < cols.size(); ++i) {
        const Index j = cols[i];
        if (out.w[j] <= 1e-14 * wmax) {
          out.w[j] = 0.0;
          active[j] = 0;
          if (j == entering) entering_removed = true;
        } else {
          keep.push_back(j);
        }
      }
      for (Index j : qr.rebuild(keep)) {
        out.w[j] = 0.0;
        active[j] = 0;
      }
      if (qr.columns().empty()) break;
    }
    if (entering_removed) {
      excluded[entering] = 1;
    } else {
      std::fill(excluded.begin(), excluded.end(), 0);
    }
    r = d - G * out.w;
    out.residual = r.norm();
  }
  out.residual = (G * out.w - d).norm();
  out.criterion_met = out.residual <= target;
  return out;
}

void EqpRule::bind(const TaylorHoodSpace& space, const Matrix& velocity_basis) {
  require(velocity_basis.rows() == space.num_velocity_dofs(), "EQP rule: basis does not match the space");
  const auto& all = space.quadrature_points();
  const int per = space.quad_points_per_element();
  const Index p = static_cast<Index>(points.size()), r = velocity_basis.cols(), n = space.num_nodes();
  w_.resize(p);
  for (int c = 0; c < 2; ++c) {
    value_[c] = Matrix::Zero(p, r);
    grad_[c][0] = Matrix::Zero(p, r);
    grad_[c][1] = Matrix::Zero(p, r);
  }
  for (Index k = 0; k < p; ++k) {
    const auto& pt = points[k];
    require(pt.element < static_cast<std::uint32_t>(space.num_elements()) && pt.local < per,
            "EQP rule point outside the component mesh");
    const auto& qp = all[static_cast<std::size_t>(pt.element) * per + pt.local];
    w_[k] = pt.weight;
    const auto& nodes = space.element_nodes(qp.element);
    for (int a = 0; a < 6; ++a) {
      for (int c = 0; c < 2; ++c) {
        const auto row = velocity_basis.row(nodes[a] + c * n);
        value_[c].row(k) += qp.shape.p2[a] * row;
        grad_[c][0].row(k) += qp.shape.p2_grad[a].x() * row;
        grad_[c][1].row(k) += qp.shape.p2_grad[a].y() * row;
      }
    }
  }
  bound_ = true;
}

Vector EqpRule::value(const Vector& coeffs) const {
  require(bound_, "EQP rule used before binding to a basis");
  require(coeffs.size() == value_[0].cols(), "EQP value: size mismatch");
  const Vector u0 = value_[0] * coeffs, u1 = value_[1] * coeffs;
  Vector out = Vector::Zero(coeffs.size());
  for (int c = 0; c < 2; ++c) {
    const Vector a = u0.cwiseProduct(grad_[c][0] * coeffs) + u1.cwiseProduct(grad_[c][1] * coeffs);
    out.noalias() += value_[c].transpose() * w_.cwiseProduct(a);
  }
  return out;
}

Matrix EqpRule::jacobian(const Vector& coeffs) const {
  require(bound_, "EQP rule used before binding to a basis");
  require(coeffs.size() == value_[0].cols(), "EQP Jacobian: size mismatch");
  const std::array<Vector, 2> u = {value_[0] * coeffs, value_[1] * coeffs};
  Matrix out = Matrix::Zero(coeffs.size(), coeffs.size());
  for (int c = 0; c < 2; ++c) {
    // d(u·∇u)_c / dû = Σ_d ∂_d u_c V_d + u_d G_cd
    Matrix da = Matrix::Zero(value_[0].rows(), coeffs.size());
    for (int d = 0; d < 2; ++d) {
      const Vector du = grad_[c][d] * coeffs;
      da.noalias() += du.asDiagonal() * value_[d];
      da.noalias() += u[d].asDiagonal() * grad_[c][d];
    }
    out.noalias() += value_[c].transpose() * (w_.asDiagonal() * da);
  }
  return out;
}

Vector EqpRule::dense_weights(const TaylorHoodSpace& space) const {
  const int per = space.quad_points_per_element();
  Vector w = Vector::Zero(static_cast<Index>(space.quadrature_points().size()));
  for (const auto& pt : points) {
    const Index idx = static_cast<Index>(pt.element) * per + pt.local;
    require(idx < w.size(), "EQP rule point outside the component mesh");
    w[idx] += pt.weight;
  }
  return w;
}

EqpRule full_rule(const TaylorHoodSpace& space) {
  EqpRule rule;
  for (const auto& qp : space.quadrature_points())
    rule.points.push_back({static_cast<std::uint32_t>(qp.element), static_cast<std::uint8_t>(qp.local), qp.weight});
  return rule;
}

EqpRule train_rule(const TaylorHoodSpace& space, const EqpManifest& manifest) {
  require(manifest.G.cols() == static_cast<Index>(space.quadrature_points().size()),
          "manifest does not match the component quadrature");
  const NnlsResult result = nnls(manifest.G, manifest.d, manifest.epsilon);
  const double dnorm = manifest.d.norm();
  if (!result.criterion_met) {
    std::ostringstream msg;
    msg << "EQP criterion unreachable: best relative residual " << (dnorm > 0 ? result.residual / dnorm : result.residual)
        << " above threshold " << manifest.epsilon;
    throw Error(msg.str());
  }
  EqpRule rule;
  rule.epsilon = manifest.epsilon;
  rule.residual = dnorm > 0.0 ? result.residual / dnorm : 0.0;
  const auto& all = space.quadrature_points();
  for (Index q = 0; q < result.w.size(); ++q) {
    if (result.w[q] <= 0.0) continue;
    rule.points.push_back({static_cast<std::uint32_t>(all[q].element), static_cast<std::uint8_t>(all[q].local),
                           result.w[q]});
  }
  require(rule_satisfies(rule, space, manifest), "trained EQP rule fails its own criterion");
  return rule;
}

bool rule_satisfies(const EqpRule& rule, const TaylorHoodSpace& space, const EqpManifest& manifest) {
  for (const auto& pt : rule.points)
    if (!(pt.weight > 0.0)) return false;
  const Vector w = rule.dense_weights(space);
  return (manifest.G * w - manifest.d).norm() <= manifest.epsilon * manifest.d.norm();
}

void save_rule(const EqpRule& rule, const std::filesystem::path& path) {
  BinaryWriter w(path, "CROMEQP1");
  w.u64(rule.points.size());
  for (const auto& pt : rule.points) {
    w.u32(pt.element);
    w.u8(pt.local);
    w.f64(pt.weight);
  }
  w.f64(rule.epsilon);
  w.f64(rule.residual);
  w.finish();
}

EqpRule load_rule(const std::filesystem::path& path) {
  BinaryReader r(path, "CROMEQP1");
  EqpRule rule;
  const auto count = r.u64();
  rule.points.resize(count);
  for (auto& pt : rule.points) {
    pt.element = r.u32();
    pt.local = r.u8();
    pt.weight = r.f64();
    require(pt.weight > 0.0, path.string() + ": EQP weights must be positive");
  }
  rule.epsilon = r.f64();
  rule.residual = r.f64();
  return rule;
}

}  // namespace crom
