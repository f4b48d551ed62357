#include "crom/reduction.hpp"

#include "crom/binary_io.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace crom {

void SnapshotSet::append(const Vector& u, const Vector& p, std::uint64_t sample_id) {
  if (velocity.cols() == 0) {
    velocity.resize(u.size(), 0);
    pressure.resize(p.size(), 0);
  }
  require(u.size() == velocity.rows() && p.size() == pressure.rows(), "snapshot size mismatch for " + component);
  velocity.conservativeResize(Eigen::NoChange, velocity.cols() + 1);
  pressure.conservativeResize(Eigen::NoChange, pressure.cols() + 1);
  velocity.col(velocity.cols() - 1) = u;
  pressure.col(pressure.cols() - 1) = p;
  sample_ids.push_back(sample_id);
}

void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path) {
  BinaryWriter w(path, "CROMSNP1");
  w.string(set.component);
  w.u64(static_cast<std::uint64_t>(set.velocity.rows()));
  w.u64(static_cast<std::uint64_t>(set.pressure.rows()));
  w.u64(static_cast<std::uint64_t>(set.size()));
  w.dense(set.velocity);
  w.dense(set.pressure);
  for (auto id : set.sample_ids) w.u64(id);
  w.finish();
}

SnapshotSet load_snapshots(const std::filesystem::path& path) {
  BinaryReader r(path, "CROMSNP1");
  SnapshotSet set;
  set.component = r.string();
  const auto nu = static_cast<Index>(r.u64());
  const auto np = static_cast<Index>(r.u64());
  const auto s = static_cast<Index>(r.u64());
  set.velocity = r.dense(nu, s);
  set.pressure = r.dense(np, s);
  for (Index k = 0; k < s; ++k) set.sample_ids.push_back(r.u64());
  return set;
}

PodModes pod(const Matrix& snapshots) {
  require(snapshots.rows() > 0 && snapshots.cols() > 0, "pod: empty snapshot matrix");
  Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
  const Vector& sigma = svd.singularValues();
  const double cutoff = sigma.size() > 0 && sigma[0] > 0.0
                            ? sigma[0] * std::numeric_limits<double>::epsilon() *
                                  static_cast<double>(std::max(snapshots.rows(), snapshots.cols()))
                            : std::numeric_limits<double>::infinity();
  Index keep = 0;
  while (keep < sigma.size() && sigma[keep] > cutoff) ++keep;
  return {svd.matrixU().leftCols(keep), sigma.head(keep)};
}

double missing_energy(const Vector& singular_values, int rank) {
  require(rank >= 0 && rank <= singular_values.size(), "missing_energy: rank out of range");
  const double total = singular_values.sum();
  if (total <= 0.0) return 0.0;
  return std::clamp(1.0 - singular_values.head(rank).sum() / total, 0.0, 1.0);
}

Matrix supremizers(const SparseMatrix& divergence, const Matrix& pressure_modes, int count) {
  require(count >= 0 && count <= pressure_modes.cols(), "supremizers: count exceeds the pressure modes");
  require(pressure_modes.rows() == divergence.rows(), "supremizers: pressure modes do not match B");
  return divergence.transpose() * pressure_modes.leftCols(count);
}

EnrichedBasis enrich_and_orthonormalize(const Matrix& basis, const Matrix& extra, double drop_tol) {
  require(basis.rows() == extra.rows() || basis.cols() == 0, "enrich: row count mismatch");
  EnrichedBasis out;
  out.basis.resize(extra.rows(), basis.cols() + extra.cols());
  out.basis.leftCols(basis.cols()) = basis;
  Index cols = basis.cols();
  for (Index k = 0; k < extra.cols(); ++k) {
    Vector v = extra.col(k);
    const double original = v.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Index j = 0; j < cols; ++j) v -= out.basis.col(j).dot(v) * out.basis.col(j);
    const double remaining = v.norm();
    if (original == 0.0 || remaining < drop_tol * original) {
      ++out.dropped;
      continue;
    }
    out.basis.col(cols++) = v / remaining;
    ++out.kept;
  }
  out.basis.conservativeResize(Eigen::NoChange, cols);
  return out;
}

PodBasis build_basis(const SnapshotSet& snapshots, const ComponentOperators& ops, int rank_u, int rank_p,
                     int num_supremizers) {
  require(snapshots.size() > 0, "no snapshots for component '" + snapshots.component + "'");
  require(snapshots.velocity.rows() == ops.num_velocity_dofs() && snapshots.pressure.rows() == ops.num_pressure_dofs(),
          "snapshots of '" + snapshots.component + "' do not match the component space");
  require(rank_u >= 0 && rank_p >= 0, "basis ranks must be non-negative");
  const PodModes pu = pod(snapshots.velocity);
  const PodModes pp = pod(snapshots.pressure);

  PodBasis b;
  b.component = snapshots.component;
  b.sigma_u = pu.singular_values;
  b.sigma_p = pp.singular_values;
  b.rank_u = std::min<int>(rank_u, static_cast<int>(pu.modes.cols()));
  b.rank_p = std::min<int>(rank_p, static_cast<int>(pp.modes.cols()));
  const int z = std::min<int>(num_supremizers < 0 ? b.rank_p : num_supremizers, static_cast<int>(pp.modes.cols()));
  b.pressure = pp.modes.leftCols(b.rank_p);
  const EnrichedBasis enriched =
      enrich_and_orthonormalize(pu.modes.leftCols(b.rank_u), supremizers(ops.divergence, pp.modes, z));
  b.velocity = enriched.basis;
  b.supremizers = enriched.kept;
  b.supremizers_dropped = enriched.dropped;
  if (enriched.dropped > 0)
    std::clog << "warning: dropped " << enriched.dropped << " dependent supremizer(s) for component '"
              << b.component << "'\n";
  return b;
}

void save_basis(const PodBasis& basis, const std::filesystem::path& path) {
  BinaryWriter w(path, "CROMBAS1");
  w.string(basis.component);
  w.u64(static_cast<std::uint64_t>(basis.velocity.rows()));
  w.u64(static_cast<std::uint64_t>(basis.pressure.rows()));
  w.u64(static_cast<std::uint64_t>(basis.rank_u));
  w.u64(static_cast<std::uint64_t>(basis.rank_p));
  w.u64(static_cast<std::uint64_t>(basis.supremizers));
  w.dense(basis.velocity);
  w.dense(basis.pressure);
  w.vector_with_size(basis.sigma_u);
  w.vector_with_size(basis.sigma_p);
  w.finish();
}

PodBasis load_basis(const std::filesystem::path& path) {
  BinaryReader r(path, "CROMBAS1");
  PodBasis b;
  b.component = r.string();
  const auto nu = static_cast<Index>(r.u64());
  const auto np = static_cast<Index>(r.u64());
  b.rank_u = static_cast<int>(r.u64());
  b.rank_p = static_cast<int>(r.u64());
  b.supremizers = static_cast<int>(r.u64());
  b.velocity = r.dense(nu, b.rank_u + b.supremizers);
  b.pressure = r.dense(np, b.rank_p);
  b.sigma_u = r.vector_with_size();
  b.sigma_p = r.vector_with_size();
  require(b.rank_u <= b.sigma_u.size() && b.rank_p <= b.sigma_p.size(), path.string() + ": ranks exceed spectra");
  return b;
}

PodBasis identity_basis(const ComponentOperators& ops, const std::string& component) {
  PodBasis b;
  b.component = component;
  b.velocity = Matrix::Identity(ops.num_velocity_dofs(), ops.num_velocity_dofs());
  b.pressure = Matrix::Identity(ops.num_pressure_dofs(), ops.num_pressure_dofs());
  b.sigma_u = Vector::Ones(ops.num_velocity_dofs());
  b.sigma_p = Vector::Ones(ops.num_pressure_dofs());
  b.rank_u = ops.num_velocity_dofs();
  b.rank_p = ops.num_pressure_dofs();
  return b;
}

FieldSamples sample_fields(const TaylorHoodSpace& space, const Matrix& velocity_vectors) {
  require(velocity_vectors.rows() == space.num_velocity_dofs(), "sample_fields: vector size mismatch");
  const auto& points = space.quadrature_points();
  const Index q = static_cast<Index>(points.size());
  std::vector<Triplet> tv, tx, ty;
  tv.reserve(6 * q);
  tx.reserve(6 * q);
  ty.reserve(6 * q);
  FieldSamples out;
  out.weights.resize(q);
  for (Index k = 0; k < q; ++k) {
    const auto& qp = points[k];
    out.weights[k] = qp.weight;
    const auto& nodes = space.element_nodes(qp.element);
    for (int a = 0; a < 6; ++a) {
      tv.emplace_back(k, nodes[a], qp.shape.p2[a]);
      tx.emplace_back(k, nodes[a], qp.shape.p2_grad[a].x());
      ty.emplace_back(k, nodes[a], qp.shape.p2_grad[a].y());
    }
  }
  const Index n = space.num_nodes();
  SparseMatrix sv(q, n), sx(q, n), sy(q, n);
  sv.setFromTriplets(tv.begin(), tv.end());
  sx.setFromTriplets(tx.begin(), tx.end());
  sy.setFromTriplets(ty.begin(), ty.end());
  for (int c = 0; c < 2; ++c) {
    const Matrix block = velocity_vectors.middleRows(c * n, n);
    out.value[c] = sv * block;
    out.grad[c][0] = sx * block;
    out.grad[c][1] = sy * block;
  }
  return out;
}

AdvectionTensor::AdvectionTensor(int rank, std::vector<double> data) : rank_(rank), data_(std::move(data)) {
  require(rank >= 0 && data_.size() == static_cast<std::size_t>(rank) * rank * rank, "tensor size mismatch");
}

Vector AdvectionTensor::contract(const Vector& coeffs) const {
  require(coeffs.size() == rank_, "tensor contraction size mismatch");
  const Index r = rank_;
  Vector outer(r * r);
  for (Index j = 0; j < r; ++j) outer.segment(j * r, r) = coeffs[j] * coeffs;
  return Eigen::Map<const Matrix>(data_.data(), r * r, r).transpose() * outer;
}

Matrix AdvectionTensor::jacobian(const Vector& coeffs) const {
  require(coeffs.size() == rank_, "tensor Jacobian size mismatch");
  const Index r = rank_;
  Matrix jac(r, r);
  for (Index i = 0; i < r; ++i) {
    // slice(k, j) = Ĉ_ijk
    const Eigen::Map<const Matrix> slice(data_.data() + i * r * r, r, r);
    jac.row(i) = (slice.transpose() * coeffs + slice * coeffs).transpose();
  }
  return jac;
}

AdvectionTensor build_advection_tensor(const TaylorHoodSpace& space, const Matrix& velocity_basis) {
  const FieldSamples s = sample_fields(space, velocity_basis);
  const Index r = velocity_basis.cols();
  const Index q = s.weights.size();
  Matrix t = Matrix::Zero(r * r, r);
  constexpr Index kChunk = 256;
  Matrix p(kChunk, r * r);
  for (Index start = 0; start < q; start += kChunk) {
    const Index len = std::min(kChunk, q - start);
    for (int c = 0; c < 2; ++c) {
      // p(q, k + r j) = (φ_j·∇φ_k)_c at the point
      for (Index k = 0; k < len; ++k) {
        const Index g = start + k;
        for (Index j = 0; j < r; ++j) {
          const double vx = s.value[0](g, j), vy = s.value[1](g, j);
          p.row(k).segment(j * r, r) = vx * s.grad[c][0].row(g) + vy * s.grad[c][1].row(g);
        }
      }
      const Matrix weighted = s.weights.segment(start, len).asDiagonal() * s.value[c].middleRows(start, len);
      t.noalias() += p.topRows(len).transpose() * weighted;
    }
  }
  return AdvectionTensor(static_cast<int>(r), std::vector<double>(t.data(), t.data() + t.size()));
}

void save_tensor(const AdvectionTensor& tensor, const std::filesystem::path& path) {
  BinaryWriter w(path, "CROMTEN1");
  for (int k = 0; k < 3; ++k) w.u64(static_cast<std::uint64_t>(tensor.rank()));
  w.f64_array(tensor.data().data(), tensor.data().size());
  w.finish();
}

AdvectionTensor load_tensor(const std::filesystem::path& path) {
  BinaryReader r(path, "CROMTEN1");
  const auto a = r.u64(), b = r.u64(), c = r.u64();
  require(a == b && b == c, path.string() + ": tensor must be cubic");
  std::vector<double> data(static_cast<std::size_t>(a * a * a));
  r.f64_array(data.data(), data.size());
  return AdvectionTensor(static_cast<int>(a), std::move(data));
}

const ReducedComponent& ReducedModel::component(const std::string& name) const {
  auto it = components.find(name);
  require(it != components.end(), "missing reduced operators for component '" + name + "'");
  return it->second;
}

const ReducedInterface& ReducedModel::interface(const InterfaceKey& key) const {
  auto it = interfaces.find(key);
  require(it != interfaces.end(),
          "missing reduced interface block for " + key.component_m + "/" + key.component_n);
  return it->second;
}

namespace {

Matrix triple(const Matrix& left, const SparseMatrix& a, const Matrix& right) {
  return left.transpose() * (a * right);
}

Matrix left_project(const Matrix& left, const SparseMatrix& w) {
  return (w.transpose() * left).transpose();
}

}  // namespace

ReducedModel project_linear(const ComponentLibrary& library, const std::map<std::string, PodBasis>& bases,
                            bool with_tensor) {
  ReducedModel model;
  model.library = &library;
  for (const auto& [name, basis] : bases) {
    const ComponentOperators& ops = library.component(name);
    require(basis.velocity.rows() == ops.num_velocity_dofs() && basis.pressure.rows() == ops.num_pressure_dofs(),
            "basis of '" + name + "' does not match its component space");
    ReducedComponent rc;
    rc.fom = &ops;
    rc.basis = basis;
    const Matrix& pu = basis.velocity;
    const Matrix& pp = basis.pressure;
    rc.viscous = triple(pu, ops.viscous, pu);
    rc.divergence = triple(pp, ops.divergence, pu);
    for (int t = 0; t < kNumTags; ++t) {
      rc.dirichlet_viscous[t] = triple(pu, ops.dirichlet[t].viscous, pu);
      rc.dirichlet_divergence[t] = triple(pp, ops.dirichlet[t].divergence, pu);
      rc.loads[t].dirichlet_velocity = left_project(pu, ops.loads[t].dirichlet_velocity);
      rc.loads[t].dirichlet_pressure = left_project(pp, ops.loads[t].dirichlet_pressure);
      rc.loads[t].neumann_velocity = left_project(pu, ops.loads[t].neumann_velocity);
    }
    rc.pressure_mean = pp.transpose() * (ops.space->pressure_mass() * Vector::Ones(ops.num_pressure_dofs()));
    if (with_tensor) rc.tensor = build_advection_tensor(*ops.space, pu);
    model.components.emplace(name, std::move(rc));
  }
  for (const auto& [key, blocks] : library.interfaces()) {
    auto im = model.components.find(key.component_m);
    auto in = model.components.find(key.component_n);
    if (im == model.components.end() || in == model.components.end()) continue;
    const Matrix& um = im->second.basis.velocity;
    const Matrix& un = in->second.basis.velocity;
    const Matrix& pm = im->second.basis.pressure;
    const Matrix& pn = in->second.basis.pressure;
    ReducedInterface ri;
    ri.viscous_mm = triple(um, blocks.viscous_mm, um);
    ri.viscous_mn = triple(um, blocks.viscous_mn, un);
    ri.viscous_nm = triple(un, blocks.viscous_nm, um);
    ri.viscous_nn = triple(un, blocks.viscous_nn, un);
    ri.divergence_mm = triple(pm, blocks.divergence_mm, um);
    ri.divergence_mn = triple(pm, blocks.divergence_mn, un);
    ri.divergence_nm = triple(pn, blocks.divergence_nm, um);
    ri.divergence_nn = triple(pn, blocks.divergence_nn, un);
    model.interfaces.emplace(key, std::move(ri));
  }
  return model;
}

}  // namespace crom
