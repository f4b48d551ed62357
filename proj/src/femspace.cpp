#include "crom/femspace.hpp"

#include <cmath>
#include <map>

namespace crom {

const TriangleRule& triangle_rule() {
  static const TriangleRule rule = [] {
    const double s15 = std::sqrt(15.0);
    const double a = (6.0 - s15) / 21.0;
    const double b = (6.0 + s15) / 21.0;
    const double wa = (155.0 - s15) / 1200.0;
    const double wb = (155.0 + s15) / 1200.0;
    TriangleRule r;
    r.degree = 5;
    r.points = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
                {1.0 - 2.0 * a, a, a}, {a, 1.0 - 2.0 * a, a}, {a, a, 1.0 - 2.0 * a},
                {1.0 - 2.0 * b, b, b}, {b, 1.0 - 2.0 * b, b}, {b, b, 1.0 - 2.0 * b}};
    r.weights = {9.0 / 40.0, wa, wa, wa, wb, wb, wb};
    for (auto& w : r.weights) w *= 0.5;
    return r;
  }();
  return rule;
}

const EdgeRule& edge_rule() {
  static const EdgeRule rule = [] {
    const double g = std::sqrt(0.6);
    EdgeRule r;
    r.degree = 5;
    r.points = {0.5 * (1.0 - g), 0.5, 0.5 * (1.0 + g)};
    r.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    return r;
  }();
  return rule;
}

ShapeValues evaluate_shapes(const Barycentric& l, const std::array<Point2, 3>& g) {
  ShapeValues s;
  for (int i = 0; i < 3; ++i) {
    s.p1[i] = l[i];
    s.p1_grad[i] = g[i];
    s.p2[i] = l[i] * (2.0 * l[i] - 1.0);
    s.p2_grad[i] = (4.0 * l[i] - 1.0) * g[i];
  }
  for (int e = 0; e < 3; ++e) {
    const int i = e, j = (e + 1) % 3;
    s.p2[3 + e] = 4.0 * l[i] * l[j];
    s.p2_grad[3 + e] = 4.0 * (l[j] * g[i] + l[i] * g[j]);
  }
  return s;
}

TaylorHoodSpace::TaylorHoodSpace(std::shared_ptr<const ComponentMesh> mesh) : mesh_(std::move(mesh)) {
  require(mesh_ != nullptr, "null mesh");
  const auto& tris = mesh_->triangles();
  const auto& verts = mesh_->vertices();
  const int nv = mesh_->num_vertices();
  const int nt = mesh_->num_triangles();

  std::map<std::pair<int, int>, int> edge_id;
  std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;  // edge -> (element, local edge)
  element_nodes_.resize(nt);
  node_positions_.assign(verts.begin(), verts.end());
  for (int t = 0; t < nt; ++t) {
    for (int v = 0; v < 3; ++v) element_nodes_[t][v] = tris[t][v];
    for (int e = 0; e < 3; ++e) {
      int a = tris[t][e], b = tris[t][(e + 1) % 3];
      const auto key = a < b ? std::pair{a, b} : std::pair{b, a};
      auto [it, inserted] = edge_id.emplace(key, nv + static_cast<int>(edge_id.size()));
      if (inserted) node_positions_.push_back(0.5 * (verts[a] + verts[b]));
      element_nodes_[t][3 + e] = it->second;
      edge_owner[key] = {t, e};
    }
  }
  num_nodes_ = static_cast<int>(node_positions_.size());

  bary_grad_.resize(nt);
  areas_.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const Point2& p0 = verts[tris[t][0]];
    const Point2& p1 = verts[tris[t][1]];
    const Point2& p2 = verts[tris[t][2]];
    const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
    areas_[t] = 0.5 * det;
    bary_grad_[t][0] = Point2(p1.y() - p2.y(), p2.x() - p1.x()) / det;
    bary_grad_[t][1] = Point2(p2.y() - p0.y(), p0.x() - p2.x()) / det;
    bary_grad_[t][2] = Point2(p0.y() - p1.y(), p1.x() - p0.x()) / det;
  }

  const auto& boundary = mesh_->boundary_edges();
  faces_.resize(boundary.size());
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const int a = boundary[k].vertices[0], b = boundary[k].vertices[1];
    const auto [t, e] = edge_owner.at(a < b ? std::pair{a, b} : std::pair{b, a});
    Face& f = faces_[k];
    f.element = t;
    f.local_edge = e;
    f.a = verts[a];
    f.b = verts[b];
    const Point2 d = f.b - f.a;
    f.length = d.norm();
    Point2 n(d.y(), -d.x());
    n /= f.length;
    const Point2 opposite = verts[tris[t][(e + 2) % 3]];
    if (n.dot(opposite - f.a) > 0.0) n = -n;
    f.normal = n;
  }

  const auto& rule = triangle_rule();
  quad_points_.reserve(static_cast<std::size_t>(nt) * rule.points.size());
  for (int t = 0; t < nt; ++t) {
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      QuadPoint qp;
      qp.element = t;
      qp.local = static_cast<int>(q);
      qp.weight = rule.weights[q] * 2.0 * areas_[t];
      qp.x = to_physical(t, rule.points[q]);
      qp.shape = evaluate(t, rule.points[q]);
      quad_points_.push_back(qp);
    }
  }

  std::vector<Triplet> mu, mp;
  for (const auto& qp : quad_points_) {
    const auto& nodes = element_nodes_[qp.element];
    const auto& vtx = tris[qp.element];
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double v = qp.weight * qp.shape.p2[i] * qp.shape.p2[j];
        mu.emplace_back(velocity_dof(nodes[i], 0), velocity_dof(nodes[j], 0), v);
        mu.emplace_back(velocity_dof(nodes[i], 1), velocity_dof(nodes[j], 1), v);
      }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) mp.emplace_back(vtx[i], vtx[j], qp.weight * qp.shape.p1[i] * qp.shape.p1[j]);
  }
  velocity_mass_.resize(num_velocity_dofs(), num_velocity_dofs());
  velocity_mass_.setFromTriplets(mu.begin(), mu.end());
  pressure_mass_.resize(num_pressure_dofs(), num_pressure_dofs());
  pressure_mass_.setFromTriplets(mp.begin(), mp.end());
}

Point2 TaylorHoodSpace::to_physical(int t, const Barycentric& l) const {
  const auto& tri = mesh_->triangles()[t];
  const auto& v = mesh_->vertices();
  return l[0] * v[tri[0]] + l[1] * v[tri[1]] + l[2] * v[tri[2]];
}

Barycentric TaylorHoodSpace::to_barycentric(int t, const Point2& x) const {
  const Point2& p0 = mesh_->vertices()[mesh_->triangles()[t][0]];
  const Point2 d = x - p0;
  const double l1 = bary_grad_[t][1].dot(d);
  const double l2 = bary_grad_[t][2].dot(d);
  return {1.0 - l1 - l2, l1, l2};
}

Vector TaylorHoodSpace::interpolate_velocity(const std::function<Point2(const Point2&)>& field,
                                             const Point2& offset) const {
  Vector u(num_velocity_dofs());
  for (int a = 0; a < num_nodes_; ++a) {
    const Point2 v = field(node_positions_[a] + offset);
    u[velocity_dof(a, 0)] = v.x();
    u[velocity_dof(a, 1)] = v.y();
  }
  return u;
}

Vector TaylorHoodSpace::interpolate_pressure(const std::function<double(const Point2&)>& field,
                                             const Point2& offset) const {
  Vector p(num_pressure_dofs());
  for (int a = 0; a < num_pressure_dofs(); ++a) p[a] = field(node_positions_[a] + offset);
  return p;
}

Point2 TaylorHoodSpace::velocity_value(const Vector& u, int t, const ShapeValues& s) const {
  Point2 v = Point2::Zero();
  const auto& nodes = element_nodes_[t];
  for (int i = 0; i < 6; ++i) {
    v.x() += s.p2[i] * u[velocity_dof(nodes[i], 0)];
    v.y() += s.p2[i] * u[velocity_dof(nodes[i], 1)];
  }
  return v;
}

Eigen::Matrix2d TaylorHoodSpace::velocity_gradient(const Vector& u, int t, const ShapeValues& s) const {
  // row c = gradient of component c
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  const auto& nodes = element_nodes_[t];
  for (int i = 0; i < 6; ++i) {
    g.row(0) += u[velocity_dof(nodes[i], 0)] * s.p2_grad[i].transpose();
    g.row(1) += u[velocity_dof(nodes[i], 1)] * s.p2_grad[i].transpose();
  }
  return g;
}

double TaylorHoodSpace::pressure_value(const Vector& p, int t, const ShapeValues& s) const {
  const auto& vtx = mesh_->triangles()[t];
  return s.p1[0] * p[vtx[0]] + s.p1[1] * p[vtx[1]] + s.p1[2] * p[vtx[2]];
}

double velocity_l2_norm(const TaylorHoodSpace& space, const Vector& u) {
  return std::sqrt(std::max(0.0, u.dot(space.velocity_mass() * u)));
}

double pressure_l2_norm(const TaylorHoodSpace& space, const Vector& p) {
  return std::sqrt(std::max(0.0, p.dot(space.pressure_mass() * p)));
}

double velocity_l2_error(const TaylorHoodSpace& space, const Vector& u,
                         const std::function<Point2(const Point2&)>& exact, const Point2& offset) {
  double sum = 0.0;
  for (const auto& qp : space.quadrature_points()) {
    const Point2 e = space.velocity_value(u, qp.element, qp.shape) - exact(qp.x + offset);
    sum += qp.weight * e.squaredNorm();
  }
  return std::sqrt(sum);
}

double pressure_l2_error(const TaylorHoodSpace& space, const Vector& p,
                         const std::function<double(const Point2&)>& exact, const Point2& offset) {
  double sum = 0.0;
  for (const auto& qp : space.quadrature_points()) {
    const double e = space.pressure_value(p, qp.element, qp.shape) - exact(qp.x + offset);
    sum += qp.weight * e * e;
  }
  return std::sqrt(sum);
}

}  // namespace crom
