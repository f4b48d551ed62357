#pragma once

#include "crom/geometry.hpp"

#include <array>
#include <functional>
#include <memory>
#include <vector>

namespace crom {

using Barycentric = std::array<double, 3>;

/// Triangle rule in barycentric coordinates; weights sum to the reference measure 1/2.
struct TriangleRule {
  int degree = 0;
  std::vector<Barycentric> points;
  std::vector<double> weights;
};

/// Gauss rule on [0, 1]; weights sum to 1.
struct EdgeRule {
  int degree = 0;
  std::vector<double> points;
  std::vector<double> weights;
};

/// 7-point rule exact to degree 5.
const TriangleRule& triangle_rule();
/// 3-point Gauss rule exact to degree 5.
const EdgeRule& edge_rule();

struct ShapeValues {
  std::array<double, 6> p2{};
  std::array<Point2, 6> p2_grad{};
  std::array<double, 3> p1{};
  std::array<Point2, 3> p1_grad{};
};

/// Evaluates reference P2/P1 Lagrange shapes; gradients use the element's barycentric gradients.
ShapeValues evaluate_shapes(const Barycentric& bary, const std::array<Point2, 3>& bary_grad);

/// Continuous P2 velocity / P1 pressure space on one component mesh.
///
/// Velocity dofs are blocked by component: dof(node, c) = node + c * num_nodes(),
/// with nodes numbered vertices first and then edge midpoints. Pressure dofs are
/// the vertices.
class TaylorHoodSpace {
 public:
  struct Face {
    int element = -1;
    int local_edge = -1;  // nodes (e, e+1 mod 3) and midpoint 3 + e
    Point2 a, b;          // endpoints in the boundary-edge order
    Point2 normal;        // outward unit normal
    double length = 0.0;
  };

  struct QuadPoint {
    int element = 0;
    int local = 0;
    double weight = 0.0;  // physical weight
    Point2 x;
    ShapeValues shape;
  };

  explicit TaylorHoodSpace(std::shared_ptr<const ComponentMesh> mesh);

  const ComponentMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const ComponentMesh>& mesh_ptr() const { return mesh_; }

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return num_nodes_ - mesh_->num_vertices(); }
  int num_velocity_dofs() const { return 2 * num_nodes_; }
  int num_pressure_dofs() const { return mesh_->num_vertices(); }
  int num_elements() const { return mesh_->num_triangles(); }
  int velocity_dof(int node, int component) const { return node + component * num_nodes_; }

  const std::array<int, 6>& element_nodes(int t) const { return element_nodes_[t]; }
  const std::array<int, 3>& element_vertices(int t) const { return mesh_->triangles()[t]; }
  const std::array<Point2, 3>& barycentric_gradients(int t) const { return bary_grad_[t]; }
  double element_area(int t) const { return areas_[t]; }
  const Point2& node_position(int node) const { return node_positions_[node]; }

  Point2 to_physical(int t, const Barycentric& bary) const;
  Barycentric to_barycentric(int t, const Point2& x) const;
  ShapeValues evaluate(int t, const Barycentric& bary) const {
    return evaluate_shapes(bary, bary_grad_[t]);
  }

  /// Face data for a mesh boundary edge index.
  const Face& face(int boundary_edge) const { return faces_[boundary_edge]; }

  /// All element quadrature points (the set used by the empirical quadrature).
  const std::vector<QuadPoint>& quadrature_points() const { return quad_points_; }
  int quad_points_per_element() const { return static_cast<int>(triangle_rule().points.size()); }

  /// Nodal interpolation; `offset` translates local coordinates into global ones.
  Vector interpolate_velocity(const std::function<Point2(const Point2&)>& field,
                              const Point2& offset = Point2::Zero()) const;
  Vector interpolate_pressure(const std::function<double(const Point2&)>& field,
                              const Point2& offset = Point2::Zero()) const;

  Point2 velocity_value(const Vector& u, int t, const ShapeValues& shape) const;
  Eigen::Matrix2d velocity_gradient(const Vector& u, int t, const ShapeValues& shape) const;
  double pressure_value(const Vector& p, int t, const ShapeValues& shape) const;

  const SparseMatrix& velocity_mass() const { return velocity_mass_; }
  const SparseMatrix& pressure_mass() const { return pressure_mass_; }

 private:
  std::shared_ptr<const ComponentMesh> mesh_;
  int num_nodes_ = 0;
  std::vector<std::array<int, 6>> element_nodes_;
  std::vector<std::array<Point2, 3>> bary_grad_;
  std::vector<double> areas_;
  std::vector<Point2> node_positions_;
  std::vector<Face> faces_;
  std::vector<QuadPoint> quad_points_;
  SparseMatrix velocity_mass_;
  SparseMatrix pressure_mass_;
};

double velocity_l2_norm(const TaylorHoodSpace& space, const Vector& u);
double pressure_l2_norm(const TaylorHoodSpace& space, const Vector& p);
double velocity_l2_error(const TaylorHoodSpace& space, const Vector& u,
                         const std::function<Point2(const Point2&)>& exact,
                         const Point2& offset = Point2::Zero());
double pressure_l2_error(const TaylorHoodSpace& space, const Vector& p,
                         const std::function<double(const Point2&)>& exact,
                         const Point2& offset = Point2::Zero());

}  // namespace crom
