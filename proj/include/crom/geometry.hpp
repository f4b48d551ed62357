#pragma once

#include "crom/types.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace crom {

enum class BoundaryTag : std::uint8_t { Left = 0, Right = 1, Bottom = 2, Top = 3, Obstacle = 4 };

inline constexpr std::array<BoundaryTag, 4> kSides = {BoundaryTag::Left, BoundaryTag::Right,
                                                      BoundaryTag::Bottom, BoundaryTag::Top};
inline constexpr int kNumTags = 5;

inline constexpr int tag_index(BoundaryTag tag) { return static_cast<int>(tag); }
char tag_letter(BoundaryTag tag);
BoundaryTag tag_from_letter(char letter);
std::string tag_name(BoundaryTag tag);

/// Outward unit normal of a unit-square side.
Point2 side_normal(BoundaryTag side);

struct BoundaryEdge {
  std::array<int, 2> vertices;
  BoundaryTag tag;
};

/// Triangulated unit square (possibly with a hole) whose four sides carry a
/// shared 1D partition, so that any two components meet with one-to-one faces.
class ComponentMesh {
 public:
  ComponentMesh() = default;

  /// Validates every mesh invariant; throws crom::Error describing the first violation.
  ComponentMesh(std::vector<Point2> vertices, std::vector<std::array<int, 3>> triangles,
                std::vector<BoundaryEdge> boundary);

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_; }

  /// Boundary-edge indices along a side, ordered by increasing x (Bottom/Top) or y (Left/Right).
  const std::vector<int>& side_trace(BoundaryTag side) const {
    return side_traces_[tag_index(side)];
  }
  /// Breakpoints of the shared side partition, from 0 to 1.
  const std::vector<double>& side_breakpoints() const { return breakpoints_; }
  /// Boundary-edge indices tagged Obstacle.
  const std::vector<int>& obstacle_edges() const { return obstacle_edges_; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  double signed_area(int triangle) const;
  double area() const;

 private:
  void validate_and_index();

  std::vector<Point2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_;
  std::array<std::vector<int>, 4> side_traces_;
  std::vector<int> obstacle_edges_;
  std::vector<double> breakpoints_;
};

enum class ObstacleShape { Square, Circle };

ComponentMesh generate_empty_mesh(int n_per_side);

/// O-grid between the outer square and a centred obstacle. `layers` = 0 picks
/// a radial layer count matched to the side spacing.
ComponentMesh generate_obstacle_mesh(int n_per_side, ObstacleShape shape, double half_width,
                                     int layers = 0);

void save_mesh(const ComponentMesh& mesh, const std::filesystem::path& path);
ComponentMesh load_mesh(const std::filesystem::path& path);
void write_mesh(const ComponentMesh& mesh, std::ostream& out);
ComponentMesh read_mesh(std::istream& in);

/// Velocity field in global coordinates.
using VelocityFunction = std::function<Point2(const Point2&)>;
/// Neumann traction data n·(ν∇u - pI), as a function of position and outward normal.
using TractionFunction = std::function<Point2(const Point2&, const Point2&)>;

struct BoundaryCondition {
  enum class Kind { Dirichlet, Neumann };
  Kind kind = Kind::Neumann;
  VelocityFunction velocity;  // Dirichlet data g_di
  TractionFunction traction;  // optional Neumann data g_ne; empty means homogeneous

  static BoundaryCondition dirichlet(VelocityFunction g) {
    return BoundaryCondition{Kind::Dirichlet, std::move(g), {}};
  }
  static BoundaryCondition neumann(TractionFunction g = {}) {
    return BoundaryCondition{Kind::Neumann, {}, std::move(g)};
  }
  bool is_dirichlet() const { return kind == Kind::Dirichlet; }
};

/// Global array layout: `cols` x `rows` unit cells, cell m = row * cols + col with origin (col, row).
struct GridConfig {
  int rows = 1;
  int cols = 1;
  std::vector<std::string> cell_component;
  double viscosity = 1.0;
  std::array<BoundaryCondition, 4> bc;  // indexed by tag_index of the global side
  VelocityFunction forcing;             // empty means f = 0
  bool mean_zero_pressure = false;

  int num_cells() const { return rows * cols; }
  Point2 cell_origin(int m) const {
    return Point2(static_cast<double>(m % cols), static_cast<double>(m / cols));
  }
  const BoundaryCondition& side_bc(BoundaryTag side) const { return bc[tag_index(side)]; }
  bool has_neumann() const;
};

GridConfig uniform_grid(int rows, int cols, const std::string& component, double viscosity);

using MeshRegistry = std::map<std::string, std::shared_ptr<const ComponentMesh>>;

/// Checks registry membership and boundary-condition presence.
void validate_grid(const GridConfig& grid, const MeshRegistry& registry);

enum class Orientation : std::uint8_t { Horizontal = 0, Vertical = 1 };

struct InterfaceEntry {
  int m = 0;  // left (Horizontal) or lower (Vertical) subdomain
  int n = 0;
  Orientation orientation = Orientation::Horizontal;
  std::vector<std::pair<int, int>> face_pairs;  // boundary-edge indices in mesh(m), mesh(n)
};

struct InterfaceList {
  std::vector<InterfaceEntry> entries;
};

/// Side of subdomain m (first) and n (second) that meet along an interface.
std::pair<BoundaryTag, BoundaryTag> interface_sides(Orientation orientation);

InterfaceList build_interfaces(const GridConfig& grid, const MeshRegistry& registry);

}  // namespace crom
