#include "crom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace crom {

namespace {

constexpr double kGeomTol = 1e-10;

double side_coordinate(const Point2& p, BoundaryTag side) {
  return (side == BoundaryTag::Left || side == BoundaryTag::Right) ? p.y() : p.x();
}

bool on_side(const Point2& p, BoundaryTag side) {
  switch (side) {
    case BoundaryTag::Left: return std::abs(p.x()) <= kGeomTol;
    case BoundaryTag::Right: return std::abs(p.x() - 1.0) <= kGeomTol;
    case BoundaryTag::Bottom: return std::abs(p.y()) <= kGeomTol;
    case BoundaryTag::Top: return std::abs(p.y() - 1.0) <= kGeomTol;
    default: return false;
  }
}

std::pair<int, int> sorted_pair(int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

}  // namespace

char tag_letter(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Left: return 'L';
    case BoundaryTag::Right: return 'R';
    case BoundaryTag::Bottom: return 'B';
    case BoundaryTag::Top: return 'T';
    case BoundaryTag::Obstacle: return 'O';
  }
  return '?';
}

BoundaryTag tag_from_letter(char letter) {
  switch (letter) {
    case 'L': return BoundaryTag::Left;
    case 'R': return BoundaryTag::Right;
    case 'B': return BoundaryTag::Bottom;
    case 'T': return BoundaryTag::Top;
    case 'O': return BoundaryTag::Obstacle;
    default: throw Error(std::string("unknown boundary tag '") + letter + "'");
  }
}

std::string tag_name(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Left: return "left";
    case BoundaryTag::Right: return "right";
    case BoundaryTag::Bottom: return "bottom";
    case BoundaryTag::Top: return "top";
    case BoundaryTag::Obstacle: return "obstacle";
  }
  return "?";
}

Point2 side_normal(BoundaryTag side) {
  switch (side) {
    case BoundaryTag::Left: return {-1.0, 0.0};
    case BoundaryTag::Right: return {1.0, 0.0};
    case BoundaryTag::Bottom: return {0.0, -1.0};
    case BoundaryTag::Top: return {0.0, 1.0};
    default: throw Error("obstacle boundary has no fixed normal");
  }
}

ComponentMesh::ComponentMesh(std::vector<Point2> vertices, std::vector<std::array<int, 3>> triangles,
                             std::vector<BoundaryEdge> boundary)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), boundary_(std::move(boundary)) {
  validate_and_index();
}

double ComponentMesh::signed_area(int t) const {
  const auto& tri = triangles_[t];
  const Point2 a = vertices_[tri[1]] - vertices_[tri[0]];
  const Point2 b = vertices_[tri[2]] - vertices_[tri[0]];
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

double ComponentMesh::area() const {
  double total = 0.0;
  for (int t = 0; t < num_triangles(); ++t) total += signed_area(t);
  return total;
}

void ComponentMesh::validate_and_index() {
  const int nv = num_vertices();
  require(nv >= 3 && !triangles_.empty(), "mesh has no triangles");
  for (const auto& p : vertices_) {
    require(p.x() >= -kGeomTol && p.x() <= 1.0 + kGeomTol && p.y() >= -kGeomTol &&
                p.y() <= 1.0 + kGeomTol,
            "vertex outside the unit square");
  }

  std::map<std::pair<int, int>, int> edge_use;
  for (int t = 0; t < num_triangles(); ++t) {
    for (int v : triangles_[t]) require(v >= 0 && v < nv, "triangle vertex index out of range");
    require(signed_area(t) > 0.0, "triangle " + std::to_string(t) + " has non-positive area");
    for (int k = 0; k < 3; ++k) ++edge_use[sorted_pair(triangles_[t][k], triangles_[t][(k + 1) % 3])];
  }
  for (const auto& [edge, count] : edge_use) require(count <= 2, "non-manifold edge in mesh");

  std::map<std::pair<int, int>, int> tagged;
  for (int e = 0; e < static_cast<int>(boundary_.size()); ++e) {
    const auto& be = boundary_[e];
    for (int v : be.vertices) require(v >= 0 && v < nv, "boundary vertex index out of range");
    const auto key = sorted_pair(be.vertices[0], be.vertices[1]);
    auto it = edge_use.find(key);
    require(it != edge_use.end() && it->second == 1, "tagged edge is not on the mesh boundary");
    require(tagged.emplace(key, e).second, "boundary edge tagged twice");
    if (be.tag != BoundaryTag::Obstacle) {
      require(on_side(vertices_[be.vertices[0]], be.tag) && on_side(vertices_[be.vertices[1]], be.tag),
              "edge tagged " + tag_name(be.tag) + " does not lie on that side");
    }
  }
  for (const auto& [edge, count] : edge_use) {
    if (count == 1) require(tagged.count(edge) == 1, "untagged boundary edge");
  }

  for (auto& trace : side_traces_) trace.clear();
  obstacle_edges_.clear();
  for (int e = 0; e < static_cast<int>(boundary_.size()); ++e) {
    if (boundary_[e].tag == BoundaryTag::Obstacle) {
      obstacle_edges_.push_back(e);
    } else {
      side_traces_[tag_index(boundary_[e].tag)].push_back(e);
    }
  }

  breakpoints_.clear();
  for (BoundaryTag side : kSides) {
    auto& trace = side_traces_[tag_index(side)];
    auto lo = [&](int e) {
      return std::min(side_coordinate(vertices_[boundary_[e].vertices[0]], side),
                      side_coordinate(vertices_[boundary_[e].vertices[1]], side));
    };
    auto hi = [&](int e) {
      return std::max(side_coordinate(vertices_[boundary_[e].vertices[0]], side),
                      side_coordinate(vertices_[boundary_[e].vertices[1]], side));
    };
    std::sort(trace.begin(), trace.end(), [&](int a, int b) { return lo(a) < lo(b); });
    require(!trace.empty(), "side " + tag_name(side) + " has no boundary edges");
    std::vector<double> points{lo(trace.front())};
    require(std::abs(points.front()) <= kGeomTol, "side " + tag_name(side) + " trace has a gap at 0");
    for (std::size_t k = 0; k < trace.size(); ++k) {
      if (k > 0) {
        require(std::abs(lo(trace[k]) - points.back()) <= kGeomTol,
                "side " + tag_name(side) + " trace has a gap or overlap");
      }
      points.push_back(hi(trace[k]));
    }
    require(std::abs(points.back() - 1.0) <= kGeomTol, "side " + tag_name(side) + " trace has a gap at 1");
    if (breakpoints_.empty()) {
      breakpoints_ = points;
    } else {
      require(points.size() == breakpoints_.size(), "side traces do not share one partition");
      for (std::size_t k = 0; k < points.size(); ++k) {
        require(std::abs(points[k] - breakpoints_[k]) <= kGeomTol,
                "side traces do not share one partition");
      }
    }
  }
}

ComponentMesh generate_empty_mesh(int n) {
  require(n >= 2, "n_per_side must be at least 2");
  std::vector<Point2> vertices;
  vertices.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) vertices.emplace_back(double(i) / n, double(j) / n);
  auto id = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(2 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }

  std::vector<BoundaryEdge> boundary;
  for (int k = 0; k < n; ++k) {
    boundary.push_back({{id(k, 0), id(k + 1, 0)}, BoundaryTag::Bottom});
    boundary.push_back({{id(n, k), id(n, k + 1)}, BoundaryTag::Right});
    boundary.push_back({{id(k + 1, n), id(k, n)}, BoundaryTag::Top});
    boundary.push_back({{id(0, k + 1), id(0, k)}, BoundaryTag::Left});
  }
  return ComponentMesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

ComponentMesh generate_obstacle_mesh(int n, ObstacleShape shape, double half_width, int layers) {
  require(n >= 2, "n_per_side must be at least 2");
  require(half_width > 0.0 && half_width < 0.5 - kGeomTol,
          "obstacle must lie strictly inside the unit square");
  if (layers <= 0) layers = std::max(2, static_cast<int>(std::ceil((0.5 - half_width) * n)));

  // Outer ring, counter-clockwise from the origin.
  const int ring = 4 * n;
  std::vector<Point2> outer;
  std::vector<BoundaryTag> outer_tag;  // tag of the edge (k, k+1)
  outer.reserve(ring);
  auto push = [&](double x, double y, BoundaryTag tag) {
    outer.emplace_back(x, y);
    outer_tag.push_back(tag);
  };
  for (int k = 0; k < n; ++k) push(double(k) / n, 0.0, BoundaryTag::Bottom);
  for (int k = 0; k < n; ++k) push(1.0, double(k) / n, BoundaryTag::Right);
  for (int k = 0; k < n; ++k) push(1.0 - double(k) / n, 1.0, BoundaryTag::Top);
  for (int k = 0; k < n; ++k) push(0.0, 1.0 - double(k) / n, BoundaryTag::Left);

  const Point2 centre(0.5, 0.5);
  std::vector<Point2> inner(ring);
  for (int k = 0; k < ring; ++k) {
    const Point2 d = outer[k] - centre;
    inner[k] = shape == ObstacleShape::Square ? Point2(centre + 2.0 * half_width * d)
                                              : Point2(centre + half_width * d.normalized());
  }

  std::vector<Point2> vertices;
  vertices.reserve(ring * (layers + 1));
  for (int l = 0; l <= layers; ++l) {
    const double t = double(l) / layers;
    for (int k = 0; k < ring; ++k) vertices.push_back((1.0 - t) * inner[k] + t * outer[k]);
  }
  // Snap the outer ring exactly onto the sides.
  for (int k = 0; k < ring; ++k) vertices[layers * ring + k] = outer[k];
  auto id = [ring](int k, int l) { return l * ring + (k % ring); };

  auto orient = [&](std::array<int, 3> tri) {
    const Point2 a = vertices[tri[1]] - vertices[tri[0]];
    const Point2 b = vertices[tri[2]] - vertices[tri[0]];
    if (a.x() * b.y() - a.y() * b.x() < 0.0) std::swap(tri[1], tri[2]);
    return tri;
  };
  auto min_angle = [&](const std::array<int, 3>& tri) {
    double best = std::numbers::pi;
    for (int c = 0; c < 3; ++c) {
      const Point2 u = vertices[tri[(c + 1) % 3]] - vertices[tri[c]];
      const Point2 v = vertices[tri[(c + 2) % 3]] - vertices[tri[c]];
      best = std::min(best, std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
    }
    return best;
  };

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(2 * ring * layers);
  for (int l = 0; l < layers; ++l) {
    for (int k = 0; k < ring; ++k) {
      const int a = id(k, l), b = id(k + 1, l), c = id(k + 1, l + 1), d = id(k, l + 1);
      const std::array<int, 3> t1{a, b, c}, t2{a, c, d}, s1{a, b, d}, s2{b, c, d};
      if (std::min(min_angle(t1), min_angle(t2)) >= std::min(min_angle(s1), min_angle(s2))) {
        triangles.push_back(orient(t1));
        triangles.push_back(orient(t2));
      } else {
        triangles.push_back(orient(s1));
        triangles.push_back(orient(s2));
      }
    }
  }

  std::vector<BoundaryEdge> boundary;
  for (int k = 0; k < ring; ++k) {
    boundary.push_back({{id(k, layers), id(k + 1, layers)}, outer_tag[k]});
    boundary.push_back({{id(k + 1, 0), id(k, 0)}, BoundaryTag::Obstacle});
  }
  return ComponentMesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

void write_mesh(const ComponentMesh& mesh, std::ostream& out) {
  out.precision(17);
  out << "CROM-MESH 1\n";
  out << "vertices " << mesh.num_vertices() << '\n';
  for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << '\n';
  out << "triangles " << mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "boundary " << mesh.boundary_edges().size() << '\n';
  for (const auto& e : mesh.boundary_edges())
    out << e.vertices[0] << ' ' << e.vertices[1] << ' ' << tag_letter(e.tag) << '\n';
}

ComponentMesh read_mesh(std::istream& in) {
  auto expect = [&](const std::string& keyword) {
    std::string word;
    require(static_cast<bool>(in >> word) && word == keyword,
            "malformed mesh file: expected '" + keyword + "'");
  };
  auto count = [&]() {
    long long n = -1;
    require(static_cast<bool>(in >> n) && n >= 0, "malformed mesh file: bad count");
    return static_cast<std::size_t>(n);
  };
  expect("CROM-MESH");
  int version = 0;
  require(static_cast<bool>(in >> version) && version == 1, "unsupported mesh format version");

  expect("vertices");
  std::vector<Point2> vertices(count());
  for (auto& p : vertices) require(static_cast<bool>(in >> p.x() >> p.y()), "malformed vertex line");

  expect("triangles");
  std::vector<std::array<int, 3>> triangles(count());
  for (auto& t : triangles) require(static_cast<bool>(in >> t[0] >> t[1] >> t[2]), "malformed triangle line");

  expect("boundary");
  std::vector<BoundaryEdge> boundary(count());
  for (auto& e : boundary) {
    std::string tag;
    require(static_cast<bool>(in >> e.vertices[0] >> e.vertices[1] >> tag) && tag.size() == 1,
            "malformed boundary line");
    e.tag = tag_from_letter(tag[0]);
  }
  return ComponentMesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

void save_mesh(const ComponentMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path.string() + " for writing");
  write_mesh(mesh, out);
}

ComponentMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open mesh file " + path.string());
  return read_mesh(in);
}

bool GridConfig::has_neumann() const {
  return std::any_of(bc.begin(), bc.end(), [](const BoundaryCondition& b) { return !b.is_dirichlet(); });
}

GridConfig uniform_grid(int rows, int cols, const std::string& component, double viscosity) {
  GridConfig grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.cell_component.assign(static_cast<std::size_t>(rows * cols), component);
  grid.viscosity = viscosity;
  return grid;
}

void validate_grid(const GridConfig& grid, const MeshRegistry& registry) {
  require(grid.rows >= 1 && grid.cols >= 1, "grid dimensions must be positive");
  require(static_cast<int>(grid.cell_component.size()) == grid.num_cells(),
          "cell_component size does not match the grid");
  require(grid.viscosity > 0.0, "viscosity must be positive");
  for (const auto& name : grid.cell_component)
    require(registry.count(name) == 1, "unknown component '" + name + "'");
  for (const auto& b : grid.bc) {
    if (b.is_dirichlet()) require(static_cast<bool>(b.velocity), "Dirichlet side without velocity data");
  }
}

std::pair<BoundaryTag, BoundaryTag> interface_sides(Orientation orientation) {
  return orientation == Orientation::Horizontal ? std::pair{BoundaryTag::Right, BoundaryTag::Left}
                                                : std::pair{BoundaryTag::Top, BoundaryTag::Bottom};
}

InterfaceList build_interfaces(const GridConfig& grid, const MeshRegistry& registry) {
  validate_grid(grid, registry);
  InterfaceList list;
  list.entries.reserve(static_cast<std::size_t>(grid.rows * (grid.cols - 1) + grid.cols * (grid.rows - 1)));

  auto connect = [&](int m, int n, Orientation orientation) {
    const auto& mesh_m = *registry.at(grid.cell_component[m]);
    const auto& mesh_n = *registry.at(grid.cell_component[n]);
    const auto [side_m, side_n] = interface_sides(orientation);
    const auto& trace_m = mesh_m.side_trace(side_m);
    const auto& trace_n = mesh_n.side_trace(side_n);
    require(trace_m.size() == trace_n.size(), "side trace mismatch between adjacent components");
    InterfaceEntry entry{m, n, orientation, {}};
    const Point2 shift = grid.cell_origin(n) - grid.cell_origin(m);
    for (std::size_t k = 0; k < trace_m.size(); ++k) {
      const auto& em = mesh_m.boundary_edges()[trace_m[k]];
      const auto& en = mesh_n.boundary_edges()[trace_n[k]];
      const Point2 mid_m = 0.5 * (mesh_m.vertices()[em.vertices[0]] + mesh_m.vertices()[em.vertices[1]]);
      const Point2 mid_n =
          0.5 * (mesh_n.vertices()[en.vertices[0]] + mesh_n.vertices()[en.vertices[1]]) + shift;
      require((mid_m - mid_n).norm() <= 1e-12, "side trace mismatch between adjacent components");
      entry.face_pairs.emplace_back(trace_m[k], trace_n[k]);
    }
    list.entries.push_back(std::move(entry));
  };

  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      const int m = row * grid.cols + col;
      if (col + 1 < grid.cols) connect(m, m + 1, Orientation::Horizontal);
      if (row + 1 < grid.rows) connect(m, m + grid.cols, Orientation::Vertical);
    }
  }
  return list;
}

}  // namespace crom
