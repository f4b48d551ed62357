#pragma once

#include "crom/fom.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace crom::testing {

inline MeshRegistry empty_registry(int n) {
  return MeshRegistry{{"empty", std::make_shared<const ComponentMesh>(generate_empty_mesh(n))}};
}

inline MeshRegistry pool_registry(int n) {
  MeshRegistry r = empty_registry(n);
  r.emplace("square", std::make_shared<const ComponentMesh>(generate_obstacle_mesh(n, ObstacleShape::Square, 0.25)));
  r.emplace("circle", std::make_shared<const ComponentMesh>(generate_obstacle_mesh(n, ObstacleShape::Circle, 0.25)));
  return r;
}

inline Point2 channel_velocity(const Point2& x) { return Point2(x.y() * (1.0 - x.y()), 0.0); }

/// Channel flow u = (y(1-y), 0) imposed on Left, Bottom and Top with free outflow on Right.
/// The exact pressure is 2ν(cols - x), zero on the outflow side.
inline GridConfig channel_grid(int rows, int cols, double viscosity) {
  GridConfig g = uniform_grid(rows, cols, "empty", viscosity);
  g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet(channel_velocity);
  g.bc[tag_index(BoundaryTag::Bottom)] = BoundaryCondition::dirichlet(channel_velocity);
  g.bc[tag_index(BoundaryTag::Top)] = BoundaryCondition::dirichlet(channel_velocity);
  g.bc[tag_index(BoundaryTag::Right)] = BoundaryCondition::neumann();
  return g;
}

struct ChannelErrors {
  double velocity = 0.0;  // relative L2
  double pressure = 0.0;  // relative L2
};

inline ChannelErrors channel_errors(const GlobalFomSystem& system, const Vector& state) {
  const GridConfig& g = system.grid();
  const double nu = g.viscosity;
  const double cols = g.cols;
  auto p_exact = [&](const Point2& x) { return 2.0 * nu * (cols - x.x()); };
  double eu = 0.0, ep = 0.0, nu2 = 0.0, np2 = 0.0;
  for (int m = 0; m < g.num_cells(); ++m) {
    const TaylorHoodSpace& sp = *system.cell_operators(m).space;
    const Point2 o = g.cell_origin(m);
    const Vector u = system.cell_velocity(state, m);
    const Vector p = system.cell_pressure(state, m);
    eu += std::pow(velocity_l2_error(sp, u, channel_velocity, o), 2);
    ep += std::pow(pressure_l2_error(sp, p, p_exact, o), 2);
    nu2 += std::pow(velocity_l2_error(sp, Vector::Zero(u.size()), channel_velocity, o), 2);
    np2 += std::pow(pressure_l2_error(sp, Vector::Zero(p.size()), p_exact, o), 2);
  }
  return {std::sqrt(eu / nu2), std::sqrt(ep / np2)};
}

/// Smooth divergence-free manufactured solution with forcing f = -ν∇²u + ∇p + u·∇u.
inline ManufacturedSolution taylor_green(double nu) {
  constexpr double pi = std::numbers::pi;
  ManufacturedSolution ms;
  ms.velocity = [](const Point2& x) {
    return Point2(std::sin(pi * x.x()) * std::cos(pi * x.y()), -std::cos(pi * x.x()) * std::sin(pi * x.y()));
  };
  ms.pressure = [](const Point2& x) { return std::cos(pi * x.x()) * std::cos(pi * x.y()); };
  ms.forcing = [nu, u = ms.velocity](const Point2& x) {
    const Point2 grad_p(-pi * std::sin(pi * x.x()) * std::cos(pi * x.y()),
                        -pi * std::cos(pi * x.x()) * std::sin(pi * x.y()));
    const Point2 advection(pi * std::sin(pi * x.x()) * std::cos(pi * x.x()),
                           pi * std::sin(pi * x.y()) * std::cos(pi * x.y()));
    return Point2(2.0 * nu * pi * pi * u(x) + grad_p + advection);
  };
  return ms;
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace crom::testing
