#include "crom/fom.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace crom;
using namespace crom::testing;

TEST_CASE("channel flow is reproduced exactly") {
  for (auto [rows, cols] : {std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 2}, std::pair{2, 3}}) {
    const ComponentLibrary library(empty_registry(4), 0.04);
    const GlobalFomSystem system(channel_grid(rows, cols, 0.04), library);
    const FomSolution stokes = solve_stokes(system);
    const ChannelErrors es = channel_errors(system, stokes.state);
    CHECK(es.velocity <= 1e-8);
    CHECK(es.pressure <= 1e-8);
    const FomSolution ns = solve_newton(system);
    CHECK(ns.report.converged);
    CHECK(ns.report.newton_iterations <= 2);
    const ChannelErrors en = channel_errors(system, ns.state);
    CHECK(en.velocity <= 1e-8);
    CHECK(en.pressure <= 1e-8);
  }
}

TEST_CASE("interpolated channel solution has a vanishing residual") {
  const ComponentLibrary library(empty_registry(4), 0.1);
  const GridConfig grid = channel_grid(2, 2, 0.1);
  const GlobalFomSystem system(grid, library);
  Vector x = Vector::Zero(system.size());
  for (int m = 0; m < grid.num_cells(); ++m) {
    const TaylorHoodSpace& sp = *system.cell_operators(m).space;
    const Point2 o = grid.cell_origin(m);
    x.segment(system.velocity_offset(m), sp.num_velocity_dofs()) = sp.interpolate_velocity(channel_velocity, o);
    x.segment(system.pressure_offset(m), sp.num_pressure_dofs()) =
        sp.interpolate_pressure([&](const Point2& p) { return 2.0 * 0.1 * (grid.cols - p.x()); }, o);
  }
  CHECK(system.residual(x).norm() <= 1e-9 * system.rhs().norm());
}

TEST_CASE("trivial flows") {
  const ComponentLibrary library(empty_registry(4), 0.04);

  SUBCASE("zero Dirichlet data with mean-zero pressure") {
    GridConfig g = uniform_grid(2, 2, "empty", 0.04);
    for (auto& bc : g.bc) bc = BoundaryCondition::dirichlet([](const Point2&) { return Point2::Zero(); });
    const GlobalFomSystem system(g, library);
    CHECK(system.has_mean_constraint());
    const FomSolution sol = solve_stokes(system);
    CHECK(sol.state.norm() <= 1e-12);
  }
  SUBCASE("uniform flow") {
    GridConfig g = uniform_grid(2, 2, "empty", 0.04);
    const auto uniform = [](const Point2&) { return Point2(1.0, 0.0); };
    g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet(uniform);
    g.bc[tag_index(BoundaryTag::Bottom)] = BoundaryCondition::dirichlet(uniform);
    g.bc[tag_index(BoundaryTag::Top)] = BoundaryCondition::dirichlet(uniform);
    const GlobalFomSystem system(g, library);
    const FomSolution sol = solve_newton(system);
    CHECK(sol.report.converged);
    for (int m = 0; m < g.num_cells(); ++m) {
      const TaylorHoodSpace& sp = *system.cell_operators(m).space;
      CHECK(velocity_l2_error(sp, system.cell_velocity(sol.state, m), uniform) <= 1e-10);
      CHECK(system.cell_pressure(sol.state, m).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("global assembly structure") {
  const ComponentLibrary library(empty_registry(3), 0.04);

  SUBCASE("1x1 viscous block is the component block plus Dirichlet blocks") {
    GridConfig g = uniform_grid(1, 1, "empty", 0.04);
    g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2&) { return Point2(1.0, 0.0); });
    const GlobalFomSystem system(g, library);
    const ComponentOperators& ops = library.component("empty");
    const Index nu = ops.num_velocity_dofs();
    const Matrix expected = Matrix(ops.viscous) + Matrix(ops.dirichlet[tag_index(BoundaryTag::Left)].viscous) +
                            Matrix(ops.dirichlet[tag_index(BoundaryTag::Obstacle)].viscous);
    const Matrix k = Matrix(system.linear_operator()).topLeftCorner(nu, nu);
    CHECK((k - expected).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("2x1 grid has mirrored interface blocks") {
    GridConfig g = uniform_grid(1, 2, "empty", 0.04);
    g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2&) { return Point2(1.0, 0.0); });
    const GlobalFomSystem system(g, library);
    const Index nu = system.num_velocity_dofs();
    const Matrix k = Matrix(system.linear_operator()).topLeftCorner(nu, nu);
    const Index n0 = library.component("empty").num_velocity_dofs();
    const Matrix kmn = k.block(0, n0, n0, n0);
    const Matrix knm = k.block(n0, 0, n0, n0);
    CHECK(kmn.cwiseAbs().maxCoeff() > 0.0);
    CHECK((kmn - knm.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("2x2 dof count") {
    GridConfig g = uniform_grid(2, 2, "empty", 0.04);
    g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2&) { return Point2(1.0, 0.0); });
    const GlobalFomSystem system(g, library);
    const ComponentOperators& ops = library.component("empty");
    CHECK(system.size() == 4 * (ops.num_velocity_dofs() + ops.num_pressure_dofs()));
    CHECK(!system.has_mean_constraint());
  }
}

TEST_CASE("newton jacobian matches central differences") {
  const ComponentLibrary library(pool_registry(4), 0.04);
  GridConfig g = uniform_grid(1, 1, "square", 0.04);
  g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2&) { return Point2(1.0, 0.2); });
  const GlobalFomSystem system(g, library);
  std::mt19937_64 rng(9);
  const Vector x = random_vector(system.size(), rng);
  const Vector v = random_vector(system.size(), rng);
  const double h = 1e-5;
  const Vector fd = (system.residual(x + h * v) - system.residual(x - h * v)) / (2.0 * h);
  const Vector jv = system.jacobian(x) * v;
  CHECK((fd - jv).norm() <= 1e-6 * jv.norm());
}

TEST_CASE("flow past obstacles converges quadratically") {
  const ComponentLibrary library(pool_registry(8), 0.04);
  GridConfig g = uniform_grid(2, 2, "square", 0.04);
  const auto inflow = [](const Point2&) { return Point2(1.0, 0.0); };
  g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet(inflow);
  const GlobalFomSystem system(g, library);
  const FomSolution sol = solve_newton(system);
  REQUIRE(sol.report.converged);
  const auto& r = sol.report.residual_history;
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k] < r[k - 1]);
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < r.size(); ++k)
    if (r[k] <= 1e-3 * r.front() && r[k] >= 1e-9 * r.front()) worst = std::max(worst, r[k + 1] / (r[k] * r[k]));
  CHECK(std::isfinite(worst));
  CHECK(worst < 1e3);
}

TEST_CASE("newton with no iterations reports non-convergence") {
  const ComponentLibrary library(empty_registry(4), 0.04);
  GridConfig g = uniform_grid(1, 1, "empty", 0.04);
  g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2& x) { return Point2(1.0, x.y()); });
  const GlobalFomSystem system(g, library);
  NewtonOptions opts;
  opts.max_iter = 0;
  opts.tol_abs = 0.0;
  opts.tol_rel = 0.0;
  FomSolution sol;
  CHECK_NOTHROW(sol = solve_newton(system, opts));
  CHECK(!sol.report.converged);
}

TEST_CASE("incompatible fully Dirichlet data is rejected") {
  const ComponentLibrary library(empty_registry(2), 1.0);
  GridConfig g = uniform_grid(1, 1, "empty", 1.0);
  for (auto& bc : g.bc) bc = BoundaryCondition::dirichlet([](const Point2&) { return Point2::Zero(); });
  g.bc[tag_index(BoundaryTag::Left)] = BoundaryCondition::dirichlet([](const Point2&) { return Point2(1.0, 0.0); });
  CHECK(dirichlet_net_flux(g, library) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(GlobalFomSystem(g, library), Error);
}

TEST_CASE("polynomial solution is exact at any resolution") {
  // u = (x², -2xy) is divergence-free; p = x + y. The Stokes forcing is -ν∇²u + ∇p.
  ManufacturedSolution ms;
  const double nu = 1.0;
  ms.velocity = [](const Point2& x) { return Point2(x.x() * x.x(), -2.0 * x.x() * x.y()); };
  ms.pressure = [](const Point2& x) { return x.x() + x.y(); };
  ms.forcing = [&](const Point2& x) {
    const Point2 u = ms.velocity(x);
    const Point2 lap(2.0, 0.0);
    const Point2 adv(u.x() * 2.0 * x.x() + u.y() * 0.0, u.x() * (-2.0 * x.y()) + u.y() * (-2.0 * x.x()));
    return Point2(-nu * lap + Point2(1.0, 1.0) + adv);
  };
  NewtonOptions tight;
  tight.tol_rel = 1e-13;
  tight.tol_abs = 1e-14;
  const MmsStudy study = mms_convergence(ms, 2, 2, nu, {2, 4}, tight);
  for (std::size_t k = 0; k < study.resolutions.size(); ++k) {
    CHECK(study.converged[k]);
    CHECK(study.velocity_errors[k] <= 1e-10);
    CHECK(study.pressure_errors[k] <= 1e-9);
  }
}

TEST_CASE("manufactured solution converges at Taylor-Hood rates") {
  const MmsStudy study = mms_convergence(taylor_green(1.0), 1, 1, 1.0, {4, 8});
  REQUIRE(study.velocity_orders.size() == 1);
  CHECK(study.velocity_orders[0] > 2.5);
  CHECK(study.pressure_orders[0] > 1.5);
}

TEST_CASE("solution dump round trip and VTK export") {
  const ComponentLibrary library(empty_registry(3), 0.04);
  const GlobalFomSystem system(channel_grid(1, 2, 0.04), library);
  const FomSolution sol = solve_stokes(system);
  const auto dir = std::filesystem::temp_directory_path() / "crom_test_fom";
  std::filesystem::create_directories(dir);
  save_fom_solution(system, sol.state, dir / "sol.bin");
  const Vector back = load_fom_solution(system, dir / "sol.bin");
  CHECK(back == sol.state);
  const GlobalFomSystem other(channel_grid(1, 1, 0.04), library);
  CHECK_THROWS_AS(load_fom_solution(other, dir / "sol.bin"), Error);
  write_vtk(system, sol.state, dir / "sol.vtk");
  CHECK(std::filesystem::file_size(dir / "sol.vtk") > 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("relative field errors") {
  const ComponentLibrary library(empty_registry(3), 0.04);
  const GlobalFomSystem system(channel_grid(1, 2, 0.04), library);
  const FomSolution sol = solve_stokes(system);
  const FieldErrors same = relative_field_errors(system, sol.state, sol.state);
  CHECK(same.velocity == 0.0);
  CHECK(same.pressure == 0.0);
  const FieldErrors scaled = relative_field_errors(system, sol.state, 1.01 * sol.state);
  CHECK(scaled.velocity == doctest::Approx(0.01).epsilon(1e-10));
  CHECK(scaled.pressure == doctest::Approx(0.01).epsilon(1e-10));
}
