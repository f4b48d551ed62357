#include "crom/eqp.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace crom;
using namespace crom::testing;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j) a.col(j) = random_vector(rows, rng);
  return a;
}

Matrix random_orthonormal(Index rows, Index cols, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(rows, cols, rng));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

// Exhaustive NNLS: the optimum is the unconstrained least-squares solution on some support
// with all entries non-negative, so the best feasible support over all 2^n subsets is exact.
double exhaustive_nnls_objective(const Matrix& g, const Vector& d) {
  const Index n = g.cols();
  double best = d.norm();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Index> cols;
    for (Index j = 0; j < n; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    if (static_cast<Index>(cols.size()) > g.rows()) continue;
    Matrix sub(g.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Index>(k)) = g.col(cols[k]);
    const Vector w = sub.colPivHouseholderQr().solve(d);
    if (w.minCoeff() < 0.0) continue;
    best = std::min(best, (sub * w - d).norm());
  }
  return best;
}

std::shared_ptr<const TaylorHoodSpace> obstacle_space(int n) {
  return std::make_shared<const TaylorHoodSpace>(
      std::make_shared<const ComponentMesh>(generate_obstacle_mesh(n, ObstacleShape::Square, 0.25)));
}

}  // namespace

TEST_CASE("NNLS small examples") {
  SUBCASE("identity") {
    const Matrix g = Matrix::Identity(2, 2);
    Vector d(2);
    d << 1.0, 2.0;
    const NnlsResult r = nnls(g, d, 0.0);
    CHECK(r.criterion_met);
    CHECK(r.w[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.w[1] == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("bound-constrained optimum") {
    Matrix g(2, 1);
    g << 1.0, -1.0;
    const Vector d = Vector::Ones(2);
    const NnlsResult r = nnls(g, d, 0.0);
    CHECK(r.w[0] == 0.0);
    CHECK(!r.criterion_met);
    CHECK(r.residual == doctest::Approx(std::sqrt(2.0)));
  }
  SUBCASE("nothing to fit") {
    const NnlsResult r = nnls(Matrix::Identity(3, 3), Vector::Zero(3), 0.0);
    CHECK(r.criterion_met);
    CHECK(r.w.norm() == 0.0);
  }
}

TEST_CASE("NNLS matches an exhaustive oracle") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix g = random_matrix(6, 10, rng);
    const Vector d = random_vector(6, rng);
    const NnlsResult r = nnls(g, d, 0.0);
    CHECK(r.w.minCoeff() >= 0.0);
    CHECK(std::abs(r.residual - (g * r.w - d).norm()) <= 1e-12);
    CHECK(std::abs(r.residual - exhaustive_nnls_objective(g, d)) <= 1e-8);
  }
}

TEST_CASE("NNLS on a random 20x200 problem") {
  std::mt19937_64 rng(23);
  Matrix g = random_matrix(20, 200, rng).cwiseAbs();
  const Vector d = g * Vector::Ones(200) / 200.0;
  const double eps = 1e-3;
  const NnlsResult r = nnls(g, d, eps);
  CHECK(r.criterion_met);
  CHECK(r.w.minCoeff() >= 0.0);
  CHECK((g * r.w - d).norm() <= eps * d.norm());
  CHECK((r.w.array() > 0.0).count() <= 20);
  // With a looser threshold the early stop keeps fewer points.
  const NnlsResult loose = nnls(g, d, 1e-1);
  CHECK(loose.criterion_met);
  CHECK((loose.w.array() > 0.0).count() <= (r.w.array() > 0.0).count());
}

TEST_CASE("manifest construction") {
  const auto space = obstacle_space(4);
  std::mt19937_64 rng(29);

  SUBCASE("advection-free snapshot gives d = 0") {
    const Matrix c = space->interpolate_velocity([](const Point2&) { return Point2(1.0, 0.5); });
    const EqpManifest m = build_manifest(*space, c, c, 0.1);
    CHECK(m.d.norm() <= 1e-14);
  }
  SUBCASE("rows are reduced advection integrals") {
    const Matrix phi = random_orthonormal(space->num_velocity_dofs(), 4, rng);
    const Matrix snaps = random_matrix(space->num_velocity_dofs(), 3, rng);
    const EqpManifest m = build_manifest(*space, phi, snaps, 0.1);
    CHECK(m.G.rows() == 12);
    CHECK(m.G.cols() == static_cast<Index>(space->quadrature_points().size()));
    const AdvectionOperator c(space);
    for (Index s = 0; s < 3; ++s) {
      const Vector oracle = phi.transpose() * c.value(snaps.col(s));
      CHECK((m.d.segment(s * 4, 4) - oracle).norm() <= 1e-11 * oracle.norm());
    }
    CHECK((m.G * m.full_weights - m.d).norm() <= 1e-12 * m.d.norm());
  }
}

TEST_CASE("rule training") {
  const auto space = obstacle_space(4);
  std::mt19937_64 rng(37);

  SUBCASE("single constraint needs one point") {
    const Matrix phi = space->interpolate_velocity([](const Point2& p) { return Point2(p.x() * p.y(), p.y()); });
    const Matrix basis = phi / phi.norm();
    const EqpManifest m = build_manifest(*space, basis, phi, 0.0);
    REQUIRE(std::abs(m.d[0]) > 0.0);
    const EqpRule rule = train_rule(*space, m);
    CHECK(rule.size() == 1);
    const Vector w = rule.dense_weights(*space);
    CHECK(std::abs((m.G * w - m.d)[0]) <= 1e-12 * std::abs(m.d[0]));
  }
  SUBCASE("unit threshold accepts a near-empty rule") {
    const Matrix phi = random_orthonormal(space->num_velocity_dofs(), 3, rng);
    const EqpManifest m = build_manifest(*space, phi, phi * random_matrix(3, 4, rng), 1.0);
    const EqpRule rule = train_rule(*space, m);
    CHECK(rule.size() <= 1);
    CHECK(rule_satisfies(rule, *space, m));
  }
  SUBCASE("unreachable threshold is reported") {
    // Every column is non-positive while d is positive, so no non-negative rule can fit.
    EqpManifest m = build_manifest(*space, random_orthonormal(space->num_velocity_dofs(), 2, rng),
                                   random_matrix(space->num_velocity_dofs(), 2, rng), 1e-6);
    m.G = -m.G.cwiseAbs();
    m.d = -m.G * m.full_weights;
    CHECK_THROWS_AS(train_rule(*space, m), Error);
  }
  SUBCASE("trained rule reproduces the training integrals") {
    const int r = 6;
    const Matrix phi = random_orthonormal(space->num_velocity_dofs(), r, rng);
    const Matrix coeffs = random_matrix(r, 8, rng);
    const double eps = 1e-2;
    const EqpManifest m = build_manifest(*space, phi, phi * coeffs, eps);
    EqpRule rule = train_rule(*space, m);
    CHECK(rule_satisfies(rule, *space, m));
    CHECK(rule.size() < space->quadrature_points().size());
    for (const EqpPoint& p : rule.points) CHECK(p.weight > 0.0);
    rule.bind(*space, phi);
    const AdvectionTensor tensor = build_advection_tensor(*space, phi);
    double err2 = 0.0;
    for (Index s = 0; s < coeffs.cols(); ++s) err2 += (rule.value(coeffs.col(s)) - tensor.contract(coeffs.col(s))).squaredNorm();
    CHECK(std::sqrt(err2) <= eps * m.d.norm() * (1.0 + 1e-10));
  }
}

TEST_CASE("rule evaluation") {
  const auto space = obstacle_space(4);
  std::mt19937_64 rng(43);
  const int r = 5;
  const Matrix phi = random_orthonormal(space->num_velocity_dofs(), r, rng);
  const AdvectionTensor tensor = build_advection_tensor(*space, phi);
  EqpRule full = full_rule(*space);
  full.bind(*space, phi);
  CHECK((full.dense_weights(*space) - sample_fields(*space, phi).weights).norm() <= 1e-15);

  SUBCASE("zero state") {
    CHECK(full.value(Vector::Zero(r)).norm() == 0.0);
    CHECK(full.jacobian(Vector::Zero(r)).norm() == 0.0);
  }
  SUBCASE("full rule matches the tensor contraction") {
    for (int trial = 0; trial < 20; ++trial) {
      const Vector a = random_vector(r, rng);
      const Vector tv = tensor.contract(a);
      CHECK((full.value(a) - tv).norm() <= 1e-11 * tv.norm());
      const Matrix tj = tensor.jacobian(a);
      CHECK((full.jacobian(a) - tj).norm() <= 1e-11 * tj.norm());
    }
  }
  SUBCASE("jacobian matches finite differences") {
    const Vector a = random_vector(r, rng);
    const Vector v = random_vector(r, rng);
    const double h = 1e-6;
    const Vector fd = (full.value(a + h * v) - full.value(a - h * v)) / (2.0 * h);
    CHECK((fd - full.jacobian(a) * v).norm() <= 1e-7 * fd.norm());
  }
  SUBCASE("unbound rule cannot be evaluated") {
    const EqpRule unbound = full_rule(*space);
    CHECK(!unbound.bound());
    CHECK_THROWS_AS(unbound.value(Vector::Zero(r)), Error);
  }
}

TEST_CASE("rule file round trip") {
  const auto space = obstacle_space(4);
  std::mt19937_64 rng(47);
  const Matrix phi = random_orthonormal(space->num_velocity_dofs(), 3, rng);
  const EqpManifest m = build_manifest(*space, phi, phi * random_matrix(3, 4, rng), 1e-2);
  const EqpRule rule = train_rule(*space, m);
  const auto path = std::filesystem::temp_directory_path() / "crom_rule.bin";
  save_rule(rule, path);
  const EqpRule back = load_rule(path);
  REQUIRE(back.size() == rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    CHECK(back.points[k].element == rule.points[k].element);
    CHECK(back.points[k].local == rule.points[k].local);
    CHECK(back.points[k].weight == rule.points[k].weight);
  }
  CHECK(back.epsilon == rule.epsilon);
  CHECK(back.residual == rule.residual);
  CHECK(rule_satisfies(back, *space, m));
  std::filesystem::remove(path);
}
