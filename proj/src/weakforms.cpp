#include "crom/weakforms.hpp"

#include "crom/binary_io.hpp"

namespace crom {

namespace {

struct FacePoint {
  Point2 x;
  double weight;
};

std::vector<FacePoint> face_points(const TaylorHoodSpace::Face& f) {
  const auto& rule = edge_rule();
  std::vector<FacePoint> pts;
  pts.reserve(rule.points.size());
  for (std::size_t q = 0; q < rule.points.size(); ++q)
    pts.push_back({f.a + rule.points[q] * (f.b - f.a), rule.weights[q] * f.length});
  return pts;
}

std::vector<int> faces_with_tag(const ComponentMesh& mesh, BoundaryTag tag) {
  return tag == BoundaryTag::Obstacle ? mesh.obstacle_edges() : mesh.side_trace(tag);
}

SparseMatrix from_triplets(Index rows, Index cols, const std::vector<Triplet>& t) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

SparseMatrix assemble_viscous(const TaylorHoodSpace& space, double viscosity) {
  std::vector<Triplet> t;
  t.reserve(space.quadrature_points().size() * 72);
  for (const auto& qp : space.quadrature_points()) {
    const auto& nodes = space.element_nodes(qp.element);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double v = viscosity * qp.weight * qp.shape.p2_grad[i].dot(qp.shape.p2_grad[j]);
        for (int c = 0; c < 2; ++c) t.emplace_back(space.velocity_dof(nodes[i], c), space.velocity_dof(nodes[j], c), v);
      }
  }
  return from_triplets(space.num_velocity_dofs(), space.num_velocity_dofs(), t);
}

SparseMatrix assemble_divergence(const TaylorHoodSpace& space) {
  std::vector<Triplet> t;
  t.reserve(space.quadrature_points().size() * 36);
  for (const auto& qp : space.quadrature_points()) {
    const auto& nodes = space.element_nodes(qp.element);
    const auto& vtx = space.element_vertices(qp.element);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 6; ++j)
        for (int c = 0; c < 2; ++c)
          t.emplace_back(vtx[i], space.velocity_dof(nodes[j], c),
                         -qp.weight * qp.shape.p1[i] * qp.shape.p2_grad[j][c]);
  }
  return from_triplets(space.num_pressure_dofs(), space.num_velocity_dofs(), t);
}

DirichletBlocks assemble_dirichlet_blocks(const TaylorHoodSpace& space, BoundaryTag tag, double nu,
                                          double penalty) {
  std::vector<Triplet> tk, tb;
  for (int e : faces_with_tag(space.mesh(), tag)) {
    const auto& f = space.face(e);
    const auto& nodes = space.element_nodes(f.element);
    const auto& vtx = space.element_vertices(f.element);
    for (const auto& fp : face_points(f)) {
      const ShapeValues s = space.evaluate(f.element, space.to_barycentric(f.element, fp.x));
      for (int i = 0; i < 6; ++i) {
        const double dni = s.p2_grad[i].dot(f.normal);
        for (int j = 0; j < 6; ++j) {
          const double dnj = s.p2_grad[j].dot(f.normal);
          const double v = fp.weight * (-nu * dni * s.p2[j] - nu * s.p2[i] * dnj +
                                        penalty / f.length * s.p2[i] * s.p2[j]);
          for (int c = 0; c < 2; ++c) tk.emplace_back(space.velocity_dof(nodes[i], c), space.velocity_dof(nodes[j], c), v);
        }
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j)
          for (int c = 0; c < 2; ++c)
            tb.emplace_back(vtx[i], space.velocity_dof(nodes[j], c), fp.weight * s.p1[i] * s.p2[j] * f.normal[c]);
    }
  }
  return {from_triplets(space.num_velocity_dofs(), space.num_velocity_dofs(), tk),
          from_triplets(space.num_pressure_dofs(), space.num_velocity_dofs(), tb)};
}

InterfaceBlocks assemble_interface_blocks(const TaylorHoodSpace& space_m, const TaylorHoodSpace& space_n,
                                          Orientation orientation, double nu, double penalty) {
  const auto [side_m, side_n] = interface_sides(orientation);
  const auto& trace_m = space_m.mesh().side_trace(side_m);
  const auto& trace_n = space_n.mesh().side_trace(side_n);
  require(trace_m.size() == trace_n.size(), "interface face count mismatch");
  const Point2 shift = orientation == Orientation::Horizontal ? Point2(1.0, 0.0) : Point2(0.0, 1.0);

  const std::array<const TaylorHoodSpace*, 2> spaces{&space_m, &space_n};
  const std::array<double, 2> sign{1.0, -1.0};
  std::array<std::array<std::vector<Triplet>, 2>, 2> tk, tb;  // [test side][trial side]

  for (std::size_t k = 0; k < trace_m.size(); ++k) {
    const auto& fm = space_m.face(trace_m[k]);
    const auto& fn = space_n.face(trace_n[k]);
    require(((fm.a + fm.b) * 0.5 - ((fn.a + fn.b) * 0.5 + shift)).norm() <= 1e-12, "interface face mismatch");
    const Point2 normal = fm.normal;
    const double h = fm.length;
    for (const auto& fp : face_points(fm)) {
      const std::array<int, 2> elem{fm.element, fn.element};
      const std::array<ShapeValues, 2> s{space_m.evaluate(fm.element, space_m.to_barycentric(fm.element, fp.x)),
                                         space_n.evaluate(fn.element, space_n.to_barycentric(fn.element, fp.x - shift))};
      for (int a = 0; a < 2; ++a) {
        const auto& nodes_a = spaces[a]->element_nodes(elem[a]);
        const auto& vtx_a = spaces[a]->element_vertices(elem[a]);
        for (int b = 0; b < 2; ++b) {
          const auto& nodes_b = spaces[b]->element_nodes(elem[b]);
          for (int i = 0; i < 6; ++i) {
            const double dni = s[a].p2_grad[i].dot(normal);
            for (int j = 0; j < 6; ++j) {
              const double dnj = s[b].p2_grad[j].dot(normal);
              const double v =
                  fp.weight * (-0.5 * nu * dni * sign[b] * s[b].p2[j] - 0.5 * nu * sign[a] * s[a].p2[i] * dnj +
                               penalty / h * sign[a] * sign[b] * s[a].p2[i] * s[b].p2[j]);
              if (v == 0.0) continue;
              for (int c = 0; c < 2; ++c)
                tk[a][b].emplace_back(spaces[a]->velocity_dof(nodes_a[i], c), spaces[b]->velocity_dof(nodes_b[j], c), v);
            }
          }
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 6; ++j) {
              const double v = fp.weight * 0.5 * s[a].p1[i] * sign[b] * s[b].p2[j];
              if (v == 0.0) continue;
              for (int c = 0; c < 2; ++c)
                tb[a][b].emplace_back(vtx_a[i], spaces[b]->velocity_dof(nodes_b[j], c), v * normal[c]);
            }
        }
      }
    }
  }

  auto kmat = [&](int a, int b) {
    return from_triplets(spaces[a]->num_velocity_dofs(), spaces[b]->num_velocity_dofs(), tk[a][b]);
  };
  auto bmat = [&](int a, int b) {
    return from_triplets(spaces[a]->num_pressure_dofs(), spaces[b]->num_velocity_dofs(), tb[a][b]);
  };
  return {kmat(0, 0), kmat(0, 1), kmat(1, 0), kmat(1, 1), bmat(0, 0), bmat(0, 1), bmat(1, 0), bmat(1, 1)};
}

BoundaryLoad assemble_boundary_load(const TaylorHoodSpace& space, BoundaryTag tag, double nu, double penalty) {
  BoundaryLoad load;
  load.tag = tag;
  std::vector<Triplet> tu, tp, tn;
  for (int e : faces_with_tag(space.mesh(), tag)) {
    const auto& f = space.face(e);
    const auto& nodes = space.element_nodes(f.element);
    const auto& vtx = space.element_vertices(f.element);
    for (const auto& fp : face_points(f)) {
      const int q = load.num_points();
      load.points.push_back(fp.x);
      load.normals.push_back(f.normal);
      const ShapeValues s = space.evaluate(f.element, space.to_barycentric(f.element, fp.x));
      for (int i = 0; i < 6; ++i) {
        // Symmetric Nitsche: the consistency load enters with the sign of the
        // matching -<n·ν∇u†, u> term of the Dirichlet block.
        const double v = fp.weight * (penalty / f.length * s.p2[i] - nu * s.p2_grad[i].dot(f.normal));
        for (int c = 0; c < 2; ++c) {
          tu.emplace_back(space.velocity_dof(nodes[i], c), 2 * q + c, v);
          tn.emplace_back(space.velocity_dof(nodes[i], c), 2 * q + c, fp.weight * s.p2[i]);
        }
      }
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 2; ++c) tp.emplace_back(vtx[i], 2 * q + c, fp.weight * s.p1[i] * f.normal[c]);
    }
  }
  const Index cols = 2 * load.num_points();
  load.dirichlet_velocity = from_triplets(space.num_velocity_dofs(), cols, tu);
  load.dirichlet_pressure = from_triplets(space.num_pressure_dofs(), cols, tp);
  load.neumann_velocity = from_triplets(space.num_velocity_dofs(), cols, tn);
  return load;
}

Vector sample_velocity(const BoundaryLoad& load, const VelocityFunction& g, const Point2& offset) {
  Vector v = Vector::Zero(2 * load.num_points());
  if (!g) return v;
  for (int q = 0; q < load.num_points(); ++q) v.segment<2>(2 * q) = g(load.points[q] + offset);
  return v;
}

Vector sample_traction(const BoundaryLoad& load, const TractionFunction& g, const Point2& offset) {
  Vector v = Vector::Zero(2 * load.num_points());
  if (!g) return v;
  for (int q = 0; q < load.num_points(); ++q) v.segment<2>(2 * q) = g(load.points[q] + offset, load.normals[q]);
  return v;
}

Vector AdvectionOperator::value(const Vector& u) const { return bilinear(u, u); }

Vector AdvectionOperator::bilinear(const Vector& v, const Vector& w) const {
  const auto& space = *space_;
  Vector out = Vector::Zero(space.num_velocity_dofs());
  for (const auto& qp : space.quadrature_points()) {
    const Point2 vv = space.velocity_value(v, qp.element, qp.shape);
    const Eigen::Matrix2d gw = space.velocity_gradient(w, qp.element, qp.shape);
    const Point2 conv = qp.weight * (gw * vv);
    const auto& nodes = space.element_nodes(qp.element);
    for (int i = 0; i < 6; ++i) {
      out[space.velocity_dof(nodes[i], 0)] += qp.shape.p2[i] * conv.x();
      out[space.velocity_dof(nodes[i], 1)] += qp.shape.p2[i] * conv.y();
    }
  }
  return out;
}

void AdvectionOperator::jacobian_triplets(const Vector& u, Index offset, std::vector<Triplet>& out) const {
  const auto& space = *space_;
  const auto& rule = triangle_rule();
  const auto& qps = space.quadrature_points();
  const int nq = static_cast<int>(rule.points.size());
  Eigen::Matrix<double, 12, 12> local;
  for (int t = 0; t < space.num_elements(); ++t) {
    local.setZero();
    for (int q = 0; q < nq; ++q) {
      const auto& qp = qps[static_cast<std::size_t>(t * nq + q)];
      const auto& s = qp.shape;
      const Point2 uu = space.velocity_value(u, t, s);
      const Eigen::Matrix2d gu = space.velocity_gradient(u, t, s);
      for (int j = 0; j < 6; ++j) {
        const double adv = uu.dot(s.p2_grad[j]);
        for (int i = 0; i < 6; ++i) {
          const double wij = qp.weight * s.p2[i];
          // rows/cols: local index i + 6 c
          for (int c = 0; c < 2; ++c) {
            local(i + 6 * c, j + 6 * c) += wij * adv;
            for (int d = 0; d < 2; ++d) local(i + 6 * c, j + 6 * d) += wij * s.p2[j] * gu(c, d);
          }
        }
      }
    }
    const auto& nodes = space.element_nodes(t);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 6; ++i)
        for (int d = 0; d < 2; ++d)
          for (int j = 0; j < 6; ++j)
            out.emplace_back(offset + space.velocity_dof(nodes[i], c), offset + space.velocity_dof(nodes[j], d),
                             local(i + 6 * c, j + 6 * d));
  }
}

SparseMatrix AdvectionOperator::jacobian(const Vector& u) const {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(space_->num_elements()) * 144);
  jacobian_triplets(u, 0, t);
  return from_triplets(space_->num_velocity_dofs(), space_->num_velocity_dofs(), t);
}

ComponentOperators assemble_component(std::shared_ptr<const TaylorHoodSpace> space, double viscosity) {
  ComponentOperators ops{space, viscosity, penalty_parameter(viscosity), {}, {}, {}, {}, AdvectionOperator(space)};
  ops.viscous = assemble_viscous(*space, viscosity);
  ops.divergence = assemble_divergence(*space);
  for (int k = 0; k < kNumTags; ++k) {
    const auto tag = static_cast<BoundaryTag>(k);
    ops.dirichlet[k] = assemble_dirichlet_blocks(*space, tag, viscosity, ops.penalty);
    ops.loads[k] = assemble_boundary_load(*space, tag, viscosity, ops.penalty);
  }
  return ops;
}

RhsVectors assemble_rhs(const ComponentOperators& ops, const SubdomainBoundaryData& data,
                        const VelocityFunction& forcing) {
  const auto& space = *ops.space;
  RhsVectors rhs{Vector::Zero(space.num_velocity_dofs()), Vector::Zero(space.num_velocity_dofs()),
                 Vector::Zero(space.num_pressure_dofs())};
  if (forcing) {
    for (const auto& qp : space.quadrature_points()) {
      const Point2 f = qp.weight * forcing(qp.x + data.offset);
      const auto& nodes = space.element_nodes(qp.element);
      for (int i = 0; i < 6; ++i) {
        rhs.forcing[space.velocity_dof(nodes[i], 0)] += qp.shape.p2[i] * f.x();
        rhs.forcing[space.velocity_dof(nodes[i], 1)] += qp.shape.p2[i] * f.y();
      }
    }
  }
  for (BoundaryTag side : kSides) {
    const BoundaryCondition* bc = data.sides[tag_index(side)];
    if (bc == nullptr) continue;
    const auto& load = ops.loads[tag_index(side)];
    if (bc->is_dirichlet()) {
      const Vector g = sample_velocity(load, bc->velocity, data.offset);
      rhs.velocity += load.dirichlet_velocity * g;
      rhs.pressure += load.dirichlet_pressure * g;
    } else if (bc->traction) {
      rhs.velocity += load.neumann_velocity * sample_traction(load, bc->traction, data.offset);
    }
  }
  // Obstacle walls are no-slip: g_di = 0 contributes no load.
  return rhs;
}

void save_operators(const ComponentOperators& ops, const std::filesystem::path& path) {
  BinaryWriter w(path, "CROMOP1");
  w.u64(2 + 2 * kNumTags);
  w.sparse(ops.viscous);
  w.sparse(ops.divergence);
  for (const auto& d : ops.dirichlet) {
    w.sparse(d.viscous);
    w.sparse(d.divergence);
  }
  w.finish();
}

void load_operators(ComponentOperators& ops, const std::filesystem::path& path) {
  BinaryReader r(path, "CROMOP1");
  require(r.u64() == 2 + 2 * kNumTags, path.string() + ": unexpected matrix count");
  auto checked = [&](Index rows, Index cols) {
    SparseMatrix m = r.sparse();
    require(m.rows() == rows && m.cols() == cols, path.string() + ": operator dimensions do not match the space");
    return m;
  };
  const Index nu = ops.num_velocity_dofs(), np = ops.num_pressure_dofs();
  ops.viscous = checked(nu, nu);
  ops.divergence = checked(np, nu);
  for (auto& d : ops.dirichlet) {
    d.viscous = checked(nu, nu);
    d.divergence = checked(np, nu);
  }
}

}  // namespace crom
