#include "fehmm/fem.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace fehmm;

namespace {

const LameParams kA = lame_from_engineering(100000, 0.2);
const LameParams kB = lame_from_engineering(40000, 0.2);

// A distorted 2x2 quad patch with one interior node.
Mesh distorted_patch(ElementKind kind = ElementKind::Quad4) {
  const Mesh base = generate_structured(2.0, 2.0, 2, 2, kind);
  std::vector<Vec2> nodes = base.nodes();
  for (auto& x : nodes)
    if (std::abs(x.x() - 1.0) < 1e-12 && std::abs(x.y() - 1.0) < 1e-12) x = Vec2(1.17, 0.88);
  std::vector<int> conn;
  for (int e = 0; e < base.num_elements(); ++e)
    for (int a : base.element(e)) conn.push_back(a);
  std::vector<int> phase(base.num_elements(), 1);
  return Mesh(kind, nodes, conn, phase);
}

Vec random_field(int n, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = u(rng);
  return d;
}

Mat dense(const SpMat& K) { return Mat(K); }

}  // namespace

TEST(Shape, PartitionOfUnityAndKronecker) {
  for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
    const auto ref = reference_nodes(kind);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const ShapeValues s = shape_eval(kind, ref[k]);
      for (int a = 0; a < s.count; ++a) EXPECT_NEAR(s.N[a], a == static_cast<int>(k) ? 1.0 : 0.0, 1e-15);
    }
    for (const auto& q : quadrature(kind, QuadratureRule::Accurate)) {
      const ShapeValues s = shape_eval(kind, q.xi);
      double sum = 0.0;
      Vec2 g = Vec2::Zero();
      for (int a = 0; a < s.count; ++a) {
        sum += s.N[a];
        g += s.dN[a];
      }
      EXPECT_NEAR(sum, 1.0, 1e-15);
      EXPECT_LT(g.norm(), 1e-15);
    }
    for (auto rule : {QuadratureRule::Stiffness, QuadratureRule::Accurate}) {
      double w = 0.0;
      for (const auto& q : quadrature(kind, rule)) w += q.weight;
      EXPECT_NEAR(w, reference_measure(kind), 1e-15);
    }
  }
  const ShapeValues c = shape_eval(ElementKind::Quad4, Vec2::Zero());
  for (int a = 0; a < 4; ++a) EXPECT_DOUBLE_EQ(c.N[a], 0.25);
}

TEST(Kinematics, DeformationGradient) {
  const Mesh m = generate_structured(1.0, 1.0, 1, 1, ElementKind::Quad4);
  std::array<double, 8> d{};
  DeformationState s = deformation_gradient(m, 0, d, Vec2(0.3, -0.2));
  EXPECT_EQ((s.F - Mat3::Identity()).norm(), 0.0);
  EXPECT_EQ(s.E.norm(), 0.0);

  Mat2 A;
  A << 0.1, -0.05, 0.02, 0.07;
  const auto nodes = m.element(0);
  for (int a = 0; a < 4; ++a) {
    const Vec2 u = A * m.node(nodes[a]);
    d[2 * a] = u.x();
    d[2 * a + 1] = u.y();
  }
  s = deformation_gradient(m, 0, d, Vec2(0.5, 0.1));
  EXPECT_LT((s.F.topLeftCorner<2, 2>() - (Mat2::Identity() + A)).norm(), 1e-15);
  EXPECT_EQ(s.F(2, 2), 1.0);

  for (int a = 0; a < 4; ++a) {
    d[2 * a] = 0.1 * m.node(nodes[a]).y();
    d[2 * a + 1] = 0.0;
  }
  s = deformation_gradient(m, 0, d, Vec2::Zero());
  EXPECT_NEAR(s.E(0, 1), 0.05, 1e-15);
  EXPECT_NEAR(s.E(1, 1), 0.005, 1e-15);
  EXPECT_NEAR(s.E(0, 0), 0.0, 1e-15);
}

TEST(Kinematics, DegenerateElement) {
  std::vector<Vec2> nodes = {Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)};
  try {
    const Mesh m(ElementKind::Tri3, nodes, {0, 1, 2}, {1});
    element_point(m, 0, Vec2(1.0 / 3, 1.0 / 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateElement);
  }
}

TEST(Element, ZeroAndRigidForces) {
  for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
    const FeModel model(distorted_patch(kind), MaterialMap(kA, kB), MaterialLaw::NeoHookean, Kinematics::Nonlinear);
    std::array<double, 8> d{};
    EXPECT_EQ(element_internal_force(model, 0, std::span<const double>(d.data(), 2 * nodes_per_element(kind))).norm(),
              0.0);
    for (int a = 0; a < 4; ++a) {
      d[2 * a] = 12.5;
      d[2 * a + 1] = -3.0;
    }
    const Vec f = element_internal_force(model, 0, std::span<const double>(d.data(), 2 * nodes_per_element(kind)));
    EXPECT_LT(f.norm(), 1e-9);
  }
}

TEST(Element, ForceIsEnergyGradient) {
  std::mt19937_64 rng(3);
  for (auto law : {MaterialLaw::NeoHookean, MaterialLaw::LinearElastic}) {
    for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
      const FeModel model(distorted_patch(kind), MaterialMap(kA, kB), law, Kinematics::Nonlinear, 2.0);
      const int nd = 2 * nodes_per_element(kind);
      for (int trial = 0; trial < 10; ++trial) {
        const Vec d = random_field(model.num_dofs(), 0.1, rng);
        for (int e = 0; e < model.mesh().num_elements(); ++e) {
          auto de = gather(model, e, d);
          const ElementResult r = element_evaluate(model, e, std::span<const double>(de.data(), nd), false);
          Vec fd(nd);
          const double h = 1e-6;
          for (int i = 0; i < nd; ++i) {
            auto dp = de, dm = de;
            dp[i] += h;
            dm[i] -= h;
            const double ep = element_evaluate(model, e, std::span<const double>(dp.data(), nd), false).energy;
            const double em = element_evaluate(model, e, std::span<const double>(dm.data(), nd), false).energy;
            fd[i] = (ep - em) / (2 * h);
          }
          EXPECT_LT((fd - r.f).norm(), 1e-5 * r.f.norm());
        }
      }
    }
  }
}

TEST(Element, TangentIsForceDerivativeAndSymmetric) {
  std::mt19937_64 rng(4);
  for (auto law : {MaterialLaw::NeoHookean, MaterialLaw::LinearElastic}) {
    for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
      const FeModel model(distorted_patch(kind), MaterialMap(kA, kB), law, Kinematics::Nonlinear);
      const int nd = 2 * nodes_per_element(kind);
      for (int trial = 0; trial < 10; ++trial) {
        const Vec d = random_field(model.num_dofs(), 0.15, rng);
        for (int e = 0; e < model.mesh().num_elements(); ++e) {
          auto de = gather(model, e, d);
          const Mat k = element_tangent(model, e, std::span<const double>(de.data(), nd));
          EXPECT_LT((k - k.transpose()).norm(), 1e-12 * k.norm());
          Mat fd(nd, nd);
          const double h = 1e-6;  // element size is 1
          for (int i = 0; i < nd; ++i) {
            auto dp = de, dm = de;
            dp[i] += h;
            dm[i] -= h;
            fd.col(i) = (element_internal_force(model, e, std::span<const double>(dp.data(), nd)) -
                         element_internal_force(model, e, std::span<const double>(dm.data(), nd))) /
                        (2 * h);
          }
          EXPECT_LT((fd - k).norm(), 1e-4 * k.norm());
        }
      }
    }
  }
}

TEST(Element, SmallStrainStiffnessAtRest) {
  // independent plane-strain B^T D B with 2x2 Gauss on a unit square
  const Mesh m = generate_structured(1.0, 1.0, 1, 1, ElementKind::Quad4);
  const FeModel model(m, MaterialMap::uniform(kA), MaterialLaw::LinearElastic, Kinematics::Nonlinear);
  Eigen::Matrix3d D;
  D << kA.lambda + 2 * kA.mu, kA.lambda, 0, kA.lambda, kA.lambda + 2 * kA.mu, 0, 0, 0, kA.mu;
  Mat k_ref = Mat::Zero(8, 8);
  const double g = 1.0 / std::sqrt(3.0);
  const auto nodes = m.element(0);
  for (double xi : {-g, g})
    for (double eta : {-g, g}) {
      // x = (1 + xi)/2 on the unit square: dN/dx = 2 dN/dxi, detJ = 1/4
      const double dn[4][2] = {{-(1 - eta) / 4, -(1 - xi) / 4},
                               {(1 - eta) / 4, -(1 + xi) / 4},
                               {(1 + eta) / 4, (1 + xi) / 4},
                               {-(1 + eta) / 4, (1 - xi) / 4}};
      const std::array<Vec2, 4> ref = {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        // match the mesh's local node order by position
        const Vec2 X = m.node(nodes[a]);
        int r = 0;
        for (int c = 0; c < 4; ++c)
          if ((Vec2((ref[c].x() + 1) / 2, (ref[c].y() + 1) / 2) - X).norm() < 1e-12) r = c;
        const double nx = 2 * dn[r][0], ny = 2 * dn[r][1];
        B(0, 2 * a) = nx;
        B(1, 2 * a + 1) = ny;
        B(2, 2 * a) = ny;
        B(2, 2 * a + 1) = nx;
      }
      k_ref += B.transpose() * D * B * 0.25;
    }
  std::array<double, 8> d{};
  const Mat k = element_tangent(model, 0, d);
  EXPECT_LT((k - k_ref).norm(), 1e-12 * k_ref.norm());
  const FeModel lin(m, MaterialMap::uniform(kA), MaterialLaw::LinearElastic, Kinematics::Linear);
  EXPECT_LT((element_tangent(lin, 0, d) - k_ref).norm(), 1e-12 * k_ref.norm());
}

TEST(Assembly, SingleElementMatchesElement) {
  const FeModel model(generate_structured(1.0, 1.0, 1, 1, ElementKind::Quad4), MaterialMap::uniform(kA),
                      MaterialLaw::NeoHookean, Kinematics::Nonlinear, 3.0);
  std::mt19937_64 rng(5);
  const Vec d = random_field(8, 0.05, rng);
  const AssembledSystem sys = assemble(model, d, Vec());
  auto de = gather(model, 0, d);
  const ElementResult r = element_evaluate(model, 0, de, true);
  const auto dofs = model.element_dofs(0);
  for (int a = 0; a < 8; ++a) {
    EXPECT_DOUBLE_EQ(sys.f_int[dofs[a]], r.f[a]);
    for (int b = 0; b < 8; ++b) EXPECT_DOUBLE_EQ(sys.K.coeff(dofs[a], dofs[b]), r.k(a, b));
  }
}

TEST(Assembly, PatchTest) {
  for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
    for (auto kin : {Kinematics::Linear, Kinematics::Nonlinear}) {
      const FeModel model(distorted_patch(kind), MaterialMap::uniform(kA), MaterialLaw::LinearElastic, kin);
      Mat2 A;
      A << 0.01, 0.004, -0.002, 0.015;
      Vec d(model.num_dofs());
      for (int n = 0; n < model.mesh().num_nodes(); ++n) {
        const Vec2 u = A * model.mesh().node(n);
        d[2 * n] = u.x();
        d[2 * n + 1] = u.y();
      }
      const AssembledSystem sys = assemble(model, d, Vec());
      int interior = -1;
      for (int n = 0; n < model.mesh().num_nodes(); ++n)
        if ((model.mesh().node(n) - Vec2(1.17, 0.88)).norm() < 1e-12) interior = n;
      ASSERT_GE(interior, 0);
      EXPECT_LT(std::abs(sys.R[2 * interior]), 1e-10 * sys.force_scale);
      EXPECT_LT(std::abs(sys.R[2 * interior + 1]), 1e-10 * sys.force_scale);
    }
  }
}

TEST(Assembly, ElementOrderInvariance) {
  const Mesh m = distorted_patch();
  std::vector<int> conn;
  std::vector<int> phase;
  for (int e = m.num_elements() - 1; e >= 0; --e) {
    for (int a : m.element(e)) conn.push_back(a);
    phase.push_back(m.phase(e));
  }
  const FeModel fwd(m, MaterialMap(kA, kB), MaterialLaw::NeoHookean, Kinematics::Nonlinear);
  const FeModel rev(Mesh(m.kind(), m.nodes(), conn, phase), MaterialMap(kA, kB), MaterialLaw::NeoHookean,
                    Kinematics::Nonlinear);
  std::mt19937_64 rng(6);
  const Vec d = random_field(m.num_dofs(), 0.1, rng);
  const AssembledSystem a = assemble(fwd, d, Vec());
  const AssembledSystem b = assemble(rev, d, Vec());
  EXPECT_LT((a.f_int - b.f_int).norm(), 1e-12 * a.f_int.norm());
  EXPECT_LT((dense(a.K) - dense(b.K)).norm(), 1e-12 * dense(a.K).norm());
  // repeated assembly is bit-identical
  const AssembledSystem c = assemble(fwd, d, Vec());
  EXPECT_EQ((a.f_int - c.f_int).norm(), 0.0);
}

TEST(Assembly, GlobalTangentAndEnergyConsistency) {
  std::mt19937_64 rng(7);
  const FeModel model(distorted_patch(), MaterialMap(kA, kB), MaterialLaw::NeoHookean, Kinematics::Nonlinear, 5.0);
  const Vec f_ext = random_field(model.num_dofs(), 1000.0, rng);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec d = random_field(model.num_dofs(), 0.1, rng);
    const AssembledSystem sys = assemble(model, d, f_ext);
    const Mat K = dense(sys.K);
    Mat fd(model.num_dofs(), model.num_dofs());
    Vec grad(model.num_dofs());
    const double h = 1e-6;
    for (int i = 0; i < model.num_dofs(); ++i) {
      Vec dp = d, dm = d;
      dp[i] += h;
      dm[i] -= h;
      fd.col(i) = (assemble(model, dp, f_ext, false).R - assemble(model, dm, f_ext, false).R) / (2 * h);
      const double pp = total_energy(model, dp) - f_ext.dot(dp);
      const double pm = total_energy(model, dm) - f_ext.dot(dm);
      grad[i] = (pp - pm) / (2 * h);
    }
    EXPECT_LT((fd - K).norm(), 1e-4 * K.norm());
    EXPECT_LT((grad - sys.R).norm(), 1e-5 * (sys.f_int.norm() + f_ext.norm()));
  }
}

TEST(Assembly, RigidBodyModes) {
  for (auto kind : {ElementKind::Quad4, ElementKind::Tri3}) {
    const FeModel model(distorted_patch(kind), MaterialMap(kA, kB), MaterialLaw::NeoHookean, Kinematics::Nonlinear);
    const Mat K = dense(assemble(model, Vec::Zero(model.num_dofs()), Vec()).K);
    Eigen::SelfAdjointEigenSolver<Mat> es(K);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    int zeros = 0;
    for (int i = 0; i < K.rows(); ++i)
      if (std::abs(es.eigenvalues()[i]) < 1e-8 * scale) ++zeros;
    EXPECT_EQ(zeros, 3);
  }
}

TEST(Loads, TotalsMatchClosedForms) {
  const FeModel model(generate_structured(4.0, 2.0, 4, 3, ElementKind::Quad4), MaterialMap::uniform(kA),
                      MaterialLaw::LinearElastic, Kinematics::Linear, 10.0);
  const Vec f = body_force_load(model, [](const Vec2&) { return Vec2(0.5, -2.0); });
  double fx = 0, fy = 0;
  for (int n = 0; n < model.mesh().num_nodes(); ++n) {
    fx += f[2 * n];
    fy += f[2 * n + 1];
  }
  EXPECT_NEAR(fx, 0.5 * 8.0 * 10.0, 1e-10);
  EXPECT_NEAR(fy, -2.0 * 8.0 * 10.0, 1e-10);

  const Vec q = edge_line_load(model.mesh(), 0, 4.0, Vec2(0.0, -3.0));
  double qy = 0;
  for (int n = 0; n < model.mesh().num_nodes(); ++n) {
    qy += q[2 * n + 1];
    if (std::abs(model.mesh().node(n).x() - 4.0) > 1e-12) EXPECT_EQ(q[2 * n + 1], 0.0);
  }
  EXPECT_NEAR(qy, -3.0 * 2.0, 1e-12);
}

TEST(Assembly, ElementErrorsAreAnnotated) {
  const FeModel model(generate_structured(1.0, 1.0, 2, 1, ElementKind::Quad4), MaterialMap::uniform(kA),
                      MaterialLaw::NeoHookean, Kinematics::Nonlinear);
  Vec d = Vec::Zero(model.num_dofs());
  // invert element 1 by pushing its right edge past its left edge
  for (int n = 0; n < model.mesh().num_nodes(); ++n)
    if (model.mesh().node(n).x() > 0.9) d[2 * n] = -0.8;
  try {
    assemble(model, d, Vec());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPhysicalDeformation);
    EXPECT_NE(std::string(e.what()).find("element 1"), std::string::npos) << e.what();
  }
}
