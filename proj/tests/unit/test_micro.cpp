#include "fehmm/micro.hpp"
#include "fehmm/two_scale.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace fehmm;

namespace {

const LameParams kA = lame_from_engineering(100000, 0.2);
const LameParams kB = lame_from_engineering(40000, 0.2);

PhaseGrid checkerboard(int n) {
  PhaseGrid g{n, n, std::vector<int>(static_cast<std::size_t>(n) * n)};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g.cells[j * n + i] = ((2 * i) / n + (2 * j) / n) % 2 == 0 ? 1 : 2;
  return g;
}

PhaseGrid uniform_grid(int n) { return PhaseGrid{n, n, std::vector<int>(static_cast<std::size_t>(n) * n, 1)}; }

MicroModel make_model(const PhaseGrid& g, MaterialMap m, MaterialLaw law = MaterialLaw::NeoHookean,
                      Kinematics kin = Kinematics::Nonlinear, CouplingKind c = CouplingKind::Periodic,
                      double delta = 1.0) {
  return MicroModel(mesh_from_phase_grid(g, delta), std::move(m), law, kin, c);
}

MacroCoupling coupling(const Mat2& H, const Vec2& u0 = Vec2(3.0, -2.0)) {
  MacroCoupling c;
  c.H = H;
  c.u0 = u0;
  return c;
}

RveState solved(const MicroModel& model, const MacroCoupling& c, double tol = 1e-10) {
  RveState s = make_rve_state(model, 1.0);
  begin_load_step(s);
  set_macro_state(model, s, c);
  solve_micro(model, s, tol, 50);
  return s;
}

// Shape data at the center of a unit macro quad.
MacroShape unit_quad_shape(const Mesh& macro, int e = 0, Vec2 xi = Vec2::Zero()) {
  const QpGeometry g = element_point(macro, e, xi);
  MacroShape s;
  s.count = macro.nodes_per_element();
  for (int a = 0; a < s.count; ++a) {
    s.N[a] = g.N[a];
    s.dNdX[a] = g.dNdX[a];
  }
  return s;
}

Mat2 shear(double g) {
  Mat2 H = Mat2::Zero();
  H(0, 1) = g;
  return H;
}

}  // namespace

TEST(Linearize, AffineSamples) {
  const Mesh m = mesh_from_phase_grid(uniform_grid(4), 2.0);
  const Vec2 c(1.0, 1.0);
  MacroCoupling zero_grad;
  zero_grad.u0 = Vec2(0.3, -0.4);
  const Vec d0 = linearize_macro(zero_grad, m, c);
  for (int n = 0; n < m.num_nodes(); ++n) EXPECT_EQ(d0.segment<2>(2 * n), zero_grad.u0);

  Mat2 A;
  A << 0.1, 0.2, -0.3, 0.05;
  const MacroCoupling mc = coupling(A);
  const Vec d = linearize_macro(mc, m, c);
  for (int n = 0; n < m.num_nodes(); ++n)
    EXPECT_LT((d.segment<2>(2 * n) - (mc.u0 + A * (m.node(n) - c))).norm(), 1e-15);
  const PeriodicPairing p = pair_periodic_nodes(m, 2.0);
  for (auto [a, b] : p.pairs)
    EXPECT_LT((d.segment<2>(2 * b) - d.segment<2>(2 * a) - A * (m.node(b) - m.node(a))).norm(), 1e-15);
}

TEST(Constraints, PeriodicRowCounts) {
  const MicroModel one = make_model(uniform_grid(1), MaterialMap::uniform(kA));
  const ConstraintSet c1 = one.constraints_for(Vec::Zero(one.num_dofs()));
  EXPECT_EQ(c1.size(), 8);
  for (const auto& r : c1.rows()) EXPECT_TRUE(r.dirichlet());

  const MicroModel two = make_model(uniform_grid(2), MaterialMap::uniform(kA));
  const ConstraintSet c2 = two.constraints_for(Vec::Zero(two.num_dofs()));
  EXPECT_EQ(c2.size(), 12);
  int diff = 0;
  for (const auto& r : c2.rows()) diff += r.dirichlet() ? 0 : 1;
  EXPECT_EQ(diff, 4);
  EXPECT_NO_THROW(c2.validate());

  const MicroModel kubc =
      make_model(uniform_grid(4), MaterialMap::uniform(kA), MaterialLaw::NeoHookean, Kinematics::Nonlinear,
                 CouplingKind::LinearDisplacement);
  EXPECT_EQ(kubc.constraints_for(Vec::Zero(kubc.num_dofs())).size(), 2 * 16);
}

TEST(MicroNewton, LinearProblemConvergesInOneStep) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB), MaterialLaw::LinearElastic,
                                      Kinematics::Linear);
  RveState s = make_rve_state(model, 1.0);
  begin_load_step(s);
  set_macro_state(model, s, coupling(shear(1e-3)));
  EXPECT_EQ(solve_micro(model, s, 1e-10, 10), 1);
  // restarting from the converged state needs no iteration
  EXPECT_EQ(solve_micro(model, s, 1e-10, 10), 0);
}

TEST(MicroNewton, HomogeneousRveIsAffine) {
  for (auto c : {CouplingKind::Periodic, CouplingKind::LinearDisplacement}) {
    const MicroModel model =
        make_model(uniform_grid(4), MaterialMap::uniform(kA), MaterialLaw::NeoHookean, Kinematics::Nonlinear, c);
    Mat2 A;
    A << 0.05, 0.1, -0.02, -0.03;
    RveState s = make_rve_state(model, 1.0);
    begin_load_step(s);
    set_macro_state(model, s, coupling(A));
    const int it = solve_micro(model, s, 1e-10, 10);
    EXPECT_LE(it, 1);
    EXPECT_LT(s.fluct.norm(), 1e-12);
    const Mat3 S = macro_stress(model, s).S;
    const Mat3 expect =
        neo_hookean(DeformationState::from_deformation_gradient(Mat3::Identity() + embed(A)), kA).S;
    EXPECT_LT((S - expect).norm(), 1e-10 * expect.norm());
  }
}

TEST(MicroNewton, QuadraticTailOnCheckerboard) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB));
  RveState s = make_rve_state(model, 1.0);
  begin_load_step(s);
  set_macro_state(model, s, coupling(shear(0.1)));
  std::vector<double> r;
  for (int k = 0; k < 20; ++k) {
    evaluate(model, s);
    r.push_back(s.residual / s.reference);
    if (micro_converged(s, 1e-10)) break;
    micro_newton_step(model, s);
  }
  ASSERT_TRUE(micro_converged(s, 1e-10));
  ASSERT_GE(r.size(), 3u);
  // the last contraction above the roundoff level is quadratic
  const std::size_t n = r.size();
  EXPECT_LE(r[n - 1], 10.0 * r[n - 2] * r[n - 2] + s.floor / s.reference);
  EXPECT_LE(r[n - 2], 10.0 * r[n - 3] * r[n - 3] + s.floor / s.reference);
}

TEST(MicroNewton, NoConvergenceReportsHistory) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB));
  RveState s = make_rve_state(model, 1.0);
  begin_load_step(s);
  set_macro_state(model, s, coupling(shear(0.2)));
  try {
    solve_micro(model, s, 1e-10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoConvergence);
    EXPECT_NE(std::string(e.what()).find("residuals"), std::string::npos);
  }
}

TEST(Averages, DeformationGradient) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB));
  RveState s = make_rve_state(model, 1.0);
  EXPECT_LT((average_F(model, s) - Mat3::Identity()).norm(), 1e-15);

  Mat2 A;
  A << 0.08, -0.05, 0.03, 0.02;
  set_macro_state(model, s, coupling(A));
  EXPECT_LT((average_F(model, s) - (Mat3::Identity() + embed(A))).norm(), 1e-14);

  const RveState conv = solved(model, coupling(A));
  EXPECT_GT(conv.fluct.norm(), 1e-6);
  EXPECT_LT((average_F(model, conv) - (Mat3::Identity() + embed(A))).norm(), 1e-13);
  // fluctuations are periodic and vanish at the corners
  EXPECT_LT(conv.constraints.apply(conv.fluct).norm(), 1e-12);
}

TEST(MacroStressTest, ZeroAndLinearKinematics) {
  const MicroModel model = make_model(checkerboard(4), MaterialMap(kA, kB));
  RveState s = make_rve_state(model, 1.0);
  EXPECT_EQ(macro_stress(model, s).S.norm(), 0.0);

  const MicroModel lin = make_model(uniform_grid(2), MaterialMap::uniform(kA), MaterialLaw::LinearElastic,
                                    Kinematics::Linear);
  Mat2 A;
  A << 1e-3, 2e-3, 0.0, -1e-3;
  const RveState ls = solved(lin, coupling(A));
  const Mat3 expect = linear_elastic(DeformationState::small_strain(embed(A)), kA).S;
  EXPECT_LT((macro_stress(lin, ls).S - expect).norm(), 1e-10 * expect.norm());
}

TEST(MacroStressTest, LaminateMatchesVoigtBound) {
  // layers normal to x (columns alternate); stretching along y loads them in parallel
  PhaseGrid g{8, 8, std::vector<int>(64)};
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) g.cells[j * 8 + i] = 1 + i % 2;
  const MicroModel model = make_model(g, MaterialMap(kA, kB), MaterialLaw::LinearElastic, Kinematics::Linear);
  // uniaxial stress along the layers: prescribe e_yy and the lateral strain of
  // the equal-Poisson plane-strain laminate
  const double e = 1e-6;
  const double nu = 0.2;
  Mat2 A = Mat2::Zero();
  A(1, 1) = e;
  A(0, 0) = -nu / (1 - nu) * e;
  const RveState s = solved(model, coupling(A));
  const Mat3 S = macro_stress(model, s).S;
  auto plane_strain_modulus = [nu](double E) { return E / (1 - nu * nu); };
  const double voigt = 0.5 * (plane_strain_modulus(100000) + plane_strain_modulus(40000));
  EXPECT_NEAR(S(1, 1) / e, voigt, 1e-3 * voigt);
  EXPECT_LT(std::abs(S(0, 0)), 1e-6 * std::abs(S(1, 1)));
}

TEST(TransferMatrix, HomogeneousColumnsAreAffine) {
  const MicroModel model = make_model(uniform_grid(4), MaterialMap::uniform(kA), MaterialLaw::LinearElastic,
                                      Kinematics::Nonlinear);
  const Mesh macro = generate_structured(10.0, 10.0, 1, 1, ElementKind::Quad4);
  const MacroShape shape = unit_quad_shape(macro, 0, Vec2(0.3, -0.4));
  RveState s = make_rve_state(model, 1.0);
  const Mat T = build_T(model, s, shape);
  ASSERT_EQ(T.cols(), 8);
  for (int I = 0; I < 4; ++I)
    for (int i = 0; i < 2; ++i) {
      MacroCoupling unit;
      unit.u0[i] = shape.N[I];
      unit.H.row(i) = shape.dNdX[I].transpose();
      const Vec affine = linearize_macro(unit, model.mesh(), model.center());
      EXPECT_LT((T.col(2 * I + i) - affine).norm(), 1e-12);
      EXPECT_LT((s.constraints.apply(T.col(2 * I + i) - affine)).norm(), 1e-13);
    }
  // summing the x columns reproduces a unit translation
  Vec sum = Vec::Zero(model.num_dofs());
  for (int I = 0; I < 4; ++I) sum += T.col(2 * I);
  for (int n = 0; n < model.mesh().num_nodes(); ++n) EXPECT_LT((sum.segment<2>(2 * n) - Vec2(1, 0)).norm(), 1e-12);
}

TEST(TransferMatrix, ColumnsSatisfyConstraintsHeterogeneous) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB));
  const Mesh macro = generate_structured(2.0, 1.0, 1, 1, ElementKind::Quad4);
  const MacroShape shape = unit_quad_shape(macro);
  RveState s = solved(model, coupling(shear(0.05)));
  const Mat T = build_T(model, s, shape);
  for (int I = 0; I < 4; ++I)
    for (int i = 0; i < 2; ++i) {
      MacroCoupling unit;
      unit.u0[i] = shape.N[I];
      unit.H.row(i) = shape.dNdX[I].transpose();
      const Vec affine = linearize_macro(unit, model.mesh(), model.center());
      EXPECT_LT(s.constraints.apply(T.col(2 * I + i) - affine).norm(), 1e-12);
    }
}

TEST(MacroStiffness, HomogeneousMatchesSingleScaleElement) {
  const Mesh macro = generate_structured(3.0, 2.0, 1, 1, ElementKind::Quad4);
  const MicroModel model = make_model(uniform_grid(3), MaterialMap::uniform(kA), MaterialLaw::LinearElastic,
                                      Kinematics::Nonlinear);
  const double thickness = 4.0;
  Mat k = Mat::Zero(8, 8);
  for (const auto& qp : macro_quadrature(macro, thickness)) {
    RveState s = make_rve_state(model, qp.weight);
    k += macro_element_stiffness(build_T(model, s, qp.shape), [&] {
      evaluate(model, s);
      return s.K;
    }(), qp.weight, model.volume());
  }
  const FeModel single(macro, MaterialMap::uniform(kA), MaterialLaw::LinearElastic, Kinematics::Nonlinear, thickness);
  std::array<double, 8> d{};
  const Mat ref = element_tangent(single, 0, d);
  EXPECT_LT((k - ref).norm(), 1e-10 * ref.norm());
  EXPECT_LT((k - k.transpose()).norm(), 1e-10 * k.norm());
}

TEST(MacroStiffness, BracketedByPhasesAndKubcStiffer) {
  const Mesh macro = generate_structured(1.0, 1.0, 1, 1, ElementKind::Quad4);
  const auto qps = macro_quadrature(macro, 1.0);
  auto element_k = [&](const MicroModel& model) {
    Mat k = Mat::Zero(8, 8);
    for (const auto& qp : qps) {
      RveState s = make_rve_state(model, qp.weight);
      evaluate(model, s);
      k += macro_element_stiffness(build_T(model, s, qp.shape), s.K, qp.weight, model.volume());
    }
    return k;
  };
  const PhaseGrid g = checkerboard(8);
  const Mat k_pbc = element_k(make_model(g, MaterialMap(kA, kB), MaterialLaw::LinearElastic, Kinematics::Linear));
  const Mat k_kubc = element_k(make_model(g, MaterialMap(kA, kB), MaterialLaw::LinearElastic, Kinematics::Linear,
                                          CouplingKind::LinearDisplacement));
  const Mat k_hard = element_k(make_model(g, MaterialMap::uniform(kA), MaterialLaw::LinearElastic, Kinematics::Linear));
  const Mat k_soft = element_k(make_model(g, MaterialMap::uniform(kB), MaterialLaw::LinearElastic, Kinematics::Linear));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Vec v(8);
    for (int i = 0; i < 8; ++i) v[i] = n(rng);
    const double q = v.dot(k_pbc * v);
    EXPECT_LE(q, v.dot(k_hard * v) * (1 + 1e-12));
    EXPECT_GE(q, v.dot(k_soft * v) * (1 - 1e-12));
    EXPECT_GE(v.dot(k_kubc * v), q * (1 - 1e-12));
  }
}

TEST(MacroStiffness, MatchesFiniteDifferenceOfHomogenizedForce) {
  const MicroModel model = make_model(checkerboard(8), MaterialMap(kA, kB));
  const Mesh macro = generate_structured(2.0, 1.0, 1, 1, ElementKind::Quad4);
  const auto qps = macro_quadrature(macro, 1.0);
  Vec d(8);
  d << 0.0, 0.0, 0.1, -0.05, 0.12, 0.02, -0.01, 0.04;

  auto element_force = [&](const Vec& dd, Mat* k) {
    Vec f = Vec::Zero(8);
    if (k) k->setZero(8, 8);
    for (const auto& qp : qps) {
      RveState s = make_rve_state(model, qp.weight);
      begin_load_step(s);
      set_macro_state(model, s, macro_coupling_at(qp, macro, dd));
      solve_micro(model, s, 1e-12, 50);
      const QpContribution c = qp_contribution(model, s, qp, k != nullptr);
      // contributions are in element-local node order
      const auto conn = macro.element(0);
      for (int a = 0; a < 4; ++a) {
        f.segment<2>(2 * conn[a]) += c.f.segment<2>(2 * a);
        if (k)
          for (int b = 0; b < 4; ++b) k->block<2, 2>(2 * conn[a], 2 * conn[b]) += c.k.block<2, 2>(2 * a, 2 * b);
      }
    }
    return f;
  };
  Mat k;
  element_force(d, &k);
  Mat fd(8, 8);
  const double h = 1e-6;
  for (int i = 0; i < 8; ++i) {
    Vec dp = d, dm = d;
    dp[i] += h;
    dm[i] -= h;
    fd.col(i) = (element_force(dp, nullptr) - element_force(dm, nullptr)) / (2 * h);
  }
  EXPECT_LT((fd - k).norm(), 1e-3 * k.norm());
}
