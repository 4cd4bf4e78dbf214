#include "fehmm/micro.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace fehmm {

Vec linearize_macro(const MacroCoupling& c, const Mesh& micro, const Vec2& center) {
  Vec d(micro.num_dofs());
  for (int n = 0; n < micro.num_nodes(); ++n) d.segment<2>(2 * n) = c.u0 + c.H * (micro.node(n) - center);
  return d;
}

ConstraintSet build_constraints(const Mesh& micro, const std::optional<PeriodicPairing>& pairing,
                                const std::vector<int>& boundary, CouplingKind coupling, const Vec& dbar) {
  require(dbar.size() == micro.num_dofs(), ErrorKind::InvalidArgument, "d-bar size mismatch");
  ConstraintSet G(micro.num_dofs());
  if (coupling == CouplingKind::LinearDisplacement) {
    for (int n : boundary)
      for (int i = 0; i < 2; ++i) G.add_dirichlet(2 * n + i, dbar[2 * n + i]);
    return G;
  }
  require(pairing.has_value(), ErrorKind::InvalidArgument, "periodic coupling needs a node pairing");
  for (int n : pairing->corners)
    for (int i = 0; i < 2; ++i) G.add_dirichlet(2 * n + i, dbar[2 * n + i]);
  for (const auto& [p, q] : pairing->pairs)
    for (int i = 0; i < 2; ++i) G.add_difference(2 * q + i, 2 * p + i, dbar[2 * q + i] - dbar[2 * p + i]);
  return G;
}

MicroModel::MicroModel(Mesh mesh, MaterialMap materials, MaterialLaw law, Kinematics kinematics,
                       CouplingKind coupling)
    : fe_(std::move(mesh), std::move(materials), law, kinematics, 1.0), coupling_(coupling) {
  const auto& bb = fe_.mesh().bbox();
  delta_ = bb.hi.x() - bb.lo.x();
  require(delta_ > 0.0 && std::abs(bb.hi.y() - bb.lo.y() - delta_) <= 1e-9 * delta_ && bb.lo.norm() <= 1e-9 * delta_,
          ErrorKind::InvalidArgument, "RVE mesh must span [0, delta]^2");
  if (coupling_ == CouplingKind::Periodic) pairing_ = pair_periodic_nodes(fe_.mesh(), delta_);
  boundary_ = boundary_nodes(fe_.mesh());
  constraints_for(Vec::Zero(num_dofs())).validate();
}

ConstraintSet MicroModel::constraints_for(const Vec& dbar) const {
  return build_constraints(fe_.mesh(), pairing_, boundary_, coupling_, dbar);
}

Vec MicroModel::targets_for(const Vec& dbar) const { return constraints_for(dbar).targets(); }

RveState make_rve_state(const MicroModel& model, double qp_weight) {
  RveState s;
  s.D = Vec::Zero(model.num_dofs());
  s.fluct = Vec::Zero(model.num_dofs());
  s.constraints = model.constraints_for(s.D);
  s.lambda = Vec::Zero(s.constraints.size());
  s.qp_weight = qp_weight;
  s.volume = model.volume();
  return s;
}

void begin_load_step(RveState& s) { s.reference_armed = true; }

namespace {

// The micro state is kept free of the rigid translation u0: a translation
// leaves every micro quantity unchanged, and carrying large offsets in D
// would cost digits in the strain computation.
Vec affine_part(const MicroModel& model, const MacroCoupling& macro) {
  MacroCoupling c = macro;
  c.u0.setZero();
  return linearize_macro(c, model.mesh(), model.center());
}

}  // namespace

Vec full_displacement(const MicroModel& model, const RveState& s) {
  Vec d = s.D;
  for (int n = 0; n < model.mesh().num_nodes(); ++n) d.segment<2>(2 * n) += s.macro.u0;
  return d;
}

void set_macro_state(const MicroModel& model, RveState& s, const MacroCoupling& macro) {
  s.macro = macro;
  if (s.reference_armed) {
    s.awaiting_reference = true;
    s.reference_armed = false;
  }
  const Vec affine = affine_part(model, macro);
  s.D = affine + s.fluct;
  s.constraints.set_targets(s.constraints.apply(affine));
  s.evaluated = false;
}

void evaluate(const MicroModel& model, RveState& s) {
  AssembledSystem sys = assemble(model.fe(), s.D, Vec(), true);
  s.K = std::move(sys.K);
  s.f_int = std::move(sys.f_int);
  s.lambda = s.constraints.least_squares_multipliers(s.f_int);
  s.residual = s.constraints.project(s.f_int).norm();
  s.floor = model.fe().residual_floor(sys.force_scale);
  if (s.awaiting_reference) {
    s.reference = s.residual;
    s.awaiting_reference = false;
  }
  s.evaluated = true;
}

bool micro_converged(const RveState& s, double tol) {
  return s.evaluated && (s.residual <= s.floor || s.residual <= tol * s.reference);
}

void micro_newton_step(const MicroModel& model, RveState& s) {
  if (!s.evaluated) evaluate(model, s);
  SaddlePointSolver solver;
  solver.factorize(s.K, s.constraints);
  const auto sol = solver.solve(-s.f_int, s.constraints.targets() - s.constraints.apply(s.D));
  s.D += sol.x.col(0);
  s.lambda = sol.lambda.col(0);
  s.fluct = s.D - affine_part(model, s.macro);
  s.evaluated = false;
  ++s.iterations;
}

int solve_micro(const MicroModel& model, RveState& s, double tol, int max_iter) {
  std::vector<double> history;
  for (int k = 0;; ++k) {
    if (!s.evaluated) evaluate(model, s);
    history.push_back(s.residual);
    if (micro_converged(s, tol)) return k;
    if (k == max_iter) {
      std::ostringstream os;
      os << "micro Newton did not converge in " << max_iter << " iterations; residuals:";
      for (double r : history) os << ' ' << r;
      throw Error(ErrorKind::NoConvergence, os.str());
    }
    micro_newton_step(model, s);
  }
}

namespace {

struct Averages {
  Mat3 F = Mat3::Zero();
  Mat3 P = Mat3::Zero();
  Mat3 S = Mat3::Zero();
};

Averages volume_averages(const MicroModel& model, const RveState& s) {
  const FeModel& fe = model.fe();
  const int nen = fe.mesh().nodes_per_element();
  Averages a;
  double vol = 0.0;
  for (int e = 0; e < fe.mesh().num_elements(); ++e) {
    const auto de = gather(fe, e, s.D);
    for (const auto& qp : fe.geometry().qps(e)) {
      Mat2 H = Mat2::Zero();
      for (int k = 0; k < nen; ++k) H += Vec2(de[2 * k], de[2 * k + 1]) * qp.dNdX[k].transpose();
      const DeformationState st = fe.kinematics() == Kinematics::Linear
                                      ? DeformationState::small_strain(embed(H))
                                      : DeformationState::from_deformation_gradient(Mat3::Identity() + embed(H));
      const Mat3 S = evaluate_law(fe.law(), st, fe.params_at(e, qp)).S;
      a.F += qp.dV * st.F;
      a.P += qp.dV * st.F * S;
      a.S += qp.dV * S;
      vol += qp.dV;
    }
  }
  a.F /= vol;
  a.P /= vol;
  a.S /= vol;
  return a;
}

}  // namespace

Mat3 average_F(const MicroModel& model, const RveState& s) { return volume_averages(model, s).F; }
Mat3 average_P(const MicroModel& model, const RveState& s) { return volume_averages(model, s).P; }

MacroStress macro_stress(const MicroModel& model, const RveState& s) {
  const Averages a = volume_averages(model, s);
  MacroStress out;
  if (model.kinematics() == Kinematics::Linear) {
    out.S = 0.5 * (a.S + a.S.transpose());
    return out;
  }
  const double det = a.F.determinant();
  if (!(det > 0.0)) throw Error(ErrorKind::NonPhysicalAverage, "averaged deformation gradient is singular");
  const Mat3 raw = a.F.inverse() * a.P;
  out.S = 0.5 * (raw + raw.transpose());
  const double n = raw.norm();
  out.asymmetry = n > 0.0 ? (raw - raw.transpose()).norm() / n : 0.0;
  return out;
}

Mat build_T(const MicroModel& model, RveState& s, const MacroShape& shape, bool translation) {
  if (!s.evaluated) evaluate(model, s);
  // Responses to the four unit gradients; the u0 part is an exact translation.
  Mat g(s.constraints.size(), 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      MacroCoupling unit;
      unit.H(i, j) = 1.0;
      g.col(2 * i + j) = s.constraints.apply(linearize_macro(unit, model.mesh(), model.center()));
    }
  SaddlePointSolver solver;
  solver.factorize(s.K, s.constraints);
  const Mat X = solver.solve(Mat::Zero(model.num_dofs(), 4), g).x;
  Mat T(model.num_dofs(), 2 * shape.count);
  for (int I = 0; I < shape.count; ++I)
    for (int i = 0; i < 2; ++i) {
      auto col = T.col(2 * I + i);
      col = shape.dNdX[I].x() * X.col(2 * i) + shape.dNdX[I].y() * X.col(2 * i + 1);
      if (translation)
        for (int n = 0; n < model.mesh().num_nodes(); ++n) col[2 * n + i] += shape.N[I];
    }
  return T;
}

Mat macro_element_stiffness(const Mat& T, const SpMat& K, double qp_weight, double volume) {
  require(T.rows() == K.rows() && K.rows() == K.cols(), ErrorKind::Internal, "T / K dimension mismatch");
  Mat k = (qp_weight / volume) * (T.transpose() * (K * T));
  return 0.5 * (k + k.transpose());
}

Vec gradient_response(const MicroModel& model, RveState& s, const Mat2& dH) {
  if (!s.evaluated) evaluate(model, s);
  MacroCoupling probe;
  probe.H = dH;
  const Vec g = s.constraints.apply(linearize_macro(probe, model.mesh(), model.center()));
  SaddlePointSolver solver;
  solver.factorize(s.K, s.constraints);
  return solver.solve(Vec::Zero(model.num_dofs()), g).x.col(0);
}

}  // namespace fehmm
