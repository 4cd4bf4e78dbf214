#pragma once

#include "fehmm/common.hpp"
#include "fehmm/fem.hpp"
#include "fehmm/mesh.hpp"
#include "fehmm/saddle.hpp"

#include <optional>
#include <vector>

namespace fehmm {

enum class CouplingKind { Periodic, LinearDisplacement };

/// Linearized macro displacement at one quadrature point: u0 + H (X - c),
/// with c the RVE center.
struct MacroCoupling {
  Vec2 u0 = Vec2::Zero();
  Mat2 H = Mat2::Zero();
};

/// Everything about an RVE that does not change during a solve: mesh,
/// constitutive data, pairing and the constraint layout. Shared read-only
/// by all quadrature points.
class MicroModel {
 public:
  MicroModel(Mesh mesh, MaterialMap materials, MaterialLaw law, Kinematics kinematics, CouplingKind coupling);

  const FeModel& fe() const { return fe_; }
  const Mesh& mesh() const { return fe_.mesh(); }
  double delta() const { return delta_; }
  double volume() const { return delta_ * delta_; }
  Vec2 center() const { return Vec2(0.5 * delta_, 0.5 * delta_); }
  CouplingKind coupling() const { return coupling_; }
  Kinematics kinematics() const { return fe_.kinematics(); }
  MaterialLaw law() const { return fe_.law(); }
  const std::optional<PeriodicPairing>& pairing() const { return pairing_; }
  int num_dofs() const { return fe_.num_dofs(); }

  /// Constraint rows with targets G d̄ for the given nodal field d̄.
  ConstraintSet constraints_for(const Vec& dbar) const;
  /// Targets G d̄ only (same row layout as constraints_for).
  Vec targets_for(const Vec& dbar) const;

 private:
  FeModel fe_;
  double delta_;
  CouplingKind coupling_;
  std::optional<PeriodicPairing> pairing_;
  std::vector<int> boundary_;
};

/// Affine field u0 + H (X - c) sampled at every micro node.
Vec linearize_macro(const MacroCoupling& c, const Mesh& micro, const Vec2& center);

/// Periodic: corner Dirichlet rows + one difference row per pair and
/// direction. Linear displacement: Dirichlet rows on every boundary node.
ConstraintSet build_constraints(const Mesh& micro, const std::optional<PeriodicPairing>& pairing,
                                const std::vector<int>& boundary, CouplingKind coupling, const Vec& dbar);

/// One quadrature point's micro problem.
struct RveState {
  MacroCoupling macro;
  Vec D;  // micro displacement without the rigid translation macro.u0
  Vec lambda;
  Vec fluct;  // D minus the affine field of `macro`
  ConstraintSet constraints;
  double qp_weight = 0.0;  // macro quadrature weight incl. det J and thickness
  double volume = 0.0;

  // Residual bookkeeping.
  double residual = 0.0;    // ||R^h|| at D (valid when `evaluated`)
  double reference = 0.0;   // first residual of the current load step
  double floor = 0.0;       // roundoff floor for the residual
  bool awaiting_reference = false;
  bool reference_armed = true;
  int iterations = 0;       // Newton iterations since the last counter reset

  // Cache of the last evaluation at D.
  bool evaluated = false;
  SpMat K;
  Vec f_int;
};

RveState make_rve_state(const MicroModel& model, double qp_weight);

/// Next load step: the next residual after a new macro state becomes the
/// normalization reference.
void begin_load_step(RveState& s);

/// Replaces the macro data and sets the predictor D = affine(new) + fluct.
void set_macro_state(const MicroModel& model, RveState& s, const MacroCoupling& macro);

/// D plus the translation u0 of the linearized macro field.
Vec full_displacement(const MicroModel& model, const RveState& s);

/// Assembles K and f_int at D, updates residual and least-squares multipliers.
void evaluate(const MicroModel& model, RveState& s);

bool micro_converged(const RveState& s, double tol);

/// One assemble (if needed) + saddle solve + update of D and Lambda.
void micro_newton_step(const MicroModel& model, RveState& s);

/// Newton iterations until the relative residual drops below tol. Leaves
/// the state evaluated. Returns the number of iterations taken.
int solve_micro(const MicroModel& model, RveState& s, double tol, int max_iter);

/// Volume averages over the RVE (plane-strain embedded, 3x3).
Mat3 average_F(const MicroModel& model, const RveState& s);
Mat3 average_P(const MicroModel& model, const RveState& s);

struct MacroStress {
  Mat3 S = Mat3::Zero();   // symmetric part used in the macro weak form
  double asymmetry = 0.0;  // ||S - S^T|| / ||S|| of the raw <F>^-1 <P>
};

/// <F>^-1 <P> (nonlinear kinematics) or <S> (linear kinematics).
MacroStress macro_stress(const MicroModel& model, const RveState& s);

/// Macro shape data at the quadrature point the RVE belongs to.
struct MacroShape {
  int count = 0;
  std::array<double, 4> N{};
  std::array<Vec2, 4> dNdX{};
};

/// Unit-state responses, one column per (macro node I, direction i) in
/// node-major order. Uses the tangent cached at the current micro state.
/// Without `translation` the rigid u0 part is left out; K annihilates it, so
/// T^T K T is unchanged but free of the roundoff a large translation carries.
Mat build_T(const MicroModel& model, RveState& s, const MacroShape& shape, bool translation = true);

/// (omega / |K_delta|) T^T K T.
Mat macro_element_stiffness(const Mat& T, const SpMat& K, double qp_weight, double volume);

/// Linear response of the constrained micro problem to a macro gradient
/// increment dH at the current tangent (used for Hill-Mandel probes).
Vec gradient_response(const MicroModel& model, RveState& s, const Mat2& dH);

}  // namespace fehmm
