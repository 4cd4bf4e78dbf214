#include "fehmm/material.hpp"

#include <cmath>
#include <numbers>

namespace fehmm {

void LameParams::validate() const {
  require(mu > 0.0, ErrorKind::InvalidArgument, "shear modulus must be positive");
  require(lambda > -2.0 / 3.0 * mu, ErrorKind::InvalidArgument, "lambda must exceed -2/3 mu");
}

LameParams lame_from_engineering(double youngs, double poisson) {
  require(youngs > 0.0, ErrorKind::InvalidArgument, "Young's modulus must be positive");
  require(poisson != 0.5, ErrorKind::IncompressibleUnsupported, "Poisson ratio 0.5 is incompressible");
  require(poisson > -1.0 && poisson < 0.5, ErrorKind::InvalidArgument, "Poisson ratio must lie in (-1, 0.5)");
  return {youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)), youngs / (2.0 * (1.0 + poisson))};
}

DeformationState DeformationState::from_deformation_gradient(const Mat3& F) {
  DeformationState s;
  s.F = F;
  s.C = F.transpose() * F;
  s.E = 0.5 * (s.C - Mat3::Identity());
  s.J = F.determinant();
  return s;
}

DeformationState DeformationState::from_right_cauchy_green(const Mat3& C) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (C + C.transpose()));
  require(eig.eigenvalues().minCoeff() > 0.0, ErrorKind::NonPhysicalDeformation, "C is not positive definite");
  DeformationState s;
  s.C = C;
  s.F = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  s.E = 0.5 * (C - Mat3::Identity());
  s.J = std::sqrt(C.determinant());
  return s;
}

DeformationState DeformationState::small_strain(const Mat3& H) {
  DeformationState s;
  s.F = Mat3::Identity() + H;
  s.E = 0.5 * (H + H.transpose());
  s.C = Mat3::Identity() + 2.0 * s.E;
  s.J = s.F.determinant();
  return s;
}

Vec6 to_voigt_stress(const Mat3& S) {
  Vec6 v;
  for (int a = 0; a < 6; ++a) v[a] = S(kVoigtPairs[a][0], kVoigtPairs[a][1]);
  return v;
}

Vec6 to_voigt_strain(const Mat3& E) {
  Vec6 v;
  for (int a = 0; a < 6; ++a) v[a] = (a < 3 ? 1.0 : 2.0) * E(kVoigtPairs[a][0], kVoigtPairs[a][1]);
  return v;
}

Mat6 isotropic_tangent(const LameParams& p) {
  Mat6 CC = Mat6::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) CC(a, b) = p.lambda;
    CC(a, a) += 2.0 * p.mu;
    CC(a + 3, a + 3) = p.mu;
  }
  return CC;
}

StressTangent neo_hookean(const DeformationState& state, const LameParams& p) {
  require(state.J > 0.0, ErrorKind::NonPhysicalDeformation, "J <= 0");
  const Mat3 Ci = state.C.inverse();
  const double J2 = state.J * state.J;
  StressTangent out;
  out.S = 0.5 * p.lambda * (J2 - 1.0) * Ci + p.mu * (Mat3::Identity() - Ci);
  out.S = 0.5 * (out.S + out.S.transpose());

  const double a_coef = p.lambda * (J2 - 1.0) - 2.0 * p.mu;
  for (int a = 0; a < 6; ++a) {
    const int i = kVoigtPairs[a][0], j = kVoigtPairs[a][1];
    for (int b = 0; b < 6; ++b) {
      const int k = kVoigtPairs[b][0], l = kVoigtPairs[b][1];
      const double A = -0.5 * (Ci(i, k) * Ci(j, l) + Ci(j, k) * Ci(i, l));
      out.CC(a, b) = a_coef * A + p.lambda * J2 * Ci(i, j) * Ci(k, l);
    }
  }
  out.CC = 0.5 * (out.CC + out.CC.transpose()).eval();
  return out;
}

StressTangent linear_elastic(const DeformationState& state, const LameParams& p) {
  StressTangent out;
  out.S = p.lambda * state.E.trace() * Mat3::Identity() + 2.0 * p.mu * state.E;
  out.CC = isotropic_tangent(p);
  return out;
}

StressTangent evaluate_law(MaterialLaw law, const DeformationState& state, const LameParams& p) {
  return law == MaterialLaw::NeoHookean ? neo_hookean(state, p) : linear_elastic(state, p);
}

double strain_energy(const DeformationState& state, const LameParams& p, MaterialLaw law) {
  if (law == MaterialLaw::LinearElastic) {
    const double tr = state.E.trace();
    return 0.5 * p.lambda * tr * tr + p.mu * state.E.squaredNorm();
  }
  require(state.J > 0.0, ErrorKind::NonPhysicalDeformation, "J <= 0");
  return 0.25 * p.lambda * (state.J * state.J - 1.0) - (0.5 * p.lambda + p.mu) * std::log(state.J) +
         0.5 * p.mu * (state.C.trace() - 3.0);
}

MaterialMap::MaterialMap(LameParams phase1, LameParams phase2, std::optional<SmoothBlend> blend)
    : phases_{phase1, phase2}, blend_(blend) {
  phase1.validate();
  phase2.validate();
  if (blend_) require(blend_->period > 0.0 && (blend_->axis == 0 || blend_->axis == 1), ErrorKind::InvalidArgument,
                      "smooth blend needs a positive period and axis 0 or 1");
}

LameParams MaterialMap::at(int phase, const Vec2& X) const {
  if (!blend_) return phase_params(phase);
  const double w = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * X[blend_->axis] / blend_->period));
  return {w * phases_[0].lambda + (1.0 - w) * phases_[1].lambda, w * phases_[0].mu + (1.0 - w) * phases_[1].mu};
}

bool MaterialMap::homogeneous() const {
  return phases_[0].lambda == phases_[1].lambda && phases_[0].mu == phases_[1].mu;
}

}  // namespace fehmm
