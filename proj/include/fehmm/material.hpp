#pragma once

#include "fehmm/common.hpp"

#include <array>
#include <optional>

namespace fehmm {

struct LameParams {
  double lambda = 0.0;  // N/mm^2
  double mu = 0.0;      // N/mm^2

  void validate() const;
};

LameParams lame_from_engineering(double youngs, double poisson);

enum class MaterialLaw { LinearElastic, NeoHookean };

/// Kinematic frame: Linear drops the quadratic part of the strain and the
/// initial-stress stiffness (fully linear elasticity).
enum class Kinematics { Linear, Nonlinear };

/// Plane-strain embedded deformation measures.
struct DeformationState {
  Mat3 F = Mat3::Identity();
  Mat3 C = Mat3::Identity();
  Mat3 E = Mat3::Zero();
  double J = 1.0;

  static DeformationState from_deformation_gradient(const Mat3& F);
  /// Right stretch U = sqrt(C) is used as F.
  static DeformationState from_right_cauchy_green(const Mat3& C);
  /// Small-strain state: E = sym(H), F = I + H.
  static DeformationState small_strain(const Mat3& H);
};

/// S as a symmetric 3x3 tensor and the material tangent in Voigt form
/// ordered (11, 22, 33, 12, 13, 23); strains carry the factor 2 on shear.
struct StressTangent {
  Mat3 S = Mat3::Zero();
  Mat6 CC = Mat6::Zero();
};

constexpr std::array<std::array<int, 2>, 6> kVoigtPairs = {{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

Vec6 to_voigt_stress(const Mat3& S);
Vec6 to_voigt_strain(const Mat3& E);

StressTangent neo_hookean(const DeformationState& state, const LameParams& p);
StressTangent linear_elastic(const DeformationState& state, const LameParams& p);
StressTangent evaluate_law(MaterialLaw law, const DeformationState& state, const LameParams& p);
double strain_energy(const DeformationState& state, const LameParams& p, MaterialLaw law);

/// Isotropic small-strain tensor lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk) in Voigt form.
Mat6 isotropic_tangent(const LameParams& p);

/// Periodic cosine blend between the two phases along one axis, used for
/// smooth-coefficient microstructures: w = (1 + cos(2 pi X_axis / period)) / 2
/// is the phase-1 weight.
struct SmoothBlend {
  int axis = 0;
  double period = 1.0;
};

/// Lamé parameters per phase, optionally blended smoothly in space.
class MaterialMap {
 public:
  MaterialMap() = default;
  MaterialMap(LameParams phase1, LameParams phase2, std::optional<SmoothBlend> blend = std::nullopt);

  /// Homogeneous material (both phases identical).
  static MaterialMap uniform(LameParams p) { return MaterialMap(p, p); }

  LameParams at(int phase, const Vec2& X) const;
  const LameParams& phase_params(int phase) const { return phases_[phase == 1 ? 0 : 1]; }
  const std::optional<SmoothBlend>& blend() const { return blend_; }
  bool homogeneous() const;

 private:
  std::array<LameParams, 2> phases_{};
  std::optional<SmoothBlend> blend_;
};

}  // namespace fehmm
