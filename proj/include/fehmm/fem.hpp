#pragma once

#include "fehmm/common.hpp"
#include "fehmm/material.hpp"
#include "fehmm/mesh.hpp"

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace fehmm {

/// Precomputed data at one quadrature point of one element.
struct QpGeometry {
  std::array<double, 4> N{};
  std::array<Vec2, 4> dNdX{};  // physical gradients
  double dV = 0.0;             // weight * det(J), per unit thickness
  Vec2 X = Vec2::Zero();       // reference position
};

/// Shape values, physical gradients and volume weights for every element.
class ElementGeometry {
 public:
  ElementGeometry() = default;
  ElementGeometry(const Mesh& mesh, QuadratureRule rule);

  int qps_per_element() const { return nqp_; }
  std::span<const QpGeometry> qps(int e) const {
    return {data_.data() + static_cast<std::size_t>(e) * nqp_, static_cast<std::size_t>(nqp_)};
  }

 private:
  int nqp_ = 0;
  std::vector<QpGeometry> data_;
};

/// Physical gradients at reference point xi of element e; throws
/// degenerate-element when det(J) <= 0.
QpGeometry element_point(const Mesh& mesh, int e, const Vec2& xi);

/// Plane-strain embedding of an in-plane 2x2 tensor.
Mat3 embed(const Mat2& A);

/// F = I + sum_I d_I (x) grad N_I at xi. With linear kinematics the returned
/// state carries E = sym(grad u).
DeformationState deformation_gradient(const Mesh& mesh, int e, std::span<const double> d_e, const Vec2& xi,
                                      Kinematics kinematics = Kinematics::Nonlinear);

/// Single-scale discrete model: mesh, constitutive data, quadrature cache and
/// the sparse pattern of the global stiffness. Shared read-only.
class FeModel {
 public:
  FeModel(Mesh mesh, MaterialMap materials, MaterialLaw law, Kinematics kinematics, double thickness = 1.0);

  const Mesh& mesh() const { return mesh_; }
  const MaterialMap& materials() const { return materials_; }
  MaterialLaw law() const { return law_; }
  Kinematics kinematics() const { return kinematics_; }
  double thickness() const { return thickness_; }
  const ElementGeometry& geometry() const { return geometry_; }
  int num_dofs() const { return mesh_.num_dofs(); }

  /// Global stiffness pattern (values zero) and, per element, the value
  /// slots of its (2 nen)^2 entries in column-major local order.
  const SpMat& pattern() const { return pattern_; }
  std::span<const int> element_slots(int e) const {
    const std::size_t n = static_cast<std::size_t>(2 * mesh_.nodes_per_element());
    return {slots_.data() + static_cast<std::size_t>(e) * n * n, n * n};
  }

  /// Element dof indices (node-major, (u_x, u_y) interleaved).
  std::array<int, 8> element_dofs(int e) const;
  LameParams params_at(int e, const QpGeometry& qp) const { return materials_.at(mesh_.phase(e), qp.X); }

  /// Size of the roundoff in an assembled force vector: stresses carry an
  /// absolute error of order eps (lambda + 2 mu) regardless of the strain
  /// level, which integrates to eps (lambda + 2 mu) t sqrt(area).
  double roundoff_force() const { return roundoff_force_; }
  /// Absolute residual below which Newton iterations cannot make progress.
  double residual_floor(double force_scale) const;

 private:
  Mesh mesh_;
  MaterialMap materials_;
  MaterialLaw law_;
  Kinematics kinematics_;
  double thickness_;
  ElementGeometry geometry_;
  SpMat pattern_;
  std::vector<int> slots_;
  double roundoff_force_ = 0.0;
};

/// Largest lambda + 2 mu over both phases.
double stiffness_scale(const MaterialMap& materials);

/// Residual floor shared by all Newton loops: a multiple of eps times the
/// summed element force magnitudes plus the stress roundoff force.
double residual_floor(double force_scale, double roundoff_force);

struct ElementResult {
  Vec f;         // internal force
  Mat k;         // tangent (empty unless requested)
  double energy = 0.0;
};

ElementResult element_evaluate(const FeModel& model, int e, std::span<const double> d_e, bool with_tangent);
Vec element_internal_force(const FeModel& model, int e, std::span<const double> d_e);
Mat element_tangent(const FeModel& model, int e, std::span<const double> d_e);

/// Gathers the element's dofs from a global vector.
std::array<double, 8> gather(const FeModel& model, int e, const Vec& d);

struct AssembledSystem {
  SpMat K;         // tangential stiffness (empty when not requested)
  Vec R;           // f_int - f_ext
  Vec f_int;
  double force_scale = 0.0;  // norm of the sum of |element contributions|, a roundoff yardstick
  int ndof = 0;
};

/// Deterministic element-ascending assembly; element failures are rethrown
/// annotated with the element id.
AssembledSystem assemble(const FeModel& model, const Vec& d, const Vec& f_ext, bool with_tangent = true);

double total_energy(const FeModel& model, const Vec& d);

/// Consistent nodal loads of a constant body force b (N/mm^3) over the
/// domain, including thickness.
Vec body_force_load(const FeModel& model, const std::function<Vec2(const Vec2&)>& b);

/// Consistent nodal loads of a traction line load q (N/mm along the edge)
/// on the boundary edge x = const (axis 0) or y = const (axis 1).
Vec edge_line_load(const Mesh& mesh, int axis, double coordinate, const Vec2& q);

}  // namespace fehmm
