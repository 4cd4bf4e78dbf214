#include "fehmm/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fehmm {

namespace {

// In-plane Voigt rows (11, 22, 12) inside the 6-component ordering.
constexpr std::array<int, 3> kPlane = {0, 1, 3};

}  // namespace

QpGeometry element_point(const Mesh& mesh, int e, const Vec2& xi) {
  const ShapeValues s = shape_eval(mesh.kind(), xi);
  const auto nodes = mesh.element(e);
  Mat2 J = Mat2::Zero();  // J(i, j) = dX_i / dxi_j
  QpGeometry q;
  for (int a = 0; a < s.count; ++a) {
    J += mesh.node(nodes[a]) * s.dN[a].transpose();
    q.X += s.N[a] * mesh.node(nodes[a]);
    q.N[a] = s.N[a];
  }
  const double det = J.determinant();
  if (!(det > 0.0)) throw Error(ErrorKind::DegenerateElement, "element " + std::to_string(e) + " det(J) <= 0");
  const Mat2 Jinv_t = J.inverse().transpose();
  for (int a = 0; a < s.count; ++a) q.dNdX[a] = Jinv_t * s.dN[a];
  q.dV = det;
  return q;
}

ElementGeometry::ElementGeometry(const Mesh& mesh, QuadratureRule rule) {
  const auto rule_pts = quadrature(mesh.kind(), rule);
  nqp_ = static_cast<int>(rule_pts.size());
  data_.reserve(static_cast<std::size_t>(mesh.num_elements()) * nqp_);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (const auto& qp : rule_pts) {
      QpGeometry g = element_point(mesh, e, qp.xi);
      g.dV *= qp.weight;
      data_.push_back(g);
    }
  }
}

Mat3 embed(const Mat2& A) {
  Mat3 out = Mat3::Zero();
  out.topLeftCorner<2, 2>() = A;
  return out;
}

namespace {

Mat2 displacement_gradient(int nen, const std::array<Vec2, 4>& dNdX, std::span<const double> d_e) {
  Mat2 H = Mat2::Zero();
  for (int a = 0; a < nen; ++a) H += Vec2(d_e[2 * a], d_e[2 * a + 1]) * dNdX[a].transpose();
  return H;
}

DeformationState make_state(const Mat2& H, Kinematics kin) {
  if (kin == Kinematics::Linear) return DeformationState::small_strain(embed(H));
  return DeformationState::from_deformation_gradient(Mat3::Identity() + embed(H));
}

}  // namespace

DeformationState deformation_gradient(const Mesh& mesh, int e, std::span<const double> d_e, const Vec2& xi,
                                      Kinematics kinematics) {
  require(d_e.size() == static_cast<std::size_t>(2 * mesh.nodes_per_element()), ErrorKind::InvalidArgument,
          "element displacement vector has wrong size");
  const QpGeometry g = element_point(mesh, e, xi);
  return make_state(displacement_gradient(mesh.nodes_per_element(), g.dNdX, d_e), kinematics);
}

FeModel::FeModel(Mesh mesh, MaterialMap materials, MaterialLaw law, Kinematics kinematics, double thickness)
    : mesh_(std::move(mesh)),
      materials_(std::move(materials)),
      law_(law),
      kinematics_(kinematics),
      thickness_(thickness),
      geometry_(mesh_, QuadratureRule::Stiffness) {
  require(thickness_ > 0.0, ErrorKind::InvalidArgument, "thickness must be positive");
  require(!(law_ == MaterialLaw::NeoHookean && kinematics_ == Kinematics::Linear), ErrorKind::InvalidArgument,
          "neo-Hookean law requires nonlinear kinematics");

  double area = 0.0;
  for (int e = 0; e < mesh_.num_elements(); ++e)
    for (const auto& qp : geometry_.qps(e)) area += qp.dV;
  roundoff_force_ = stiffness_scale(materials_) * thickness_ * std::sqrt(area);

  const int n = mesh_.num_dofs();
  const int nd = 2 * mesh_.nodes_per_element();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(mesh_.num_elements()) * nd * nd);
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto dofs = element_dofs(e);
    for (int a = 0; a < nd; ++a)
      for (int b = 0; b < nd; ++b) trip.emplace_back(dofs[a], dofs[b], 0.0);
  }
  pattern_.resize(n, n);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  slots_.resize(static_cast<std::size_t>(mesh_.num_elements()) * nd * nd);
  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto dofs = element_dofs(e);
    for (int b = 0; b < nd; ++b) {
      const int col = dofs[b];
      for (int a = 0; a < nd; ++a) {
        const int row = dofs[a];
        const int* it = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
        slots_[static_cast<std::size_t>(e) * nd * nd + b * nd + a] = static_cast<int>(it - inner);
      }
    }
  }
}

double stiffness_scale(const MaterialMap& materials) {
  double k = 0.0;
  for (int phase : {1, 2}) {
    const LameParams& p = materials.phase_params(phase);
    k = std::max(k, std::abs(p.lambda + 2.0 * p.mu));
  }
  return k;
}

double residual_floor(double force_scale, double roundoff_force) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return 1e3 * eps * force_scale + 4.0 * eps * roundoff_force;
}

double FeModel::residual_floor(double force_scale) const { return fehmm::residual_floor(force_scale, roundoff_force_); }

std::array<int, 8> FeModel::element_dofs(int e) const {
  std::array<int, 8> dofs{};
  const auto nodes = mesh_.element(e);
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    dofs[2 * a] = 2 * nodes[a];
    dofs[2 * a + 1] = 2 * nodes[a] + 1;
  }
  return dofs;
}

std::array<double, 8> gather(const FeModel& model, int e, const Vec& d) {
  std::array<double, 8> out{};
  const auto dofs = model.element_dofs(e);
  for (int a = 0; a < 2 * model.mesh().nodes_per_element(); ++a) out[a] = d[dofs[a]];
  return out;
}

ElementResult element_evaluate(const FeModel& model, int e, std::span<const double> d_e, bool with_tangent) {
  const int nen = model.mesh().nodes_per_element();
  const int nd = 2 * nen;
  require(d_e.size() >= static_cast<std::size_t>(nd), ErrorKind::InvalidArgument,
          "element displacement vector has wrong size");
  const bool nonlinear = model.kinematics() == Kinematics::Nonlinear;
  const double t = model.thickness();

  ElementResult out;
  out.f = Vec::Zero(nd);
  if (with_tangent) out.k = Mat::Zero(nd, nd);
  Eigen::Matrix<double, 3, 8> B;
  for (const auto& qp : model.geometry().qps(e)) {
    const Mat2 H = displacement_gradient(nen, qp.dNdX, d_e);
    const DeformationState state = make_state(H, model.kinematics());
    if (nonlinear && !(state.J > 0.0))
      throw Error(ErrorKind::NonPhysicalDeformation, "J <= 0 at a quadrature point");
    const LameParams p = model.params_at(e, qp);
    const StressTangent st = evaluate_law(model.law(), state, p);
    const Mat2 F = nonlinear ? Mat2(Mat2::Identity() + H) : Mat2(Mat2::Identity());

    B.setZero();
    for (int a = 0; a < nen; ++a) {
      const double n1 = qp.dNdX[a].x(), n2 = qp.dNdX[a].y();
      B(0, 2 * a) = F(0, 0) * n1;
      B(0, 2 * a + 1) = F(1, 0) * n1;
      B(1, 2 * a) = F(0, 1) * n2;
      B(1, 2 * a + 1) = F(1, 1) * n2;
      B(2, 2 * a) = F(0, 0) * n2 + F(0, 1) * n1;
      B(2, 2 * a + 1) = F(1, 0) * n2 + F(1, 1) * n1;
    }
    const auto Bd = B.leftCols(nd);
    const Eigen::Vector3d s(st.S(0, 0), st.S(1, 1), st.S(0, 1));
    const double w = qp.dV * t;
    out.f.noalias() += w * Bd.transpose() * s;
    out.energy += w * strain_energy(state, p, model.law());

    if (with_tangent) {
      Eigen::Matrix3d D;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) D(r, c) = st.CC(kPlane[r], kPlane[c]);
      out.k.noalias() += w * Bd.transpose() * D * Bd;
      if (nonlinear) {
        const Mat2 S2 = st.S.topLeftCorner<2, 2>();
        for (int a = 0; a < nen; ++a) {
          for (int b = 0; b < nen; ++b) {
            const double g = w * qp.dNdX[a].dot(S2 * qp.dNdX[b]);
            out.k(2 * a, 2 * b) += g;
            out.k(2 * a + 1, 2 * b + 1) += g;
          }
        }
      }
    }
  }
  if (with_tangent) out.k = 0.5 * (out.k + out.k.transpose()).eval();
  return out;
}

Vec element_internal_force(const FeModel& model, int e, std::span<const double> d_e) {
  return element_evaluate(model, e, d_e, false).f;
}

Mat element_tangent(const FeModel& model, int e, std::span<const double> d_e) {
  return element_evaluate(model, e, d_e, true).k;
}

AssembledSystem assemble(const FeModel& model, const Vec& d, const Vec& f_ext, bool with_tangent) {
  const int n = model.num_dofs();
  require(d.size() == n, ErrorKind::InvalidArgument, "displacement vector size mismatch");
  require(f_ext.size() == 0 || f_ext.size() == n, ErrorKind::InvalidArgument, "external load size mismatch");
  AssembledSystem sys;
  sys.ndof = n;
  sys.f_int = Vec::Zero(n);
  Vec abs_sum = Vec::Zero(n);
  if (with_tangent) {
    sys.K = model.pattern();
    std::fill(sys.K.valuePtr(), sys.K.valuePtr() + sys.K.nonZeros(), 0.0);
  }
  const int nd = 2 * model.mesh().nodes_per_element();
  double* values = with_tangent ? sys.K.valuePtr() : nullptr;
  for (int e = 0; e < model.mesh().num_elements(); ++e) {
    const auto de = gather(model, e, d);
    ElementResult r;
    try {
      r = element_evaluate(model, e, std::span<const double>(de.data(), nd), with_tangent);
    } catch (const Error& err) {
      throw Error(err.kind(), "element " + std::to_string(e) + ": " + err.what());
    }
    const auto dofs = model.element_dofs(e);
    for (int a = 0; a < nd; ++a) {
      sys.f_int[dofs[a]] += r.f[a];
      abs_sum[dofs[a]] += std::abs(r.f[a]);
    }
    if (with_tangent) {
      const auto slots = model.element_slots(e);
      for (int b = 0; b < nd; ++b)
        for (int a = 0; a < nd; ++a) values[slots[b * nd + a]] += r.k(a, b);
    }
  }
  sys.R = f_ext.size() ? Vec(sys.f_int - f_ext) : sys.f_int;
  sys.force_scale = abs_sum.norm() + (f_ext.size() ? f_ext.norm() : 0.0);
  return sys;
}

double total_energy(const FeModel& model, const Vec& d) {
  double w = 0.0;
  const int nd = 2 * model.mesh().nodes_per_element();
  for (int e = 0; e < model.mesh().num_elements(); ++e) {
    const auto de = gather(model, e, d);
    w += element_evaluate(model, e, std::span<const double>(de.data(), nd), false).energy;
  }
  return w;
}

Vec body_force_load(const FeModel& model, const std::function<Vec2(const Vec2&)>& b) {
  const Mesh& mesh = model.mesh();
  Vec f = Vec::Zero(mesh.num_dofs());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto nodes = mesh.element(e);
    for (const auto& qp : quadrature(mesh.kind(), QuadratureRule::Accurate)) {
      const QpGeometry g = element_point(mesh, e, qp.xi);
      const Vec2 load = b(g.X) * (g.dV * qp.weight * model.thickness());
      for (std::size_t a = 0; a < nodes.size(); ++a) {
        f[2 * nodes[a]] += g.N[a] * load.x();
        f[2 * nodes[a] + 1] += g.N[a] * load.y();
      }
    }
  }
  return f;
}

Vec edge_line_load(const Mesh& mesh, int axis, double coordinate, const Vec2& q) {
  const auto& bb = mesh.bbox();
  const double tol = 1e-9 * (bb.hi - bb.lo).maxCoeff();
  std::vector<int> edge;
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (std::abs(mesh.node(n)[axis] - coordinate) <= tol) edge.push_back(n);
  require(edge.size() >= 2, ErrorKind::InvalidArgument, "line load edge has fewer than two nodes");
  const int along = 1 - axis;
  std::sort(edge.begin(), edge.end(), [&](int a, int b) { return mesh.node(a)[along] < mesh.node(b)[along]; });
  Vec f = Vec::Zero(mesh.num_dofs());
  for (std::size_t k = 0; k + 1 < edge.size(); ++k) {
    const double len = mesh.node(edge[k + 1])[along] - mesh.node(edge[k])[along];
    for (int n : {edge[k], edge[k + 1]}) {
      f[2 * n] += 0.5 * len * q.x();
      f[2 * n + 1] += 0.5 * len * q.y();
    }
  }
  return f;
}

}  // namespace fehmm
