#pragma once

#include "fehmm/common.hpp"

#include <array>
#include <cmath>
#include <span>

namespace fehmm {

enum class ElementKind { Tri3, Quad4 };

constexpr int nodes_per_element(ElementKind kind) { return kind == ElementKind::Tri3 ? 3 : 4; }

/// Reference-element measure: 1/2 for the unit triangle, 4 for [-1,1]^2.
constexpr double reference_measure(ElementKind kind) { return kind == ElementKind::Tri3 ? 0.5 : 4.0; }

struct QuadraturePoint {
  Vec2 xi;
  double weight;
};

/// Stiffness rules are the full-integration rules for linear elements
/// (1 point on Tri3, 2x2 Gauss on Quad4). Accurate rules are used for
/// error norms and load integrals.
enum class QuadratureRule { Stiffness, Accurate };

/// Shape function values and reference gradients at one point.
struct ShapeValues {
  int count = 0;
  std::array<double, 4> N{};
  std::array<Vec2, 4> dN{};  // d/dxi
};

inline ShapeValues shape_eval(ElementKind kind, const Vec2& xi) {
  ShapeValues s;
  if (kind == ElementKind::Tri3) {
    s.count = 3;
    s.N = {1.0 - xi.x() - xi.y(), xi.x(), xi.y(), 0.0};
    s.dN[0] = Vec2(-1.0, -1.0);
    s.dN[1] = Vec2(1.0, 0.0);
    s.dN[2] = Vec2(0.0, 1.0);
    return s;
  }
  s.count = 4;
  constexpr std::array<double, 4> xs = {-1.0, 1.0, 1.0, -1.0};
  constexpr std::array<double, 4> ys = {-1.0, -1.0, 1.0, 1.0};
  for (int a = 0; a < 4; ++a) {
    s.N[a] = 0.25 * (1.0 + xs[a] * xi.x()) * (1.0 + ys[a] * xi.y());
    s.dN[a] = Vec2(0.25 * xs[a] * (1.0 + ys[a] * xi.y()), 0.25 * ys[a] * (1.0 + xs[a] * xi.x()));
  }
  return s;
}

/// Reference coordinates of the element nodes.
inline std::span<const Vec2> reference_nodes(ElementKind kind) {
  static const std::array<Vec2, 3> tri = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  static const std::array<Vec2, 4> quad = {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
  if (kind == ElementKind::Tri3) return tri;
  return quad;
}

inline std::span<const QuadraturePoint> quadrature(ElementKind kind,
                                                   QuadratureRule rule = QuadratureRule::Stiffness) {
  static const std::array<QuadraturePoint, 1> tri1 = {QuadraturePoint{Vec2(1.0 / 3.0, 1.0 / 3.0), 0.5}};
  static const std::array<QuadraturePoint, 3> tri3 = {
      QuadraturePoint{Vec2(1.0 / 6.0, 1.0 / 6.0), 1.0 / 6.0},
      QuadraturePoint{Vec2(2.0 / 3.0, 1.0 / 6.0), 1.0 / 6.0},
      QuadraturePoint{Vec2(1.0 / 6.0, 2.0 / 3.0), 1.0 / 6.0}};
  static const double g = 1.0 / std::sqrt(3.0);
  static const std::array<QuadraturePoint, 4> quad2 = {
      QuadraturePoint{Vec2(-g, -g), 1.0}, QuadraturePoint{Vec2(g, -g), 1.0},
      QuadraturePoint{Vec2(g, g), 1.0}, QuadraturePoint{Vec2(-g, g), 1.0}};
  static const std::array<QuadraturePoint, 9> quad3 = [] {
    const double a = std::sqrt(0.6);
    const std::array<double, 3> p = {-a, 0.0, a};
    const std::array<double, 3> w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    std::array<QuadraturePoint, 9> q{};
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) q[3 * j + i] = QuadraturePoint{Vec2(p[i], p[j]), w[i] * w[j]};
    return q;
  }();
  if (kind == ElementKind::Tri3) {
    if (rule == QuadratureRule::Stiffness) return tri1;
    return tri3;
  }
  if (rule == QuadratureRule::Stiffness) return quad2;
  return quad3;
}

}  // namespace fehmm
