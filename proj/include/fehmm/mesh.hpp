#pragma once

#include "fehmm/common.hpp"
#include "fehmm/shape.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace fehmm {

/// Grid description kept by generated meshes; enables uniform refinement and
/// O(1) point location. Tri3 grids split each cell along the lower-left to
/// upper-right diagonal into (n00,n10,n11) and (n00,n11,n01).
struct StructuredLayout {
  int nx = 0;
  int ny = 0;
  Vec2 origin = Vec2::Zero();
  Vec2 size = Vec2::Zero();
};

struct BoundingBox {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Zero();
};

/// 2D mesh of linear triangles or bilinear quads with one phase id (1 or 2)
/// per element. Immutable after construction.
class Mesh {
 public:
  Mesh() = default;
  Mesh(ElementKind kind, std::vector<Vec2> nodes, std::vector<int> connectivity,
       std::vector<int> phase, std::optional<StructuredLayout> layout = std::nullopt);

  ElementKind kind() const { return kind_; }
  int nodes_per_element() const { return fehmm::nodes_per_element(kind_); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_elements() const { return static_cast<int>(phase_.size()); }
  int num_dofs() const { return 2 * num_nodes(); }

  const std::vector<Vec2>& nodes() const { return nodes_; }
  const Vec2& node(int i) const { return nodes_[i]; }
  std::span<const int> element(int e) const {
    return {connectivity_.data() + static_cast<std::size_t>(e) * nodes_per_element(),
            static_cast<std::size_t>(nodes_per_element())};
  }
  int phase(int e) const { return phase_[e]; }
  const std::vector<int>& phases() const { return phase_; }
  const BoundingBox& bbox() const { return bbox_; }
  const std::optional<StructuredLayout>& layout() const { return layout_; }
  bool structured() const { return layout_.has_value(); }

  /// Physical position of reference point xi in element e.
  Vec2 map_point(int e, const Vec2& xi) const;

 private:
  ElementKind kind_ = ElementKind::Quad4;
  std::vector<Vec2> nodes_;
  std::vector<int> connectivity_;
  std::vector<int> phase_;
  BoundingBox bbox_;
  std::optional<StructuredLayout> layout_;
};

/// Pixel phase map; row-major with row 0 at the bottom (y = 0).
struct PhaseGrid {
  int nx = 0;
  int ny = 0;
  std::vector<int> cells;

  int at(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i]; }
  void validate() const;
  double volume_fraction(int phase) const;
};

struct PeriodicPairing {
  /// (p, q) with q on the right/top edge, p on the left/bottom edge.
  std::vector<std::pair<int, int>> pairs;
  /// Corners ordered (0,0), (d,0), (d,d), (0,d).
  std::array<int, 4> corners{};
  double tolerance = 0.0;
};

Mesh generate_structured(double width, double height, int nx, int ny, ElementKind kind,
                         const Vec2& origin = Vec2::Zero());

Mesh mesh_from_phase_grid(const PhaseGrid& grid, double delta, ElementKind kind = ElementKind::Quad4);

/// Every element split into four children with the parent's phase.
Mesh refine_uniform(const Mesh& mesh);

PeriodicPairing pair_periodic_nodes(const Mesh& mesh, double delta);

/// Nodes on the boundary of the bounding box (within 1e-9 of its extent).
std::vector<int> boundary_nodes(const Mesh& mesh);

struct PointLocation {
  int element = -1;
  Vec2 xi = Vec2::Zero();
};

/// Locate a point in a structured mesh; points on shared edges resolve to
/// the lower-index cell. Returns nullopt outside the domain.
std::optional<PointLocation> locate(const Mesh& mesh, const Vec2& x);

/// Minimum Jacobian determinant over all stiffness quadrature points.
double min_jacobian(const Mesh& mesh);

/// Phase-grid files: "nx ny" followed by ny rows of nx labels (top row first),
/// or an ASCII PGM (P2) thresholded at 128 (<128 is phase 1).
PhaseGrid read_phase_grid(const std::filesystem::path& path);
void write_phase_grid(const PhaseGrid& grid, const std::filesystem::path& path);

}  // namespace fehmm
