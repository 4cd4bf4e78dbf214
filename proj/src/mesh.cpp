#include "fehmm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace fehmm {

namespace {

double jacobian_det(const Mesh& mesh, int e, const Vec2& xi) {
  const ShapeValues s = shape_eval(mesh.kind(), xi);
  const auto nodes = mesh.element(e);
  Mat2 J = Mat2::Zero();
  for (int a = 0; a < s.count; ++a) J += mesh.node(nodes[a]) * s.dN[a].transpose();
  return J.determinant();
}

std::vector<int> structured_connectivity(int nx, int ny, ElementKind kind) {
  std::vector<int> conn;
  const int npx = nx + 1;
  auto vid = [npx](int i, int j) { return j * npx + i; };
  conn.reserve(static_cast<std::size_t>(nx) * ny * (kind == ElementKind::Quad4 ? 4 : 6));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int n00 = vid(i, j), n10 = vid(i + 1, j), n11 = vid(i + 1, j + 1), n01 = vid(i, j + 1);
      if (kind == ElementKind::Quad4) {
        conn.insert(conn.end(), {n00, n10, n11, n01});
      } else {
        conn.insert(conn.end(), {n00, n10, n11});
        conn.insert(conn.end(), {n00, n11, n01});
      }
    }
  }
  return conn;
}

std::vector<Vec2> structured_nodes(const StructuredLayout& g) {
  std::vector<Vec2> nodes;
  nodes.reserve(static_cast<std::size_t>(g.nx + 1) * (g.ny + 1));
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i)
      nodes.emplace_back(g.origin.x() + g.size.x() * i / g.nx, g.origin.y() + g.size.y() * j / g.ny);
  return nodes;
}

}  // namespace

Mesh::Mesh(ElementKind kind, std::vector<Vec2> nodes, std::vector<int> connectivity,
           std::vector<int> phase, std::optional<StructuredLayout> layout)
    : kind_(kind),
      nodes_(std::move(nodes)),
      connectivity_(std::move(connectivity)),
      phase_(std::move(phase)),
      layout_(std::move(layout)) {
  const int nen = fehmm::nodes_per_element(kind_);
  require(connectivity_.size() == phase_.size() * static_cast<std::size_t>(nen), ErrorKind::InvalidArgument,
          "connectivity size does not match element count");
  for (int idx : connectivity_)
    require(idx >= 0 && idx < num_nodes(), ErrorKind::InvalidArgument,
            "connectivity index " + std::to_string(idx) + " out of range");
  for (int p : phase_) require(p == 1 || p == 2, ErrorKind::InvalidArgument, "phase must be 1 or 2");

  if (!nodes_.empty()) {
    bbox_.lo = bbox_.hi = nodes_.front();
    for (const auto& x : nodes_) {
      bbox_.lo = bbox_.lo.cwiseMin(x);
      bbox_.hi = bbox_.hi.cwiseMax(x);
    }
  }
  for (int e = 0; e < num_elements(); ++e)
    for (const auto& qp : quadrature(kind_))
      require(jacobian_det(*this, e, qp.xi) > 0.0, ErrorKind::DegenerateElement,
              "element " + std::to_string(e) + " has non-positive Jacobian");
}

Vec2 Mesh::map_point(int e, const Vec2& xi) const {
  const ShapeValues s = shape_eval(kind_, xi);
  const auto nodes = element(e);
  Vec2 x = Vec2::Zero();
  for (int a = 0; a < s.count; ++a) x += s.N[a] * nodes_[nodes[a]];
  return x;
}

void PhaseGrid::validate() const {
  require(nx >= 1 && ny >= 1, ErrorKind::InvalidArgument, "phase grid must be non-empty");
  require(cells.size() == static_cast<std::size_t>(nx) * ny, ErrorKind::InvalidArgument,
          "phase grid cell count does not match nx*ny");
  for (int c : cells) require(c == 1 || c == 2, ErrorKind::InvalidArgument, "phase labels must be 1 or 2");
}

double PhaseGrid::volume_fraction(int phase) const {
  if (cells.empty()) return 0.0;
  return static_cast<double>(std::count(cells.begin(), cells.end(), phase)) / static_cast<double>(cells.size());
}

Mesh generate_structured(double width, double height, int nx, int ny, ElementKind kind, const Vec2& origin) {
  require(width > 0.0 && height > 0.0, ErrorKind::InvalidArgument, "mesh dimensions must be positive");
  require(nx >= 1 && ny >= 1, ErrorKind::InvalidArgument, "element counts must be >= 1");
  StructuredLayout g{nx, ny, origin, Vec2(width, height)};
  const int nel = nx * ny * (kind == ElementKind::Quad4 ? 1 : 2);
  return Mesh(kind, structured_nodes(g), structured_connectivity(nx, ny, kind), std::vector<int>(nel, 1), g);
}

Mesh mesh_from_phase_grid(const PhaseGrid& grid, double delta, ElementKind kind) {
  grid.validate();
  require(delta > 0.0, ErrorKind::InvalidArgument, "delta must be positive");
  StructuredLayout g{grid.nx, grid.ny, Vec2::Zero(), Vec2(delta, delta)};
  std::vector<int> phase;
  const int per_cell = kind == ElementKind::Quad4 ? 1 : 2;
  phase.reserve(grid.cells.size() * per_cell);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i)
      for (int t = 0; t < per_cell; ++t) phase.push_back(grid.at(i, j));
  return Mesh(kind, structured_nodes(g), structured_connectivity(grid.nx, grid.ny, kind), std::move(phase), g);
}

std::optional<PointLocation> locate(const Mesh& mesh, const Vec2& x) {
  require(mesh.structured(), ErrorKind::Unsupported, "point location requires a structured mesh");
  const auto& g = *mesh.layout();
  const Vec2 rel = (x - g.origin).cwiseQuotient(g.size);
  const double tol = 1e-12;
  if (rel.x() < -tol || rel.y() < -tol || rel.x() > 1 + tol || rel.y() > 1 + tol) return std::nullopt;
  const double sx = std::clamp(rel.x(), 0.0, 1.0) * g.nx;
  const double sy = std::clamp(rel.y(), 0.0, 1.0) * g.ny;
  const int i = std::min(static_cast<int>(std::floor(sx)), g.nx - 1);
  const int j = std::min(static_cast<int>(std::floor(sy)), g.ny - 1);
  const double s = sx - i;  // local cell coordinates in [0,1]
  const double t = sy - j;
  const int cell = j * g.nx + i;
  if (mesh.kind() == ElementKind::Quad4) return PointLocation{cell, Vec2(2 * s - 1, 2 * t - 1)};
  if (t <= s) return PointLocation{2 * cell, Vec2(s - t, t)};
  return PointLocation{2 * cell + 1, Vec2(s, t - s)};
}

Mesh refine_uniform(const Mesh& mesh) {
  require(mesh.structured(), ErrorKind::Unsupported, "uniform refinement requires a structured mesh");
  const auto& g = *mesh.layout();
  StructuredLayout child{2 * g.nx, 2 * g.ny, g.origin, g.size};
  std::vector<Vec2> nodes = structured_nodes(child);
  std::vector<int> conn = structured_connectivity(child.nx, child.ny, mesh.kind());
  const int nen = mesh.nodes_per_element();
  const int nel = static_cast<int>(conn.size()) / nen;
  std::vector<int> phase(nel);
  for (int e = 0; e < nel; ++e) {
    Vec2 c = Vec2::Zero();
    for (int a = 0; a < nen; ++a) c += nodes[conn[e * nen + a]];
    c /= nen;
    const auto loc = locate(mesh, c);
    require(loc.has_value(), ErrorKind::Internal, "child centroid outside parent mesh");
    phase[e] = mesh.phase(loc->element);
  }
  return Mesh(mesh.kind(), std::move(nodes), std::move(conn), std::move(phase), child);
}

std::vector<int> boundary_nodes(const Mesh& mesh) {
  const auto& bb = mesh.bbox();
  const double tol = 1e-9 * std::max((bb.hi - bb.lo).maxCoeff(), 1e-300);
  std::vector<int> out;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const Vec2& x = mesh.node(n);
    if (std::abs(x.x() - bb.lo.x()) <= tol || std::abs(x.x() - bb.hi.x()) <= tol ||
        std::abs(x.y() - bb.lo.y()) <= tol || std::abs(x.y() - bb.hi.y()) <= tol)
      out.push_back(n);
  }
  return out;
}

PeriodicPairing pair_periodic_nodes(const Mesh& mesh, double delta) {
  require(delta > 0.0, ErrorKind::InvalidArgument, "delta must be positive");
  PeriodicPairing out;
  out.tolerance = 1e-9 * delta;
  const double tol = out.tolerance;
  auto near = [tol](double a, double b) { return std::abs(a - b) <= tol; };

  std::vector<int> left, right, bottom, top;
  std::array<int, 4> corners = {-1, -1, -1, -1};
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const Vec2& x = mesh.node(n);
    const bool l = near(x.x(), 0.0), r = near(x.x(), delta), b = near(x.y(), 0.0), t = near(x.y(), delta);
    if ((l || r) && (b || t)) {
      corners[(l && b) ? 0 : (r && b) ? 1 : (r && t) ? 2 : 3] = n;
      continue;
    }
    if (l) left.push_back(n);
    if (r) right.push_back(n);
    if (b) bottom.push_back(n);
    if (t) top.push_back(n);
  }
  for (int c = 0; c < 4; ++c)
    require(corners[c] >= 0, ErrorKind::PairingFailure, "missing corner node " + std::to_string(c));
  out.corners = corners;

  auto match = [&](const std::vector<int>& from, std::vector<int> to, int axis) {
    require(from.size() == to.size(), ErrorKind::PairingFailure,
            "opposite edges carry different node counts (" + std::to_string(from.size()) + " vs " +
                std::to_string(to.size()) + ")");
    const int other = 1 - axis;
    std::sort(to.begin(), to.end(), [&](int a, int b) { return mesh.node(a)[other] < mesh.node(b)[other]; });
    for (int p : from) {
      const double key = mesh.node(p)[other];
      auto it = std::lower_bound(to.begin(), to.end(), key - tol,
                                 [&](int n, double v) { return mesh.node(n)[other] < v; });
      if (it == to.end() || !near(mesh.node(*it)[other], key)) {
        std::ostringstream os;
        os << "no periodic partner for node " << p << " at (" << mesh.node(p).x() << ", " << mesh.node(p).y()
           << ")";
        throw Error(ErrorKind::PairingFailure, os.str());
      }
      out.pairs.emplace_back(p, *it);
    }
  };
  match(left, right, 0);
  match(bottom, top, 1);
  return out;
}

double min_jacobian(const Mesh& mesh) {
  double m = std::numeric_limits<double>::infinity();
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (const auto& qp : quadrature(mesh.kind())) m = std::min(m, jacobian_det(mesh, e, qp.xi));
  return m;
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw Error(ErrorKind::Io, "unexpected end of phase-grid file");
}

int to_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, "malformed integer '" + s + "' in phase-grid file");
  }
}

}  // namespace

PhaseGrid read_phase_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open phase-grid file " + path.string());
  std::string first = next_token(in);
  const bool pgm = first == "P2";
  PhaseGrid g;
  g.nx = to_int(pgm ? next_token(in) : first);
  g.ny = to_int(next_token(in));
  require(g.nx >= 1 && g.ny >= 1, ErrorKind::Io, "phase-grid dimensions must be positive");
  if (pgm) to_int(next_token(in));  // maxval
  g.cells.assign(static_cast<std::size_t>(g.nx) * g.ny, 0);
  // Rows in the file run top to bottom.
  for (int row = 0; row < g.ny; ++row) {
    const int j = g.ny - 1 - row;
    for (int i = 0; i < g.nx; ++i) {
      const int v = to_int(next_token(in));
      int phase = v;
      if (pgm) phase = v < 128 ? 1 : 2;
      require(phase == 1 || phase == 2, ErrorKind::Io, "phase labels must be 1 or 2");
      g.cells[static_cast<std::size_t>(j) * g.nx + i] = phase;
    }
  }
  return g;
}

void write_phase_grid(const PhaseGrid& grid, const std::filesystem::path& path) {
  grid.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write phase-grid file " + path.string());
  out << grid.nx << ' ' << grid.ny << '\n';
  for (int row = 0; row < grid.ny; ++row) {
    const int j = grid.ny - 1 - row;
    for (int i = 0; i < grid.nx; ++i) out << (i ? " " : "") << grid.at(i, j);
    out << '\n';
  }
}

}  // namespace fehmm
