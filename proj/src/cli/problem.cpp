#include "fehmm/cli.hpp"

#include <cmath>
#include <numbers>

namespace fehmm::cli {

namespace {

int cells_per_rve(const RunConfig& rc) { return std::max(1, static_cast<int>(std::lround(rc.delta / rc.epsilon))); }

MaterialMap material_map(const RunConfig& rc, double cell_size) {
  if (rc.micro_source == "smooth-laminate") return MaterialMap(rc.phase1, rc.phase2, SmoothBlend{0, cell_size});
  if (rc.micro_source == "homogeneous") return MaterialMap::uniform(rc.phase1);
  return MaterialMap(rc.phase1, rc.phase2);
}

}  // namespace

PhaseGrid cell_grid(const RunConfig& rc, int resolution) {
  if (rc.micro_source != "file") return generate_microstructure(rc.micro_source, resolution, rc.seed);
  PhaseGrid g = read_phase_grid(rc.micro_file);
  require(g.nx == g.ny, ErrorKind::InvalidArgument, "phase file must describe a square cell");
  if (resolution == g.nx) return g;
  require(resolution % g.nx == 0, ErrorKind::InvalidArgument,
          "resolution " + std::to_string(resolution) + " is not a multiple of the phase file size " +
              std::to_string(g.nx));
  // pixel upsampling keeps the geometry fixed
  const int f = resolution / g.nx;
  PhaseGrid out{resolution, resolution, std::vector<int>(static_cast<std::size_t>(resolution) * resolution)};
  for (int j = 0; j < resolution; ++j)
    for (int i = 0; i < resolution; ++i) out.cells[static_cast<std::size_t>(j) * resolution + i] = g.at(i / f, j / f);
  return out;
}

std::shared_ptr<const MicroModel> build_micro(const RunConfig& rc, int resolution) {
  const int n = resolution > 0 ? resolution : rc.micro_resolution;
  const int k = cells_per_rve(rc);
  const PhaseGrid grid = tile(cell_grid(rc, n), k);
  const double cell = rc.delta / k;
  return std::make_shared<const MicroModel>(mesh_from_phase_grid(grid, rc.delta, rc.micro_element),
                                            material_map(rc, cell), rc.law, rc.kinematics, rc.coupling);
}

MacroProblem build_problem(const RunConfig& rc, std::shared_ptr<const MicroModel> micro, int refine) {
  require(refine >= 1, ErrorKind::InvalidArgument, "refinement factor must be >= 1");
  if (rc.problem_type == "cantilever") {
    CantileverSpec spec = rc.beam;
    spec.nx *= refine;
    spec.ny *= refine;
    return make_cantilever(spec, std::move(micro));
  }
  // Square plate clamped on all sides under a smooth transverse body force.
  const double L = rc.beam.length;
  const int n = rc.beam.nx * refine;
  MacroProblem p;
  p.mesh = generate_structured(L, L, n, n, rc.beam.kind);
  p.thickness = rc.beam.thickness;
  p.micro = std::move(micro);
  for (int a : boundary_nodes(p.mesh)) {
    p.dirichlet.push_back({2 * a, 0.0});
    p.dirichlet.push_back({2 * a + 1, 0.0});
  }
  const double q = rc.beam.load;
  const FeModel fe(p.mesh, MaterialMap::uniform(rc.phase1), MaterialLaw::LinearElastic, Kinematics::Linear,
                   p.thickness);
  p.f_ext = body_force_load(fe, [q, L](const Vec2& X) {
    const double s = std::sin(std::numbers::pi * X.x() / L) * std::sin(std::numbers::pi * X.y() / L);
    return Vec2(0.0, -q * s);
  });
  return p;
}

SingleScaleProblem build_oracle_problem(const RunConfig& rc) {
  require(rc.problem_type == "cantilever", ErrorKind::InvalidArgument, "the resolved oracle exists for the cantilever only");
  const CantileverSpec& b = rc.beam;
  const int cy = rc.oracle_cells;
  const double eps = b.height / cy;
  const double along = b.length / eps;
  require(std::abs(along - std::round(along)) <= 1e-9 * along, ErrorKind::InvalidArgument,
          "beam length must hold an integer number of cells");
  const int cx = static_cast<int>(std::lround(along));
  const int res = rc.micro_resolution;
  const PhaseGrid cell = cell_grid(rc, res);

  const Mesh plain = generate_structured(b.length, b.height, cx * res, cy * res, rc.micro_element);
  std::vector<int> conn;
  std::vector<int> phase(static_cast<std::size_t>(plain.num_elements()));
  const double pixel = eps / res;
  for (int e = 0; e < plain.num_elements(); ++e) {
    Vec2 c = Vec2::Zero();
    for (int a : plain.element(e)) {
      conn.push_back(a);
      c += plain.node(a);
    }
    c /= static_cast<double>(plain.nodes_per_element());
    const int i = static_cast<int>(std::floor(c.x() / pixel)) % res;
    const int j = static_cast<int>(std::floor(c.y() / pixel)) % res;
    phase[static_cast<std::size_t>(e)] = cell.at(i, j);
  }
  Mesh mesh(plain.kind(), plain.nodes(), std::move(conn), std::move(phase), plain.layout());

  SingleScaleProblem p;
  p.model = std::make_shared<const FeModel>(std::move(mesh), material_map(rc, eps), rc.law, rc.kinematics, b.thickness);
  const Mesh& m = p.model->mesh();
  const double tol = 1e-9 * b.length;
  for (int a = 0; a < m.num_nodes(); ++a) {
    const Vec2& x = m.node(a);
    if (std::abs(x.x()) <= tol) {
      p.dirichlet.push_back({2 * a, 0.0});
      p.dirichlet.push_back({2 * a + 1, 0.0});
    } else if (b.loading == LoadingKind::TipDisplacement && std::abs(x.x() - b.length) <= tol) {
      p.dirichlet.push_back({2 * a + 1, -b.load});
    }
  }
  if (b.loading == LoadingKind::LineLoad) p.f_ext = edge_line_load(m, 0, b.length, Vec2(0.0, -b.load));
  return p;
}

}  // namespace fehmm::cli
