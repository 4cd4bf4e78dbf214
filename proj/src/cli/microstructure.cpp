#include "fehmm/cli.hpp"

#include <cmath>
#include <random>

namespace fehmm::cli {

namespace {

// Uniform double in [0, 1) from the raw engine bits, so sequences do not
// depend on the standard library's distribution implementation.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

PhaseGrid blob(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int count = std::max(3, n / 8);
  struct Disc {
    double x, y, r;
  };
  std::vector<Disc> discs;
  for (int k = 0; k < count; ++k) {
    const double x = unit(rng) * n;
    const double y = unit(rng) * n;
    const double r = (0.1 + 0.1 * unit(rng)) * n;
    discs.push_back({x, y, r});
  }
  PhaseGrid g{n, n, std::vector<int>(static_cast<std::size_t>(n) * n, 1)};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double px = i + 0.5;
      const double py = j + 0.5;
      for (const Disc& d : discs) {
        double dx = std::abs(px - d.x);
        double dy = std::abs(py - d.y);
        dx = std::min(dx, n - dx);
        dy = std::min(dy, n - dy);
        if (dx * dx + dy * dy <= d.r * d.r) {
          g.cells[static_cast<std::size_t>(j) * n + i] = 2;
          break;
        }
      }
    }
  return g;
}

}  // namespace

PhaseGrid generate_microstructure(const std::string& name, int n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::InvalidArgument, "resolution must be >= 1");
  PhaseGrid g{n, n, std::vector<int>(static_cast<std::size_t>(n) * n, 1)};
  auto set = [&](auto phase_of) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) g.cells[static_cast<std::size_t>(j) * n + i] = phase_of(i, j);
  };
  if (name == "checkerboard") {
    require(n % 2 == 0, ErrorKind::InvalidArgument, "checkerboard needs an even resolution");
    set([n](int i, int j) { return ((2 * i) / n + (2 * j) / n) % 2 == 0 ? 1 : 2; });
  } else if (name == "laminate-x") {
    // one-pixel layers: the phase alternates from column to column
    require(n % 2 == 0, ErrorKind::InvalidArgument, "laminate needs an even resolution");
    set([](int i, int) { return 1 + i % 2; });
  } else if (name == "laminate-y") {
    require(n % 2 == 0, ErrorKind::InvalidArgument, "laminate needs an even resolution");
    set([](int, int j) { return 1 + j % 2; });
  } else if (name == "blob") {
    g = blob(n, seed);
  } else if (name == "homogeneous" || name == "smooth-laminate") {
    // uniform grid; smooth-laminate coefficients come from the material map
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown microstructure '" + name + "'");
  }
  return g;
}

PhaseGrid tile(const PhaseGrid& grid, int k) {
  require(k >= 1, ErrorKind::InvalidArgument, "tile count must be >= 1");
  PhaseGrid out{grid.nx * k, grid.ny * k, {}};
  out.cells.resize(static_cast<std::size_t>(out.nx) * out.ny);
  for (int j = 0; j < out.ny; ++j)
    for (int i = 0; i < out.nx; ++i)
      out.cells[static_cast<std::size_t>(j) * out.nx + i] = grid.at(i % grid.nx, j % grid.ny);
  return out;
}

}  // namespace fehmm::cli
