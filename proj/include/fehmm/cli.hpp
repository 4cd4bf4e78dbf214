#pragma once

#include "fehmm/two_scale.hpp"
#include "fehmm/verify.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fehmm::cli {

/// Flat dot-namespaced key/value configuration ("solver.macro_tol = 1e-8").
/// Lines starting with '#' are comments. Unknown keys are rejected.
class Config {
 public:
  static Config defaults();
  static Config load(const std::filesystem::path& path);

  /// Applies "key=value".
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  void merge_file(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  int integer(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  /// Canonical "key=value" lines in key order (used for content hashes).
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Known generator names: checkerboard, laminate-x, laminate-y, blob,
/// homogeneous, smooth-laminate (uniform grid, smooth coefficients).
PhaseGrid generate_microstructure(const std::string& name, int resolution, std::uint64_t seed = 7);

/// Repeats a grid k x k times.
PhaseGrid tile(const PhaseGrid& grid, int k);

/// Everything a run needs, validated.
struct RunConfig {
  std::string problem_type = "cantilever";  // or "square"
  CantileverSpec beam;
  std::string micro_source = "checkerboard";
  std::string micro_file;
  int micro_resolution = 16;
  double delta = 1.0;
  double epsilon = 1.0;
  CouplingKind coupling = CouplingKind::Periodic;
  ElementKind micro_element = ElementKind::Quad4;
  MaterialLaw law = MaterialLaw::NeoHookean;
  Kinematics kinematics = Kinematics::Nonlinear;
  LameParams phase1;
  LameParams phase2;
  SolverConfig solver;
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "out";
  bool snapshot = false;
  Vec2 snapshot_at = Vec2::Zero();
  std::vector<int> levels;
  int reference = 0;
  std::vector<int> speedup_steps;
  int oracle_cells = 8;
  std::string fingerprint;  // canonical config text
};

RunConfig parse_run_config(const Config& cfg);

/// Phase grid of one periodic cell (reads the file for source "file").
PhaseGrid cell_grid(const RunConfig& rc, int resolution);

/// RVE model; `resolution` overrides micro.resolution when > 0.
std::shared_ptr<const MicroModel> build_micro(const RunConfig& rc, int resolution = 0);

/// Macro problem; `refine` multiplies the element counts.
MacroProblem build_problem(const RunConfig& rc, std::shared_ptr<const MicroModel> micro, int refine = 1);

/// Fully resolved single-scale counterpart of the cantilever with
/// `rc.oracle_cells` periodic cells across the height.
SingleScaleProblem build_oracle_problem(const RunConfig& rc);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace fehmm::cli
