#pragma once

#include "fehmm/common.hpp"
#include "fehmm/two_scale.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fehmm {

struct ErrorReport {
  double l2 = 0.0;
  double h1 = 0.0;      // full H1 norm
  double energy = 0.0;  // sqrt(e^T K e) with K the reference tangent (0 if none)
};

/// Nodal interpolation of a coarse field onto the nodes of a nested fine
/// mesh. Throws invalid-pairing when the meshes are not nested.
Vec prolongate(const Mesh& coarse, const Vec& d_coarse, const Mesh& fine);

/// Error of a coarse solution against a reference on a nested fine mesh.
/// Integrals are over the 2D domain (no thickness); `K_ref` may be empty.
ErrorReport error_norms(const Mesh& coarse, const Vec& d_coarse, const Mesh& fine, const Vec& d_fine,
                        const SpMat& K_ref = SpMat());

/// Norms of a nodal field on a mesh (accurate quadrature).
ErrorReport field_norms(const Mesh& mesh, const Vec& e, const SpMat& K = SpMat());

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int points = 0;
};

/// Least-squares fit of log(y) = slope log(x) + c over points with y > floor.
SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y, double floor = 0.0);

enum class StudyAxis { Micro, Macro };

struct StudyLevel {
  int n = 0;         // elements per side of the refined mesh
  double h = 0.0;    // micro element size
  double H = 0.0;    // macro element size
  ErrorReport error;
};

struct ConvergenceStudy {
  StudyAxis axis = StudyAxis::Micro;
  std::vector<StudyLevel> levels;
  int reference_n = 0;
  SlopeFit l2, h1, energy;
};

/// On-disk cache of study references: one file per content key in `dir`.
struct ReferenceCache {
  std::filesystem::path dir;
  std::string key;  // canonical description of everything except the mesh
};

struct ReferenceSolution {
  Vec d;
  SpMat K;  // macro tangent at d
  bool from_cache = false;
};

/// Solves `problem` or, on a cache hit, rebuilds the micro states at the
/// cached displacement to recover the tangent.
ReferenceSolution reference_solution(const MacroProblem& problem, const SolverConfig& solver,
                                     const std::optional<ReferenceCache>& cache);

/// Micro refinement at a fixed macro mesh: `micro_at(n)` builds the RVE with
/// n elements per side, `problem_for` attaches it to the macro problem.
struct MicroStudySpec {
  std::function<std::shared_ptr<const MicroModel>(int)> micro_at;
  std::function<MacroProblem(std::shared_ptr<const MicroModel>)> problem_for;
  std::vector<int> levels;
  int reference = 0;
  SolverConfig solver;
  std::optional<ReferenceCache> cache;
};

/// Macro refinement at a fixed RVE: `problem_at(n)` builds the macro problem
/// with n elements along the refined direction(s); meshes must be nested.
struct MacroStudySpec {
  std::function<MacroProblem(int)> problem_at;
  std::vector<int> levels;
  int reference = 0;
  SolverConfig solver;
  std::optional<ReferenceCache> cache;
};

ConvergenceStudy micro_convergence_study(const MicroStudySpec& spec);
ConvergenceStudy macro_convergence_study(const MacroStudySpec& spec);

/// Fits slopes of a finished study; levels whose error is within 10x of
/// the per-norm `floor` are excluded.
void fit_study(ConvergenceStudy& study, const ErrorReport& floor);

enum class ProbeBoundary { Constrained, FreeBoundary };

/// max over the in-plane unit probes dF of
/// |<P>:dF - <P:dF^h>| / (|<P>:dF| + ||<P>|| ||dF||).
double hill_mandel_residual(const MicroModel& model, RveState& rve, ProbeBoundary boundary = ProbeBoundary::Constrained);

/// max over periodic pairs of |r(p) + r(q)| / ||G^T Lambda|| with r the
/// nodal reactions -f_int at a converged state.
double antiperiodic_defect(const MicroModel& model, RveState& rve);

/// Standard one-scale problem on a fully resolved mesh.
struct SingleScaleProblem {
  std::shared_ptr<const FeModel> model;
  std::vector<DirichletBc> dirichlet;
  Vec f_ext;
};

struct OracleResult {
  Vec d;
  SpMat K;  // tangent at the solution
  std::vector<double> u_max;  // per load step
  int iterations = 0;
};

OracleResult single_scale_oracle(const SingleScaleProblem& problem, int n_load_steps = 1, double tol = 1e-10,
                                 int max_iter = 50);

struct SpeedupReport {
  std::vector<double> step_ratio;  // nested step time / alternating step time
  std::vector<int> iteration_delta;  // alternating - nested macro iterations
  std::vector<double> u_max_rel_diff;
  double factor = 0.0;  // total nested time / total alternating time
  bool u_max_agrees = false;
};

SpeedupReport speedup_report(const SolveTrace& nested, const SolveTrace& alternating, double tol = 1e-6);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a(std::string_view data);

/// Reference cache: header "fehmm-reference 1 <key-hash> <ndof>" followed by
/// one "ux uy" line per node.
void save_reference(const std::filesystem::path& path, std::uint64_t key, const Vec& d);
std::optional<Vec> load_reference(const std::filesystem::path& path, std::uint64_t key);

}  // namespace fehmm
