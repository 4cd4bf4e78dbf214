#pragma once

#include "fehmm/common.hpp"
#include "fehmm/micro.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fehmm {

struct DirichletBc {
  int dof = 0;
  double value = 0.0;  // at full load
};

/// Macro boundary-value problem with an RVE attached to every quadrature point.
struct MacroProblem {
  Mesh mesh;
  double thickness = 1.0;
  std::vector<DirichletBc> dirichlet;
  Vec f_ext;  // at full load; empty means no external forces
  std::shared_ptr<const MicroModel> micro;
};

enum class LoadingKind { LineLoad, TipDisplacement };

struct CantileverSpec {
  double length = 5000.0;
  double height = 1000.0;
  double thickness = 100.0;
  int nx = 5;
  int ny = 1;
  ElementKind kind = ElementKind::Quad4;
  LoadingKind loading = LoadingKind::LineLoad;
  double load = 0.0;  // line load f (N/mm, acting in -y) or tip deflection (mm, in -y)
};

/// Clamped at x = 0, loaded on the edge x = length.
MacroProblem make_cantilever(const CantileverSpec& spec, std::shared_ptr<const MicroModel> micro);

enum class Scheme { Nested, Alternating };
std::string to_string(Scheme s);

struct SolverConfig {
  Scheme scheme = Scheme::Nested;
  int n_load_steps = 4;
  double macro_tol = 1e-8;
  double micro_tol = 1e-10;
  int max_macro_iter = 30;
  int max_micro_iter = 50;
  int max_halvings = 3;
  int threads = 1;

  void validate() const;
};

/// One residual evaluation of the macro loop.
struct IterationRecord {
  int load_step = 0;
  int macro_iter = 0;     // macro solves performed so far in this step
  double residual = 0.0;  // relative to the first residual of the step
  int micro_iters = 0;    // micro Newton iterations since the previous record
  double seconds = 0.0;   // wall clock since the previous record
};

struct StepRecord {
  int load_step = 0;
  double load_factor = 0.0;
  int macro_iterations = 0;
  double first_iter_seconds = 0.0;
  double seconds = 0.0;
  double u_max = 0.0;
  int halvings = 0;
  double max_asymmetry = 0.0;  // largest ||S^H - S^H^T|| / ||S^H|| seen
};

struct SolveTrace {
  Scheme scheme = Scheme::Nested;
  std::vector<IterationRecord> iterations;
  std::vector<StepRecord> steps;
  double total_seconds = 0.0;
};

/// Macro quadrature point with its shape data and weight (incl. thickness).
struct MacroQp {
  int element = 0;
  MacroShape shape;
  double weight = 0.0;
  Vec2 X = Vec2::Zero();
};

std::vector<MacroQp> macro_quadrature(const Mesh& mesh, double thickness);

/// u0 and grad u of the macro field at a quadrature point.
MacroCoupling macro_coupling_at(const MacroQp& qp, const Mesh& mesh, const Vec& d);

struct QpContribution {
  Vec f;  // element internal force contribution
  Mat k;  // element stiffness contribution (empty unless requested)
  double asymmetry = 0.0;
};

/// Homogenized stress and stiffness transfer for one macro quadrature point
/// at the RVE's current micro state.
QpContribution qp_contribution(const MicroModel& micro, RveState& rve, const MacroQp& qp, bool with_tangent);

struct TwoScaleState {
  Vec d;
  std::vector<MacroQp> qps;
  std::vector<RveState> rves;
  double load_factor = 0.0;
  int step = 0;
};

TwoScaleState make_state(const MacroProblem& problem);

struct MacroSystem {
  SpMat K;
  Vec f_int;
  double force_scale = 0.0;
  double max_asymmetry = 0.0;
};

/// Transfers stress and stiffness of every RVE to the macro scale.
MacroSystem transfer(const MacroProblem& problem, TwoScaleState& state, int threads, bool with_tangent = true);

struct TwoScaleResult {
  TwoScaleState state;
  SolveTrace trace;
  SpMat K;  // macro tangent at the final state
};

/// Thrown when a solve fails; carries the trace up to the failure.
class SolveFailure : public Error {
 public:
  SolveFailure(const Error& cause, SolveTrace trace) : Error(cause), trace_(std::move(trace)) {}
  const SolveTrace& trace() const { return trace_; }

 private:
  SolveTrace trace_;
};

TwoScaleResult run_nested(const MacroProblem& problem, SolverConfig config);
TwoScaleResult run_alternating(const MacroProblem& problem, SolverConfig config);
TwoScaleResult run(const MacroProblem& problem, const SolverConfig& config);

/// Load factor after `step` of `n_steps` equal increments.
double load_factor(int step, int n_steps);

/// Largest Euclidean norm of a nodal displacement; `node` receives its index.
double max_nodal_displacement(const Vec& d, int* node = nullptr);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The exception of
/// the lowest failing index is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Worker count from HMM_THREADS (1 when unset or invalid).
int default_threads();

}  // namespace fehmm
