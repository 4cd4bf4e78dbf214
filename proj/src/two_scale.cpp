#include "fehmm/two_scale.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace fehmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::string to_string(Scheme s) { return s == Scheme::Nested ? "nested" : "alternating"; }

void SolverConfig::validate() const {
  require(n_load_steps >= 1, ErrorKind::InvalidArgument, "n_load_steps must be >= 1");
  require(macro_tol > 0.0 && macro_tol < 1.0, ErrorKind::InvalidArgument, "macro_tol must lie in (0, 1)");
  require(micro_tol > 0.0 && micro_tol < 1.0, ErrorKind::InvalidArgument, "micro_tol must lie in (0, 1)");
  require(max_macro_iter >= 1 && max_micro_iter >= 1, ErrorKind::InvalidArgument, "iteration limits must be >= 1");
  require(max_halvings >= 0, ErrorKind::InvalidArgument, "max_halvings must be >= 0");
  require(threads >= 1, ErrorKind::InvalidArgument, "threads must be >= 1");
}

MacroProblem make_cantilever(const CantileverSpec& spec, std::shared_ptr<const MicroModel> micro) {
  require(static_cast<bool>(micro), ErrorKind::InvalidArgument, "cantilever needs a micro model");
  require(spec.thickness > 0.0, ErrorKind::InvalidArgument, "thickness must be positive");
  MacroProblem p;
  p.mesh = generate_structured(spec.length, spec.height, spec.nx, spec.ny, spec.kind, Vec2::Zero());
  p.thickness = spec.thickness;
  p.micro = std::move(micro);
  const double tol = 1e-9 * spec.length;
  for (int n = 0; n < p.mesh.num_nodes(); ++n) {
    const Vec2& x = p.mesh.node(n);
    if (std::abs(x.x()) <= tol) {
      p.dirichlet.push_back({2 * n, 0.0});
      p.dirichlet.push_back({2 * n + 1, 0.0});
    } else if (spec.loading == LoadingKind::TipDisplacement && std::abs(x.x() - spec.length) <= tol) {
      p.dirichlet.push_back({2 * n + 1, -spec.load});
    }
  }
  if (spec.loading == LoadingKind::LineLoad)
    p.f_ext = edge_line_load(p.mesh, 0, spec.length, Vec2(0.0, -spec.load));
  return p;
}

std::vector<MacroQp> macro_quadrature(const Mesh& mesh, double thickness) {
  std::vector<MacroQp> out;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (const auto& rule : quadrature(mesh.kind(), QuadratureRule::Stiffness)) {
      const QpGeometry g = element_point(mesh, e, rule.xi);
      MacroQp q;
      q.element = e;
      q.shape.count = mesh.nodes_per_element();
      for (int a = 0; a < q.shape.count; ++a) {
        q.shape.N[a] = g.N[a];
        q.shape.dNdX[a] = g.dNdX[a];
      }
      q.weight = rule.weight * g.dV * thickness;
      q.X = g.X;
      out.push_back(q);
    }
  }
  return out;
}

MacroCoupling macro_coupling_at(const MacroQp& qp, const Mesh& mesh, const Vec& d) {
  MacroCoupling c;
  const auto nodes = mesh.element(qp.element);
  for (int a = 0; a < qp.shape.count; ++a) {
    const Vec2 da = d.segment<2>(2 * nodes[a]);
    c.u0 += qp.shape.N[a] * da;
    c.H += da * qp.shape.dNdX[a].transpose();
  }
  return c;
}

QpContribution qp_contribution(const MicroModel& micro, RveState& rve, const MacroQp& qp, bool with_tangent) {
  if (!rve.evaluated) evaluate(micro, rve);
  const MacroStress stress = macro_stress(micro, rve);
  const bool nonlinear = micro.kinematics() == Kinematics::Nonlinear;
  const Mat2 F = nonlinear ? Mat2(Mat2::Identity() + rve.macro.H) : Mat2(Mat2::Identity());
  const int nen = qp.shape.count;
  Mat B = Mat::Zero(3, 2 * nen);
  for (int a = 0; a < nen; ++a) {
    const double n1 = qp.shape.dNdX[a].x(), n2 = qp.shape.dNdX[a].y();
    B(0, 2 * a) = F(0, 0) * n1;
    B(0, 2 * a + 1) = F(1, 0) * n1;
    B(1, 2 * a) = F(0, 1) * n2;
    B(1, 2 * a + 1) = F(1, 1) * n2;
    B(2, 2 * a) = F(0, 0) * n2 + F(0, 1) * n1;
    B(2, 2 * a + 1) = F(1, 0) * n2 + F(1, 1) * n1;
  }
  QpContribution out;
  out.f = qp.weight * B.transpose() * Eigen::Vector3d(stress.S(0, 0), stress.S(1, 1), stress.S(0, 1));
  out.asymmetry = stress.asymmetry;
  if (with_tangent) out.k = macro_element_stiffness(build_T(micro, rve, qp.shape, false), rve.K, qp.weight, rve.volume);
  return out;
}

TwoScaleState make_state(const MacroProblem& problem) {
  require(static_cast<bool>(problem.micro), ErrorKind::InvalidArgument, "problem has no micro model");
  TwoScaleState s;
  s.d = Vec::Zero(problem.mesh.num_dofs());
  s.qps = macro_quadrature(problem.mesh, problem.thickness);
  s.rves.reserve(s.qps.size());
  for (const auto& q : s.qps) s.rves.push_back(make_rve_state(*problem.micro, q.weight));
  return s;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int default_threads() {
  if (const char* env = std::getenv("HMM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
  }
  return 1;
}

MacroSystem transfer(const MacroProblem& problem, TwoScaleState& state, int threads, bool with_tangent) {
  const MicroModel& micro = *problem.micro;
  const int nq = static_cast<int>(state.qps.size());
  std::vector<QpContribution> parts(nq);
  parallel_for(nq, threads, [&](int q) { parts[q] = qp_contribution(micro, state.rves[q], state.qps[q], with_tangent); });

  const Mesh& mesh = problem.mesh;
  const int nd = 2 * mesh.nodes_per_element();
  MacroSystem sys;
  sys.f_int = Vec::Zero(mesh.num_dofs());
  Vec abs_sum = Vec::Zero(mesh.num_dofs());
  std::vector<Eigen::Triplet<double>> trip;
  for (int q = 0; q < nq; ++q) {
    const auto nodes = mesh.element(state.qps[q].element);
    std::array<int, 8> dofs{};
    for (int a = 0; a < nd / 2; ++a) {
      dofs[2 * a] = 2 * nodes[a];
      dofs[2 * a + 1] = 2 * nodes[a] + 1;
    }
    for (int a = 0; a < nd; ++a) {
      sys.f_int[dofs[a]] += parts[q].f[a];
      abs_sum[dofs[a]] += std::abs(parts[q].f[a]);
    }
    if (with_tangent)
      for (int b = 0; b < nd; ++b)
        for (int a = 0; a < nd; ++a) trip.emplace_back(dofs[a], dofs[b], parts[q].k(a, b));
    sys.max_asymmetry = std::max(sys.max_asymmetry, parts[q].asymmetry);
  }
  if (with_tangent) {
    sys.K.resize(mesh.num_dofs(), mesh.num_dofs());
    sys.K.setFromTriplets(trip.begin(), trip.end());
  }
  sys.force_scale = abs_sum.norm();
  return sys;
}

double load_factor(int step, int n_steps) { return static_cast<double>(step) / static_cast<double>(n_steps); }

double max_nodal_displacement(const Vec& d, int* node) {
  double best = 0.0;
  int arg = 0;
  for (int n = 0; n < d.size() / 2; ++n) {
    const double v = d.segment<2>(2 * n).norm();
    if (v > best) {
      best = v;
      arg = n;
    }
  }
  if (node) *node = arg;
  return best;
}

namespace {

class Driver {
 public:
  Driver(const MacroProblem& problem, const SolverConfig& config) : p_(problem), cfg_(config) {
    cfg_.validate();
    trace_.scheme = cfg_.scheme;
    const int n = p_.mesh.num_dofs();
    constrained_.assign(n, 0);
    for (const auto& bc : p_.dirichlet) {
      require(bc.dof >= 0 && bc.dof < n, ErrorKind::InvalidArgument, "Dirichlet dof out of range");
      constrained_[bc.dof] = 1;
    }
    free_index_.assign(n, -1);
    for (int i = 0; i < n; ++i)
      if (!constrained_[i]) free_index_[i] = num_free_++;
    if (p_.f_ext.size() != 0)
      require(p_.f_ext.size() == n, ErrorKind::InvalidArgument, "external load size mismatch");
    double area = 0.0;
    for (const auto& q : macro_quadrature(p_.mesh, 1.0)) area += q.weight;
    macro_roundoff_ = stiffness_scale(p_.micro->fe().materials()) * p_.thickness * std::sqrt(area);
  }

  TwoScaleResult run() {
    const auto t_start = Clock::now();
    state_ = make_state(p_);
    try {
      for (int step = 1; step <= cfg_.n_load_steps; ++step) {
        const auto t_step = Clock::now();
        StepRecord rec;
        rec.load_step = step;
        rec.load_factor = load_factor(step, cfg_.n_load_steps);
        const std::size_t first_row = trace_.iterations.size();
        advance(step, state_.load_factor, rec.load_factor, 0, rec);
        state_.step = step;
        rec.seconds = seconds_since(t_step);
        rec.u_max = max_nodal_displacement(state_.d);
        if (trace_.iterations.size() > first_row + 1) rec.first_iter_seconds = trace_.iterations[first_row + 1].seconds;
        trace_.steps.push_back(rec);
      }
    } catch (const Error& err) {
      trace_.total_seconds = seconds_since(t_start);
      throw SolveFailure(err, trace_);
    }
    trace_.total_seconds = seconds_since(t_start);
    TwoScaleResult out;
    out.K = std::move(last_K_);
    out.trace = std::move(trace_);
    out.state = std::move(state_);
    return out;
  }

 private:
  static TwoScaleState snapshot(const TwoScaleState& s) {
    TwoScaleState copy = s;
    for (auto& r : copy.rves) {
      r.K = SpMat();
      r.f_int = Vec();
      r.evaluated = false;
    }
    return copy;
  }

  void advance(int step, double from, double to, int halvings, StepRecord& rec) {
    const TwoScaleState saved = snapshot(state_);
    try {
      increment(step, to, rec);
    } catch (const Error& err) {
      const bool physical = err.kind() == ErrorKind::NonPhysicalDeformation ||
                            err.kind() == ErrorKind::NonPhysicalAverage;
      if (!physical || halvings >= cfg_.max_halvings) throw;
      state_ = saved;
      rec.halvings = std::max(rec.halvings, halvings + 1);
      const double mid = 0.5 * (from + to);
      advance(step, from, mid, halvings + 1, rec);
      advance(step, mid, to, halvings + 1, rec);
    }
  }

  int take_micro_iterations() {
    int total = 0;
    for (auto& r : state_.rves) {
      total += r.iterations;
      r.iterations = 0;
    }
    return total;
  }

  void record(int step, int macro_iter, double residual, Clock::time_point& t_last) {
    IterationRecord row;
    row.load_step = step;
    row.macro_iter = macro_iter;
    row.residual = residual;
    row.micro_iters = take_micro_iterations();
    row.seconds = seconds_since(t_last);
    trace_.iterations.push_back(row);
    t_last = Clock::now();
  }

  bool all_micro_converged() const {
    return std::all_of(state_.rves.begin(), state_.rves.end(),
                       [&](const RveState& r) { return micro_converged(r, cfg_.micro_tol); });
  }

  void increment(int step, double lambda, StepRecord& rec) {
    const MicroModel& micro = *p_.micro;
    const int n = p_.mesh.num_dofs();
    for (auto& r : state_.rves) begin_load_step(r);
    take_micro_iterations();

    Vec delta_c = Vec::Zero(n);
    for (const auto& bc : p_.dirichlet) delta_c[bc.dof] = lambda * bc.value - state_.d[bc.dof];
    const Vec f_ext = p_.f_ext.size() ? Vec(lambda * p_.f_ext) : Vec::Zero(n);

    auto t_last = Clock::now();
    double r_first = -1.0;
    int solves = 0;
    for (int pass = 0;; ++pass) {
      MacroSystem sys = transfer(p_, state_, cfg_.threads, true);
      rec.max_asymmetry = std::max(rec.max_asymmetry, sys.max_asymmetry);
      Vec rhs = f_ext - sys.f_int;
      if (solves == 0) rhs -= sys.K * delta_c;
      Vec rhs_free(num_free_);
      for (int i = 0; i < n; ++i)
        if (free_index_[i] >= 0) rhs_free[free_index_[i]] = rhs[i];
      const double r = rhs_free.norm();
      if (r_first < 0.0) r_first = r;
      const double floor = residual_floor(sys.force_scale + f_ext.norm(), macro_roundoff_);
      const bool macro_ok = r <= floor || r <= cfg_.macro_tol * r_first;
      record(step, solves, r_first > 0.0 ? r / r_first : 0.0, t_last);
      last_K_ = sys.K;

      if (macro_ok) {
        if (all_micro_converged()) break;
        // Macro balance holds but some RVE does not: micro-only iteration.
        require(pass < cfg_.max_macro_iter + cfg_.max_micro_iter, ErrorKind::NoConvergence,
                "micro residuals did not converge after macro convergence");
        parallel_for(static_cast<int>(state_.rves.size()), cfg_.threads, [&](int q) {
          if (!micro_converged(state_.rves[q], cfg_.micro_tol)) micro_newton_step(micro, state_.rves[q]);
        });
        continue;
      }
      if (solves >= cfg_.max_macro_iter)
        throw Error(ErrorKind::NoConvergence, "macro Newton did not converge in " +
                                                  std::to_string(cfg_.max_macro_iter) + " iterations (relative residual " +
                                                  std::to_string(r / r_first) + ")");

      const Vec dd = solve_free(sys.K, rhs_free, solves == 0 ? delta_c : Vec::Zero(n));
      state_.d += dd;
      ++solves;

      parallel_for(static_cast<int>(state_.rves.size()), cfg_.threads, [&](int q) {
        RveState& rve = state_.rves[q];
        set_macro_state(micro, rve, macro_coupling_at(state_.qps[q], p_.mesh, state_.d));
        if (cfg_.scheme == Scheme::Nested)
          solve_micro(micro, rve, cfg_.micro_tol, cfg_.max_micro_iter);
        else
          micro_newton_step(micro, rve);
      });
    }
    rec.macro_iterations += solves;

    // Final accuracy polish on the micro scale; refreshes stresses only.
    parallel_for(static_cast<int>(state_.rves.size()), cfg_.threads, [&](int q) {
      RveState& rve = state_.rves[q];
      if (rve.residual > rve.floor) {
        micro_newton_step(micro, rve);
        evaluate(micro, rve);
      }
    });
    take_micro_iterations();
    state_.load_factor = lambda;
  }

  Vec solve_free(const SpMat& K, const Vec& rhs_free, const Vec& delta_c) const {
    const int n = static_cast<int>(K.rows());
    std::vector<Eigen::Triplet<double>> t;
    for (int c = 0; c < K.outerSize(); ++c)
      for (SpMat::InnerIterator it(K, c); it; ++it) {
        const int fr = free_index_[it.row()], fc = free_index_[it.col()];
        if (fr >= 0 && fc >= 0) t.emplace_back(fr, fc, it.value());
      }
    SpMat Kff(num_free_, num_free_);
    Kff.setFromTriplets(t.begin(), t.end());
    Kff.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(Kff);
    if (lu.info() != Eigen::Success)
      throw Error(ErrorKind::SingularSystem, "macro tangent is singular on the free dofs");
    const Vec x = lu.solve(rhs_free);
    if (!x.allFinite()) throw Error(ErrorKind::SingularSystem, "macro solve produced non-finite values");
    Vec dd = delta_c;
    for (int i = 0; i < n; ++i)
      if (free_index_[i] >= 0) dd[i] = x[free_index_[i]];
    return dd;
  }

  const MacroProblem& p_;
  SolverConfig cfg_;
  TwoScaleState state_;
  SolveTrace trace_;
  SpMat last_K_;
  std::vector<char> constrained_;
  std::vector<int> free_index_;
  int num_free_ = 0;
  double macro_roundoff_ = 0.0;
};

}  // namespace

TwoScaleResult run_nested(const MacroProblem& problem, SolverConfig config) {
  config.scheme = Scheme::Nested;
  return Driver(problem, config).run();
}

TwoScaleResult run_alternating(const MacroProblem& problem, SolverConfig config) {
  config.scheme = Scheme::Alternating;
  return Driver(problem, config).run();
}

TwoScaleResult run(const MacroProblem& problem, const SolverConfig& config) {
  return config.scheme == Scheme::Nested ? run_nested(problem, config) : run_alternating(problem, config);
}

}  // namespace fehmm
