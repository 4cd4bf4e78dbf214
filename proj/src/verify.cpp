#include "fehmm/verify.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fehmm {

namespace {

bool same_box(const Mesh& a, const Mesh& b) {
  const double scale = std::max((a.bbox().hi - a.bbox().lo).maxCoeff(), 1e-300);
  return (a.bbox().lo - b.bbox().lo).norm() <= 1e-9 * scale && (a.bbox().hi - b.bbox().hi).norm() <= 1e-9 * scale;
}

}  // namespace

Vec prolongate(const Mesh& coarse, const Vec& d_coarse, const Mesh& fine) {
  require(d_coarse.size() == coarse.num_dofs(), ErrorKind::InvalidArgument, "coarse field size mismatch");
  require(coarse.structured() && fine.structured(), ErrorKind::InvalidPairing, "prolongation needs structured meshes");
  require(coarse.kind() == fine.kind() && same_box(coarse, fine), ErrorKind::InvalidPairing,
          "meshes cover different domains or use different element kinds");
  const auto& gc = *coarse.layout();
  const auto& gf = *fine.layout();
  require(gf.nx % gc.nx == 0 && gf.ny % gc.ny == 0, ErrorKind::InvalidPairing,
          "fine mesh is not a uniform refinement of the coarse mesh");
  const int rx = gf.nx / gc.nx, ry = gf.ny / gc.ny;
  require(rx == ry && (rx & (rx - 1)) == 0, ErrorKind::InvalidPairing,
          "fine mesh is not obtained by repeated uniform refinement");

  Vec out(fine.num_dofs());
  for (int n = 0; n < fine.num_nodes(); ++n) {
    const auto loc = locate(coarse, fine.node(n));
    require(loc.has_value(), ErrorKind::InvalidPairing, "fine node outside the coarse mesh");
    const ShapeValues s = shape_eval(coarse.kind(), loc->xi);
    const auto nodes = coarse.element(loc->element);
    Vec2 u = Vec2::Zero();
    for (int a = 0; a < s.count; ++a) u += s.N[a] * d_coarse.segment<2>(2 * nodes[a]);
    out.segment<2>(2 * n) = u;
  }
  return out;
}

ErrorReport field_norms(const Mesh& mesh, const Vec& e, const SpMat& K) {
  require(e.size() == mesh.num_dofs(), ErrorKind::InvalidArgument, "field size mismatch");
  double l2 = 0.0, grad = 0.0;
  const auto rule = quadrature(mesh.kind(), QuadratureRule::Accurate);
  for (int el = 0; el < mesh.num_elements(); ++el) {
    const auto nodes = mesh.element(el);
    for (const auto& qp : rule) {
      const QpGeometry g = element_point(mesh, el, qp.xi);
      Vec2 u = Vec2::Zero();
      Mat2 du = Mat2::Zero();
      for (std::size_t a = 0; a < nodes.size(); ++a) {
        const Vec2 ea = e.segment<2>(2 * nodes[a]);
        u += g.N[a] * ea;
        du += ea * g.dNdX[a].transpose();
      }
      const double w = qp.weight * g.dV;
      l2 += w * u.squaredNorm();
      grad += w * du.squaredNorm();
    }
  }
  ErrorReport r;
  r.l2 = std::sqrt(l2);
  r.h1 = std::sqrt(l2 + grad);
  if (K.size() > 0) {
    require(K.rows() == e.size(), ErrorKind::InvalidArgument, "energy-norm matrix size mismatch");
    r.energy = std::sqrt(std::max(0.0, e.dot(K * e)));
  }
  return r;
}

ErrorReport error_norms(const Mesh& coarse, const Vec& d_coarse, const Mesh& fine, const Vec& d_fine,
                        const SpMat& K_ref) {
  require(d_fine.size() == fine.num_dofs(), ErrorKind::InvalidArgument, "reference field size mismatch");
  return field_norms(fine, prolongate(coarse, d_coarse, fine) - d_fine, K_ref);
}

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y, double floor) {
  require(x.size() == y.size(), ErrorKind::InvalidArgument, "slope fit needs equally many x and y values");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > floor) || !(y[i] > 0.0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  SlopeFit fit;
  fit.points = static_cast<int>(lx.size());
  if (fit.points < 2) {
    fit.slope = fit.intercept = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  const double n = fit.points;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < fit.points; ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double den = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (int i = 0; i < fit.points; ++i) {
    const double pred = fit.intercept + fit.slope * lx[i];
    ss_res += (ly[i] - pred) * (ly[i] - pred);
    ss_tot += (ly[i] - mean) * (ly[i] - mean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

void fit_study(ConvergenceStudy& study, const ErrorReport& floor) {
  std::vector<double> x, l2, h1, en;
  for (const auto& lv : study.levels) {
    x.push_back(study.axis == StudyAxis::Micro ? lv.h : lv.H);
    l2.push_back(lv.error.l2);
    h1.push_back(lv.error.h1);
    en.push_back(lv.error.energy);
  }
  study.l2 = fit_slope(x, l2, 10.0 * floor.l2);
  study.h1 = fit_slope(x, h1, 10.0 * floor.h1);
  study.energy = fit_slope(x, en, 10.0 * floor.energy);
}

namespace {

double macro_size(const Mesh& mesh) {
  require(mesh.structured(), ErrorKind::Unsupported, "study meshes must be structured");
  const auto& g = *mesh.layout();
  return std::max(g.size.x() / g.nx, g.size.y() / g.ny);
}

ErrorReport tolerance_floor(const MacroProblem& problem, const ReferenceSolution& ref, double tol) {
  ErrorReport r = field_norms(problem.mesh, ref.d, ref.K);
  r.l2 *= tol;
  r.h1 *= tol;
  r.energy *= tol;
  return r;
}

void require_levels(const std::vector<int>& levels, int reference) {
  require(levels.size() >= 3, ErrorKind::InvalidArgument, ">= 3 levels required for a convergence study");
  for (int n : levels)
    require(n >= 1 && n < reference, ErrorKind::InvalidArgument, "reference must be strictly finer than all levels");
}

std::uint64_t cache_key(const MacroProblem& problem, const std::string& key) {
  std::ostringstream os;
  os << key << "|macro " << problem.mesh.num_nodes() << ' ' << problem.mesh.num_elements() << ' '
     << static_cast<int>(problem.mesh.kind()) << "|micro " << problem.micro->mesh().num_nodes() << ' '
     << problem.micro->mesh().num_elements();
  return fnv1a(os.str());
}

}  // namespace

ReferenceSolution reference_solution(const MacroProblem& problem, const SolverConfig& solver,
                                     const std::optional<ReferenceCache>& cache) {
  ReferenceSolution out;
  std::filesystem::path file;
  std::uint64_t key = 0;
  if (cache) {
    key = cache_key(problem, cache->key);
    std::ostringstream name;
    name << "reference-" << std::hex << key << ".txt";
    file = cache->dir / name.str();
    if (auto d = load_reference(file, key); d && d->size() == problem.mesh.num_dofs()) {
      try {
        TwoScaleState state = make_state(problem);
        state.d = *d;
        state.load_factor = 1.0;
        parallel_for(static_cast<int>(state.qps.size()), solver.threads, [&](int q) {
          RveState& rve = state.rves[q];
          begin_load_step(rve);
          set_macro_state(*problem.micro, rve, macro_coupling_at(state.qps[q], problem.mesh, state.d));
          solve_micro(*problem.micro, rve, solver.micro_tol, solver.max_micro_iter);
        });
        out.K = transfer(problem, state, solver.threads, true).K;
        out.d = std::move(state.d);
        out.from_cache = true;
        return out;
      } catch (const Error&) {
        // stale or unusable entry: recompute below
      }
    }
  }
  TwoScaleResult res = run(problem, solver);
  out.d = std::move(res.state.d);
  out.K = std::move(res.K);
  if (cache) {
    std::filesystem::create_directories(cache->dir);
    save_reference(file, key, out.d);
  }
  return out;
}

ConvergenceStudy micro_convergence_study(const MicroStudySpec& spec) {
  require_levels(spec.levels, spec.reference);
  ConvergenceStudy study;
  study.axis = StudyAxis::Micro;
  study.reference_n = spec.reference;

  auto micro_ref = spec.micro_at(spec.reference);
  const MacroProblem ref_problem = spec.problem_for(micro_ref);
  const ReferenceSolution ref = reference_solution(ref_problem, spec.solver, spec.cache);
  for (int n : spec.levels) {
    auto micro = spec.micro_at(n);
    const MacroProblem problem = spec.problem_for(micro);
    const TwoScaleResult res = run(problem, spec.solver);
    StudyLevel lv;
    lv.n = n;
    lv.h = micro->delta() / n;
    lv.H = macro_size(problem.mesh);
    lv.error = error_norms(problem.mesh, res.state.d, ref_problem.mesh, ref.d, ref.K);
    study.levels.push_back(lv);
  }
  fit_study(study, tolerance_floor(ref_problem, ref, spec.solver.macro_tol));
  return study;
}

ConvergenceStudy macro_convergence_study(const MacroStudySpec& spec) {
  require_levels(spec.levels, spec.reference);
  ConvergenceStudy study;
  study.axis = StudyAxis::Macro;
  study.reference_n = spec.reference;

  const MacroProblem ref_problem = spec.problem_at(spec.reference);
  const ReferenceSolution ref = reference_solution(ref_problem, spec.solver, spec.cache);
  for (int n : spec.levels) {
    const MacroProblem problem = spec.problem_at(n);
    const TwoScaleResult res = run(problem, spec.solver);
    StudyLevel lv;
    lv.n = n;
    lv.h = problem.micro->delta() / problem.micro->mesh().layout()->nx;
    lv.H = macro_size(problem.mesh);
    lv.error = error_norms(problem.mesh, res.state.d, ref_problem.mesh, ref.d, ref.K);
    study.levels.push_back(lv);
  }
  fit_study(study, tolerance_floor(ref_problem, ref, spec.solver.macro_tol));
  return study;
}

namespace {

std::array<int, 4> mesh_corners(const Mesh& mesh) {
  const auto& bb = mesh.bbox();
  const double tol = 1e-9 * (bb.hi - bb.lo).maxCoeff();
  const std::array<Vec2, 4> want = {bb.lo, Vec2(bb.hi.x(), bb.lo.y()), bb.hi, Vec2(bb.lo.x(), bb.hi.y())};
  std::array<int, 4> out = {-1, -1, -1, -1};
  for (int n = 0; n < mesh.num_nodes(); ++n)
    for (int c = 0; c < 4; ++c)
      if ((mesh.node(n) - want[c]).norm() <= tol) out[c] = n;
  return out;
}

// <P : grad(dD)> over the RVE at the current state.
double average_power(const MicroModel& model, const RveState& s, const Vec& dD) {
  const FeModel& fe = model.fe();
  const int nen = fe.mesh().nodes_per_element();
  double power = 0.0, vol = 0.0;
  for (int e = 0; e < fe.mesh().num_elements(); ++e) {
    const auto de = gather(fe, e, s.D);
    const auto dd = gather(fe, e, dD);
    for (const auto& qp : fe.geometry().qps(e)) {
      Mat2 H = Mat2::Zero(), dH = Mat2::Zero();
      for (int k = 0; k < nen; ++k) {
        H += Vec2(de[2 * k], de[2 * k + 1]) * qp.dNdX[k].transpose();
        dH += Vec2(dd[2 * k], dd[2 * k + 1]) * qp.dNdX[k].transpose();
      }
      const bool linear = fe.kinematics() == Kinematics::Linear;
      const DeformationState st = linear ? DeformationState::small_strain(embed(H))
                                         : DeformationState::from_deformation_gradient(Mat3::Identity() + embed(H));
      const Mat3 S = evaluate_law(fe.law(), st, fe.params_at(e, qp)).S;
      const Mat3 P = linear ? S : Mat3(st.F * S);
      power += qp.dV * (P.cwiseProduct(embed(dH))).sum();
      vol += qp.dV;
    }
  }
  return power / vol;
}

}  // namespace

double hill_mandel_residual(const MicroModel& model, RveState& rve, ProbeBoundary boundary) {
  if (!rve.evaluated) evaluate(model, rve);
  const Mat3 P = model.kinematics() == Kinematics::Linear ? macro_stress(model, rve).S : average_P(model, rve);
  const double scale = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Mat2 dH = Mat2::Zero();
      dH(i, j) = scale;
      Vec dD;
      if (boundary == ProbeBoundary::Constrained) {
        dD = gradient_response(model, rve, dH);
      } else {
        MacroCoupling probe;
        probe.H = dH;
        const Vec affine = linearize_macro(probe, model.mesh(), model.center());
        ConstraintSet corners(model.num_dofs());
        for (int c : mesh_corners(model.mesh()))
          for (int k = 0; k < 2; ++k) corners.add_dirichlet(2 * c + k, affine[2 * c + k]);
        SaddlePointSolver solver;
        solver.factorize(rve.K, corners);
        dD = solver.solve(Vec::Zero(model.num_dofs()), corners.targets()).x.col(0);
      }
      const double macro_power = (P.cwiseProduct(embed(dH))).sum();
      const double micro_power = average_power(model, rve, dD);
      const double den = std::abs(macro_power) + P.norm() * dH.norm();
      if (den > 0.0) worst = std::max(worst, std::abs(macro_power - micro_power) / den);
    }
  }
  return worst;
}

double antiperiodic_defect(const MicroModel& model, RveState& rve) {
  if (!rve.evaluated) evaluate(model, rve);
  if (!model.pairing()) return 0.0;
  const double lam = rve.constraints.apply_transpose(rve.lambda).norm();
  if (!(lam > 0.0)) return 0.0;
  double worst = 0.0;
  for (const auto& [p, q] : model.pairing()->pairs) {
    const Vec2 rp = -rve.f_int.segment<2>(2 * p);
    const Vec2 rq = -rve.f_int.segment<2>(2 * q);
    worst = std::max(worst, (rp + rq).norm());
  }
  return worst / lam;
}

OracleResult single_scale_oracle(const SingleScaleProblem& problem, int n_load_steps, double tol, int max_iter) {
  require(static_cast<bool>(problem.model), ErrorKind::InvalidArgument, "oracle needs a model");
  require(n_load_steps >= 1, ErrorKind::InvalidArgument, "n_load_steps must be >= 1");
  const FeModel& model = *problem.model;
  const int n = model.num_dofs();
  ConstraintSet G(n);
  for (const auto& bc : problem.dirichlet) G.add_dirichlet(bc.dof, 0.0);
  G.validate();

  OracleResult out;
  out.d = Vec::Zero(n);
  for (int step = 1; step <= n_load_steps; ++step) {
    const double lambda = load_factor(step, n_load_steps);
    Vec g(G.size());
    for (int r = 0; r < G.size(); ++r) g[r] = lambda * problem.dirichlet[r].value;
    G.set_targets(g);
    const Vec f_ext = problem.f_ext.size() ? Vec(lambda * problem.f_ext) : Vec::Zero(n);
    double r_first = -1.0;
    for (int it = 0;; ++it) {
      AssembledSystem sys = assemble(model, out.d, f_ext, true);
      const Vec violation = G.violation(out.d);
      Vec lin = -sys.R;
      if (violation.norm() > 0.0) lin -= sys.K * G.apply_transpose(-violation);
      const double r = G.project(lin).norm();
      if (r_first < 0.0) r_first = r;
      const double floor = model.residual_floor(sys.force_scale + f_ext.norm());
      if ((r <= floor || r <= tol * r_first) && violation.norm() == 0.0) {
        out.K = std::move(sys.K);
        break;
      }
      if (it >= max_iter) throw Error(ErrorKind::NoConvergence, "single-scale Newton did not converge");
      const auto sol = solve_saddle(sys.K, G, -sys.R, -violation);
      out.d += sol.x.col(0);
      // Dirichlet values are imposed exactly after the first update.
      for (int r2 = 0; r2 < G.size(); ++r2) out.d[G.rows()[r2].plus] = g[r2];
      ++out.iterations;
    }
    out.u_max.push_back(max_nodal_displacement(out.d));
  }
  return out;
}

SpeedupReport speedup_report(const SolveTrace& nested, const SolveTrace& alternating, double tol) {
  require(nested.scheme == Scheme::Nested && alternating.scheme == Scheme::Alternating, ErrorKind::InvalidComparison,
          "speedup needs one nested and one alternating trace");
  require(nested.steps.size() == alternating.steps.size(), ErrorKind::InvalidComparison,
          "traces cover different numbers of load steps");
  SpeedupReport rep;
  rep.u_max_agrees = true;
  for (std::size_t i = 0; i < nested.steps.size(); ++i) {
    const auto& a = nested.steps[i];
    const auto& b = alternating.steps[i];
    require(std::abs(a.load_factor - b.load_factor) <= 1e-12, ErrorKind::InvalidComparison,
            "traces use different load factors");
    rep.step_ratio.push_back(b.seconds > 0.0 ? a.seconds / b.seconds : 1.0);
    rep.iteration_delta.push_back(b.macro_iterations - a.macro_iterations);
    const double scale = std::max(std::abs(a.u_max), std::numeric_limits<double>::min());
    const double rel = a.u_max == b.u_max ? 0.0 : std::abs(a.u_max - b.u_max) / scale;
    rep.u_max_rel_diff.push_back(rel);
    if (!(rel <= tol)) rep.u_max_agrees = false;
  }
  rep.factor = alternating.total_seconds > 0.0 ? nested.total_seconds / alternating.total_seconds : 1.0;
  return rep;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void save_reference(const std::filesystem::path& path, std::uint64_t key, const Vec& d) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write reference cache " + path.string());
  out << "fehmm-reference 1 " << std::hex << key << std::dec << ' ' << d.size() << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i + 1 < d.size(); i += 2) out << d[i] << ' ' << d[i + 1] << '\n';
}

std::optional<Vec> load_reference(const std::filesystem::path& path, std::uint64_t key) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string magic;
  int version = 0;
  std::string hash;
  long ndof = 0;
  if (!(in >> magic >> version >> hash >> ndof) || magic != "fehmm-reference" || version != 1 || ndof < 0)
    return std::nullopt;
  std::ostringstream want;
  want << std::hex << key;
  if (hash != want.str()) return std::nullopt;
  Vec d(ndof);
  for (long i = 0; i < ndof; ++i)
    if (!(in >> d[i])) return std::nullopt;
  return d;
}

}  // namespace fehmm
