#include "fehmm/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fehmm::cli {

namespace {

using nlohmann::json;

// Exit codes: usage/configuration problems are 2, failures while running are 1.
constexpr int kExitRun = 1;
constexpr int kExitUsage = 2;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << std::setprecision(12);
  return out;
}

std::string seconds(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << s;
  return os.str();
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_trace(const std::filesystem::path& path, const std::vector<SolveTrace>& traces) {
  auto out = open_out(path);
  out << "scheme,load_step,macro_iter,macro_residual,micro_iters_total,t_iter_s\n";
  for (const auto& t : traces)
    for (const auto& r : t.iterations)
      out << to_string(t.scheme) << ',' << r.load_step << ',' << r.macro_iter << ',' << r.residual << ','
          << r.micro_iters << ',' << seconds(r.seconds) << '\n';
}

void write_steps(const std::filesystem::path& path, const SolveTrace& t) {
  auto out = open_out(path);
  out << "scheme,load_step,load_factor,N_ite_mac,u_max,t_LS_s,halvings,max_asymmetry\n";
  for (const auto& s : t.steps)
    out << to_string(t.scheme) << ',' << s.load_step << ',' << s.load_factor << ',' << s.macro_iterations << ','
        << s.u_max << ',' << seconds(s.seconds) << ',' << s.halvings << ',' << s.max_asymmetry << '\n';
}

double von_mises(const Mat3& s) {
  const Mat3 dev = s - s.trace() / 3.0 * Mat3::Identity();
  return std::sqrt(1.5 * dev.cwiseProduct(dev).sum());
}

// Green-Lagrange strain and von Mises stress at the center of every micro
// element of the RVE closest to `at`.
json write_snapshot(const std::filesystem::path& path, const MacroProblem& problem, const TwoScaleState& state,
                    const Vec2& at) {
  int best = 0;
  for (int q = 1; q < static_cast<int>(state.qps.size()); ++q)
    if ((state.qps[q].X - at).norm() < (state.qps[best].X - at).norm()) best = q;
  const MicroModel& micro = *problem.micro;
  const FeModel& fe = micro.fe();
  const Mesh& mesh = micro.mesh();
  const Vec d = full_displacement(micro, state.rves[best]);
  const Vec2 xi = mesh.kind() == ElementKind::Quad4 ? Vec2(0.0, 0.0) : Vec2(1.0 / 3.0, 1.0 / 3.0);

  auto out = open_out(path);
  out << "element,x,y,E11,E22,E12,von_mises\n";
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto de = gather(fe, e, d);
    const QpGeometry g = element_point(mesh, e, xi);
    const DeformationState st =
        deformation_gradient(mesh, e, std::span<const double>(de.data(), 2 * mesh.nodes_per_element()), xi,
                             fe.kinematics());
    const StressTangent sig = evaluate_law(fe.law(), st, fe.params_at(e, g));
    const Mat3 cauchy =
        fe.kinematics() == Kinematics::Nonlinear ? Mat3(st.F * sig.S * st.F.transpose() / st.J) : sig.S;
    out << e << ',' << g.X.x() << ',' << g.X.y() << ',' << st.E(0, 0) << ',' << st.E(1, 1) << ',' << st.E(0, 1)
        << ',' << von_mises(cauchy) << '\n';
  }
  const Vec2 X = state.qps[best].X;
  std::cout << "snapshot at macro qp " << best << " (x=" << X.x() << ", y=" << X.y() << ")\n";
  return json{{"qp", best}, {"x", X.x()}, {"y", X.y()}, {"requested", {at.x(), at.y()}}};
}

json trace_json(const SolveTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"load_step", s.load_step},
                     {"N_ite_mac", s.macro_iterations},
                     {"u_max", s.u_max},
                     {"t_ite_mac_s", s.first_iter_seconds},
                     {"t_LS_s", s.seconds},
                     {"halvings", s.halvings}});
  return {{"scheme", to_string(t.scheme)}, {"steps", steps}, {"total_seconds", t.total_seconds}};
}

// Canonical configuration without output, study and thread settings: two
// runs that share it produce the same reference solution.
std::string physics_key(const std::string& fingerprint) {
  std::istringstream in(fingerprint);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("output.", 0) == 0 || line.rfind("converge.", 0) == 0 || line.rfind("speedup.", 0) == 0 ||
        line.rfind("oracle.", 0) == 0 || line.rfind("solver.threads", 0) == 0 || line.rfind("solver.load_steps", 0) == 0)
      continue;
    out += line + "\n";
  }
  return out;
}

int cmd_solve(const RunConfig& rc) {
  auto micro = build_micro(rc);
  const MacroProblem problem = build_problem(rc, micro);
  std::filesystem::create_directories(rc.out_dir);
  try {
    const TwoScaleResult res = run(problem, rc.solver);
    write_trace(rc.out_dir / "trace.csv", {res.trace});
    write_steps(rc.out_dir / "steps.csv", res.trace);
    json summary = trace_json(res.trace);
    summary["u_max"] = max_nodal_displacement(res.state.d);
    summary["macro_dofs"] = problem.mesh.num_dofs();
    summary["micro_dofs"] = micro->num_dofs();
    summary["macro_qps"] = res.state.qps.size();
    if (rc.snapshot) summary["snapshot"] = write_snapshot(rc.out_dir / "snapshot.csv", problem, res.state, rc.snapshot_at);
    write_json(rc.out_dir / "summary.json", summary);
    for (const auto& s : res.trace.steps)
      std::cout << "step " << s.load_step << ": N_ite_mac=" << s.macro_iterations << " u_max=" << s.u_max
                << " t_LS=" << seconds(s.seconds) << "s\n";
    return 0;
  } catch (const SolveFailure& f) {
    write_trace(rc.out_dir / "trace.csv", {f.trace()});
    std::cerr << "solve failed: " << f.what() << "\n";
    for (const auto& r : f.trace().iterations)
      std::cerr << "  step " << r.load_step << " iter " << r.macro_iter << " residual " << r.residual << "\n";
    return kExitRun;
  }
}

int cmd_converge(const RunConfig& rc, const std::string& axis) {
  auto micro = build_micro(rc);
  std::filesystem::create_directories(rc.out_dir);
  const ReferenceCache cache{rc.out_dir / "cache", physics_key(rc.fingerprint) + "axis=" + axis};
  ConvergenceStudy study;
  if (axis == "micro") {
    MicroStudySpec spec;
    spec.micro_at = [&rc](int n) { return build_micro(rc, n); };
    spec.problem_for = [&rc](std::shared_ptr<const MicroModel> m) { return build_problem(rc, std::move(m)); };
    spec.levels = rc.levels;
    spec.reference = rc.reference;
    spec.solver = rc.solver;
    spec.cache = cache;
    study = micro_convergence_study(spec);
  } else {
    MacroStudySpec spec;
    spec.problem_at = [&rc, micro](int n) { return build_problem(rc, micro, n); };
    spec.levels = rc.levels;
    spec.reference = rc.reference;
    spec.solver = rc.solver;
    spec.cache = cache;
    study = macro_convergence_study(spec);
  }
  auto out = open_out(rc.out_dir / "convergence.csv");
  out << "level,h,H,l2,h1,energy\n";
  for (const auto& lv : study.levels)
    out << lv.n << ',' << lv.h << ',' << lv.H << ',' << lv.error.l2 << ',' << lv.error.h1 << ',' << lv.error.energy
        << '\n';
  auto fit = [](const SlopeFit& f) { return json{{"slope", f.slope}, {"r2", f.r2}, {"points", f.points}}; };
  write_json(rc.out_dir / "summary.json", {{"axis", axis},
                                           {"reference", study.reference_n},
                                           {"slopes", {{"l2", fit(study.l2)}, {"h1", fit(study.h1)}, {"energy", fit(study.energy)}}}});
  std::cout << "slopes: l2 " << study.l2.slope << ", h1 " << study.h1.slope << ", energy " << study.energy.slope << "\n";
  return 0;
}

int cmd_speedup(const RunConfig& rc) {
  auto micro = build_micro(rc);
  const MacroProblem problem = build_problem(rc, micro);
  std::filesystem::create_directories(rc.out_dir);
  auto table = open_out(rc.out_dir / "speedup.csv");
  table << "N_LS,scheme,load_step,N_ite_mac,t_ite_mac_s,u_max,t_LS_s\n";
  json variants = json::array();
  std::vector<SolveTrace> traces;
  bool ok = true;
  for (int n : rc.speedup_steps) {
    SolverConfig cfg = rc.solver;
    cfg.n_load_steps = n;
    cfg.scheme = Scheme::Nested;
    const TwoScaleResult nested = run(problem, cfg);
    cfg.scheme = Scheme::Alternating;
    const TwoScaleResult alt = run(problem, cfg);
    for (const auto* r : {&nested, &alt})
      for (const auto& s : r->trace.steps)
        table << n << ',' << to_string(r->trace.scheme) << ',' << s.load_step << ',' << s.macro_iterations << ','
              << seconds(s.first_iter_seconds) << ',' << s.u_max << ',' << seconds(s.seconds) << '\n';
    const SpeedupReport rep = speedup_report(nested.trace, alt.trace);
    if (!rep.u_max_agrees) {
      ok = false;
      table << n << ",FAILED,u_max mismatch,,,,\n";
    }
    variants.push_back({{"N_LS", n},
                        {"factor", rep.factor},
                        {"step_ratio", rep.step_ratio},
                        {"iteration_delta", rep.iteration_delta},
                        {"u_max_rel_diff", rep.u_max_rel_diff},
                        {"u_max_agrees", rep.u_max_agrees},
                        {"nested", trace_json(nested.trace)},
                        {"alternating", trace_json(alt.trace)}});
    traces.push_back(nested.trace);
    traces.push_back(alt.trace);
    std::cout << "N_LS=" << n << ": speedup " << rep.factor << (rep.u_max_agrees ? "" : " (u_max MISMATCH)") << "\n";
  }
  write_trace(rc.out_dir / "trace.csv", traces);
  write_json(rc.out_dir / "summary.json", {{"variants", variants}, {"u_max_agrees", ok}});
  return ok ? 0 : kExitRun;
}

int cmd_genmicro(const RunConfig& rc) {
  const PhaseGrid g = cell_grid(rc, rc.micro_resolution);
  std::filesystem::create_directories(rc.out_dir);
  write_phase_grid(g, rc.out_dir / "microstructure.txt");
  std::string bytes(g.cells.begin(), g.cells.end());
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(bytes);
  const double f1 = g.volume_fraction(1);
  write_json(rc.out_dir / "summary.json", {{"source", rc.micro_source},
                                           {"resolution", g.nx},
                                           {"seed", rc.seed},
                                           {"phase1_fraction", f1},
                                           {"phase2_fraction", g.volume_fraction(2)},
                                           {"hash", hash.str()}});
  std::cout << rc.micro_source << " " << g.nx << "x" << g.ny << ": phase-1 fraction " << f1 << ", hash "
            << hash.str() << "\n";
  return 0;
}

int cmd_oracle(const RunConfig& rc) {
  const SingleScaleProblem single = build_oracle_problem(rc);
  auto micro = build_micro(rc);
  const MacroProblem problem = build_problem(rc, micro);
  std::filesystem::create_directories(rc.out_dir);
  const OracleResult ref = single_scale_oracle(single, rc.solver.n_load_steps);
  const TwoScaleResult hmm = run(problem, rc.solver);
  auto out = open_out(rc.out_dir / "oracle.csv");
  out << "load_step,u_max_resolved,u_max_two_scale,rel_diff\n";
  json rows = json::array();
  for (std::size_t i = 0; i < ref.u_max.size() && i < hmm.trace.steps.size(); ++i) {
    const double a = ref.u_max[i];
    const double b = hmm.trace.steps[i].u_max;
    const double rel = std::abs(a - b) / std::max(std::abs(a), 1e-300);
    out << i + 1 << ',' << a << ',' << b << ',' << rel << '\n';
    rows.push_back({{"load_step", i + 1}, {"u_max_resolved", a}, {"u_max_two_scale", b}, {"rel_diff", rel}});
    std::cout << "step " << i + 1 << ": resolved " << a << ", two-scale " << b << " (rel " << rel << ")\n";
  }
  write_json(rc.out_dir / "summary.json", {{"resolved_dofs", single.model->num_dofs()},
                                           {"resolved_newton_iterations", ref.iterations},
                                           {"steps", rows}});
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Two-scale FE-HMM solver for hyperelastic composites"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  long long seed = -1;
  int threads = 0;
  app.add_option("--config", config_path, "configuration file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "override a configuration key (key=value)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed for generated microstructures")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "worker threads (default: HMM_THREADS or 1)")->check(CLI::PositiveNumber);

  auto* solve = app.add_subcommand("solve", "run one two-scale solve");
  std::string axis;
  auto* converge = app.add_subcommand("converge", "run a convergence study");
  converge->add_option("--axis", axis, "micro or macro")->required()->check(CLI::IsMember({"micro", "macro"}));
  auto* speedup = app.add_subcommand("speedup", "compare nested and alternating Newton");
  auto* genmicro = app.add_subcommand("genmicro", "write a generated phase grid");
  auto* oracle = app.add_subcommand("oracle", "compare against a fully resolved single-scale solve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  RunConfig rc;
  try {
    Config cfg = Config::defaults();
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& s : sets) cfg.set(s);
    if (!out_dir.empty()) cfg.set("output.dir", out_dir);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (threads > 0) cfg.set("solver.threads", std::to_string(threads));
    rc = parse_run_config(cfg);
    // Fail on unreadable or inconsistent microstructure input before any
    // output is created.
    if (!genmicro->parsed()) build_micro(rc);
    else cell_grid(rc, rc.micro_resolution);
  } catch (const Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (solve->parsed()) return cmd_solve(rc);
    if (converge->parsed()) return cmd_converge(rc, axis);
    if (speedup->parsed()) return cmd_speedup(rc);
    if (genmicro->parsed()) return cmd_genmicro(rc);
    if (oracle->parsed()) return cmd_oracle(rc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::InvalidArgument ? kExitUsage : kExitRun;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitUsage;
}

}  // namespace fehmm::cli
