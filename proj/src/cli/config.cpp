#include "fehmm/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fehmm::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::vector<std::pair<std::string, std::string>>& default_entries() {
  static const std::vector<std::pair<std::string, std::string>> entries = {
      {"problem.type", "cantilever"},
      {"problem.length", "5000"},
      {"problem.height", "1000"},
      {"problem.thickness", "100"},
      {"problem.nx", "5"},
      {"problem.ny", "1"},
      {"problem.element", "quad4"},
      {"problem.loading", "line_load"},
      {"problem.load", "20000"},
      {"micro.source", "checkerboard"},
      {"micro.file", ""},
      {"micro.resolution", "16"},
      {"micro.delta", "1"},
      {"micro.epsilon", "1"},
      {"micro.coupling", "periodic"},
      {"micro.element", "quad4"},
      {"material.law", "neo_hookean"},
      {"material.kinematics", "nonlinear"},
      {"material.E1", "100000"},
      {"material.nu1", "0.2"},
      {"material.E2", "40000"},
      {"material.nu2", "0.2"},
      {"solver.scheme", "nested"},
      {"solver.load_steps", "4"},
      {"solver.macro_tol", "1e-8"},
      {"solver.micro_tol", "1e-10"},
      {"solver.max_macro_iter", "30"},
      {"solver.max_micro_iter", "50"},
      {"solver.max_halvings", "3"},
      {"solver.threads", "0"},
      {"output.dir", "out"},
      {"output.snapshot", ""},
      {"converge.levels", "4,8,16"},
      {"converge.reference", "32"},
      {"speedup.load_steps", "4"},
      {"oracle.cells", "8"},
      {"seed", "7"},
  };
  return entries;
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& [k, v] : default_entries()) c.values_[k] = v;
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  Config c = defaults();
  c.merge_file(path);
  return c;
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    require(t.find('=') != std::string::npos, ErrorKind::InvalidArgument,
            path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    set(t);
  }
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::InvalidArgument, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  require(values_.count(key) > 0, ErrorKind::InvalidArgument, "unknown configuration key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::InvalidArgument, "unknown configuration key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key) const {
  const std::string& s = str(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidArgument, "'" + key + "' must be a number, got '" + s + "'");
}

int Config::integer(const std::string& key) const {
  const std::string& s = str(key);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidArgument, "'" + key + "' must be an integer, got '" + s + "'");
}

std::vector<int> Config::int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "'" + key + "' must be a comma-separated list of integers");
    }
  }
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

namespace {

template <class T>
T pick(const Config& cfg, const std::string& key, const std::vector<std::pair<std::string, T>>& options) {
  const std::string& v = cfg.str(key);
  for (const auto& [name, value] : options)
    if (name == v) return value;
  std::string allowed;
  for (const auto& o : options) allowed += (allowed.empty() ? "" : ", ") + o.first;
  throw Error(ErrorKind::InvalidArgument, "'" + key + "' must be one of: " + allowed);
}

}  // namespace

RunConfig parse_run_config(const Config& cfg) {
  RunConfig rc;
  rc.problem_type = pick<std::string>(cfg, "problem.type", {{"cantilever", "cantilever"}, {"square", "square"}});
  rc.beam.length = cfg.num("problem.length");
  rc.beam.height = cfg.num("problem.height");
  rc.beam.thickness = cfg.num("problem.thickness");
  rc.beam.nx = cfg.integer("problem.nx");
  rc.beam.ny = cfg.integer("problem.ny");
  rc.beam.kind = pick<ElementKind>(cfg, "problem.element", {{"quad4", ElementKind::Quad4}, {"tri3", ElementKind::Tri3}});
  rc.beam.loading = pick<LoadingKind>(cfg, "problem.loading",
                                      {{"line_load", LoadingKind::LineLoad}, {"tip_displacement", LoadingKind::TipDisplacement}});
  rc.beam.load = cfg.num("problem.load");
  require(rc.beam.length > 0 && rc.beam.height > 0 && rc.beam.thickness > 0, ErrorKind::InvalidArgument,
          "problem dimensions must be positive");
  require(rc.beam.nx >= 1 && rc.beam.ny >= 1, ErrorKind::InvalidArgument, "problem.nx and problem.ny must be >= 1");

  rc.micro_source = cfg.str("micro.source");
  rc.micro_file = cfg.str("micro.file");
  rc.micro_resolution = cfg.integer("micro.resolution");
  rc.delta = cfg.num("micro.delta");
  rc.epsilon = cfg.num("micro.epsilon");
  rc.coupling = pick<CouplingKind>(cfg, "micro.coupling",
                                   {{"periodic", CouplingKind::Periodic}, {"linear_displacement", CouplingKind::LinearDisplacement}});
  rc.micro_element = pick<ElementKind>(cfg, "micro.element", {{"quad4", ElementKind::Quad4}, {"tri3", ElementKind::Tri3}});
  require(rc.micro_resolution >= 1, ErrorKind::InvalidArgument, "micro.resolution must be >= 1");
  require(rc.delta > 0 && rc.epsilon > 0, ErrorKind::InvalidArgument, "micro.delta and micro.epsilon must be positive");
  const double ratio = rc.delta / rc.epsilon;
  if (rc.coupling == CouplingKind::Periodic)
    require(std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio && std::round(ratio) >= 1, ErrorKind::InvalidArgument,
            "periodic coupling needs delta/epsilon to be a positive integer");
  static const std::vector<std::string> sources = {"checkerboard", "laminate-x", "laminate-y", "blob",
                                                   "homogeneous",  "smooth-laminate", "file"};
  require(std::find(sources.begin(), sources.end(), rc.micro_source) != sources.end(), ErrorKind::InvalidArgument,
          "unknown micro.source '" + rc.micro_source + "'");
  if (rc.micro_source == "file") {
    require(!rc.micro_file.empty(), ErrorKind::InvalidArgument, "micro.source=file needs micro.file");
    require(std::filesystem::exists(rc.micro_file), ErrorKind::Io, "phase file not found: " + rc.micro_file);
  }

  rc.law = pick<MaterialLaw>(cfg, "material.law",
                             {{"neo_hookean", MaterialLaw::NeoHookean}, {"linear_elastic", MaterialLaw::LinearElastic}});
  rc.kinematics = pick<Kinematics>(cfg, "material.kinematics",
                                   {{"nonlinear", Kinematics::Nonlinear}, {"linear", Kinematics::Linear}});
  require(!(rc.law == MaterialLaw::NeoHookean && rc.kinematics == Kinematics::Linear), ErrorKind::InvalidArgument,
          "neo_hookean requires material.kinematics=nonlinear");
  rc.phase1 = lame_from_engineering(cfg.num("material.E1"), cfg.num("material.nu1"));
  rc.phase2 = lame_from_engineering(cfg.num("material.E2"), cfg.num("material.nu2"));

  rc.solver.scheme = pick<Scheme>(cfg, "solver.scheme", {{"nested", Scheme::Nested}, {"alternating", Scheme::Alternating}});
  rc.solver.n_load_steps = cfg.integer("solver.load_steps");
  rc.solver.macro_tol = cfg.num("solver.macro_tol");
  rc.solver.micro_tol = cfg.num("solver.micro_tol");
  rc.solver.max_macro_iter = cfg.integer("solver.max_macro_iter");
  rc.solver.max_micro_iter = cfg.integer("solver.max_micro_iter");
  rc.solver.max_halvings = cfg.integer("solver.max_halvings");
  const int threads = cfg.integer("solver.threads");
  rc.solver.threads = threads > 0 ? threads : default_threads();
  rc.solver.validate();

  rc.out_dir = cfg.str("output.dir");
  const std::string snap = cfg.str("output.snapshot");
  if (!snap.empty()) {
    std::stringstream ss(snap);
    char comma = 0;
    double x = 0, y = 0;
    require(static_cast<bool>(ss >> x >> comma >> y) && comma == ',', ErrorKind::InvalidArgument,
            "output.snapshot must be 'x,y'");
    rc.snapshot = true;
    rc.snapshot_at = Vec2(x, y);
  }
  rc.levels = cfg.int_list("converge.levels");
  rc.reference = cfg.integer("converge.reference");
  rc.speedup_steps = cfg.int_list("speedup.load_steps");
  require(!rc.speedup_steps.empty(), ErrorKind::InvalidArgument, "speedup.load_steps must list at least one count");
  for (int n : rc.speedup_steps) require(n >= 1, ErrorKind::InvalidArgument, "speedup.load_steps entries must be >= 1");
  rc.oracle_cells = cfg.integer("oracle.cells");
  require(rc.oracle_cells >= 1, ErrorKind::InvalidArgument, "oracle.cells must be >= 1");
  const long long seed = std::stoll(cfg.str("seed"));
  require(seed >= 0, ErrorKind::InvalidArgument, "seed must be non-negative");
  rc.seed = static_cast<std::uint64_t>(seed);
  rc.fingerprint = cfg.dump();
  return rc;
}

}  // namespace fehmm::cli
