#include "hjbi/config.hpp"

#include <charconv>
#include <set>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "hjbi/io.hpp"

namespace hjbi {
namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& what) {
  const auto mark = node.Mark();
  if (mark.line >= 0) throw ConfigError(fmt::format("line {}: {}", mark.line + 1, what));
  throw ConfigError(what);
}

void only_keys(const YAML::Node& node, const std::string& where, std::set<std::string> allowed) {
  if (!node.IsMap()) fail(node, fmt::format("'{}' must be a mapping", where));
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, fmt::format("unknown key '{}' in '{}'", key, where));
  }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) fail(node, fmt::format("'{}' must be a scalar", key));
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, fmt::format("'{}' has an invalid value '{}'", key, node.Scalar()));
  }
}

template <class T>
void read(const YAML::Node& map, const char* key, T& out) {
  if (const auto n = map[key]) out = scalar<T>(n, key);
}

std::vector<double> number_list(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) return {scalar<double>(node, key)};
  if (!node.IsSequence()) fail(node, fmt::format("'{}' must be a number or a list", key));
  std::vector<double> out;
  for (const auto& e : node) out.push_back(scalar<double>(e, key));
  return out;
}

void read_list(const YAML::Node& map, const char* key, std::vector<double>& out) {
  if (const auto n = map[key]) out = number_list(n, key);
}

void read_grid(const YAML::Node& node, const std::string& where, GridConfig& g) {
  only_keys(node, where, {"x_min", "x_max", "intervals", "steps", "cfl_safety"});
  read(node, "x_min", g.x_min);
  read(node, "x_max", g.x_max);
  read(node, "intervals", g.intervals);
  read(node, "steps", g.steps);
  read(node, "cfl_safety", g.cfl_safety);
  if (!(g.x_min < g.x_max)) fail(node, fmt::format("'{}': x_min must be below x_max", where));
  if (g.intervals < 3) fail(node, fmt::format("'{}': intervals must be at least 3", where));
  if (g.steps < 1) fail(node, fmt::format("'{}': steps must be positive", where));
  if (!(g.cfl_safety > 0.0 && g.cfl_safety <= 1.0)) fail(node, fmt::format("'{}': cfl_safety must lie in (0, 1]", where));
}

void read_problem(const YAML::Node& node, RunConfig& c) {
  only_keys(node, "problem", {"name", "m", "n", "T", "lambda", "params", "controls", "atoms", "assumptions"});
  if (!node["name"]) fail(node, "'problem' needs a 'name'");
  c.problem = scalar<std::string>(node["name"], "name");
  if (!catalog_contains(c.problem)) fail(node["name"], fmt::format("unknown catalog problem '{}'", c.problem));
  auto& o = c.overrides;
  if (const auto n = node["m"]) o.m = scalar<int>(n, "m");
  if (const auto n = node["n"]) o.n = scalar<int>(n, "n");
  if (const auto n = node["T"]) o.T = scalar<double>(n, "T");
  if (const auto n = node["lambda"]) o.lambda = scalar<double>(n, "lambda");
  if (const auto p = node["params"]) {
    if (!p.IsMap()) fail(p, "'params' must be a mapping");
    for (const auto& kv : p) {
      const auto key = kv.first.as<std::string>();
      o.params[key] = number_list(kv.second, key);
    }
  }
  if (const auto ctl = node["controls"]) {
    only_keys(ctl, "controls", {"u", "v"});
    if (ctl["u"]) o.u_points = number_list(ctl["u"], "u");
    if (ctl["v"]) o.v_points = number_list(ctl["v"], "v");
  }
  if (const auto atoms = node["atoms"]) {
    if (!atoms.IsSequence()) fail(atoms, "'atoms' must be a list");
    std::vector<LevyAtom> list;
    for (const auto& a : atoms) {
      only_keys(a, "atoms", {"mark", "weight"});
      if (!a["mark"] || !a["weight"]) fail(a, "every atom needs 'mark' and 'weight'");
      list.push_back({number_list(a["mark"], "mark"), scalar<double>(a["weight"], "weight")});
    }
    o.atoms = list;
  }
  if (const auto as = node["assumptions"]) {
    only_keys(as, "assumptions", {"L", "kappa_bound", "alpha", "beta", "L_g"});
    AssumptionConstants k;
    read(as, "L", k.L);
    read(as, "kappa_bound", k.kappa_bound);
    read(as, "alpha", k.alpha);
    read(as, "beta", k.beta);
    read(as, "L_g", k.L_g);
    o.assumptions = k;
  }
}

void read_mc(const YAML::Node& node, McConfig& mc) {
  only_keys(node, "mc", {"steps", "particles", "degree", "t0", "x0", "regime", "x_spread", "stratify", "policy"});
  read(node, "steps", mc.steps);
  read(node, "particles", mc.particles);
  read(node, "degree", mc.degree);
  read(node, "t0", mc.t0);
  read(node, "x0", mc.x0);
  read(node, "regime", mc.regime);
  read(node, "x_spread", mc.x_spread);
  read(node, "stratify", mc.stratify);
  read(node, "policy", mc.policy);
  if (mc.steps < 1) fail(node, "'mc': steps must be positive");
  if (mc.particles < 1) fail(node, "'mc': particles must be positive");
  if (mc.degree < 0) fail(node, "'mc': degree must be non-negative");
  if (mc.regime < 1) fail(node, "'mc': regime is 1-based");
  if (mc.policy != "constant" && mc.policy != "feedback") fail(node, "'mc': policy must be 'constant' or 'feedback'");
}

// Emission helpers: every number goes through the round-trip formatter.
YAML::Emitter& num(YAML::Emitter& e, double v) { return e << io::format_number(v); }

void list(YAML::Emitter& e, const std::vector<double>& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : v) num(e, x);
  e << YAML::EndSeq;
}

void grid(YAML::Emitter& e, const GridConfig& g) {
  e << YAML::BeginMap;
  e << YAML::Key << "x_min" << YAML::Value;
  num(e, g.x_min);
  e << YAML::Key << "x_max" << YAML::Value;
  num(e, g.x_max);
  e << YAML::Key << "intervals" << YAML::Value << g.intervals;
  e << YAML::Key << "steps" << YAML::Value << g.steps;
  e << YAML::Key << "cfl_safety" << YAML::Value;
  num(e, g.cfl_safety);
  e << YAML::EndMap;
}

}  // namespace

SchemeParams GridConfig::scheme() const {
  SchemeParams p;
  p.grid = SpatialGrid(x_min, x_max, intervals);
  p.K = steps;
  p.cfl_safety = cfl_safety;
  return p;
}

GameSpec RunConfig::spec() const {
  try {
    auto s = make_problem(problem, overrides);
    if (mc.regime > s.m) throw ConfigError(fmt::format("mc regime {} exceeds m = {}", mc.regime, s.m));
    return s;
  } catch (const ProblemError& e) {
    throw ConfigError(e.what());
  }
}

bool operator==(const RunConfig& a, const RunConfig& b) { return emit_config(a) == emit_config(b); }

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("malformed YAML: {}", e.what()));
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping");
  only_keys(root, "config", {"problem", "pde", "mc", "seed", "tolerances", "verify", "compare", "picard", "output"});
  RunConfig c;
  if (!root["problem"]) throw ConfigError("config needs a 'problem' section");
  read_problem(root["problem"], c);
  if (const auto n = root["pde"]) read_grid(n, "pde", c.pde);
  if (const auto n = root["mc"]) read_mc(n, c.mc);
  if (const auto n = root["seed"]) c.seed = scalar<std::uint64_t>(n, "seed");
  if (const auto n = root["tolerances"]) {
    only_keys(n, "tolerances", {"hamiltonian", "value", "uniqueness"});
    read(n, "hamiltonian", c.tolerances.hamiltonian);
    read(n, "value", c.tolerances.value);
    read(n, "uniqueness", c.tolerances.uniqueness);
  }
  if (const auto n = root["verify"]) {
    only_keys(n, "verify", {"deltas", "x_probe", "alternate", "ladder"});
    read_list(n, "deltas", c.verify.deltas);
    read_list(n, "x_probe", c.verify.x_probe);
    if (n["alternate"]) read_grid(n["alternate"], "alternate", c.verify.alternate);
    read(n, "ladder", c.verify.ladder);
    if (c.verify.ladder < 1) fail(n, "'verify': ladder must be positive");
  }
  if (const auto n = root["compare"]) {
    only_keys(n, "compare", {"shift"});
    read(n, "shift", c.compare_shift);
  }
  if (const auto n = root["picard"]) {
    only_keys(n, "picard", {"iterations"});
    read(n, "iterations", c.picard_iterations);
  }
  if (const auto n = root["output"]) {
    only_keys(n, "output", {"dir", "surface_stride"});
    read(n, "dir", c.output);
    read(n, "surface_stride", c.surface_stride);
  }
  c.spec();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string emit_config(const RunConfig& c, bool with_output) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << c.problem;
  const auto& o = c.overrides;
  if (o.m) e << YAML::Key << "m" << YAML::Value << *o.m;
  if (o.n) e << YAML::Key << "n" << YAML::Value << *o.n;
  if (o.T) {
    e << YAML::Key << "T" << YAML::Value;
    num(e, *o.T);
  }
  if (o.lambda) {
    e << YAML::Key << "lambda" << YAML::Value;
    num(e, *o.lambda);
  }
  if (!o.params.empty()) {
    e << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : o.params) {
      e << YAML::Key << k << YAML::Value;
      list(e, v);
    }
    e << YAML::EndMap;
  }
  if (o.u_points || o.v_points) {
    e << YAML::Key << "controls" << YAML::Value << YAML::BeginMap;
    if (o.u_points) {
      e << YAML::Key << "u" << YAML::Value;
      list(e, *o.u_points);
    }
    if (o.v_points) {
      e << YAML::Key << "v" << YAML::Value;
      list(e, *o.v_points);
    }
    e << YAML::EndMap;
  }
  if (o.atoms) {
    e << YAML::Key << "atoms" << YAML::Value << YAML::BeginSeq;
    for (const auto& a : *o.atoms) {
      e << YAML::BeginMap << YAML::Key << "mark" << YAML::Value;
      list(e, a.mark);
      e << YAML::Key << "weight" << YAML::Value;
      num(e, a.weight);
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  if (o.assumptions) {
    const auto& k = *o.assumptions;
    e << YAML::Key << "assumptions" << YAML::Value << YAML::BeginMap;
    for (const auto& [name, v] : std::initializer_list<std::pair<const char*, double>>{
             {"L", k.L}, {"kappa_bound", k.kappa_bound}, {"alpha", k.alpha}, {"beta", k.beta}, {"L_g", k.L_g}}) {
      e << YAML::Key << name << YAML::Value;
      num(e, v);
    }
    e << YAML::EndMap;
  }
  e << YAML::EndMap;

  e << YAML::Key << "pde" << YAML::Value;
  grid(e, c.pde);

  const auto& mc = c.mc;
  e << YAML::Key << "mc" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "steps" << YAML::Value << mc.steps;
  e << YAML::Key << "particles" << YAML::Value << mc.particles;
  e << YAML::Key << "degree" << YAML::Value << mc.degree;
  e << YAML::Key << "t0" << YAML::Value;
  num(e, mc.t0);
  e << YAML::Key << "x0" << YAML::Value;
  num(e, mc.x0);
  e << YAML::Key << "regime" << YAML::Value << mc.regime;
  e << YAML::Key << "x_spread" << YAML::Value;
  num(e, mc.x_spread);
  e << YAML::Key << "stratify" << YAML::Value << mc.stratify;
  e << YAML::Key << "policy" << YAML::Value << mc.policy;
  e << YAML::EndMap;

  e << YAML::Key << "seed" << YAML::Value << c.seed;

  e << YAML::Key << "tolerances" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "hamiltonian" << YAML::Value;
  num(e, c.tolerances.hamiltonian);
  e << YAML::Key << "value" << YAML::Value;
  num(e, c.tolerances.value);
  e << YAML::Key << "uniqueness" << YAML::Value;
  num(e, c.tolerances.uniqueness);
  e << YAML::EndMap;

  e << YAML::Key << "verify" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "deltas" << YAML::Value;
  list(e, c.verify.deltas);
  e << YAML::Key << "x_probe" << YAML::Value;
  list(e, c.verify.x_probe);
  e << YAML::Key << "alternate" << YAML::Value;
  grid(e, c.verify.alternate);
  e << YAML::Key << "ladder" << YAML::Value << c.verify.ladder;
  e << YAML::EndMap;

  e << YAML::Key << "compare" << YAML::Value << YAML::BeginMap << YAML::Key << "shift" << YAML::Value;
  num(e, c.compare_shift);
  e << YAML::EndMap;
  e << YAML::Key << "picard" << YAML::Value << YAML::BeginMap << YAML::Key << "iterations" << YAML::Value
    << c.picard_iterations << YAML::EndMap;

  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  if (with_output) e << YAML::Key << "dir" << YAML::Value << c.output;
  e << YAML::Key << "surface_stride" << YAML::Value << c.surface_stride;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_hash(const RunConfig& config) {
  return io::hex64(io::fnv1a64(emit_config(config, false)));
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc{} || ptr != end) throw ConfigError(fmt::format("invalid seed '{}'", text));
  return v;
}

}  // namespace hjbi
