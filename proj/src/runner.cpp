#include "hjbi/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hjbi/bsde.hpp"
#include "hjbi/verify.hpp"

namespace hjbi {
namespace {

using Json = nlohmann::ordered_json;

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json meta_json(const io::ArtifactMeta& meta) {
  return {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
}

// Raised inside a pipeline to leave with a specific exit code.
struct Abort {
  int code;
  std::string message;
};

class Pipeline {
 public:
  Pipeline(const RunConfig& config, RunSummary& summary, int refine)
      : config_(config), summary_(summary), refine_(refine), dir_(config.output) {
    meta_.config_hash = summary.config_hash;
  }

  template <class F>
  auto stage(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      Pipeline* self;
      std::string name;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
        self->summary_.stages.push_back({name, d.count()});
      }
    } record{this, name, start};
    return body();
  }

  void write(const std::string& file, const std::string& text) {
    io::write_file((dir_ / file).string(), text);
    summary_.artifacts.push_back(file);
  }

  template <class F>
  void write_stream(const std::string& file, F&& body) {
    std::ostringstream os;
    body(os);
    write(file, os.str());
  }

  void headline(const std::string& key, double v) { summary_.headline.emplace_back(key, v); }
  void check(const std::string& key, bool ok) { summary_.checks.emplace_back(key, ok); }

  GameSpec validated_spec(ValidationMode mode) {
    auto spec = config_.spec();
    const auto report = validate_spec(spec, mode);
    if (!report.valid()) {
      write("validation.json", report.to_json());
      throw Abort{kExitValidation, fmt::format("problem '{}' fails {} validation", spec.problem, to_string(mode))};
    }
    return spec;
  }

  void solve_pde() {
    const auto spec = validated_spec(ValidationMode::pde_existence);
    const auto& mc = config_.mc;
    const bool game = !spec.controls.singleton();
    std::vector<GameSide> sides{GameSide::lower};
    if (game) sides.push_back(GameSide::upper);
    for (auto side : sides) {
      const auto sol = stage(fmt::format("pde_{}", to_string(side)),
                             [&] { return solve_pde_checked(spec, config_.pde.scheme(), side); });
      write_stream(fmt::format("pde_{}.csv", to_string(side)),
                   [&](std::ostream& os) { write_pde_surface_csv(os, sol, meta_, config_.surface_stride); });
      for (int i = 1; i <= spec.m; ++i) {
        headline(fmt::format("{}.regime{}", to_string(side), i), sol.value(mc.t0, mc.x0, i));
      }
      if (side == GameSide::lower && game) {
        double gap = 0.0;
        for (int k = 0; k <= sol.time.K; ++k) gap = std::max(gap, isaacs_gap(spec, sol.time.t(k), sol.slice(k)));
        headline("isaacs_gap", gap);
      }
    }
    if (refine_ > 0) {
      std::vector<double> values;
      std::vector<LadderPoint> points;
      auto p = config_.pde.scheme();
      for (int l = 0; l <= refine_; ++l) {
        const auto sol = stage(fmt::format("pde_ladder_{}", l), [&] { return solve_pde_checked(spec, p, GameSide::lower); });
        values.push_back(sol.value(mc.t0, mc.x0, mc.regime));
        points.push_back({sol.time.dt(), sol.grid.dx(), std::nullopt, 0.0});
        p = refined(p);
      }
      const auto oracle = catalog_oracle(spec, GameSide::lower, mc.t0, mc.x0, mc.regime);
      emit_ladder(points, values, oracle);
    }
  }

  void solve_bsde() {
    const auto spec = validated_spec(ValidationMode::mc_only);
    const auto& mc = config_.mc;
    const auto policy = make_policy(spec);
    const auto bsde = make_game_bsde(spec, policy);
    const double xv[1] = {mc.x0};
    const auto cloud = stage("forward", [&] { return simulate(spec, policy, mc.steps, mc.particles); });
    const auto sol = stage("regression", [&] { return solve_regression(bsde, cloud, bsde_options()); });
    write_stream("bsde_coefficients.csv", [&](std::ostream& os) { write_coefficients_csv(os, sol, meta_); });
    std::vector<double> xs;
    const auto& g = config_.pde;
    for (int j = 0; j <= g.intervals; j += std::max(1, g.intervals / 40)) xs.push_back(SpatialGrid(g.x_min, g.x_max, g.intervals).x(j));
    write_stream("bsde_surface.csv", [&](std::ostream& os) { write_value_surface_csv(os, sol, xs, meta_); });
    for (int i = 1; i <= spec.m; ++i) {
      if (sol.fit_count[static_cast<std::size_t>(i - 1)] == 0) continue;
      headline(fmt::format("y0.regime{}", i), sol.value(0, i, xv));
      headline(fmt::format("y0_stderr.regime{}", i), sol.stderr_at(0, i));
    }
    if (config_.picard_iterations > 0) {
      PicardOptions po;
      po.iterations = config_.picard_iterations;
      const auto pr = stage("picard", [&] { return picard_iterate(bsde, cloud, po, bsde_options()); });
      write("picard.json", picard_log_json(pr, meta_));
      headline("picard_b", pr.b);
      if (pr.aborted) throw Abort{kExitSolver, "Picard iteration expanded"};
    }
    if (refine_ > 0) {
      std::vector<double> values;
      std::vector<LadderPoint> points;
      int steps = mc.steps, particles = mc.particles;
      for (int l = 0; l <= refine_; ++l) {
        const auto c = stage(fmt::format("bsde_ladder_{}", l), [&] { return simulate(spec, policy, steps, particles); });
        const auto s = solve_regression(bsde, c, bsde_options());
        values.push_back(s.value(0, mc.regime, xv));
        points.push_back({c.grid.dt(), std::nullopt, particles, 0.0});
        steps *= 2;
        particles *= 4;
      }
      const auto oracle = catalog_oracle(spec, GameSide::lower, mc.t0, mc.x0, mc.regime);
      emit_ladder(points, values, oracle);
    }
  }

  void verify() {
    const auto spec = validated_spec(ValidationMode::pde_existence);
    const auto& mc = config_.mc;
    const auto vo = verify_options();
    VerificationReport rep;
    rep.problem = spec.problem;
    const bool singleton = spec.controls.singleton();
    rep.representation_kind = singleton ? "feynman_kac" : "feedback";
    rep.representation = stage("representation", [&] {
      return singleton ? feynman_kac_gap(spec, mc.t0, mc.x0, mc.regime, mc.particles, vo)
                       : feedback_value_gap(spec, mc.t0, mc.x0, mc.regime, mc.particles, vo);
    });
    rep.dpp = stage("dpp", [&] { return dpp_check(spec, mc.t0, mc.x0, mc.regime, config_.verify.deltas, mc.particles, vo); });
    if (!singleton) {
      rep.value = stage("value", [&] {
        return value_exists_check(spec, config_.pde.scheme(), config_.tolerances.hamiltonian, config_.tolerances.value);
      });
    }
    rep.regularity = stage("regularity", [&] { return regularity_check(spec, config_.pde.scheme(), config_.verify.x_probe); });
    rep.uniqueness = stage("uniqueness", [&] {
      UniquenessOptions uo;
      uo.tolerance = config_.tolerances.uniqueness;
      auto a = config_.pde.scheme(), b = config_.verify.alternate.scheme();
      for (int l = 0; l < config_.verify.ladder; ++l) {
        uo.ladder_a.push_back(a);
        uo.ladder_b.push_back(b);
        a = refined(a);
        b = refined(b);
      }
      return uniqueness_evidence(spec, uo);
    });
    write("verification.json", to_json(rep, meta_));
    headline("representation_gap", rep.representation->gap);
    headline("representation_stderr", rep.representation->std_error);
    for (std::size_t k = 0; k < rep.dpp->deltas.size(); ++k) {
      headline(fmt::format("dpp_residual.{}", io::format_number(rep.dpp->deltas[k])), rep.dpp->residual[k]);
    }
    if (rep.value) {
      headline("isaacs_gap", rep.value->isaacs_gap);
      headline("value_gap", rep.value->value_gap);
    }
    headline("uniqueness_disagreement", rep.uniqueness->rungs.back().disagreement);
    check("representation", rep.representation->pass);
    check("dpp_first_order", rep.dpp->first_order);
    if (rep.value) check("value_exists", rep.value->pass);
    check("regularity_stable", rep.regularity->stable());
    check("uniqueness", rep.uniqueness->pass);

    if (refine_ > 0) {
      std::vector<LadderPoint> points;
      auto v = vo;
      v.refine = false;
      int particles = mc.particles;
      for (int l = 0; l <= refine_; ++l) {
        const auto g = stage(fmt::format("gap_ladder_{}", l), [&] {
          return singleton ? feynman_kac_gap(spec, mc.t0, mc.x0, mc.regime, particles, v)
                           : feedback_value_gap(spec, mc.t0, mc.x0, mc.regime, particles, v);
        });
        points.push_back({(spec.T - mc.t0) / v.mc_steps, v.pde.grid.dx(), particles, g.gap});
        v.pde = refined(v.pde);
        v.mc_steps *= 2;
        particles *= 4;
      }
      write_stream("gap_table.csv", [&](std::ostream& os) { emit_convergence_table(os, points, meta_); });
    }
    if (!rep.pass()) throw Abort{kExitAcceptance, "verification checks failed"};
  }

  void compare() {
    const auto spec = validated_spec(ValidationMode::mc_only);
    const auto& mc = config_.mc;
    const auto policy = make_policy(spec);
    const auto bsde = make_game_bsde(spec, policy);
    const auto shifted = with_terminal_shift(bsde, -config_.compare_shift);
    const auto cloud = stage("forward", [&] { return simulate(spec, policy, mc.steps, mc.particles); });
    const double xv[1] = {mc.x0};
    const auto rep = stage("compare", [&] { return compare_solutions(bsde, shifted, cloud, mc.regime, xv, bsde_options()); });
    Json j;
    j["meta"] = meta_json(meta_);
    j["problem"] = spec.problem;
    j["shift"] = config_.compare_shift;
    j["refused"] = rep.refused;
    j["refusal"] = rep.refusal;
    j["min_margin"] = number(rep.min_margin);
    j["tol_mc"] = number(rep.tol_mc);
    j["dominated"] = rep.dominated;
    j["strict_fraction"] = number(rep.strict_fraction);
    j["y0_diff"] = number(rep.y0_diff);
    j["y0_stderr"] = number(rep.y0_stderr);
    j["strict"] = rep.strict;
    write("compare.json", j.dump(2) + "\n");
    if (rep.refused) throw Abort{kExitValidation, rep.refusal};
    headline("min_margin", rep.min_margin);
    headline("y0_diff", rep.y0_diff);
    headline("y0_stderr", rep.y0_stderr);
    check("dominated", rep.dominated);
    if (rep.strict_fraction > 0.0) check("strict", rep.strict);
    if (!rep.dominated || (rep.strict_fraction > 0.0 && !rep.strict)) {
      throw Abort{kExitAcceptance, "comparison ordering violated"};
    }
  }

  void bench() {
    const auto spec = validated_spec(ValidationMode::pde_existence);
    const auto& mc = config_.mc;
    const double xv[1] = {mc.x0};
    const auto policy = make_policy(spec);
    const auto bsde = make_game_bsde(spec, policy);
    const int levels = refine_ + 1;
    write_stream("bench.csv", [&](std::ostream& os) {
      io::CsvWriter w(os, meta_, {"stage", "level", "dt", "dx", "particles", "value"});
      auto p = config_.pde.scheme();
      for (int l = 0; l < levels; ++l) {
        const auto sol = stage(fmt::format("bench_pde_{}", l), [&] { return solve_pde_checked(spec, p, GameSide::lower); });
        w.row({std::string("pde"), static_cast<long long>(l), sol.time.dt(), sol.grid.dx(), std::string(),
               sol.value(mc.t0, mc.x0, mc.regime)});
        p = refined(p);
      }
      int steps = mc.steps, particles = mc.particles;
      for (int l = 0; l < levels; ++l) {
        const auto s = stage(fmt::format("bench_bsde_{}", l), [&] {
          return solve_regression(bsde, simulate(spec, policy, steps, particles), bsde_options());
        });
        w.row({std::string("bsde"), static_cast<long long>(l), s.grid.dt(), std::string(),
               static_cast<long long>(particles), s.value(0, mc.regime, xv)});
        steps *= 2;
        particles *= 4;
      }
    });
  }

 private:
  PdeSolution solve_pde_checked(const GameSpec& spec, const SchemeParams& p, GameSide side) {
    try {
      return hjbi::solve_pde(spec, p, side);
    } catch (const CflError& e) {
      throw Abort{kExitValidation, e.what()};
    }
  }

  ControlPolicy make_policy(const GameSpec& spec) {
    if (config_.mc.policy == "feedback" && !spec.controls.singleton()) {
      const auto sol = stage("pde_feedback", [&] { return solve_pde_checked(spec, config_.pde.scheme(), GameSide::lower); });
      return extract_feedback(sol);
    }
    return ConstantControl{spec.controls.u_points.front(), spec.controls.v_points.front()};
  }

  ForwardCloud simulate(const GameSpec& spec, const ControlPolicy& policy, int steps, int particles) {
    const auto& mc = config_.mc;
    const double xv[1] = {mc.x0};
    CloudOptions co;
    co.stratify_regimes = mc.stratify && spec.m > 1;
    co.x_spread = mc.x_spread;
    return simulate_forward(spec, TimeGrid(mc.t0, spec.T, steps), mc.regime, xv, policy, particles, config_.seed, co);
  }

  BsdeOptions bsde_options() const {
    BsdeOptions bo;
    bo.degree = config_.mc.degree;
    return bo;
  }

  VerifyOptions verify_options() const {
    VerifyOptions vo;
    vo.pde = config_.pde.scheme();
    vo.mc_steps = config_.mc.steps;
    vo.degree = config_.mc.degree;
    vo.x_spread = config_.mc.x_spread;
    vo.seed = config_.seed;
    return vo;
  }

  // Errors against the oracle, or successive differences without one.
  void emit_ladder(std::vector<LadderPoint> points, const std::vector<double>& values, std::optional<double> oracle) {
    if (oracle) {
      for (std::size_t l = 0; l < points.size(); ++l) points[l].error = std::abs(values[l] - *oracle);
    } else {
      points.pop_back();
      for (std::size_t l = 0; l < points.size(); ++l) points[l].error = std::abs(values[l] - values[l + 1]);
    }
    write_stream("convergence.csv", [&](std::ostream& os) { emit_convergence_table(os, points, meta_); });
    write("convergence.json", convergence_json(points, meta_));
  }

  const RunConfig& config_;
  RunSummary& summary_;
  int refine_;
  std::filesystem::path dir_;
  io::ArtifactMeta meta_;
};

}  // namespace

std::string RunSummary::to_json(const io::ArtifactMeta& meta) const {
  Json j;
  j["meta"] = meta_json(meta);
  j["subcommand"] = subcommand;
  j["config_hash"] = config_hash;
  Json h = Json::object();
  for (const auto& [k, v] : headline) h[k] = number(v);
  j["headline"] = h;
  Json c = Json::object();
  for (const auto& [k, v] : checks) c[k] = v;
  j["checks"] = c;
  j["artifacts"] = artifacts;
  j["exit_code"] = exit_code;
  j["message"] = message;
  return j.dump(2) + "\n";
}

RunSummary run(const std::string& subcommand, const RunConfig& config, int refine) {
  RunSummary s;
  s.subcommand = subcommand;
  s.config_hash = config_hash(config);
  io::ArtifactMeta meta;
  meta.config_hash = s.config_hash;
  const std::map<std::string, void (Pipeline::*)()> table{
      {"solve-pde", &Pipeline::solve_pde}, {"solve-bsde", &Pipeline::solve_bsde}, {"verify", &Pipeline::verify},
      {"compare", &Pipeline::compare},     {"bench", &Pipeline::bench}};
  try {
    const auto it = table.find(subcommand);
    if (it == table.end()) throw ConfigError(fmt::format("unknown subcommand '{}'", subcommand));
    if (refine < 0) throw ConfigError("refine must be non-negative");
    std::error_code ec;
    std::filesystem::create_directories(config.output, ec);
    if (ec || !std::filesystem::is_directory(config.output)) {
      throw ConfigError(fmt::format("output directory '{}' is not writable", config.output));
    }
    Pipeline p(config, s, refine);
    p.write("config.yaml", emit_config(config));
    (p.*(it->second))();
  } catch (const Abort& a) {
    s.exit_code = a.code;
    s.message = a.message;
  } catch (const ConfigError& e) {
    s.exit_code = kExitConfig;
    s.message = e.what();
  } catch (const ProblemError& e) {
    s.exit_code = kExitConfig;
    s.message = e.what();
  } catch (const std::invalid_argument& e) {
    s.exit_code = kExitConfig;
    s.message = e.what();
  } catch (const CflError& e) {
    s.exit_code = kExitValidation;
    s.message = e.what();
  } catch (const std::exception& e) {
    s.exit_code = kExitSolver;
    s.message = e.what();
  }
  if (s.exit_code != kExitConfig) {
    try {
      s.artifacts.push_back("summary.json");
      io::write_file((std::filesystem::path(config.output) / "summary.json").string(), s.to_json(meta));
    } catch (const std::exception& e) {
      s.artifacts.pop_back();
      s.exit_code = kExitConfig;
      s.message = e.what();
    }
  }
  return s;
}

std::vector<std::optional<double>> convergence_ratios(const std::vector<LadderPoint>& points) {
  std::vector<std::optional<double>> out(points.size());
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double a = points[k].error, b = points[k + 1].error;
    if (a == b) out[k] = 1.0;
    else if (b != 0.0) out[k] = a / b;
  }
  return out;
}

void emit_convergence_table(std::ostream& os, const std::vector<LadderPoint>& points, const io::ArtifactMeta& meta) {
  io::CsvWriter w(os, meta, {"dt", "dx", "particles", "error", "ratio"});
  const auto ratios = convergence_ratios(points);
  const auto opt = [](const auto& v) -> io::CsvField {
    if (!v) return std::string();
    return *v;
  };
  for (std::size_t k = 0; k < points.size(); ++k) {
    w.row({opt(points[k].dt), opt(points[k].dx), opt(points[k].particles), points[k].error, opt(ratios[k])});
  }
}

std::string convergence_json(const std::vector<LadderPoint>& points, const io::ArtifactMeta& meta) {
  const auto ratios = convergence_ratios(points);
  Json rows = Json::array();
  const auto opt = [](const auto& v) -> Json { return v ? Json(*v) : Json(nullptr); };
  for (std::size_t k = 0; k < points.size(); ++k) {
    Json r;
    r["dt"] = opt(points[k].dt);
    r["dx"] = opt(points[k].dx);
    r["particles"] = opt(points[k].particles);
    r["error"] = number(points[k].error);
    r["ratio"] = opt(ratios[k]);
    rows.push_back(r);
  }
  Json j;
  j["meta"] = meta_json(meta);
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::optional<double> catalog_oracle(const GameSpec& spec, GameSide side, double t, double x, int i) {
  if (spec.n != 1 || !catalog_contains(spec.problem)) return std::nullopt;
  ProblemOverrides o;
  o.T = spec.T;
  if (!same_description(spec, make_problem(spec.problem, o))) return std::nullopt;
  const double tau = spec.T - t;
  const auto& name = spec.problem;
  if (name == "zero_dynamics" || name == "compensated_jump") return x;
  if (name == "constant_driver") return tau;
  if (name == "coupled_linear") return i == 1 ? (1 - std::exp(-2 * tau)) / 2 : (1 + std::exp(-2 * tau)) / 2;
  if (name == "separable_game") return x - tau;
  if (name == "bilinear_game") return side == GameSide::lower ? x - tau : x + tau;
  if (name == "heat_quadratic") return x * x + tau;
  if (name == "linear_driver") return x * std::exp(tau);
  return std::nullopt;
}

}  // namespace hjbi
