#include "jointfit/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "jointfit/dataset.hpp"
#include "jointfit/error.hpp"
#include "jointfit/fit.hpp"
#include "jointfit/simulation.hpp"

namespace fs = std::filesystem;

namespace jointfit {

namespace {

const std::set<std::string> kScenarioKeys{"name",          "N",           "max_follow_up",
                                          "true_beta",     "true_sigma_e", "true_sigma_b",
                                          "target_event_rate", "visit_spacing", "dropout_max",
                                          "pilot_size",    "seed"};
const std::set<std::string> kSimulateKeys{"nsim", "levels", "dump", "raw", "reference", "samples"};
const std::set<std::string> kCurveKeys{"fit", "component", "points", "grid", "lo", "hi", "draws"};
const std::set<std::string> kTopKeys{"seed", "threads", "out"};

Json parse_value(const std::string& text) {
  if (text.empty()) return Json("");
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception&) {
  }
  if (text.find(',') != std::string::npos) {
    Json arr = Json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) arr.push_back(parse_value(item));
    return arr;
  }
  return Json(text);
}

std::vector<std::string> split_dots(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) {
    if (p.empty()) throw ConfigError("malformed override key '" + key + "'");
    parts.push_back(p);
  }
  return parts;
}

std::string canonical_key(const std::string& command, const std::string& key) {
  if (key.find('.') != std::string::npos || kTopKeys.count(key)) return key;
  if (command == "simulate") {
    if (key == "scenario") return "scenario.name";
    if (kScenarioKeys.count(key)) return "scenario." + key;
    if (kSimulateKeys.count(key)) return "simulate." + key;
  } else if (command == "fit") {
    if (key == "longitudinal" || key == "survival") return "data." + key;
    if (key == "level") return "model.level";
    if (key == "samples") return "fit.samples";
  } else if (command == "curve") {
    if (kCurveKeys.count(key)) return "curve." + key;
  } else if (command == "compare") {
    if (key == "fits" || key == "labels") return "compare." + key;
  }
  throw ConfigError("unknown option '" + key + "' for command " + command);
}

std::string resolve(const RunConfig& run, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(run.base_dir) / p).lexically_normal().string();
}

const Json* find(const Json& j, const char* block, const char* key) {
  if (!j.contains(block) || !j.at(block).is_object() || !j.at(block).contains(key)) return nullptr;
  return &j.at(block).at(key);
}

template <class T>
T get_or(const Json& j, const char* block, const char* key, T fallback) {
  const Json* v = find(j, block, key);
  if (v == nullptr) return fallback;
  try {
    return v->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("invalid value for ") + block + "." + key + ": " + v->dump());
  }
}

bool truthy(const Json* v) {
  if (v == nullptr) return false;
  if (v->is_boolean()) return v->get<bool>();
  if (v->is_number()) return v->get<double>() != 0.0;
  if (v->is_string()) {
    const std::string s = v->get<std::string>();
    return s == "true" || s == "yes" || s == "1";
  }
  return false;
}

std::vector<AssociationLevel> levels_from(const Json* v) {
  std::vector<AssociationLevel> out;
  if (v == nullptr) return {AssociationLevel::Linear};
  auto one = [](const Json& x) {
    if (x.is_number_integer()) return parse_level(std::to_string(x.get<int>()));
    if (x.is_string()) return parse_level(x.get<std::string>());
    throw ConfigError("invalid association level " + x.dump());
  };
  if (v->is_array()) {
    for (const auto& x : *v) out.push_back(one(x));
  } else {
    out.push_back(one(*v));
  }
  if (out.empty()) throw ConfigError("levels list is empty");
  return out;
}

ScenarioConfig scenario_from(const RunConfig& run) {
  const Json& j = run.config;
  const Json* name = find(j, "scenario", "name");
  if (name == nullptr) throw ConfigError("simulate needs a scenario name (scenario=linear|quadratic|spline)");
  ScenarioConfig c = scenario_defaults(name->is_string() ? name->get<std::string>() : name->dump());
  if (j.contains("scenario")) {
    for (const auto& [k, v] : j.at("scenario").items()) {
      if (!kScenarioKeys.count(k)) throw ConfigError("unknown key '" + k + "' in scenario block");
    }
  }
  c.N = get_or(j, "scenario", "N", c.N);
  c.max_follow_up = get_or(j, "scenario", "max_follow_up", c.max_follow_up);
  c.true_beta = get_or(j, "scenario", "true_beta", c.true_beta);
  c.true_sigma_e = get_or(j, "scenario", "true_sigma_e", c.true_sigma_e);
  c.true_sigma_b = get_or(j, "scenario", "true_sigma_b", c.true_sigma_b);
  c.target_event_rate = get_or(j, "scenario", "target_event_rate", c.target_event_rate);
  c.visit_spacing = get_or(j, "scenario", "visit_spacing", c.visit_spacing);
  c.dropout_max = get_or(j, "scenario", "dropout_max", c.dropout_max);
  c.pilot_size = get_or(j, "scenario", "pilot_size", c.pilot_size);
  c.seed = get_or(j, "scenario", "seed", run.seed());
  c.validate();
  return c;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string fit_label(const std::string& path) {
  const fs::path p(path);
  if (p.filename() == "fit.json" && p.has_parent_path() && !p.parent_path().filename().empty()) {
    return p.parent_path().filename().string();
  }
  return p.stem().string();
}

int report_error(const std::exception& e, std::ostream& err) {
  if (dynamic_cast<const ConvergenceError*>(&e) != nullptr) {
    err << "error: numerical non-convergence: " << e.what() << "\n";
    return kExitNonConvergence;
  }
  err << "error: " << e.what() << "\n";
  return kExitInput;
}

}  // namespace

std::string RunConfig::out_dir() const {
  if (config.contains("out")) return config.at("out").get<std::string>();
  return ".";
}

std::uint64_t RunConfig::seed() const {
  if (!config.contains("seed")) return 1;
  const Json& s = config.at("seed");
  if (s.is_number_unsigned() || s.is_number_integer()) return s.get<std::uint64_t>();
  throw ConfigError("seed must be a non-negative integer, found " + s.dump());
}

int RunConfig::threads() const {
  if (!config.contains("threads")) return 1;
  const Json& t = config.at("threads");
  if (!t.is_number_integer() || t.get<int>() < 1) throw ConfigError("threads must be a positive integer");
  return t.get<int>();
}

void apply_override(RunConfig& run, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("expected key=value, found '" + assignment + "'");
  }
  const std::string key = canonical_key(run.command, assignment.substr(0, eq));
  Json value = parse_value(assignment.substr(eq + 1));
  const std::vector<std::string> parts = split_dots(key);
  Json* node = &run.config;
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->contains(parts[k]) || !(*node)[parts[k]].is_object()) (*node)[parts[k]] = Json::object();
    node = &(*node)[parts[k]];
  }
  // Scalar list overrides given as a single value stay scalar except for lists.
  if ((parts.back() == "levels" || parts.back() == "fits" || parts.back() == "labels" ||
       parts.back() == "grid") && !value.is_array()) {
    value = Json::array({value});
  }
  (*node)[parts.back()] = value;
}

int cmd_fit(const RunConfig& run, std::ostream& out) {
  const Json& j = run.config;
  const Json* lp = find(j, "data", "longitudinal");
  const Json* sp = find(j, "data", "survival");
  if (lp == nullptr || sp == nullptr) {
    throw ConfigError("fit needs data.longitudinal and data.survival CSV paths");
  }
  const JointDataset data = validate_and_join(read_longitudinal_csv(resolve(run, lp->get<std::string>())),
                                              read_survival_csv(resolve(run, sp->get<std::string>())));
  const ModelSpec spec = spec_from_json(j.contains("model") ? j.at("model") : Json());
  FitOptions opt;
  opt.seed = run.seed();
  opt.samples = get_or(j, "fit", "samples", opt.samples);
  opt.outer.max_iterations = get_or(j, "fit", "max_iterations", opt.outer.max_iterations);
  const FitResult res = fit(data, spec, opt);

  const std::string dir = run.out_dir();
  ensure_dir(dir);
  write_json(path_in(dir, "fit.json"), fit_to_json(res));
  write_json(path_in(dir, "timing.json"), timing_to_json(res));
  write_params_csv(path_in(dir, "params.csv"), res);
  for (std::size_t c = 0; c < spec.association.size(); ++c) {
    const int ci = static_cast<int>(c);
    const auto curve = posterior_curve(res, ci, default_curve_grid(res, ci));
    write_curve_csv(path_in(dir, "curve_" + to_string(spec.association[c].kind) + ".csv"), curve,
                    shared_component_summary(res, ci));
  }
  out << "subjects " << res.n_subjects << ", measurements " << res.n_longitudinal
      << ", expanded survival rows " << res.n_survival_rows << "\n";
  for (const auto& p : res.parameters) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %10.4f (sd %.4f) [%.4f, %.4f]\n", p.name.c_str(), p.mean,
                  p.sd, p.q025, p.q975);
    out << line;
  }
  out << "DIC " << res.criteria.dic << "  WAIC " << res.criteria.waic << "\n";
  if (!res.converged) {
    out << "warning: hyperparameter optimization did not converge after " << res.iterations
        << " iterations (gradient max-norm " << res.gradient_norm << ")\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmd_simulate(const RunConfig& run, std::ostream& out) {
  const Json& j = run.config;
  if (j.contains("simulate")) {
    for (const auto& [k, v] : j.at("simulate").items()) {
      if (!kSimulateKeys.count(k)) throw ConfigError("unknown key '" + k + "' in simulate block");
    }
  }
  const ScenarioConfig cfg = scenario_from(run);
  const int nsim = get_or(j, "simulate", "nsim", 0);
  if (nsim < 0) throw ConfigError("nsim must be non-negative");
  const bool dump = truthy(find(j, "simulate", "dump")) || nsim == 0;
  const std::string dir = run.out_dir();
  ensure_dir(dir);

  if (dump) {
    const SimulatedDataset sim = simulate_dataset(cfg);
    write_longitudinal_csv(path_in(dir, "longitudinal.csv"), sim.longitudinal);
    write_survival_csv(path_in(dir, "survival.csv"), sim.survival);
    out << cfg.name << " scenario, N " << cfg.N << ": " << sim.longitudinal.size()
        << " measurements (" << sim.mean_visits << " per subject), event rate " << sim.event_rate
        << "\n";
  }
  if (nsim > 0) {
    ReplicationOptions ro;
    ro.levels = levels_from(find(j, "simulate", "levels"));
    ro.threads = run.threads();
    ro.fit.samples = get_or(j, "simulate", "samples", ro.fit.samples);
    if (const Json* r = find(j, "simulate", "reference")) ro.reference = levels_from(r).front();
    const bool raw = truthy(find(j, "simulate", "raw"));
    ro.keep_raw = raw;
    const ReplicationMetrics m = run_replications(cfg, nsim, ro);
    write_json(path_in(dir, "metrics.json"), metrics_to_json(m));
    write_metrics_csv(path_in(dir, "metrics.csv"), m);
    write_json(path_in(dir, "timing.json"), metrics_timing_json(m));
    if (raw) dump_replicates(path_in(dir, "replicates"), m);
    out << cfg.name << " scenario, " << nsim << " replicates of N " << cfg.N << "\n";
    for (const auto& c : m.criteria) {
      out << "level " << to_string(c.level) << " vs " << to_string(c.reference) << ": dDIC "
          << c.delta_dic_mean << ", dWAIC " << c.delta_waic_mean << "\n";
    }
    for (const auto& l : m.levels) {
      if (l.failures > 0) out << "level " << to_string(l.level) << ": " << l.failures << " failed fits\n";
    }
  }
  return kExitOk;
}

int cmd_compare(const RunConfig& run, std::ostream& out) {
  const Json& j = run.config;
  std::vector<std::string> paths;
  std::vector<std::string> labels;
  if (const Json* f = find(j, "compare", "fits")) {
    for (const auto& p : *f) paths.push_back(resolve(run, p.get<std::string>()));
  }
  for (const auto& p : run.positional) paths.push_back(p);
  if (const Json* l = find(j, "compare", "labels")) labels = l->get<std::vector<std::string>>();
  if (paths.size() < 2) throw ConfigError("compare needs at least two fit.json files");
  if (!labels.empty() && labels.size() != paths.size()) {
    throw ConfigError("compare labels must match the number of fits");
  }
  std::vector<FitComparisonEntry> fits;
  std::set<std::string> used;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    std::string label = labels.empty() ? fit_label(paths[k]) : labels[k];
    while (used.count(label)) label += "'";
    used.insert(label);
    fits.push_back({label, fit_from_json(read_json(paths[k]))});
  }
  const Json report = compare_fits(fits);
  const std::string dir = run.out_dir();
  ensure_dir(dir);
  write_json(path_in(dir, "compare.json"), report);
  const std::string table = comparison_table(report);
  {
    std::ofstream t(path_in(dir, "compare.txt"), std::ios::binary);
    t << table;
  }
  out << table;
  return kExitOk;
}

int cmd_curve(const RunConfig& run, std::ostream& out) {
  const Json& j = run.config;
  std::string path;
  if (const Json* f = find(j, "curve", "fit")) path = resolve(run, f->get<std::string>());
  if (!run.positional.empty()) path = run.positional.front();
  if (path.empty()) throw ConfigError("curve needs a fit.json file");
  const FitResult res = fit_from_json(read_json(path));
  int component = 0;
  if (const Json* c = find(j, "curve", "component")) {
    if (c->is_number_integer()) {
      component = c->get<int>();
    } else {
      const std::string want = c->get<std::string>();
      component = -1;
      for (std::size_t k = 0; k < res.spec.association.size(); ++k) {
        if (to_string(res.spec.association[k].kind) == want || res.spec.association[k].label() == want) {
          component = static_cast<int>(k);
        }
      }
      if (component < 0) throw ConfigError("fit has no association component '" + want + "'");
    }
  }
  if (component < 0 || component >= static_cast<int>(res.spec.association.size())) {
    throw ConfigError("component index " + std::to_string(component) + " out of range");
  }
  std::vector<double> grid;
  if (const Json* g = find(j, "curve", "grid")) {
    grid = g->get<std::vector<double>>();
  } else {
    const int points = get_or(j, "curve", "points", 201);
    grid = default_curve_grid(res, component, points);
    const Json* lo = find(j, "curve", "lo");
    const Json* hi = find(j, "curve", "hi");
    if (lo != nullptr || hi != nullptr) {
      const double a = lo != nullptr ? lo->get<double>() : grid.front();
      const double b = hi != nullptr ? hi->get<double>() : grid.back();
      if (!(b > a)) throw ConfigError("curve grid needs lo < hi");
      for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = i == points - 1 ? b : a + (b - a) * i / (points - 1);
    }
  }
  const int draws = get_or(j, "curve", "draws", 1000);
  const auto curve = posterior_curve(res, component, grid, draws);
  const SharedComponentSummary summary = shared_component_summary(res, component);
  const std::string dir = run.out_dir();
  ensure_dir(dir);
  const std::string name =
      "curve_" + to_string(res.spec.association[static_cast<std::size_t>(component)].kind) + ".csv";
  write_curve_csv(path_in(dir, name), curve, summary);
  out << "wrote " << path_in(dir, name) << " (" << curve.size() << " grid points)\n";
  for (std::size_t k = 0; k < summary.percent.size(); ++k) {
    out << "P" << static_cast<int>(summary.percent[k]) << " " << summary.percentiles[k] << "\n";
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian joint models of longitudinal and survival data with flexible association"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir;
  std::vector<std::string> extras;
  const std::map<std::string, std::string> help{
      {"fit", "fit a joint model to longitudinal and survival CSVs"},
      {"simulate", "generate scenario data or run a replication study"},
      {"compare", "compare fits of the same data by DIC, WAIC and the pairwise WAIC test"},
      {"curve", "export the posterior association curve of a fit"}};
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--threads", threads, "threads for replication studies");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("args", extras, "key=value overrides and input files");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  try {
    RunConfig run;
    run.command = app.get_subcommands().front()->get_name();
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) {
      run.config = read_json(config_path);
      if (!run.config.is_object()) throw ConfigError("configuration must be a JSON object");
      run.base_dir = fs::path(config_path).parent_path().string();
      if (run.base_dir.empty()) run.base_dir = ".";
    }
    for (const auto& e : extras) {
      if (e.find('=') != std::string::npos) {
        apply_override(run, e);
      } else {
        run.positional.push_back(e);
      }
    }
    if (sub->count("--seed") > 0) run.config["seed"] = seed;
    if (sub->count("--threads") > 0) run.config["threads"] = threads;
    if (sub->count("--out") > 0) run.config["out"] = out_dir;
    if (!run.positional.empty() && run.command != "compare" && run.command != "curve") {
      throw ConfigError("unexpected argument '" + run.positional.front() + "'");
    }
    if (run.command == "fit") return cmd_fit(run, out);
    if (run.command == "simulate") return cmd_simulate(run, out);
    if (run.command == "compare") return cmd_compare(run, out);
    return cmd_curve(run, out);
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

}  // namespace jointfit
