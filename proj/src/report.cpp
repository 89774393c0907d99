#include "jointfit/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "jointfit/error.hpp"

namespace jointfit {

namespace {

// NaN and infinities are written as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double get_num(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw InputError("expected a number, found " + j.dump());
  return j.get<double>();
}

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Json vec(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> to_std(const Json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(get_num(x));
  return v;
}

Eigen::VectorXd to_eigen(const Json& j) {
  const std::vector<double> v = to_std(j);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const Json& at(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw InputError(std::string("malformed fit file: missing key '") + key + "'");
  }
  return j.at(key);
}

Json level_json(AssociationLevel level) { return to_string(level); }

AssociationLevel level_from(const Json& j) {
  if (j.is_number_integer()) return parse_level(std::to_string(j.get<int>()));
  return parse_level(j.get<std::string>());
}

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

Json criteria_json(const PointwiseCriteria& c, bool with_dic_penalty) {
  Json j;
  j["dic"] = num(c.dic);
  if (with_dic_penalty) j["p_dic"] = num(c.p_dic);
  j["waic"] = num(c.waic);
  j["p_waic"] = num(c.p_waic);
  j["lppd"] = num(c.lppd);
  return j;
}

}  // namespace

ModelSpec default_model_spec() {
  ModelSpec s;
  s.fixed_effects = {FixedTerm::parse("1"), FixedTerm::parse("time")};
  s.association.push_back({SharedKind::CurrentValue, AssociationLevel::Linear, 5});
  return s;
}

Json spec_to_json(const ModelSpec& spec) {
  Json j;
  j["fixed_effects"] = Json::array();
  for (const auto& t : spec.fixed_effects) j["fixed_effects"].push_back(t.label());
  j["random_effects"] = Json::array();
  if (spec.random_effects.intercept) j["random_effects"].push_back("intercept");
  if (spec.random_effects.slope) j["random_effects"].push_back("slope");
  j["survival_covariates"] = spec.survival_covariates;
  j["association"] = Json::array();
  for (const auto& c : spec.association) {
    j["association"].push_back({{"kind", to_string(c.kind)}, {"level", level_json(c.level)}, {"knots", c.knots}});
  }
  j["baseline_knots"] = spec.baseline_knots;
  j["evaluation"] = spec.evaluation == EvaluationPoint::Midpoint ? "midpoint" : "start";
  j["association_scaling"] =
      spec.association_scaling == PrecisionScaling::None ? "none" : "geometric_mean";
  const Priors& p = spec.priors;
  j["priors"] = {{"fixed_effect_variance", p.fixed_effect_variance},
                 {"residual_shape", p.residual_shape},
                 {"residual_scale", p.residual_scale},
                 {"re_df", p.re_df},
                 {"baseline_sd_threshold", p.baseline_sd_threshold},
                 {"baseline_sd_tail", p.baseline_sd_tail},
                 {"gamma_variance", p.gamma_variance},
                 {"deviation_rate", p.deviation_rate}};
  return j;
}

ModelSpec spec_from_json(const Json& j) {
  ModelSpec s = default_model_spec();
  if (j.is_null()) return s;
  if (!j.is_object()) throw ConfigError("model block must be an object");
  check_keys(j,
             {"fixed_effects", "random_effects", "survival_covariates", "association", "level",
              "baseline_knots", "evaluation", "association_scaling", "priors"},
             "model block");
  try {
    if (j.contains("fixed_effects")) {
      s.fixed_effects.clear();
      for (const auto& t : j.at("fixed_effects")) s.fixed_effects.push_back(FixedTerm::parse(t.get<std::string>()));
    }
    if (j.contains("random_effects")) {
      s.random_effects = {false, false};
      for (const auto& t : j.at("random_effects")) {
        const std::string v = t.get<std::string>();
        if (v == "intercept" || v == "1") {
          s.random_effects.intercept = true;
        } else if (v == "slope" || v == "time") {
          s.random_effects.slope = true;
        } else {
          throw ConfigError("unknown random effect '" + v + "' (expected intercept or slope)");
        }
      }
    }
    if (j.contains("survival_covariates")) {
      s.survival_covariates = j.at("survival_covariates").get<std::vector<std::string>>();
    }
    if (j.contains("association")) {
      s.association.clear();
      for (const auto& c : j.at("association")) {
        check_keys(c, {"kind", "level", "knots"}, "association component");
        AssociationComponent comp;
        if (c.contains("kind")) comp.kind = parse_shared_kind(c.at("kind").get<std::string>());
        if (c.contains("level")) comp.level = level_from(c.at("level"));
        if (c.contains("knots")) comp.knots = c.at("knots").get<int>();
        s.association.push_back(comp);
      }
    }
    if (j.contains("level")) {
      const AssociationLevel l = level_from(j.at("level"));
      for (auto& c : s.association) c.level = l;
    }
    if (j.contains("baseline_knots")) s.baseline_knots = j.at("baseline_knots").get<int>();
    if (j.contains("evaluation")) {
      const std::string e = j.at("evaluation").get<std::string>();
      if (e == "midpoint") {
        s.evaluation = EvaluationPoint::Midpoint;
      } else if (e == "start") {
        s.evaluation = EvaluationPoint::IntervalStart;
      } else {
        throw ConfigError("unknown evaluation point '" + e + "' (expected midpoint or start)");
      }
    }
    if (j.contains("association_scaling")) {
      const std::string e = j.at("association_scaling").get<std::string>();
      if (e == "none") {
        s.association_scaling = PrecisionScaling::None;
      } else if (e == "geometric_mean") {
        s.association_scaling = PrecisionScaling::GeometricMean;
      } else {
        throw ConfigError("unknown association_scaling '" + e + "'");
      }
    }
    if (j.contains("priors")) {
      const Json& p = j.at("priors");
      check_keys(p,
                 {"fixed_effect_variance", "residual_shape", "residual_scale", "re_df",
                  "baseline_sd_threshold", "baseline_sd_tail", "gamma_variance", "deviation_rate"},
                 "priors block");
      auto set = [&](const char* k, double& dst) {
        if (p.contains(k)) dst = p.at(k).get<double>();
      };
      set("fixed_effect_variance", s.priors.fixed_effect_variance);
      set("residual_shape", s.priors.residual_shape);
      set("residual_scale", s.priors.residual_scale);
      set("re_df", s.priors.re_df);
      set("baseline_sd_threshold", s.priors.baseline_sd_threshold);
      set("baseline_sd_tail", s.priors.baseline_sd_tail);
      set("gamma_variance", s.priors.gamma_variance);
      set("deviation_rate", s.priors.deviation_rate);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model block: ") + e.what());
  }
  s.validate();
  return s;
}

Json fit_to_json(const FitResult& f) {
  Json j;
  j["format"] = "jointfit-fit";
  j["version"] = 1;
  j["seed"] = f.seed;
  j["samples"] = f.samples;
  j["data"] = {{"fingerprint", f.fingerprint},
               {"n_subjects", f.n_subjects},
               {"n_longitudinal", f.n_longitudinal},
               {"n_survival_rows", f.n_survival_rows}};
  j["spec"] = spec_to_json(f.spec);
  j["converged"] = f.converged;
  j["timing"] = {{"outer_iterations", f.iterations},
                 {"objective_evaluations", f.evaluations},
                 {"inner_iterations", f.inner_iterations}};
  j["optimizer"] = {{"objective", num(f.objective)},
                    {"initial_objective", num(f.initial_objective)},
                    {"gradient_norm", num(f.gradient_norm)}};
  Json params = Json::array();
  for (const auto& p : f.parameters) {
    params.push_back({{"name", p.name},
                      {"mode", num(p.mode)},
                      {"mean", num(p.mean)},
                      {"sd", num(p.sd)},
                      {"q2.5", num(p.q025)},
                      {"q97.5", num(p.q975)}});
  }
  j["parameters"] = params;
  Json cov = Json::array();
  for (Eigen::Index r = 0; r < f.hyper_cov.rows(); ++r) cov.push_back(vec(Eigen::VectorXd(f.hyper_cov.row(r).transpose())));
  j["hyper"] = {{"names", f.hyper_names}, {"mode", vec(f.hyper_mode)}, {"covariance", cov}};
  j["latent"] = {{"mode", vec(f.latent_mode)}, {"sd", vec(f.latent_sd)}};

  Json crit = criteria_json(f.criteria, true);
  if (f.criteria.waic_contrib.size() == f.n_longitudinal + f.n_survival_rows) {
    crit["longitudinal"] = criteria_json(criteria_subset(f.criteria, 0, f.n_longitudinal), false);
    crit["survival"] = criteria_json(
        criteria_subset(f.criteria, f.n_longitudinal, f.criteria.waic_contrib.size()), false);
  }
  j["criteria"] = crit;
  j["pointwise"] = {{"waic", vec(f.criteria.waic_contrib)},
                    {"lppd", vec(f.criteria.lppd_pointwise)},
                    {"p_waic", vec(f.criteria.p_waic_pointwise)},
                    {"dic", vec(f.criteria.dic_contrib)}};

  Json cal = Json::array();
  for (std::size_t c = 0; c < f.calibration.components.size(); ++c) {
    const auto& cc = f.calibration.components[c];
    const SharedComponentSummary s = summarize_values(cc.nu_tilde);
    Json pct;
    for (std::size_t k = 0; k < s.percent.size(); ++k) {
      pct["P" + std::to_string(static_cast<int>(s.percent[k]))] = num(s.percentiles[k]);
    }
    cal.push_back({{"component", cc.component.label()},
                   {"domain", {num(cc.domain.lo), num(cc.domain.hi)}},
                   {"knots", vec(cc.knots)},
                   {"percentiles", pct},
                   {"histogram", {{"edges", vec(s.bin_edges)}, {"counts", vec(s.bin_counts)}}},
                   {"nu_tilde", vec(cc.nu_tilde)}});
  }
  j["calibration"] = cal;
  return j;
}

FitResult fit_from_json(const Json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != "jointfit-fit") {
      throw InputError("malformed fit file: not a jointfit fit document");
    }
    FitResult f;
    f.seed = at(j, "seed").get<std::uint64_t>();
    f.samples = at(j, "samples").get<int>();
    const Json& d = at(j, "data");
    f.fingerprint = at(d, "fingerprint").get<std::string>();
    f.n_subjects = at(d, "n_subjects").get<std::size_t>();
    f.n_longitudinal = at(d, "n_longitudinal").get<std::size_t>();
    f.n_survival_rows = at(d, "n_survival_rows").get<std::size_t>();
    f.spec = spec_from_json(at(j, "spec"));
    f.converged = at(j, "converged").get<bool>();
    const Json& t = at(j, "timing");
    f.iterations = at(t, "outer_iterations").get<int>();
    f.evaluations = at(t, "objective_evaluations").get<int>();
    f.inner_iterations = at(t, "inner_iterations").get<int>();
    const Json& o = at(j, "optimizer");
    f.objective = get_num(at(o, "objective"));
    f.initial_objective = get_num(at(o, "initial_objective"));
    f.gradient_norm = get_num(at(o, "gradient_norm"));
    for (const auto& p : at(j, "parameters")) {
      f.parameters.push_back({at(p, "name").get<std::string>(), get_num(at(p, "mode")),
                              get_num(at(p, "mean")), get_num(at(p, "sd")), get_num(at(p, "q2.5")),
                              get_num(at(p, "q97.5"))});
    }
    const Json& h = at(j, "hyper");
    f.hyper_names = at(h, "names").get<std::vector<std::string>>();
    f.hyper_mode = to_eigen(at(h, "mode"));
    const Json& cov = at(h, "covariance");
    const auto d_h = static_cast<Eigen::Index>(f.hyper_mode.size());
    if (static_cast<Eigen::Index>(cov.size()) != d_h) throw InputError("malformed fit file: covariance shape");
    f.hyper_cov.resize(d_h, d_h);
    for (Eigen::Index r = 0; r < d_h; ++r) {
      const Eigen::VectorXd row = to_eigen(cov.at(static_cast<std::size_t>(r)));
      if (row.size() != d_h) throw InputError("malformed fit file: covariance shape");
      f.hyper_cov.row(r) = row.transpose();
    }
    const Json& l = at(j, "latent");
    f.latent_mode = to_eigen(at(l, "mode"));
    f.latent_sd = to_eigen(at(l, "sd"));

    const Json& c = at(j, "criteria");
    f.criteria.dic = get_num(at(c, "dic"));
    f.criteria.p_dic = get_num(at(c, "p_dic"));
    f.criteria.waic = get_num(at(c, "waic"));
    f.criteria.p_waic = get_num(at(c, "p_waic"));
    f.criteria.lppd = get_num(at(c, "lppd"));
    const Json& pw = at(j, "pointwise");
    f.criteria.waic_contrib = to_std(at(pw, "waic"));
    f.criteria.lppd_pointwise = to_std(at(pw, "lppd"));
    f.criteria.p_waic_pointwise = to_std(at(pw, "p_waic"));
    f.criteria.dic_contrib = to_std(at(pw, "dic"));

    const Json& cal = at(j, "calibration");
    if (cal.size() != f.spec.association.size()) {
      throw InputError("malformed fit file: calibration does not match the association components");
    }
    for (std::size_t k = 0; k < cal.size(); ++k) {
      const Json& cc = cal.at(k);
      ComponentCalibration comp;
      comp.component = f.spec.association[k];
      const std::vector<double> dom = to_std(at(cc, "domain"));
      if (dom.size() != 2) throw InputError("malformed fit file: domain needs two values");
      comp.domain = {dom[0], dom[1]};
      comp.knots = to_std(at(cc, "knots"));
      comp.nu_tilde = to_std(at(cc, "nu_tilde"));
      if (comp.component.level != AssociationLevel::Linear) {
        comp.basis = build_basis(rw2_precision(comp.component.knots), comp.domain,
                                 f.spec.association_scaling);
      }
      f.calibration.components.push_back(std::move(comp));
    }
    int gamma_total = 0;
    for (const auto& a : f.spec.association) gamma_total += a.coefficient_count();
    if (gamma_total > f.hyper_mode.size()) {
      throw InputError("malformed fit file: hyperparameter vector too short for the association");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fit file: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("malformed fit file: ") + e.what());
  }
}

Json timing_to_json(const FitResult& f) {
  return {{"wall_seconds", f.wall_seconds},
          {"outer_iterations", f.iterations},
          {"objective_evaluations", f.evaluations}};
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(1) << "\n";
}

Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_params_csv(const std::string& path, const FitResult& fit) {
  std::ofstream out = open_out(path);
  out << "name,mean,sd,q2.5,q97.5\n";
  for (const auto& p : fit.parameters) {
    out << p.name << "," << fmt(p.mean) << "," << fmt(p.sd) << "," << fmt(p.q025) << ","
        << fmt(p.q975) << "\n";
  }
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve,
                     const SharedComponentSummary& summary) {
  std::ofstream out = open_out(path);
  out << "section,x,f_mean,f_lo,f_hi,x_hi,count\n";
  for (const auto& p : curve) {
    out << "curve," << fmt(p.nu) << "," << fmt(p.f_mean) << "," << fmt(p.f_lo) << ","
        << fmt(p.f_hi) << ",,\n";
  }
  for (std::size_t k = 0; k < summary.percent.size(); ++k) {
    out << "P" << static_cast<int>(summary.percent[k]) << "," << fmt(summary.percentiles[k])
        << ",,,,,\n";
  }
  for (std::size_t b = 0; b < summary.bin_counts.size(); ++b) {
    out << "density," << fmt(summary.bin_edges[b]) << ",,,," << fmt(summary.bin_edges[b + 1]) << ","
        << fmt(summary.bin_counts[b]) << "\n";
  }
}

Json compare_fits(const std::vector<FitComparisonEntry>& fits) {
  if (fits.size() < 2) throw InputError("comparison needs at least two fits");
  for (std::size_t k = 1; k < fits.size(); ++k) {
    if (fits[k].fit.fingerprint != fits[0].fit.fingerprint) {
      throw InputError("dataset fingerprint mismatch: '" + fits[k].label + "' (" +
                       fits[k].fit.fingerprint + ") and '" + fits[0].label + "' (" +
                       fits[0].fit.fingerprint + ") were fitted to different data");
    }
    if (fits[k].fit.criteria.waic_contrib.size() != fits[0].fit.criteria.waic_contrib.size()) {
      throw InputError("fits '" + fits[k].label + "' and '" + fits[0].label +
                       "' have different observation counts");
    }
  }
  Json j;
  j["fingerprint"] = fits[0].fit.fingerprint;
  Json models = Json::array();
  std::size_t best = 0;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& f = fits[k].fit;
    if (f.criteria.waic < fits[best].fit.criteria.waic) best = k;
    models.push_back({{"label", fits[k].label},
                      {"levels", [&] {
                         Json a = Json::array();
                         for (const auto& c : f.spec.association) a.push_back(c.label());
                         return a;
                       }()},
                      {"converged", f.converged},
                      {"dic", num(f.criteria.dic)},
                      {"p_dic", num(f.criteria.p_dic)},
                      {"waic", num(f.criteria.waic)},
                      {"p_waic", num(f.criteria.p_waic)}});
  }
  j["models"] = models;
  Json pairs = Json::array();
  int best_significant = 0;
  for (std::size_t a = 0; a < fits.size(); ++a) {
    for (std::size_t b = a + 1; b < fits.size(); ++b) {
      const auto& fa = fits[a].fit;
      const auto& fb = fits[b].fit;
      const PairwiseWaicResult t = pairwise_waic_test(fa.criteria, fb.criteria);
      Json pr = {{"a", fits[a].label},
                 {"b", fits[b].label},
                 {"delta_dic", num(fa.criteria.dic - fb.criteria.dic)},
                 {"delta_waic", num(t.delta)},
                 {"se", num(t.se_total)},
                 {"z", num(t.z)},
                 {"p", num(t.p)},
                 {"n", t.n}};
      const std::size_t nl = fa.n_longitudinal;
      if (nl == fb.n_longitudinal && nl > 0 && nl < t.n) {
        const auto ca = std::span<const double>(fa.criteria.waic_contrib);
        const auto cb = std::span<const double>(fb.criteria.waic_contrib);
        const PairwiseWaicResult tl = pairwise_waic_test(ca.subspan(0, nl), cb.subspan(0, nl));
        const PairwiseWaicResult ts = pairwise_waic_test(ca.subspan(nl), cb.subspan(nl));
        pr["longitudinal"] = {{"delta_waic", num(tl.delta)}, {"z", num(tl.z)}, {"p", num(tl.p)}};
        pr["survival"] = {{"delta_waic", num(ts.delta)}, {"z", num(ts.z)}, {"p", num(ts.p)}};
      }
      if ((a == best || b == best) && t.p < 0.05) ++best_significant;
      pairs.push_back(pr);
    }
  }
  j["pairs"] = pairs;
  j["preferred"] = {{"label", fits[best].label},
                    {"waic", num(fits[best].fit.criteria.waic)},
                    {"significant_against", best_significant},
                    {"of", fits.size() - 1}};
  return j;
}

std::string comparison_table(const Json& r) {
  std::ostringstream os;
  char line[256];
  os << "model                          DIC          WAIC\n";
  for (const auto& m : r.at("models")) {
    std::snprintf(line, sizeof line, "%-24s %12.2f %12.2f\n", m.at("label").get<std::string>().c_str(),
                  get_num(m.at("dic")), get_num(m.at("waic")));
    os << line;
  }
  os << "\npair                                       dDIC       dWAIC        z        p\n";
  for (const auto& p : r.at("pairs")) {
    const std::string name = p.at("a").get<std::string>() + " - " + p.at("b").get<std::string>();
    const double pv = get_num(p.at("p"));
    std::snprintf(line, sizeof line, "%-38s %11.2f %11.2f %8.3f %8.4f%s\n", name.c_str(),
                  get_num(p.at("delta_dic")), get_num(p.at("delta_waic")), get_num(p.at("z")), pv,
                  pv < 0.05 ? " *" : "");
    os << line;
  }
  const Json& best = r.at("preferred");
  os << "\npreferred (lowest WAIC): " << best.at("label").get<std::string>() << ", significant (p < 0.05) against "
     << best.at("significant_against").get<int>() << " of " << best.at("of").get<int>() << "\n";
  return os.str();
}

Json metrics_to_json(const ReplicationMetrics& m) {
  Json j;
  j["scenario"] = m.scenario;
  j["N"] = m.N;
  j["nsim"] = m.nsim;
  j["seed"] = m.seed;
  j["reference_level"] = level_json(m.reference);
  j["mean_event_rate"] = num(m.mean_event_rate);
  j["mean_visits"] = num(m.mean_visits);
  Json levels = Json::array();
  for (const auto& l : m.levels) {
    levels.push_back({{"level", level_json(l.level)}, {"fits", l.fits}, {"failures", l.failures},
                      {"nonconverged", l.nonconverged}});
  }
  j["levels"] = levels;
  Json params = Json::array();
  for (const auto& p : m.parameters) {
    params.push_back({{"level", level_json(p.level)}, {"parameter", p.name}, {"truth", num(p.truth)},
                      {"bias", num(p.bias)}, {"sd_bias", num(p.sd_bias)},
                      {"coverage", num(p.coverage)}, {"n", p.n}});
  }
  j["parameters"] = params;
  Json crit = Json::array();
  for (const auto& c : m.criteria) {
    crit.push_back({{"level", level_json(c.level)}, {"reference", level_json(c.reference)},
                    {"delta_dic", {{"mean", num(c.delta_dic_mean)}, {"sd", num(c.delta_dic_sd)}}},
                    {"delta_waic", {{"mean", num(c.delta_waic_mean)}, {"sd", num(c.delta_waic_sd)}}},
                    {"n", c.n}});
  }
  j["criteria"] = crit;
  Json pairs = Json::array();
  for (const auto& p : m.pairs) {
    pairs.push_back({{"a", level_json(p.a)}, {"b", level_json(p.b)},
                     {"nonsig_rate", num(p.nonsig_rate)}, {"mean_z", num(p.mean_z)}, {"n", p.n}});
  }
  j["pairwise"] = pairs;
  Json pw = Json::array();
  for (const auto& p : m.pointwise) {
    pw.push_back({{"level", level_json(p.level)},
                  {"percentile", "P" + std::to_string(static_cast<int>(p.percentile))},
                  {"nu", num(p.nu_mean)}, {"truth", num(p.truth_mean)}, {"bias", num(p.bias)},
                  {"sd", num(p.sd)}, {"coverage", num(p.coverage)}, {"n", p.n}});
  }
  j["pointwise"] = pw;
  Json fails = Json::array();
  for (const auto& f : m.failures) {
    fails.push_back({{"replicate", f.replicate}, {"level", level_json(f.level)}, {"error", f.error}});
  }
  if (!fails.empty()) j["failures"] = fails;
  return j;
}

void write_metrics_csv(const std::string& path, const ReplicationMetrics& m) {
  std::ofstream out = open_out(path);
  out << "section,level,name,truth,bias,sd,coverage,n\n";
  for (const auto& p : m.parameters) {
    out << "parameter," << to_string(p.level) << "," << p.name << "," << fmt(p.truth) << ","
        << fmt(p.bias) << "," << fmt(p.sd_bias) << "," << fmt(p.coverage) << "," << p.n << "\n";
  }
  for (const auto& p : m.pointwise) {
    out << "pointwise," << to_string(p.level) << ",f(P" << static_cast<int>(p.percentile) << "),"
        << fmt(p.truth_mean) << "," << fmt(p.bias) << "," << fmt(p.sd) << "," << fmt(p.coverage)
        << "," << p.n << "\n";
  }
  for (const auto& c : m.criteria) {
    out << "delta_dic," << to_string(c.level) << ",vs_" << to_string(c.reference) << ",,"
        << fmt(c.delta_dic_mean) << "," << fmt(c.delta_dic_sd) << ",," << c.n << "\n";
    out << "delta_waic," << to_string(c.level) << ",vs_" << to_string(c.reference) << ",,"
        << fmt(c.delta_waic_mean) << "," << fmt(c.delta_waic_sd) << ",," << c.n << "\n";
  }
  for (const auto& p : m.pairs) {
    out << "pairwise_nonsig," << to_string(p.a) << ",vs_" << to_string(p.b) << ",,"
        << fmt(p.nonsig_rate) << ",,," << p.n << "\n";
  }
}

void dump_replicates(const std::string& dir, const ReplicationMetrics& m) {
  std::filesystem::create_directories(dir);
  if (m.replicates.empty()) return;
  const std::size_t nl = m.replicates.front().fits.size();
  for (std::size_t l = 0; l < nl; ++l) {
    const AssociationLevel level = m.replicates.front().fits[l].level;
    std::ofstream out = open_out((std::filesystem::path(dir) /
                                  ("replicates_" + to_string(level) + ".csv")).string());
    out << "replicate,seed,ok,converged,parameter,mean,sd,q2.5,q97.5,dic,waic\n";
    for (const auto& r : m.replicates) {
      const auto& f = r.fits[l];
      if (!f.ok) {
        out << r.replicate << "," << r.seed << ",0,0,,,,,,,\n";
        continue;
      }
      for (const auto& p : f.parameters) {
        out << r.replicate << "," << r.seed << ",1," << (f.converged ? 1 : 0) << "," << p.name << ","
            << fmt(p.mean) << "," << fmt(p.sd) << "," << fmt(p.q025) << "," << fmt(p.q975) << ","
            << fmt(f.dic) << "," << fmt(f.waic) << "\n";
      }
    }
  }
}

Json metrics_timing_json(const ReplicationMetrics& m) {
  Json j = Json::array();
  for (const auto& l : m.levels) {
    j.push_back({{"level", level_json(l.level)}, {"mean_cpu_seconds", num(l.mean_cpu_seconds)}});
  }
  return j;
}

}  // namespace jointfit
