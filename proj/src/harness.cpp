#include "vecrep/harness.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace vecrep::harness {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const char* kind_name(simcore::ScenarioKind kind) {
  switch (kind) {
    case simcore::ScenarioKind::synthetic: return "synthetic";
    case simcore::ScenarioKind::trace: return "trace";
    case simcore::ScenarioKind::stationary: return "stationary";
  }
  return "synthetic";
}

simcore::ScenarioKind kind_from_name(const std::string& name) {
  if (name == "synthetic") return simcore::ScenarioKind::synthetic;
  if (name == "trace") return simcore::ScenarioKind::trace;
  if (name == "stationary") return simcore::ScenarioKind::stationary;
  throw std::invalid_argument("unknown scenario kind \"" + name +
                              "\" (expected synthetic, trace, or stationary)");
}

const char* feedback_name(simcore::FeedbackKind kind) {
  return kind == simcore::FeedbackKind::constant ? "constant" : "exponential";
}

simcore::FeedbackKind feedback_from_name(const std::string& name) {
  if (name == "constant") return simcore::FeedbackKind::constant;
  if (name == "exponential") return simcore::FeedbackKind::exponential;
  throw std::invalid_argument("unknown feedback kind \"" + name +
                              "\" (expected constant or exponential)");
}

const char* speed_kind_name(traffic::SpeedLaw::Kind kind) {
  return kind == traffic::SpeedLaw::Kind::constant ? "constant" : "uniform_max";
}

traffic::SpeedLaw::Kind speed_kind_from_name(const std::string& name) {
  if (name == "constant") return traffic::SpeedLaw::Kind::constant;
  if (name == "uniform_max") return traffic::SpeedLaw::Kind::uniform_max;
  throw std::invalid_argument("unknown speed law \"" + name +
                              "\" (expected constant or uniform_max)");
}

const char* arm_kind_name(bandit::TrueArm::Kind kind) {
  return kind == bandit::TrueArm::Kind::exponential ? "exponential" : "point_mass";
}

bandit::TrueArm::Kind arm_kind_from_name(const std::string& name) {
  if (name == "exponential") return bandit::TrueArm::Kind::exponential;
  if (name == "point_mass") return bandit::TrueArm::Kind::point_mass;
  throw std::invalid_argument("unknown arm kind \"" + name +
                              "\" (expected exponential or point_mass)");
}

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

std::string format_metrics_row(const MetricsRow& r) {
  std::string s;
  s += std::to_string(r.task_index);
  s += ',';
  s += r.policy;
  s += ',';
  s += std::to_string(r.k);
  s += ',';
  s += fmt_double(r.inst_delay_s);
  s += ',';
  s += fmt_double(r.mean_delay_s);
  s += ',';
  s += fmt_double(r.completion_ratio);
  s += ',';
  s += r.failed ? '1' : '0';
  return s;
}

json conditions_json(const analytics::NetworkConditions& cond, const ConditionSpec& spec) {
  return json{{"lambda0", cond.lambda0},   {"mu", cond.mu_c},
              {"pe", cond.p_e},            {"gamma_t", cond.gamma_t},
              {"gamma_s", cond.gamma_s},   {"range_km", cond.R},
              {"theta_f", cond.theta_f},   {"total_density", spec.total_density},
              {"ratio", spec.ratio}};
}

json plan_json(const analytics::ReplicaPlan& plan) {
  return json{{"k_tilde", plan.k_tilde},
              {"k_tilde_round", plan.k_tilde_round},
              {"k_min", plan.k_min},
              {"k_star", plan.k_star},
              {"lambda_hat_c", plan.lambda_hat_c},
              {"d_hat_c", plan.d_hat_c},
              {"stable", plan.stable}};
}

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(std::string("cannot open ") + what + ": " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

analytics::NetworkConditions ConditionSpec::to_conditions() const {
  return analytics::NetworkConditions::from_density_split(lambda0, total_density, ratio,
                                                          mu, pe, range_km, theta_f);
}

void ExperimentConfig::validate() const {
  if (!(horizon > 0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("horizon must be positive and finite");
  }
  if (learner.k_replicas < 0) {
    throw std::invalid_argument("learner.k_replicas must be >= 0 (0 means resolve)");
  }
  if (!(learner.alpha > 0)) {
    throw std::invalid_argument("learner.alpha must be positive");
  }
  if (learner.l < 1) {
    throw std::invalid_argument("learner.l must be at least 1");
  }
  if (!(conditions.lambda0 > 0)) {
    throw std::invalid_argument("conditions.lambda0 must be positive");
  }
  if (!(conditions.mu > 0)) {
    throw std::invalid_argument("conditions.mu must be positive");
  }
  if (!(conditions.pe >= 0.0 && conditions.pe <= 1.0)) {
    throw std::invalid_argument("conditions.pe must lie in [0, 1]");
  }
  if (!(conditions.total_density > 0)) {
    throw std::invalid_argument("conditions.total_density must be positive");
  }
  if (!(conditions.ratio > 0)) {
    throw std::invalid_argument("conditions.ratio must be positive");
  }
  if (!(conditions.range_km > 0)) {
    throw std::invalid_argument("conditions.range_km must be positive");
  }
  if (!(conditions.theta_f > 0)) {
    throw std::invalid_argument("conditions.theta_f must be positive");
  }
  if (scenario.kind == simcore::ScenarioKind::trace) {
    if (trace_path.empty() && scenario.trace.frames.empty()) {
      throw std::invalid_argument(
          "a trace scenario needs trace_path or an embedded trace");
    }
  } else if (!trace_path.empty()) {
    throw std::invalid_argument("trace_path is set but the scenario kind is not trace");
  }
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw std::invalid_argument("config must be a JSON object");
  }
  require_known_keys(
      j, {"seed", "policy", "horizon", "conditions", "learner", "scenario", "output"},
      "config");
  if (!j.contains("seed")) {
    throw std::invalid_argument("config requires an explicit \"seed\"");
  }

  ExperimentConfig cfg;
  try {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("policy")) {
      cfg.policy = policy_from_name(j.at("policy").get<std::string>());
    }
    if (j.contains("horizon")) {
      cfg.horizon = j.at("horizon").get<double>();
    }
    if (j.contains("conditions")) {
      const json& c = j.at("conditions");
      require_known_keys(
          c, {"lambda0", "mu", "pe", "total_density", "ratio", "range_km", "theta_f"},
          "conditions");
      if (c.contains("lambda0")) cfg.conditions.lambda0 = c.at("lambda0").get<double>();
      if (c.contains("mu")) cfg.conditions.mu = c.at("mu").get<double>();
      if (c.contains("pe")) cfg.conditions.pe = c.at("pe").get<double>();
      if (c.contains("total_density")) {
        cfg.conditions.total_density = c.at("total_density").get<double>();
      }
      if (c.contains("ratio")) cfg.conditions.ratio = c.at("ratio").get<double>();
      if (c.contains("range_km")) cfg.conditions.range_km = c.at("range_km").get<double>();
      if (c.contains("theta_f")) cfg.conditions.theta_f = c.at("theta_f").get<double>();
    }
    if (j.contains("learner")) {
      const json& l = j.at("learner");
      require_known_keys(l, {"alpha", "l", "k_replicas"}, "learner");
      if (l.contains("alpha")) cfg.learner.alpha = l.at("alpha").get<double>();
      if (l.contains("l")) cfg.learner.l = l.at("l").get<int>();
      if (l.contains("k_replicas")) cfg.learner.k_replicas = l.at("k_replicas").get<int>();
    }
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      require_known_keys(s,
                         {"kind", "d_max", "mu_lo", "mu_hi", "pe_lo", "pe_hi", "feedback",
                          "feedback_s", "road_km", "speed", "mixed_directions",
                          "resample_coverage", "trace_path", "channel", "arms"},
                         "scenario");
      if (s.contains("kind")) {
        cfg.scenario.kind = kind_from_name(s.at("kind").get<std::string>());
      }
      if (s.contains("d_max")) cfg.scenario.d_max = s.at("d_max").get<double>();
      if (s.contains("mu_lo")) cfg.scenario.mu_lo = s.at("mu_lo").get<double>();
      if (s.contains("mu_hi")) cfg.scenario.mu_hi = s.at("mu_hi").get<double>();
      if (s.contains("pe_lo")) cfg.scenario.pe_lo = s.at("pe_lo").get<double>();
      if (s.contains("pe_hi")) cfg.scenario.pe_hi = s.at("pe_hi").get<double>();
      if (s.contains("feedback")) {
        cfg.scenario.feedback_kind = feedback_from_name(s.at("feedback").get<std::string>());
      }
      if (s.contains("feedback_s")) cfg.scenario.feedback_s = s.at("feedback_s").get<double>();
      if (s.contains("road_km")) cfg.scenario.road_km = s.at("road_km").get<double>();
      if (s.contains("speed")) {
        const json& sp = s.at("speed");
        require_known_keys(sp, {"kind", "mps"}, "speed");
        if (sp.contains("kind")) {
          cfg.scenario.speed.kind = speed_kind_from_name(sp.at("kind").get<std::string>());
        }
        if (sp.contains("mps")) cfg.scenario.speed.mps = sp.at("mps").get<double>();
      }
      if (s.contains("mixed_directions")) {
        cfg.scenario.mixed_directions = s.at("mixed_directions").get<bool>();
      }
      if (s.contains("resample_coverage")) {
        cfg.scenario.resample_coverage = s.at("resample_coverage").get<bool>();
      }
      if (s.contains("trace_path")) cfg.trace_path = s.at("trace_path").get<std::string>();
      if (s.contains("channel")) {
        const json& ch = s.at("channel");
        require_known_keys(ch,
                           {"bandwidth_hz", "tx_power_w", "noise_w", "interference_w",
                            "pathloss_exponent", "input_bits", "output_bits"},
                           "channel");
        auto& channel = cfg.scenario.channel;
        if (ch.contains("bandwidth_hz")) channel.bandwidth_hz = ch.at("bandwidth_hz").get<double>();
        if (ch.contains("tx_power_w")) channel.tx_power_w = ch.at("tx_power_w").get<double>();
        if (ch.contains("noise_w")) channel.noise_w = ch.at("noise_w").get<double>();
        if (ch.contains("interference_w")) {
          channel.interference_w = ch.at("interference_w").get<double>();
        }
        if (ch.contains("pathloss_exponent")) {
          channel.pathloss_exponent = ch.at("pathloss_exponent").get<double>();
        }
        if (ch.contains("input_bits")) channel.input_bits = ch.at("input_bits").get<double>();
        if (ch.contains("output_bits")) channel.output_bits = ch.at("output_bits").get<double>();
      }
      if (s.contains("arms")) {
        const json& arr = s.at("arms");
        if (!arr.is_array()) throw std::invalid_argument("scenario.arms must be an array");
        cfg.scenario.arms.clear();
        for (const json& a : arr) {
          require_known_keys(a, {"arm_id", "kind", "param"}, "arm");
          bandit::TrueArm arm;
          if (a.contains("arm_id")) arm.arm_id = a.at("arm_id").get<std::int64_t>();
          if (a.contains("kind")) {
            arm.kind = arm_kind_from_name(a.at("kind").get<std::string>());
          }
          if (a.contains("param")) arm.param = a.at("param").get<double>();
          cfg.scenario.arms.push_back(arm);
        }
      }
    }
    if (j.contains("output")) {
      const json& o = j.at("output");
      require_known_keys(o, {"metrics_csv", "summary_json"}, "output");
      if (o.contains("metrics_csv")) {
        cfg.output.metrics_csv = o.at("metrics_csv").get<std::string>();
      }
      if (o.contains("summary_json")) {
        cfg.output.summary_json = o.at("summary_json").get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["policy"] = policy_name(policy);
  j["horizon"] = horizon;
  j["conditions"] = {{"lambda0", conditions.lambda0},
                     {"mu", conditions.mu},
                     {"pe", conditions.pe},
                     {"total_density", conditions.total_density},
                     {"ratio", conditions.ratio},
                     {"range_km", conditions.range_km},
                     {"theta_f", conditions.theta_f}};
  j["learner"] = {{"alpha", learner.alpha},
                  {"l", learner.l},
                  {"k_replicas", learner.k_replicas}};
  json sc;
  sc["kind"] = kind_name(scenario.kind);
  sc["d_max"] = scenario.d_max;
  sc["mu_lo"] = scenario.mu_lo;
  sc["mu_hi"] = scenario.mu_hi;
  sc["pe_lo"] = scenario.pe_lo;
  sc["pe_hi"] = scenario.pe_hi;
  sc["feedback"] = feedback_name(scenario.feedback_kind);
  sc["feedback_s"] = scenario.feedback_s;
  sc["road_km"] = scenario.road_km;
  sc["speed"] = {{"kind", speed_kind_name(scenario.speed.kind)},
                 {"mps", scenario.speed.mps}};
  sc["mixed_directions"] = scenario.mixed_directions;
  sc["resample_coverage"] = scenario.resample_coverage;
  sc["trace_path"] = trace_path;
  sc["channel"] = {{"bandwidth_hz", scenario.channel.bandwidth_hz},
                   {"tx_power_w", scenario.channel.tx_power_w},
                   {"noise_w", scenario.channel.noise_w},
                   {"interference_w", scenario.channel.interference_w},
                   {"pathloss_exponent", scenario.channel.pathloss_exponent},
                   {"input_bits", scenario.channel.input_bits},
                   {"output_bits", scenario.channel.output_bits}};
  json arms_arr = json::array();
  for (const auto& a : scenario.arms) {
    arms_arr.push_back(json{{"arm_id", a.arm_id},
                            {"kind", arm_kind_name(a.kind)},
                            {"param", a.param}});
  }
  sc["arms"] = arms_arr;
  j["scenario"] = sc;
  j["output"] = {{"metrics_csv", output.metrics_csv},
                 {"summary_json", output.summary_json}};
  return j.dump();
}

const char* policy_name(simcore::PolicyKind kind) {
  switch (kind) {
    case simcore::PolicyKind::random: return "random";
    case simcore::PolicyKind::genie: return "genie";
    case simcore::PolicyKind::single: return "single";
    case simcore::PolicyKind::ltra: return "ltra";
  }
  return "ltra";
}

simcore::PolicyKind policy_from_name(const std::string& name) {
  if (name == "random") return simcore::PolicyKind::random;
  if (name == "genie") return simcore::PolicyKind::genie;
  if (name == "single") return simcore::PolicyKind::single;
  if (name == "ltra") return simcore::PolicyKind::ltra;
  throw std::invalid_argument("unknown policy name \"" + name +
                              "\" (expected random, genie, single, or ltra)");
}

std::int64_t policy_random(const std::vector<std::int64_t>& candidates, SplitMix64& rng) {
  if (candidates.empty()) {
    throw std::invalid_argument("policy_random: candidates must be non-empty");
  }
  const double u = runif01(rng);
  auto idx = static_cast<std::size_t>(u * static_cast<double>(candidates.size()));
  if (idx >= candidates.size()) idx = candidates.size() - 1;
  return candidates[idx];
}

std::int64_t policy_genie(const std::vector<std::int64_t>& candidates,
                          const std::vector<double>& upload_s,
                          const std::vector<std::int64_t>& backlogs,
                          const std::vector<double>& mu, double feedback_mean_s) {
  if (candidates.empty()) {
    throw std::invalid_argument("policy_genie: candidates must be non-empty");
  }
  if (upload_s.size() != candidates.size()) {
    throw std::invalid_argument("policy_genie: upload_s must align with candidates");
  }
  if (backlogs.size() != candidates.size()) {
    throw std::invalid_argument("policy_genie: backlogs must align with candidates");
  }
  if (mu.size() != candidates.size()) {
    throw std::invalid_argument("policy_genie: mu must align with candidates");
  }
  std::int64_t best_id = 0;
  double best_score = std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!(mu[i] > 0)) {
      throw std::invalid_argument("policy_genie: mu entries must be positive");
    }
    const double score =
        upload_s[i] + (static_cast<double>(backlogs[i]) + 1.0) / mu[i] + feedback_mean_s;
    if (!have || score < best_score ||
        (score == best_score && candidates[i] < best_id)) {
      have = true;
      best_score = score;
      best_id = candidates[i];
    }
  }
  return best_id;
}

namespace {

// Fills in everything derived: the plan, the replica count, and the
// scenario fields owned by the planning conditions.
struct ResolvedExperiment {
  ExperimentConfig cfg;
  analytics::NetworkConditions cond;
  analytics::ReplicaPlan plan;
};

ResolvedExperiment resolve(const ExperimentConfig& in) {
  ExperimentConfig cfg = in;
  cfg.validate();
  const auto cond = cfg.conditions.to_conditions();
  const auto plan = analytics::optimal_replicas(cond);
  if (cfg.policy == simcore::PolicyKind::genie ||
      cfg.policy == simcore::PolicyKind::single) {
    cfg.learner.k_replicas = 1;
  } else if (cfg.learner.k_replicas == 0) {
    cfg.learner.k_replicas =
        cfg.policy == simcore::PolicyKind::ltra ? plan.k_star : 1;
  }
  cfg.scenario.lambda0 = cond.lambda0;
  cfg.scenario.gamma_t = cond.gamma_t;
  cfg.scenario.gamma_s = cond.gamma_s;
  cfg.scenario.range_m = cond.R * 1000.0;
  cfg.learner.d_max = cfg.scenario.d_max;
  if (cfg.scenario.kind == simcore::ScenarioKind::trace && !cfg.trace_path.empty()) {
    cfg.scenario.trace = traffic::load_trace(cfg.trace_path);
  }
  return {std::move(cfg), cond, plan};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& in, const RowSink& extra_rows) {
  auto [cfg, cond, plan] = resolve(in);

  std::ofstream csv;
  if (!cfg.output.metrics_csv.empty()) {
    csv.open(cfg.output.metrics_csv, std::ios::binary | std::ios::trunc);
    if (!csv) {
      throw std::runtime_error("cannot open metrics file: " + cfg.output.metrics_csv);
    }
    csv << kMetricsHeader << '\n';
  }

  const std::string pname = policy_name(cfg.policy);
  const int k_eff = cfg.learner.k_replicas;
  const bool stationary = cfg.scenario.kind == simcore::ScenarioKind::stationary;
  std::int64_t n = 0;
  std::int64_t completed = 0;
  double delay_sum = 0;
  std::vector<double> losses;

  auto sink = [&](const simcore::TaskRecord& t) {
    ++n;
    delay_sum += t.completion_delay;
    if (!t.failed()) ++completed;
    if (stationary) losses.push_back(t.completion_delay);
    MetricsRow row;
    row.task_index = t.task_id;
    row.policy = pname;
    row.k = k_eff;
    row.inst_delay_s = simcore::instantaneous_delay(t, cfg.scenario.d_max);
    row.mean_delay_s = delay_sum / static_cast<double>(n);
    row.completion_ratio = static_cast<double>(completed) / static_cast<double>(n);
    row.failed = t.failed();
    if (csv.is_open()) csv << format_metrics_row(row) << '\n';
    if (extra_rows) extra_rows(row);
  };

  simcore::Policy pol;
  pol.kind = cfg.policy;
  pol.learner = cfg.learner;
  const auto rr = simcore::run(cfg.scenario, pol, cfg.horizon, cfg.seed, sink);

  json s;
  s["tasks"] = n;
  s["failures"] = rr.failures;
  s["mean_delay_s"] = rr.mean_delay_s;
  s["completion_ratio"] = rr.completion_ratio;
  s["policy"] = pname;
  s["k_replicas"] = k_eff;
  s["seed"] = cfg.seed;
  s["horizon"] = cfg.horizon;
  s["scenario_kind"] = kind_name(cfg.scenario.kind);
  s["conditions"] = conditions_json(cond, cfg.conditions);
  s["plan"] = plan_json(plan);
  if (stationary && n > 0) {
    const auto report = bandit::empirical_regret(losses, cfg.scenario.arms, k_eff,
                                                 cfg.scenario.d_max, true);
    json gaps = json::array();
    for (const auto& [arm_id, gap] : report.gap_table) {
      gaps.push_back(json{{"arm_id", arm_id}, {"gap", gap}});
    }
    s["regret"] = {{"horizon", report.horizon},
                   {"cumulative_loss", report.cumulative_loss},
                   {"mu_s_star", report.mu_s_star},
                   {"empirical_regret", report.empirical_regret},
                   {"bound", report.bound},
                   {"gap_table", gaps}};
  }

  ExperimentResult result;
  result.resolved = cfg;
  result.plan = plan;
  result.tasks = n;
  result.mean_delay_s = rr.mean_delay_s;
  result.completion_ratio = rr.completion_ratio;
  result.failures = rr.failures;
  result.summary_json = s.dump();

  if (!cfg.output.summary_json.empty()) {
    std::ofstream sj(cfg.output.summary_json, std::ios::binary | std::ios::trunc);
    if (!sj) {
      throw std::runtime_error("cannot open summary file: " + cfg.output.summary_json);
    }
    sj << result.summary_json;
  }
  return result;
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::k_replicas: return "K";
    case SweepAxis::lambda0: return "lambda0";
    case SweepAxis::ratio: return "ratio";
  }
  return "K";
}

SweepReport sweep(const ExperimentConfig& base, SweepAxis axis,
                  const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("sweep: values must be non-empty");
  }
  SweepReport report;
  report.axis = axis;
  report.all_ok = true;

  std::ofstream csv;
  if (!base.output.metrics_csv.empty()) {
    csv.open(base.output.metrics_csv, std::ios::binary | std::ios::trunc);
    if (!csv) {
      throw std::runtime_error("cannot open metrics file: " + base.output.metrics_csv);
    }
    csv << "sweep_" << sweep_axis_name(axis) << ',' << kMetricsHeader << '\n';
    report.combined_csv = base.output.metrics_csv;
  }

  const std::uint64_t axis_seed =
      derive_seed(base.seed, 0xAF173A00ULL + static_cast<std::uint64_t>(axis));
  for (double value : values) {
    SweepPoint point;
    point.value = value;
    point.seed = derive_seed(axis_seed, std::bit_cast<std::uint64_t>(value));

    ExperimentConfig cfg = base;
    cfg.output = OutputSpec{};  // per-point file outputs are disabled
    cfg.seed = point.seed;
    switch (axis) {
      case SweepAxis::k_replicas:
        cfg.learner.k_replicas = static_cast<int>(std::llround(value));
        break;
      case SweepAxis::lambda0:
        cfg.conditions.lambda0 = value;
        break;
      case SweepAxis::ratio:
        cfg.conditions.ratio = value;
        break;
    }

    const std::string value_str = fmt_double(value);
    try {
      auto res = run_experiment(cfg, [&](const MetricsRow& row) {
        if (csv.is_open()) csv << value_str << ',' << format_metrics_row(row) << '\n';
      });
      point.ok = true;
      point.summary_json = res.summary_json;
      point.tasks = res.tasks;
      point.mean_delay_s = res.mean_delay_s;
      point.completion_ratio = res.completion_ratio;
      point.k_used = res.resolved.learner.k_replicas;
    } catch (const std::exception& e) {
      point.ok = false;
      point.error = e.what();
      report.all_ok = false;
    }
    report.points.push_back(std::move(point));
  }
  return report;
}

namespace {

std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(token, &pos);
      if (pos != token.size()) throw std::invalid_argument(token);
      values.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad --values entry \"" + token + "\"");
    }
  }
  return values;
}

int run_plan_command(double lambda0, double mu, double pe, double gamma_t, double gamma_s,
                     double total_density, double ratio, double range_km, double theta_f,
                     std::ostream& out) {
  const analytics::NetworkConditions cond =
      (gamma_t > 0 && gamma_s > 0)
          ? analytics::NetworkConditions(lambda0, mu, pe, gamma_t, gamma_s, range_km,
                                         theta_f)
          : analytics::NetworkConditions::from_density_split(lambda0, total_density,
                                                             ratio, mu, pe, range_km,
                                                             theta_f);
  const auto plan = analytics::optimal_replicas(cond);
  json j = plan_json(plan);
  j["conditions"] = {{"lambda0", cond.lambda0}, {"mu", cond.mu_c},
                     {"pe", cond.p_e},          {"gamma_t", cond.gamma_t},
                     {"gamma_s", cond.gamma_s}, {"range_km", cond.R},
                     {"theta_f", cond.theta_f}};
  out << j.dump() << '\n';
  return 0;
}

int run_validate_command(const std::string& cells, std::int64_t tasks, std::uint64_t seed,
                         double road_km, std::ostream& out) {
  if (cells != "table1") {
    throw std::invalid_argument("unknown --cells grid \"" + cells + "\"");
  }
  // the standard grid: three arrival rates across seven density splits, plus
  // seven arrival rates across three splits (overlaps deduplicated)
  std::set<std::pair<double, int>> grid;
  for (double lam : {2.0, 3.0, 4.0}) {
    for (int den = 1; den <= 7; ++den) grid.insert({lam, den});
  }
  for (double lam : {2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0}) {
    for (int den : {1, 3, 4}) grid.insert({lam, den});
  }

  out << "lambda0,ratio,k_theory,k_sim,match\n";
  int matched = 0;
  int index = 0;
  for (const auto& [lam, den] : grid) {
    const auto cond =
        analytics::NetworkConditions::from_density_split(lam, 25.0, 1.0 / den);
    const int k_theory = analytics::theoretical_optimum_search(cond);
    const int k_max = std::max(8, k_theory + 3);
    const auto mc = simcore::mc_validate_cell(cond, k_max, tasks, road_km,
                                              derive_seed(seed, 1000 + index));
    int k_sim = 1;
    for (int k = 2; k <= k_max; ++k) {
      if (mc[static_cast<std::size_t>(k - 1)].mean_delay_s <
          mc[static_cast<std::size_t>(k_sim - 1)].mean_delay_s) {
        k_sim = k;
      }
    }
    const int match = (k_sim == k_theory) ? 1 : 0;
    matched += match;
    out << fmt_double(lam) << ',' << fmt_double(1.0 / den) << ',' << k_theory << ','
        << k_sim << ',' << match << '\n';
    ++index;
  }
  out << "summary: matched " << matched << '/' << index << " cells\n";
  return 0;
}

}  // namespace

int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"task-replication laboratory for vehicular edge computing"};
  app.require_subcommand(1);

  auto* plan_cmd =
      app.add_subcommand("plan", "print the closed-form replica plan as JSON");
  double p_lambda0 = 2.0, p_mu = 10.0, p_pe = 0.02, p_gamma_t = 0.0, p_gamma_s = 0.0;
  double p_total = 25.0, p_ratio = 1.0 / 3.0, p_range = 0.2, p_theta = 1.0;
  plan_cmd->add_option("--lambda0", p_lambda0, "per-vehicle task rate (tasks/s)");
  plan_cmd->add_option("--mu", p_mu, "mean service rate (tasks/s)");
  plan_cmd->add_option("--pe", p_pe, "erasure probability");
  plan_cmd->add_option("--gamma-t", p_gamma_t, "task-vehicle density (per km)");
  plan_cmd->add_option("--gamma-s", p_gamma_s, "service-vehicle density (per km)");
  plan_cmd->add_option("--total-density", p_total,
                       "total vehicle density (per km), used when densities are not given");
  plan_cmd->add_option("--ratio", p_ratio, "task:service density ratio");
  plan_cmd->add_option("--range-km", p_range, "communication range (km)");
  plan_cmd->add_option("--theta-f", p_theta, "failure-probability threshold");

  auto* validate_cmd = app.add_subcommand(
      "validate", "compare planned replica counts against simulation on the standard grid");
  std::string v_cells = "table1";
  std::int64_t v_tasks = 100000;
  std::uint64_t v_seed = 1;
  double v_road = 2.0;
  validate_cmd->add_option("--cells", v_cells, "cell grid name (table1)");
  validate_cmd->add_option("--tasks", v_tasks, "simulated tasks per cell");
  validate_cmd->add_option("--seed", v_seed, "base seed");
  validate_cmd->add_option("--road-km", v_road, "ring-road length (km)");

  auto* simulate_cmd =
      app.add_subcommand("simulate", "run one experiment from a JSON config");
  std::string s_config;
  std::uint64_t s_seed = 0;
  std::string s_metrics, s_summary;
  simulate_cmd->add_option("--config", s_config, "config JSON path")->required();
  auto* s_seed_opt = simulate_cmd->add_option("--seed", s_seed, "override the config seed");
  simulate_cmd->add_option("--metrics", s_metrics, "override output.metrics_csv");
  simulate_cmd->add_option("--summary", s_summary, "override output.summary_json");

  auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
  std::string w_config, w_axis = "K", w_values, w_out;
  sweep_cmd->add_option("--config", w_config, "config JSON path")->required();
  sweep_cmd->add_option("--axis", w_axis, "sweep axis: K, lambda0, or ratio");
  sweep_cmd->add_option("--values", w_values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--out", w_out, "combined metrics CSV path");

  auto* trace_cmd =
      app.add_subcommand("trace-gen", "generate a synthetic mobility trace CSV");
  std::string t_out;
  double t_road = 2.0, t_gamma_t = 6.25, t_gamma_s = 18.75;
  double t_duration = 100.0, t_timestep = 1.0, t_speed = 20.0;
  bool t_uniform = false, t_mixed = false;
  std::uint64_t t_seed = 1;
  trace_cmd->add_option("--out", t_out, "output CSV path")->required();
  trace_cmd->add_option("--road-km", t_road, "ring-road length (km)");
  trace_cmd->add_option("--gamma-t", t_gamma_t, "task-vehicle density (per km)");
  trace_cmd->add_option("--gamma-s", t_gamma_s, "service-vehicle density (per km)");
  trace_cmd->add_option("--duration", t_duration, "trace length (s)");
  trace_cmd->add_option("--timestep", t_timestep, "frame spacing (s)");
  trace_cmd->add_option("--speed", t_speed, "vehicle speed (m/s)");
  trace_cmd->add_flag("--uniform-speed", t_uniform,
                      "draw per-vehicle speeds uniformly on [0, --speed]");
  trace_cmd->add_flag("--mixed-directions", t_mixed,
                      "flip each vehicle's direction with probability 1/2");
  trace_cmd->add_option("--seed", t_seed, "generator seed");

  if (args.empty()) {
    out << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*plan_cmd) {
      return run_plan_command(p_lambda0, p_mu, p_pe, p_gamma_t, p_gamma_s, p_total,
                              p_ratio, p_range, p_theta, out);
    }
    if (*validate_cmd) {
      return run_validate_command(v_cells, v_tasks, v_seed, v_road, out);
    }
    if (*simulate_cmd) {
      auto cfg = ExperimentConfig::from_json(read_text_file(s_config, "config file"));
      if (s_seed_opt->count() > 0) cfg.seed = s_seed;
      if (!s_metrics.empty()) cfg.output.metrics_csv = s_metrics;
      if (!s_summary.empty()) cfg.output.summary_json = s_summary;
      const auto res = run_experiment(cfg);
      out << "config: " << res.resolved.to_json() << '\n';
      out << "seed: " << cfg.seed << '\n';
      out << "summary: " << res.summary_json << '\n';
      return 0;
    }
    if (*sweep_cmd) {
      auto base = ExperimentConfig::from_json(read_text_file(w_config, "config file"));
      if (!w_out.empty()) base.output.metrics_csv = w_out;
      SweepAxis axis;
      if (w_axis == "K") {
        axis = SweepAxis::k_replicas;
      } else if (w_axis == "lambda0") {
        axis = SweepAxis::lambda0;
      } else if (w_axis == "ratio") {
        axis = SweepAxis::ratio;
      } else {
        throw std::invalid_argument("unknown --axis \"" + w_axis +
                                    "\" (expected K, lambda0, or ratio)");
      }
      const auto values = parse_value_list(w_values);
      const auto report = sweep(base, axis, values);
      out << "config: " << base.to_json() << '\n';
      for (const auto& p : report.points) {
        json pj = {{"value", p.value},
                   {"seed", p.seed},
                   {"ok", p.ok},
                   {"k", p.k_used},
                   {"tasks", p.tasks},
                   {"mean_delay_s", p.mean_delay_s},
                   {"completion_ratio", p.completion_ratio}};
        if (!p.error.empty()) pj["error"] = p.error;
        out << "point: " << pj.dump() << '\n';
      }
      out << "sweep: " << (report.all_ok ? "ok" : "partial") << '\n';
      return report.all_ok ? 0 : 3;
    }
    if (*trace_cmd) {
      traffic::Frame initial =
          traffic::generate_ppp_snapshot(t_road, t_gamma_t, t_gamma_s, derive_seed(t_seed, 1));
      if (t_mixed) {
        SplitMix64 flip(derive_seed(t_seed, 2));
        for (auto& v : initial.vehicles) {
          if (runif01(flip) < 0.5) v.direction = -v.direction;
        }
      }
      traffic::RoadGeometry geometry{t_road * 1000.0, true, false};
      const auto law = t_uniform ? traffic::SpeedLaw::uniform_max(t_speed)
                                 : traffic::SpeedLaw::constant(t_speed);
      const auto trace = traffic::generate_synthetic_trace(initial, geometry, t_duration,
                                                           law, t_timestep,
                                                           derive_seed(t_seed, 3));
      traffic::write_trace(trace, t_out);
      out << "trace: " << t_out << " frames=" << trace.frames.size()
          << " vehicles=" << initial.vehicles.size() << '\n';
      out << "seed: " << t_seed << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vecrep::harness
