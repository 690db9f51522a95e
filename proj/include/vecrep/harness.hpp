#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vecrep/analytics.hpp"
#include "vecrep/bandit.hpp"
#include "vecrep/rng.hpp"
#include "vecrep/simcore.hpp"
#include "vecrep/traffic.hpp"

namespace vecrep::harness {

// Planning-layer inputs in the density-split parameterization: a total
// vehicle density plus the TaV:SeV ratio, from which the two role densities
// derive.
struct ConditionSpec {
  double lambda0 = 2.0;        // task arrivals per second per TaV
  double mu = 10.0;            // mean SeV service rate
  double pe = 0.02;            // planning-layer erasure probability
  double total_density = 25.0; // vehicles per km, both roles combined
  double ratio = 1.0 / 3.0;    // TaV density / SeV density
  double range_km = 0.2;
  double theta_f = 1.0;        // failure-probability threshold

  analytics::NetworkConditions to_conditions() const;
};

struct OutputSpec {
  std::string metrics_csv;   // per-task rows; empty = do not write
  std::string summary_json;  // final aggregates; empty = do not write
};

// One experiment: planning conditions, the simulated scenario, the policy,
// and bookkeeping. The scenario's lambda0, densities, and range are filled
// from the conditions when the experiment resolves, so the conditions are
// the single source of truth for those quantities; a trace scenario is
// loaded from trace_path at the same moment (exactly one scenario source).
struct ExperimentConfig {
  ConditionSpec conditions;
  simcore::Scenario scenario;
  std::string trace_path;
  simcore::PolicyKind policy = simcore::PolicyKind::ltra;
  // learner.k_replicas = 0 means "resolve": the planned replica count for
  // ltra, always 1 for the baselines (random, genie, single).
  bandit::LearnerConfig learner = {.k_replicas = 0};
  double horizon = 1000.0;
  std::uint64_t seed = 0;
  OutputSpec output;

  void validate() const;  // throws std::invalid_argument naming the field

  // JSON round-trip. Parsing requires an explicit "seed" and rejects unknown
  // fields; serialization materializes every field, so the echo printed at
  // run start re-parses to a config reproducing the run.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
};

// One metrics line: the running aggregates as of this task.
struct MetricsRow {
  std::int64_t task_index = 0;
  std::string policy;
  int k = 0;
  double inst_delay_s = 0;
  double mean_delay_s = 0;       // running mean of clipped delays
  double completion_ratio = 0;   // running share of non-failed tasks
  bool failed = false;
};

inline constexpr char kMetricsHeader[] =
    "task_index,policy,K,inst_delay_s,mean_delay_s,completion_ratio,failed";

const char* policy_name(simcore::PolicyKind kind);
simcore::PolicyKind policy_from_name(const std::string& name);

// --- baseline policies as standalone operations ------------------------------

// Uniform draw over the candidates (one uniform consumed).
std::int64_t policy_random(const std::vector<std::int64_t>& candidates, SplitMix64& rng);

// Full-state oracle: argmin of upload + (backlog + 1)/mu + expected feedback,
// ties to the smallest id. The three vectors align with candidates.
std::int64_t policy_genie(const std::vector<std::int64_t>& candidates,
                          const std::vector<double>& upload_s,
                          const std::vector<std::int64_t>& backlogs,
                          const std::vector<double>& mu, double feedback_mean_s);

// --- experiment orchestration -------------------------------------------------

struct ExperimentResult {
  ExperimentConfig resolved;     // the echoed configuration (k filled in)
  analytics::ReplicaPlan plan;   // the planning-layer output for the conditions
  std::int64_t tasks = 0;
  double mean_delay_s = 0;
  double completion_ratio = 0;
  std::int64_t failures = 0;
  std::string summary_json;      // also written to output.summary_json when set
};

using RowSink = std::function<void(const MetricsRow&)>;

// Runs one experiment: resolves the config, simulates, streams MetricsRow
// lines to output.metrics_csv (exact header above) and to extra_rows when
// given, then writes and returns the JSON summary (final mean delay and
// completion ratio, the plan, and the regret report for stationary
// scenarios). Byte-identical outputs per (config, seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RowSink& extra_rows = {});

enum class SweepAxis { k_replicas, lambda0, ratio };

const char* sweep_axis_name(SweepAxis axis);

struct SweepPoint {
  double value = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;         // non-empty when the point failed
  std::string summary_json;  // per-point summary when ok
  std::int64_t tasks = 0;
  double mean_delay_s = 0;
  double completion_ratio = 0;
  int k_used = 0;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::k_replicas;
  std::vector<SweepPoint> points;
  std::string combined_csv;  // path of the merged per-task file, when written
  bool all_ok = false;
};

// One run_experiment per value with a seed derived from (base seed, axis,
// value). Per-task rows merge into base.output.metrics_csv with a leading
// sweep_<axis> column; per-point file outputs are disabled. A failing point
// is recorded and the remaining points still run.
SweepReport sweep(const ExperimentConfig& base, SweepAxis axis,
                  const std::vector<double>& values);

// Command-line front end (subcommands: plan, validate, simulate, sweep,
// trace-gen). args excludes the program name. Prints the resolved
// configuration and seed for every stochastic run; returns the process exit
// status (0 on success).
int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vecrep::harness
