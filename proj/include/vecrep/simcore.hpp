#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vecrep/analytics.hpp"
#include "vecrep/bandit.hpp"
#include "vecrep/rng.hpp"
#include "vecrep/traffic.hpp"

namespace vecrep::simcore {

// One FCFS exponential server. The backlog counts replicas that have arrived
// and not yet finished; busy_until is when the current backlog drains.
struct SevServer {
  std::int64_t sev_id = 0;
  double mu = 0;  // service rate, tasks/s
  double busy_until = 0;
  std::int64_t backlog = 0;
};

struct ServeOutcome {
  double start = 0;
  double completion = 0;
  double sojourn = 0;  // completion - arrival (queue wait + service)
};

// Everything recorded about one task's life.
struct TaskRecord {
  std::int64_t task_id = 0;
  std::int64_t tav_id = 0;
  double gen_time = 0;
  std::vector<std::int64_t> selected;  // sorted SeV ids
  std::vector<std::int64_t> received;  // survivors of the erasure draws
  std::map<std::int64_t, double> per_sev_delay;  // clipped totals, every selected SeV
  double upload_delay = 0;
  double completion_delay = 0;  // clipped at d_max; equals d_max on failure
  bool failed_erasure = false;  // no SeV received the upload
  bool deadline_miss = false;   // best replica exceeded d_max

  bool failed() const { return failed_erasure || deadline_miss; }
  bool operator==(const TaskRecord&) const = default;
};

// --- elementary operations -------------------------------------------------

// Poisson arrival instants on (0, horizon]: i.i.d. exponential gaps,
// deterministic per seed.
std::vector<double> generate_arrivals(double rate, double horizon, std::uint64_t seed);

// Multicast upload with independent per-SeV erasures. Fills selected (sorted
// ids), upload_delay (input_bits / min member rate), received, and
// failed_erasure. erasure_probs aligns with selected_sevs. Draw order: one
// uniform per SeV, in the given order.
void offload(TaskRecord& task, const traffic::VehicleSnapshot& tav,
             const std::vector<traffic::VehicleSnapshot>& selected_sevs,
             const std::vector<double>& erasure_probs, const traffic::ChannelParams& channel,
             const traffic::RoadGeometry& geometry, SplitMix64& rng);

// FCFS enqueue with a pre-drawn service time (Lindley recursion).
ServeOutcome serve_with(SevServer& server, double arrival_time, double service_time);

// FCFS enqueue drawing service ~ exponential(mu) from rng.
ServeOutcome serve(SevServer& server, double arrival_time, SplitMix64& rng);

// Completion accounting: completion_delay = upload + min over received of
// (sojourn + feedback), clipped at d_max with the deadline_miss flag; every
// selected SeV gets a clipped per-SeV total (erased ones at d_max). The maps
// are keyed by SeV id and must cover every received id.
void complete(TaskRecord& task, const std::map<std::int64_t, double>& sojourn,
              const std::map<std::int64_t, double>& feedback, double d_max);

// --- model-validation Monte Carlo -------------------------------------------

struct McResult {
  double mean_delay_s = 0;    // mean execution delay over non-failed tasks
  double failure_ratio = 0;   // fraction with every replica erased
};

// Stationary-regime Monte Carlo of the replicated-execution model: vehicles
// on a ring road by Poisson placement, a typical task vehicle, K uniformly
// random in-range service vehicles, independent erasures, and stationary
// FCFS sojourns at the load the replication factor induces. Deterministic
// per seed; evaluating K alone equals entry K of the batched sweep below.
McResult monte_carlo_validation(const analytics::NetworkConditions& cond, int K,
                                std::int64_t n_tasks, double road_km, std::uint64_t seed);

// One pass evaluating K = 1..k_max on common random numbers.
std::vector<McResult> mc_validate_cell(const analytics::NetworkConditions& cond, int k_max,
                                       std::int64_t n_tasks, double road_km,
                                       std::uint64_t seed);

// --- full discrete-event simulation -----------------------------------------

enum class ScenarioKind { synthetic, trace, stationary };

enum class FeedbackKind { constant, exponential };

struct Scenario {
  ScenarioKind kind = ScenarioKind::synthetic;

  double lambda0 = 2.0;  // task arrivals per second per TaV
  double d_max = 0.5;    // completion deadline (s)
  double range_m = 200.0;
  double mu_lo = 8.0, mu_hi = 12.0;    // per-SeV service rate ~ U[lo, hi]
  double pe_lo = 0.01, pe_hi = 0.03;   // per task-SeV erasure prob ~ U[lo, hi]
  FeedbackKind feedback_kind = FeedbackKind::constant;
  double feedback_s = 0.0;  // constant value, or mean of the exponential draw
  traffic::ChannelParams channel;

  // synthetic: Poisson populations on a ring road, constant-velocity motion
  double road_km = 10.0;
  double gamma_t = 6.25;  // TaVs per km
  double gamma_s = 18.75; // SeVs per km
  traffic::SpeedLaw speed = traffic::SpeedLaw::constant(20.0);
  bool mixed_directions = false;
  bool resample_coverage = true;  // redraw placements until every TaV has a candidate at t=0

  // trace: externally supplied mobility
  traffic::Trace trace;

  // stationary: fixed abstract arms, no roads, no upload; the run horizon is
  // the task count
  std::vector<bandit::TrueArm> arms;

  void validate() const;  // throws std::invalid_argument naming the field
};

enum class PolicyKind { random, genie, single, ltra };

struct Policy {
  PolicyKind kind = PolicyKind::ltra;
  // k_replicas is the subset size for ltra and random; genie and single
  // always offload to one SeV. alpha/l drive the learner policies; the
  // learner's d_max is aligned to the scenario deadline by run().
  bandit::LearnerConfig learner;
};

struct RunResult {
  std::vector<TaskRecord> tasks;  // in generation order
  double mean_delay_s = 0;        // failures counted at d_max
  double completion_ratio = 0;
  std::int64_t failures = 0;
};

// Simulates the scenario under the policy until the horizon (seconds of
// generation time; task count for stationary scenarios) and drains all
// in-flight work. Bit-reproducible per (scenario, policy, seed). Throws
// std::runtime_error when a task is generated with an empty candidate set.
// When sink is set, finished records stream through it in task order and
// RunResult.tasks stays empty (aggregates are unaffected); use this for runs
// too long to hold in memory.
RunResult run(const Scenario& scenario, const Policy& policy, double horizon,
              std::uint64_t seed,
              const std::function<void(const TaskRecord&)>& sink = {});

// A task's delay as the metrics see it: d_max for failed tasks.
double instantaneous_delay(const TaskRecord& task, double d_max);

}  // namespace vecrep::simcore
