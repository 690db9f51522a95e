#include "vecrep/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vecrep::simcore {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream-seed salts. Every independent source of randomness is its own
// SplitMix64 substream derived from the run seed, so changing how much one
// consumer draws never shifts any other consumer (the common-random-numbers
// backbone of the replication comparisons).
constexpr std::uint64_t kScenarioSalt = 10;      // placement, speeds, mu draws
constexpr std::uint64_t kArrivalSaltBase = 3072;   // + per-TaV index
constexpr std::uint64_t kTaskSaltBase = 45056;     // + global task index
// Within one task's substream: 1 = subset selection, 2 = per-slot draws.
constexpr std::uint64_t kSelectSalt = 1;
constexpr std::uint64_t kSlotSalt = 2;
// Within one Monte Carlo realization: placement / selection / slot draws.
constexpr std::uint64_t kMcPlaceSalt = 1;
constexpr std::uint64_t kMcSelectSalt = 2;
constexpr std::uint64_t kMcSlotSalt = 3;

}  // namespace

std::vector<double> generate_arrivals(double rate, double horizon, std::uint64_t seed) {
  if (!(rate > 0.0)) throw std::invalid_argument("generate_arrivals: rate must be positive");
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("generate_arrivals: horizon must be positive");
  }
  SplitMix64 g(seed);
  std::vector<double> out;
  double t = 0.0;
  for (;;) {
    t += rexp(g, rate);
    if (t > horizon) break;
    out.push_back(t);
  }
  return out;
}

void offload(TaskRecord& task, const traffic::VehicleSnapshot& tav,
             const std::vector<traffic::VehicleSnapshot>& selected_sevs,
             const std::vector<double>& erasure_probs, const traffic::ChannelParams& channel,
             const traffic::RoadGeometry& geometry, SplitMix64& rng) {
  if (selected_sevs.empty()) {
    throw std::invalid_argument("offload: selected_sevs must be non-empty");
  }
  if (erasure_probs.size() != selected_sevs.size()) {
    throw std::invalid_argument("offload: erasure_probs must align with selected_sevs");
  }
  for (const double p : erasure_probs) {
    if (!(p >= 0.0) || !(p <= 1.0)) {
      throw std::invalid_argument("offload: erasure probabilities must lie in [0, 1]");
    }
  }

  const auto plan = traffic::multicast_rate_and_upload_delay(tav, selected_sevs, channel,
                                                             geometry);
  task.upload_delay = plan.delay_s;

  task.selected.clear();
  task.received.clear();
  for (const auto& s : selected_sevs) task.selected.push_back(s.vehicle_id);
  // One erasure uniform per member, in the order the members were given.
  for (std::size_t i = 0; i < selected_sevs.size(); ++i) {
    if (runif01(rng) >= erasure_probs[i]) {
      task.received.push_back(selected_sevs[i].vehicle_id);
    }
  }
  std::sort(task.selected.begin(), task.selected.end());
  std::sort(task.received.begin(), task.received.end());
  task.failed_erasure = task.received.empty();
}

ServeOutcome serve_with(SevServer& server, double arrival_time, double service_time) {
  if (!(service_time >= 0.0)) {
    throw std::invalid_argument("serve_with: service_time must be non-negative");
  }
  ServeOutcome out;
  out.start = std::max(server.busy_until, arrival_time);
  out.completion = out.start + service_time;
  out.sojourn = out.completion - arrival_time;
  server.busy_until = out.completion;
  return out;
}

ServeOutcome serve(SevServer& server, double arrival_time, SplitMix64& rng) {
  if (!(server.mu > 0.0)) throw std::invalid_argument("serve: server mu must be positive");
  return serve_with(server, arrival_time, rexp(rng, server.mu));
}

void complete(TaskRecord& task, const std::map<std::int64_t, double>& sojourn,
              const std::map<std::int64_t, double>& feedback, double d_max) {
  if (!(d_max > 0.0)) throw std::invalid_argument("complete: d_max must be positive");
  if (task.received.empty()) {
    throw std::logic_error("complete: task has no received replicas");
  }
  task.per_sev_delay.clear();
  double best = kInf;
  for (const auto id : task.received) {
    const auto s = sojourn.find(id);
    if (s == sojourn.end()) {
      throw std::logic_error("complete: missing sojourn for a received replica");
    }
    const auto f = feedback.find(id);
    if (f == feedback.end()) {
      throw std::logic_error("complete: missing feedback for a received replica");
    }
    const double raw = task.upload_delay + s->second + f->second;
    best = std::min(best, raw);
    task.per_sev_delay[id] = std::min(raw, d_max);
  }
  // Erased copies never produce a response: account them at the cap.
  for (const auto id : task.selected) {
    if (!task.per_sev_delay.count(id)) task.per_sev_delay[id] = d_max;
  }
  task.deadline_miss = best > d_max;
  task.completion_delay = std::min(best, d_max);
}

// --- model-validation Monte Carlo -------------------------------------------

namespace {

// Core of both Monte Carlo entry points: evaluate K = 1..k_max on shared
// randomness. Per realization the draws are layered as placement, selection,
// then per-slot (erasure uniform, unit-exponential sojourn) pairs, each from
// its own substream, so evaluating a smaller k_max consumes prefixes of
// exactly the same values.
std::vector<McResult> mc_core(const analytics::NetworkConditions& cond, int k_max,
                              std::int64_t n_tasks, double road_km, std::uint64_t seed) {
  if (k_max < 1) throw std::invalid_argument("monte_carlo_validation: K must be >= 1");
  if (n_tasks < 10000) {
    throw std::invalid_argument(
        "monte_carlo_validation: n_tasks must be at least 10000 for stable statistics");
  }
  if (!(road_km >= 4.0 * cond.R)) {
    throw std::invalid_argument(
        "monte_carlo_validation: road_km must be at least 4x the communication range");
  }

  // Queue slack per replication factor under the sharp load model; a
  // non-positive slack marks that K as unstable (infinite mean delay).
  std::vector<double> slack(static_cast<std::size_t>(k_max) + 1, 0.0);
  for (int K = 1; K <= k_max; ++K) {
    slack[static_cast<std::size_t>(K)] = cond.mu_c - analytics::arrival_rate_exact(cond, K);
  }

  std::vector<double> sums(static_cast<std::size_t>(k_max) + 1, 0.0);
  std::vector<std::int64_t> gots(static_cast<std::size_t>(k_max) + 1, 0);

  std::vector<double> pos;
  std::vector<int> order;
  std::vector<double> us, es;
  for (std::int64_t r = 0; r < n_tasks; ++r) {
    const std::uint64_t seed_r = derive_seed(seed, static_cast<std::uint64_t>(r));

    // Placement: a Poisson population of SeVs on the ring and a typical task
    // vehicle, redrawn whole until the task vehicle has coverage (the
    // candidate-count law conditioned on being non-zero).
    SplitMix64 place(derive_seed(seed_r, kMcPlaceSalt));
    int y = 0;
    for (int attempt = 0; attempt < 1000 && y == 0; ++attempt) {
      const int n_sev = rpois(place, cond.gamma_s * road_km);
      pos.resize(static_cast<std::size_t>(n_sev));
      for (auto& p : pos) p = runif01(place) * road_km;
      const double x0 = runif01(place) * road_km;
      y = 0;
      for (const double p : pos) {
        const double d = std::fabs(p - x0);
        if (std::min(d, road_km - d) <= cond.R) ++y;
      }
    }
    if (y == 0) {
      throw std::runtime_error(
          "monte_carlo_validation: no covered task vehicle after 1000 placements");
    }

    // Selection: which in-range SeVs get the copies. The identities do not
    // change the delay law (sojourns are exchangeable), but the prefix
    // shuffle mirrors the per-task draw pattern of the full simulation.
    SplitMix64 select(derive_seed(seed_r, kMcSelectSalt));
    const int kk_all = std::min(k_max, y);
    order.resize(static_cast<std::size_t>(y));
    std::iota(order.begin(), order.end(), 0);
    partial_shuffle(order, static_cast<std::size_t>(kk_all), select);

    // Per-slot draws: one erasure uniform and one unit-exponential sojourn
    // shape per copy.
    SplitMix64 slot(derive_seed(seed_r, kMcSlotSalt));
    us.resize(static_cast<std::size_t>(kk_all));
    es.resize(static_cast<std::size_t>(kk_all));
    for (int j = 0; j < kk_all; ++j) {
      us[static_cast<std::size_t>(j)] = runif01(slot);
      es[static_cast<std::size_t>(j)] = rexp(slot, 1.0);
    }

    for (int K = 1; K <= k_max; ++K) {
      const int kk = std::min(K, y);
      double m = kInf;
      for (int j = 0; j < kk; ++j) {
        if (us[static_cast<std::size_t>(j)] >= cond.p_e) {
          m = std::min(m, es[static_cast<std::size_t>(j)]);
        }
      }
      if (m < kInf) {
        ++gots[static_cast<std::size_t>(K)];
        if (slack[static_cast<std::size_t>(K)] > 0.0) {
          sums[static_cast<std::size_t>(K)] += m / slack[static_cast<std::size_t>(K)];
        }
      }
    }
  }

  std::vector<McResult> out(static_cast<std::size_t>(k_max));
  for (int K = 1; K <= k_max; ++K) {
    auto& r = out[static_cast<std::size_t>(K - 1)];
    const auto got = gots[static_cast<std::size_t>(K)];
    r.failure_ratio =
        1.0 - static_cast<double>(got) / static_cast<double>(n_tasks);
    if (slack[static_cast<std::size_t>(K)] > 0.0 && got > 0) {
      r.mean_delay_s = sums[static_cast<std::size_t>(K)] / static_cast<double>(got);
    } else {
      r.mean_delay_s = kInf;
    }
  }
  return out;
}

}  // namespace

McResult monte_carlo_validation(const analytics::NetworkConditions& cond, int K,
                                std::int64_t n_tasks, double road_km, std::uint64_t seed) {
  return mc_core(cond, K, n_tasks, road_km, seed).back();
}

std::vector<McResult> mc_validate_cell(const analytics::NetworkConditions& cond, int k_max,
                                       std::int64_t n_tasks, double road_km,
                                       std::uint64_t seed) {
  return mc_core(cond, k_max, n_tasks, road_km, seed);
}

// --- full discrete-event simulation -----------------------------------------

void Scenario::validate() const {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("scenario: lambda0 must be positive");
  if (!(d_max > 0.0)) throw std::invalid_argument("scenario: d_max must be positive");
  if (!(range_m > 0.0)) throw std::invalid_argument("scenario: range_m must be positive");
  if (!(mu_lo > 0.0) || !(mu_hi >= mu_lo)) {
    throw std::invalid_argument("scenario: need 0 < mu_lo <= mu_hi");
  }
  if (!(pe_lo >= 0.0) || !(pe_hi >= pe_lo) || !(pe_hi <= 1.0)) {
    throw std::invalid_argument("scenario: need 0 <= pe_lo <= pe_hi <= 1");
  }
  if (!(feedback_s >= 0.0)) {
    throw std::invalid_argument("scenario: feedback_s must be non-negative");
  }
  if (feedback_kind == FeedbackKind::exponential && !(feedback_s > 0.0)) {
    throw std::invalid_argument(
        "scenario: exponential feedback needs a positive feedback_s mean");
  }
  channel.validate();

  switch (kind) {
    case ScenarioKind::synthetic:
      if (!(road_km > 0.0)) throw std::invalid_argument("scenario: road_km must be positive");
      if (!(gamma_t > 0.0)) throw std::invalid_argument("scenario: gamma_t must be positive");
      if (!(gamma_s > 0.0)) throw std::invalid_argument("scenario: gamma_s must be positive");
      if (!(speed.mps >= 0.0)) {
        throw std::invalid_argument("scenario: speed must be non-negative");
      }
      break;
    case ScenarioKind::trace: {
      if (trace.frames.empty()) throw std::invalid_argument("scenario: trace is empty");
      bool any_tav = false, any_sev = false;
      for (const auto& f : trace.frames) {
        for (const auto& v : f.vehicles) {
          (v.role == traffic::Role::TaV ? any_tav : any_sev) = true;
        }
      }
      if (!any_tav) throw std::invalid_argument("scenario: trace contains no task vehicles");
      if (!any_sev) {
        throw std::invalid_argument("scenario: trace contains no service vehicles");
      }
      break;
    }
    case ScenarioKind::stationary: {
      if (arms.empty()) throw std::invalid_argument("scenario: stationary needs arms");
      std::set<std::int64_t> ids;
      for (const auto& a : arms) {
        if (!ids.insert(a.arm_id).second) {
          throw std::invalid_argument("scenario: duplicate arm ids");
        }
        if (!(a.param > 0.0)) {
          throw std::invalid_argument("scenario: arm parameters must be positive");
        }
      }
      break;
    }
  }
}

double instantaneous_delay(const TaskRecord& task, double d_max) {
  return task.failed() ? d_max : task.completion_delay;
}

namespace {

// One scheduled event. seq breaks time ties in insertion order, which keeps
// the replay bit-reproducible.
struct Event {
  double time = 0;
  std::int64_t seq = 0;
  enum Type { task_gen, replica_arrival, replica_done, observe } type = task_gen;
  std::int32_t tav_index = 0;    // task_gen
  std::int64_t task = 0;         // replica_arrival / observe
  std::int64_t sev = 0;          // replica_arrival / replica_done / observe
  double service = 0;            // replica_arrival
  double feedback = 0;           // replica_arrival
  double raw_delay = 0;          // observe
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

// The moving world the simulation queries: either an analytic constant-
// velocity extrapolation of a synthetic placement, or a recorded trace
// (clamped to its first/last frame outside the recorded span).
struct World {
  bool from_trace = false;
  traffic::RoadGeometry geometry;
  // synthetic
  traffic::Frame base;
  std::vector<double> velocity_mps;  // aligned with base.vehicles, sign = direction
  // trace
  const traffic::Trace* trace = nullptr;

  traffic::Frame at(double t) const {
    if (from_trace) {
      const auto& fs = trace->frames;
      auto it = std::upper_bound(fs.begin(), fs.end(), t,
                                 [](double x, const traffic::Frame& f) {
                                   return x < f.time_s;
                                 });
      if (it != fs.begin()) --it;
      return *it;
    }
    traffic::Frame f = base;
    f.time_s = t;
    const double len = geometry.length_m;
    for (std::size_t i = 0; i < f.vehicles.size(); ++i) {
      double p = f.vehicles[i].pos_m + velocity_mps[i] * t;
      if (geometry.ring && len > 0.0) {
        p = std::fmod(p, len);
        if (p < 0.0) p += len;
      }
      f.vehicles[i].pos_m = p;
      f.vehicles[i].time_s = t;
    }
    return f;
  }
};

const traffic::VehicleSnapshot* find_vehicle(const traffic::Frame& f, std::int64_t id) {
  for (const auto& v : f.vehicles) {
    if (v.vehicle_id == id) return &v;
  }
  return nullptr;
}

// Per-task bookkeeping while replicas are in flight.
struct PendingTask {
  TaskRecord rec;
  int remaining = 0;
  std::map<std::int64_t, double> sojourn;
  std::map<std::int64_t, double> feedback;
};

struct Emitter {
  const std::function<void(const TaskRecord&)>* sink = nullptr;
  RunResult* result = nullptr;
  std::int64_t next = 0;
  std::map<std::int64_t, TaskRecord> done;
  double delay_sum = 0;

  void finalize(TaskRecord&& rec) {
    done.emplace(rec.task_id, std::move(rec));
    while (true) {
      auto it = done.find(next);
      if (it == done.end()) break;
      const TaskRecord& r = it->second;
      delay_sum += r.completion_delay;
      if (r.failed()) ++result->failures;
      if (sink && *sink) {
        (*sink)(r);
      } else {
        result->tasks.push_back(r);
      }
      done.erase(it);
      ++next;
    }
  }
};

// Stationary scenarios: no roads, no uploads, no erasures — a sequential
// bandit loop whose horizon is the task count. Slot draws still come from a
// per-task substream in selection order, so replication factors nest.
RunResult run_stationary(const Scenario& sc, const Policy& policy,
                         const bandit::LearnerConfig& cfg, double horizon,
                         std::uint64_t seed,
                         const std::function<void(const TaskRecord&)>& sink) {
  const auto T = static_cast<std::int64_t>(std::llround(horizon));
  if (T < 1) {
    throw std::invalid_argument("run: a stationary horizon is a task count and must round "
                                "to at least 1");
  }

  std::vector<std::int64_t> ids;
  std::map<std::int64_t, const bandit::TrueArm*> by_id;
  for (std::size_t i = 0; i < sc.arms.size(); ++i) {
    ids.push_back(sc.arms[i].arm_id);
    by_id[sc.arms[i].arm_id] = &sc.arms[i];
  }
  std::sort(ids.begin(), ids.end());

  // Clairvoyant choice: the single arm with the best true clipped mean,
  // smallest id on ties.
  std::int64_t genie_arm = ids.front();
  if (policy.kind == PolicyKind::genie) {
    double best = kInf;
    for (const auto id : ids) {
      const double m =
          bandit::true_subset_mean(sc.arms, {static_cast<int>(id)}, sc.d_max);
      if (m < best) {
        best = m;
        genie_arm = id;
      }
    }
  }

  bandit::Learner learner(cfg);
  RunResult result;
  Emitter emitter{&sink, &result};

  const int k = std::min<int>(cfg.k_replicas, static_cast<int>(ids.size()));
  std::vector<int> order(ids.size());
  for (std::int64_t t = 0; t < T; ++t) {
    const std::uint64_t task_seed = derive_seed(seed, kTaskSaltBase +
                                                          static_cast<std::uint64_t>(t));
    SplitMix64 sel(derive_seed(task_seed, kSelectSalt));
    SplitMix64 slot(derive_seed(task_seed, kSlotSalt));

    std::vector<std::int64_t> slot_order;
    std::int64_t learner_task = 0;
    switch (policy.kind) {
      case PolicyKind::random: {
        std::iota(order.begin(), order.end(), 0);
        partial_shuffle(order, static_cast<std::size_t>(k), sel);
        for (int j = 0; j < k; ++j) slot_order.push_back(ids[static_cast<std::size_t>(
            order[static_cast<std::size_t>(j)])]);
        break;
      }
      case PolicyKind::genie:
        slot_order.push_back(genie_arm);
        break;
      case PolicyKind::single:
      case PolicyKind::ltra: {
        const auto dec = learner.decide(ids);
        slot_order = dec.subset;
        learner_task = dec.task_index;
        break;
      }
    }

    TaskRecord rec;
    rec.task_id = t;
    rec.tav_id = 0;
    rec.gen_time = static_cast<double>(t);
    rec.selected = slot_order;
    std::sort(rec.selected.begin(), rec.selected.end());
    rec.received = rec.selected;
    rec.upload_delay = 0.0;

    double best = kInf;
    for (const auto arm_id : slot_order) {
      const auto* arm = by_id.at(arm_id);
      const double raw = arm->kind == bandit::TrueArm::Kind::exponential
                             ? rexp(slot, arm->param)
                             : arm->param;
      best = std::min(best, raw);
      rec.per_sev_delay[arm_id] = std::min(raw, sc.d_max);
      if (policy.kind == PolicyKind::single || policy.kind == PolicyKind::ltra) {
        learner.observe(learner_task, arm_id, raw);
      }
    }
    rec.deadline_miss = best > sc.d_max;
    rec.completion_delay = std::min(best, sc.d_max);
    emitter.finalize(std::move(rec));
  }

  result.mean_delay_s = emitter.delay_sum / static_cast<double>(T);
  result.completion_ratio =
      1.0 - static_cast<double>(result.failures) / static_cast<double>(T);
  return result;
}

// Synthetic-placement setup: populations, positions, speeds, directions, and
// per-SeV service rates, redrawn whole until every TaV has a candidate at
// t = 0 when coverage resampling is on.
struct SyntheticSetup {
  World world;
  std::vector<std::int64_t> tav_ids;
  std::map<std::int64_t, double> mu;
};

SyntheticSetup build_synthetic(const Scenario& sc, std::uint64_t seed) {
  const double road_m = sc.road_km * 1000.0;
  const std::uint64_t scenario_seed = derive_seed(seed, kScenarioSalt);
  SyntheticSetup s;
  s.world.geometry = traffic::RoadGeometry{road_m, true, false};

  const int max_attempts = sc.resample_coverage ? 1000 : 1;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    SplitMix64 g(derive_seed(scenario_seed, static_cast<std::uint64_t>(attempt)));
    const int n_tav = rpois(g, sc.gamma_t * sc.road_km);
    const int n_sev = rpois(g, sc.gamma_s * sc.road_km);

    traffic::Frame f;
    f.time_s = 0;
    auto add = [&](std::int64_t id, traffic::Role role) {
      traffic::VehicleSnapshot v;
      v.vehicle_id = id;
      v.role = role;
      v.pos_m = runif01(g) * road_m;
      f.vehicles.push_back(v);
    };
    for (int i = 0; i < n_tav; ++i) add(i, traffic::Role::TaV);
    for (int i = 0; i < n_sev; ++i) add(n_tav + i, traffic::Role::SeV);
    for (auto& v : f.vehicles) {
      v.speed_mps = sc.speed.kind == traffic::SpeedLaw::Kind::constant
                        ? sc.speed.mps
                        : runif(g, 0.0, sc.speed.mps);
    }
    for (auto& v : f.vehicles) {
      v.direction = sc.mixed_directions ? (runif01(g) < 0.5 ? 1 : -1) : 1;
    }
    std::map<std::int64_t, double> mu;
    for (int i = 0; i < n_sev; ++i) mu[n_tav + i] = runif(g, sc.mu_lo, sc.mu_hi);

    bool covered = true;
    if (sc.resample_coverage) {
      for (int i = 0; i < n_tav && covered; ++i) {
        covered = !traffic::candidate_set(f.vehicles[static_cast<std::size_t>(i)], f,
                                          s.world.geometry, sc.range_m)
                       .empty();
      }
      if (n_sev == 0 && n_tav > 0) covered = false;
    }
    if (!covered && attempt + 1 < max_attempts) continue;
    if (!covered) {
      throw std::runtime_error(
          "run: no placement with full coverage after 1000 attempts");
    }

    s.world.base = f;
    s.world.velocity_mps.clear();
    for (const auto& v : f.vehicles) {
      s.world.velocity_mps.push_back(v.speed_mps * v.direction);
    }
    for (int i = 0; i < n_tav; ++i) s.tav_ids.push_back(i);
    s.mu = std::move(mu);
    return s;
  }
  throw std::runtime_error("run: synthetic placement failed");  // unreachable
}

RunResult run_des(const Scenario& sc, const Policy& policy,
                  const bandit::LearnerConfig& cfg, double horizon, std::uint64_t seed,
                  const std::function<void(const TaskRecord&)>& sink) {
  // --- world, servers, arrival clocks ---------------------------------------
  World world;
  std::vector<std::int64_t> tav_ids;
  std::map<std::int64_t, SevServer> servers;

  if (sc.kind == ScenarioKind::synthetic) {
    auto s = build_synthetic(sc, seed);
    world = std::move(s.world);
    tav_ids = std::move(s.tav_ids);
    for (const auto& [id, mu] : s.mu) {
      servers[id] = SevServer{id, mu, 0.0, 0};
    }
  } else {
    world.from_trace = true;
    world.trace = &sc.trace;
    world.geometry = sc.trace.geometry;
    std::set<std::int64_t> tavs, sevs;
    for (const auto& f : sc.trace.frames) {
      for (const auto& v : f.vehicles) {
        (v.role == traffic::Role::TaV ? tavs : sevs).insert(v.vehicle_id);
      }
    }
    tav_ids.assign(tavs.begin(), tavs.end());
    // Service rates are drawn once per SeV, in sorted id order.
    SplitMix64 g(derive_seed(seed, kScenarioSalt));
    for (const auto id : sevs) {
      servers[id] = SevServer{id, runif(g, sc.mu_lo, sc.mu_hi), 0.0, 0};
    }
  }

  RunResult result;
  if (tav_ids.empty()) {
    result.completion_ratio = 1.0;
    return result;
  }

  const bool learning =
      policy.kind == PolicyKind::single || policy.kind == PolicyKind::ltra;
  std::map<std::int64_t, bandit::Learner> learners;  // by TaV id
  auto learner_for = [&](std::int64_t tav) -> bandit::Learner& {
    auto it = learners.find(tav);
    if (it == learners.end()) it = learners.emplace(tav, bandit::Learner(cfg)).first;
    return it->second;
  };

  std::vector<SplitMix64> arrival_streams;
  std::vector<double> arrival_clock(tav_ids.size(), 0.0);
  for (std::size_t i = 0; i < tav_ids.size(); ++i) {
    arrival_streams.emplace_back(derive_seed(seed, kArrivalSaltBase + i));
  }

  std::priority_queue<Event, std::vector<Event>, EventLater> events;
  std::int64_t seq = 0;
  auto push = [&](Event e) {
    e.seq = seq++;
    events.push(e);
  };
  auto schedule_arrival = [&](std::size_t tav_index) {
    arrival_clock[tav_index] += rexp(arrival_streams[tav_index], sc.lambda0);
    if (arrival_clock[tav_index] <= horizon) {
      Event e;
      e.time = arrival_clock[tav_index];
      e.type = Event::task_gen;
      e.tav_index = static_cast<std::int32_t>(tav_index);
      push(e);
    }
  };
  for (std::size_t i = 0; i < tav_ids.size(); ++i) schedule_arrival(i);

  Emitter emitter{&sink, &result};
  std::unordered_map<std::int64_t, PendingTask> inflight;
  // task id -> (tav id, the learner's own task index, observations still due);
  // entries vanish with their last observation so memory stays bounded.
  struct ObsRoute {
    std::int64_t tav_id = 0;
    std::int64_t learner_task = 0;
    int left = 0;
  };
  std::unordered_map<std::int64_t, ObsRoute> obs_route;
  std::int64_t task_counter = 0;

  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();

    switch (ev.type) {
      case Event::task_gen: {
        const std::size_t tav_index = static_cast<std::size_t>(ev.tav_index);
        const std::int64_t tav_id = tav_ids[tav_index];
        schedule_arrival(tav_index);

        const double t = ev.time;
        const traffic::Frame frame = world.at(t);
        const auto* tav = find_vehicle(frame, tav_id);
        if (!tav) {
          std::ostringstream os;
          os << "run: task vehicle " << tav_id << " absent from the trace at t = " << t;
          throw std::runtime_error(os.str());
        }
        const auto cands =
            traffic::candidate_set(*tav, frame, world.geometry, sc.range_m);
        if (cands.empty()) {
          std::ostringstream os;
          os << "run: empty candidate set for task vehicle " << tav_id << " at t = " << t;
          throw std::runtime_error(os.str());
        }

        const std::int64_t idx = task_counter++;
        const std::uint64_t task_seed =
            derive_seed(seed, kTaskSaltBase + static_cast<std::uint64_t>(idx));
        SplitMix64 sel(derive_seed(task_seed, kSelectSalt));
        SplitMix64 slot(derive_seed(task_seed, kSlotSalt));

        // Subset choice, in the policy's own order (the slot order).
        std::vector<std::int64_t> slot_order;
        std::int64_t learner_task = 0;
        switch (policy.kind) {
          case PolicyKind::random: {
            const int k = std::min<int>(cfg.k_replicas, static_cast<int>(cands.size()));
            std::vector<int> order(cands.size());
            std::iota(order.begin(), order.end(), 0);
            partial_shuffle(order, static_cast<std::size_t>(k), sel);
            for (int j = 0; j < k; ++j) {
              slot_order.push_back(cands[static_cast<std::size_t>(
                  order[static_cast<std::size_t>(j)])]);
            }
            break;
          }
          case PolicyKind::genie: {
            // Full knowledge of distance, queue backlog, and service rate:
            // minimize upload + (backlog + 1)/mu + mean feedback.
            double best = kInf;
            std::int64_t best_id = cands.front();
            for (const auto id : cands) {
              const auto* sv = find_vehicle(frame, id);
              double upload = 0.0;
              if (sc.channel.input_bits > 0.0) {
                upload = sc.channel.input_bits /
                         traffic::uplink_rate(*tav, *sv, sc.channel, world.geometry);
              }
              const auto& srv = servers.at(id);
              const double score = upload +
                                   static_cast<double>(srv.backlog + 1) / srv.mu +
                                   sc.feedback_s;
              if (score < best) {
                best = score;
                best_id = id;
              }
            }
            slot_order.push_back(best_id);
            break;
          }
          case PolicyKind::single:
          case PolicyKind::ltra: {
            auto& ln = learner_for(tav_id);
            const auto dec = ln.decide(cands);
            slot_order = dec.subset;
            learner_task = dec.task_index;
            break;
          }
        }

        // Multicast upload to the whole subset.
        double upload = 0.0;
        if (sc.channel.input_bits > 0.0) {
          std::vector<traffic::VehicleSnapshot> members;
          for (const auto id : slot_order) members.push_back(*find_vehicle(frame, id));
          upload = traffic::multicast_rate_and_upload_delay(*tav, members, sc.channel,
                                                            world.geometry)
                       .delay_s;
        }

        TaskRecord rec;
        rec.task_id = idx;
        rec.tav_id = tav_id;
        rec.gen_time = t;
        rec.upload_delay = upload;
        rec.selected = slot_order;
        std::sort(rec.selected.begin(), rec.selected.end());

        // Per-slot draws, in slot order: erasure probability and uniform,
        // service time at that SeV's rate, then the feedback leg.
        PendingTask pending;
        int survivors = 0;
        std::vector<Event> to_push;
        for (const auto sev : slot_order) {
          const double pe = runif(slot, sc.pe_lo, sc.pe_hi);
          const double u = runif01(slot);
          const double service = rexp(slot, servers.at(sev).mu);
          const double fb = sc.feedback_kind == FeedbackKind::exponential
                                ? rexp(slot, 1.0 / sc.feedback_s)
                                : sc.feedback_s;
          if (u < pe) {
            // Erased in flight: the learner only ever sees the cap.
            if (learning) {
              Event o;
              o.time = t + sc.d_max;
              o.type = Event::observe;
              o.task = idx;
              o.sev = sev;
              o.raw_delay = sc.d_max;
              to_push.push_back(o);
            }
            continue;
          }
          ++survivors;
          rec.received.push_back(sev);
          Event a;
          a.time = t + upload;
          a.type = Event::replica_arrival;
          a.task = idx;
          a.sev = sev;
          a.service = service;
          a.feedback = fb;
          to_push.push_back(a);
        }
        std::sort(rec.received.begin(), rec.received.end());
        rec.failed_erasure = survivors == 0;
        if (learning) {
          obs_route[idx] = {tav_id, learner_task, static_cast<int>(slot_order.size())};
        }

        for (auto& e : to_push) push(e);
        if (survivors == 0) {
          rec.completion_delay = sc.d_max;
          for (const auto id : rec.selected) rec.per_sev_delay[id] = sc.d_max;
          emitter.finalize(std::move(rec));
        } else {
          pending.rec = std::move(rec);
          pending.remaining = survivors;
          inflight.emplace(idx, std::move(pending));
        }
        break;
      }

      case Event::replica_arrival: {
        auto& srv = servers.at(ev.sev);
        const auto out = serve_with(srv, ev.time, ev.service);
        ++srv.backlog;
        Event d;
        d.time = out.completion;
        d.type = Event::replica_done;
        d.sev = ev.sev;
        push(d);

        auto& p = inflight.at(ev.task);
        p.sojourn[ev.sev] = out.sojourn;
        p.feedback[ev.sev] = ev.feedback;
        if (learning) {
          const double raw = p.rec.upload_delay + out.sojourn + ev.feedback;
          Event o;
          o.time = p.rec.gen_time + std::min(raw, sc.d_max);
          o.type = Event::observe;
          o.task = ev.task;
          o.sev = ev.sev;
          o.raw_delay = std::min(raw, sc.d_max);
          push(o);
        }
        if (--p.remaining == 0) {
          complete(p.rec, p.sojourn, p.feedback, sc.d_max);
          emitter.finalize(std::move(p.rec));
          inflight.erase(ev.task);
        }
        break;
      }

      case Event::replica_done:
        --servers.at(ev.sev).backlog;
        break;

      case Event::observe: {
        auto it = obs_route.find(ev.task);
        learner_for(it->second.tav_id).observe(it->second.learner_task, ev.sev,
                                               ev.raw_delay);
        if (--it->second.left == 0) obs_route.erase(it);
        break;
      }
    }
  }

  const auto n = task_counter;
  result.mean_delay_s = n > 0 ? emitter.delay_sum / static_cast<double>(n) : 0.0;
  result.completion_ratio =
      n > 0 ? 1.0 - static_cast<double>(result.failures) / static_cast<double>(n) : 1.0;
  return result;
}

}  // namespace

RunResult run(const Scenario& scenario, const Policy& policy, double horizon,
              std::uint64_t seed, const std::function<void(const TaskRecord&)>& sink) {
  scenario.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("run: horizon must be positive");

  bandit::LearnerConfig cfg = policy.learner;
  cfg.d_max = scenario.d_max;  // the learner's clip always matches the deadline
  if (policy.kind == PolicyKind::single || policy.kind == PolicyKind::genie) {
    cfg.k_replicas = 1;
  }
  cfg.validate();

  if (scenario.kind == ScenarioKind::stationary) {
    return run_stationary(scenario, policy, cfg, horizon, seed, sink);
  }
  return run_des(scenario, policy, cfg, horizon, seed, sink);
}

}  // namespace vecrep::simcore

