#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace vecrep::bandit {

// Knobs of the online replica-selection learner.
struct LearnerConfig {
  double alpha = 0.5;   // exploration constant in the confidence padding
  int l = 100;          // discretization level of the reward grid
  double d_max = 0.5;   // per-replica delay cap (s)
  int k_replicas = 1;   // subset size K

  void validate() const;  // throws std::invalid_argument naming the field
};

// Per-SeV learning state. The histogram counts observations per reward
// bucket j, each standing for the grid value j/l.
struct ArmState {
  std::int64_t arm_id = 0;
  std::int64_t t_n = 0;     // task index at first appearance
  std::int64_t k_count = 0; // number of recorded observations
  std::vector<std::int64_t> histogram;
};

struct DelayObservation {
  std::int64_t task_index = 0;
  std::int64_t arm_id = 0;
  double raw_delay = 0;    // seconds, as reported (clipping happens below)
  double normalized = 0;   // min(raw, d_max)/d_max, in (0, 1]
};

// One selection decision: the chosen SeV subset for a task. During the
// initialization phase the subset may exceed K when more than K unseen SeVs
// appear at once (they must all be probed).
struct Decision {
  std::int64_t task_index = 0;
  std::vector<std::int64_t> subset;  // sorted by arm id
  bool initialization = false;
};

// Ground-truth per-arm delay law for synthetic stationary environments.
struct TrueArm {
  enum class Kind { exponential, point_mass };
  std::int64_t arm_id = 0;
  Kind kind = Kind::exponential;
  double param = 1.0;  // rate (exponential) or the delay itself (point mass)
};

struct RegretReport {
  std::int64_t horizon = 0;
  double cumulative_loss = 0;   // sum of realized clipped task delays (s)
  double mu_s_star = 0;         // expected loss of the best fixed subset (s)
  double empirical_regret = 0;  // cumulative_loss - horizon * mu_s_star
  double bound = 0;             // logarithmic upper bound at alpha = 2/3
  std::vector<std::pair<std::int64_t, double>> gap_table;  // arm id -> normalized gap
};

// min(d, d_max)/d_max; throws std::domain_error for d <= 0.
double normalize_delay(double d, double d_max);

DelayObservation make_observation(std::int64_t task_index, std::int64_t arm_id,
                                  double raw_delay, double d_max);

// Reward r = 1 - normalized is bucketed at floor(r*l), clamped to [0, l-1].
void record_observation(ArmState& arm, const DelayObservation& obs, int l);

// One lowered-CDF entry: max(f_hat - sqrt(alpha * max(log_dt, 0) / k), 0).
// Exposed so the padding arithmetic is testable in isolation; requires k > 0.
double lowered_value(double f_hat, std::int64_t k, double log_dt, double alpha);

// Confidence-lowered CDF over the reward grid {0, 1/l, ..., (l-1)/l, 1},
// returned as l+1 values; the final point is pinned at 1. Unobserved arms
// (k_count = 0) get the maximally optimistic all-zero prefix. Throws
// std::logic_error when t <= the arm's first-appearance index.
std::vector<double> lowered_cdf(const ArmState& arm, std::int64_t t, double alpha, int l);

// Expected delay of the first response among a set of arms with independent
// reward CDFs on a common grid: d_max * (1 - E[max reward]), the expectation
// computed exactly under the product law.
double expected_min_delay(const std::vector<std::vector<double>>& cdfs, double d_max);

// A candidate arm ready for subset evaluation.
struct CandidateArm {
  std::int64_t arm_id = 0;
  std::int64_t t_n = 0;
  std::vector<double> cdf;  // lowered CDF on the shared grid
};

// Subset minimizing expected_min_delay, |subset| = min(K, N). Exact
// enumeration when C(N, K) <= 10^4, greedy otherwise; both deterministic
// with ties broken by earliest t_n then smallest arm id. The _exact and
// _greedy variants expose the two paths for cross-checking.
std::vector<std::int64_t> select_subset(const std::vector<CandidateArm>& candidates,
                                        int K, double d_max);
std::vector<std::int64_t> select_subset_exact(const std::vector<CandidateArm>& candidates,
                                              int K, double d_max);
std::vector<std::int64_t> select_subset_greedy(const std::vector<CandidateArm>& candidates,
                                               int K, double d_max);

// The learner: owns per-arm state, advances the task clock, handles arm
// churn (new arms trigger an initialization decision; vanished arms keep
// their state), and validates the observation contract.
class Learner {
 public:
  explicit Learner(LearnerConfig cfg);

  // Chooses the subset for the next task over the given candidate arm ids.
  // Advances the internal task index. Throws std::invalid_argument on an
  // empty candidate set.
  Decision decide(const std::vector<std::int64_t>& candidates);

  // Reports the realized delay of one replica of one earlier task. Throws
  // std::logic_error if the (task, arm) pair was not selected or was already
  // reported.
  void observe(std::int64_t task_index, std::int64_t arm_id, double raw_delay);

  const LearnerConfig& config() const { return cfg_; }
  std::int64_t now() const { return t_; }
  const ArmState* arm(std::int64_t arm_id) const;
  std::size_t arm_count() const { return arms_.size(); }

  // JSON checkpoint of the learned state: {"l","t","arms":[{"arm_id","t_n",
  // "k_count","histogram"}]}. Checkpoints are taken between tasks; pending
  // observations are not part of the format.
  std::string to_json() const;
  static Learner from_json(const std::string& text, const LearnerConfig& cfg);

 private:
  LearnerConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::int64_t, ArmState> arms_;
  std::map<std::int64_t, std::vector<std::int64_t>> pending_;  // task -> unreported arms
};

// Expected clipped first-response delay of a subset of true arms.
double true_subset_mean(const std::vector<TrueArm>& arms, const std::vector<int>& subset,
                        double d_max);

// Logarithmic regret bound at the alpha = 2/3 constants:
//   d_max * (2136 * K * sum_n ln(T)/gap_n + (pi^2/3 + 1) * N).
// Gaps are normalized per-arm suboptimality gaps; non-finite entries are
// skipped in the sum but still count toward N.
double regret_bound(const std::vector<double>& normalized_gaps, int K, double d_max,
                    std::int64_t horizon);

// Regret accounting against the best fixed subset of the true distributions.
// Only defined for stationary environments; throws std::invalid_argument
// otherwise. The bound is evaluated at the theory's alpha = 2/3 constants.
RegretReport empirical_regret(const std::vector<double>& per_task_losses,
                              const std::vector<TrueArm>& arms, int K, double d_max,
                              bool stationary);

}  // namespace vecrep::bandit
