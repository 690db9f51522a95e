#pragma once

#include <string>

namespace vecrep::analytics {

// Which evaluation of the mean-inverse-candidate-count series to use.
enum class SeriesMode { exact, approx };

// Which per-SeV arrival rate enters the execution-delay model: the sharp
// value (default) or the conservative linear-in-K upper bound.
enum class LoadModel { exact, conservative };

// Scenario parameters for the closed-form planning layer. Densities are per
// km of road; rates are per second. Construction validates every field and
// throws std::invalid_argument naming the offending one.
struct NetworkConditions {
  double lambda0;  // task arrival rate per TaV (tasks/s)
  double mu_c;     // mean SeV service rate (tasks/s)
  double p_e;      // packet erasure probability
  double gamma_t;  // TaV density (vehicles/km)
  double gamma_s;  // SeV density (vehicles/km)
  double R;        // communication range (km)
  double theta_f;  // failure-probability threshold

  NetworkConditions(double lambda0_, double mu_c_, double p_e_, double gamma_t_,
                    double gamma_s_, double R_ = 0.2, double theta_f_ = 1.0);

  // Mean numbers of TaVs / SeVs within a length-2R road segment.
  double gamma_bar_t() const { return 2.0 * R * gamma_t; }
  double gamma_bar_s() const { return 2.0 * R * gamma_s; }

  // Convenience: densities from a total density and a TaV:SeV ratio
  // (gamma_t / gamma_s = ratio), the parameterization used by the grids.
  static NetworkConditions from_density_split(double lambda0, double total_density,
                                              double ratio, double mu_c = 10.0,
                                              double p_e = 0.02, double R = 0.2,
                                              double theta_f = 1.0);
};

// Output of the planning pipeline: the real-valued near-optimal replica
// count, its integer rounding, the reliability floor, and the final plan
// with its conservative load/delay estimates.
struct ReplicaPlan {
  double k_tilde;        // closed-form near-optimal replica count
  int k_tilde_round;     // round-half-away-from-zero, floored at 1
  int k_min;             // reliability floor
  int k_star;            // final plan: max(k_tilde_round, k_min)
  double lambda_hat_c;   // conservative per-SeV arrival bound at k_star (tasks/s)
  double d_hat_c;        // conservative expected execution delay at k_star (s)
  bool stable;           // mu_c - lambda_hat_c > 0
};

// Poisson pmf helper shared by the series evaluations (exposed for tests).
double poisson_pmf(double mean, int k);

// E[1/Y] over a Poisson(gamma_bar_s) candidate count Y, counting only Y >= 1:
// exact mode sums (1/k) pois(k) until cumulative mass exceeds 1 - 1e-12
// (capped at max(200, 20*gamma_bar_s) terms); approx mode returns
// 1/gamma_bar_s + 1/gamma_bar_s^2.
double mean_inverse_candidates(double gamma_bar_s, SeriesMode mode = SeriesMode::exact);

// Conservative upper bound on the mean per-SeV task arrival rate with K
// replicas: (gamma_bar_t + 1) * lambda0 * K * mean_inverse_candidates.
double arrival_rate_upper_bound(const NetworkConditions& cond, int K,
                                SeriesMode mode = SeriesMode::exact);

// Sharp mean per-SeV arrival rate with K replicas:
// (gamma_bar_t + 1) * lambda0 * [sum_{k=1..K} pois(k) + K * sum_{k>K} pois(k)/k].
// Equals the upper bound at K=1 and stays below it for K >= 2 because a
// replicating TaV can send at most min(K, Y) copies, not K.
double arrival_rate_exact(const NetworkConditions& cond, int K);

// Expected execution delay of a task replicated to K uniformly chosen
// in-range SeVs: Poisson mixture over the candidate count, binomial mixture
// over surviving receivers, first-response M/M/1 sojourn. Returns +infinity
// when the chosen load model makes the queues unstable (mu_c - lambda <= 0).
double expected_execution_delay(const NetworkConditions& cond, int K,
                                LoadModel load = LoadModel::exact);

// Closed-form near-optimal replica count:
// mu_c / (2 * lambda0 * (gamma_bar_t + 1) * (1/gamma_bar_s + 1/gamma_bar_s^2)).
double near_optimal_replicas(const NetworkConditions& cond);

// Probability that a task fails outright (every replica erased).
double failure_probability(const NetworkConditions& cond, int K);

// Smallest K with p_e^K <= theta_f, floored at 1. Both arguments must lie in
// the open interval (0, 1).
int min_replicas_for_reliability(double theta_f, double p_e);

// Full planning pipeline producing a ReplicaPlan (see struct docs).
ReplicaPlan optimal_replicas(const NetworkConditions& cond);

// argmin over K in {1..k_max} of expected_execution_delay, skipping unstable
// K; ties break toward smaller K. Throws std::runtime_error if no K is stable.
int theoretical_optimum_search(const NetworkConditions& cond, int k_max = 16,
                               LoadModel load = LoadModel::exact);

}  // namespace vecrep::analytics
