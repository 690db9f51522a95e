#include "vecrep/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vecrep::analytics {

namespace {

constexpr double kMassThreshold = 1.0 - 1e-12;

int term_cap(double mean) {
  return std::max(200, static_cast<int>(20.0 * mean));
}

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Probability that exactly k of m receivers survive erasure, divided by k,
// summed over k >= 1: the first-response factor E[1/S | S>=1, binomial split].
double first_response_factor(int m, double p_e) {
  double q = 1.0 - p_e;
  double sum = 0.0;
  double binom = 1.0;  // C(m, k) built incrementally
  for (int k = 1; k <= m; ++k) {
    binom = binom * static_cast<double>(m - k + 1) / static_cast<double>(k);
    sum += binom * std::pow(q, k) * std::pow(p_e, m - k) / static_cast<double>(k);
  }
  return sum;
}

}  // namespace

NetworkConditions::NetworkConditions(double lambda0_, double mu_c_, double p_e_,
                                     double gamma_t_, double gamma_s_, double R_,
                                     double theta_f_)
    : lambda0(lambda0_),
      mu_c(mu_c_),
      p_e(p_e_),
      gamma_t(gamma_t_),
      gamma_s(gamma_s_),
      R(R_),
      theta_f(theta_f_) {
  require(lambda0 > 0, "NetworkConditions: lambda0 must be > 0");
  require(mu_c > 0, "NetworkConditions: mu_c must be > 0");
  require(p_e >= 0 && p_e < 1, "NetworkConditions: p_e must lie in [0, 1)");
  require(gamma_t >= 0, "NetworkConditions: gamma_t must be >= 0");
  require(gamma_s > 0, "NetworkConditions: gamma_s must be > 0");
  require(R > 0, "NetworkConditions: R must be > 0");
  require(theta_f > 0 && theta_f <= 1, "NetworkConditions: theta_f must lie in (0, 1]");
}

NetworkConditions NetworkConditions::from_density_split(double lambda0, double total_density,
                                                        double ratio, double mu_c, double p_e,
                                                        double R, double theta_f) {
  require(total_density > 0, "NetworkConditions: total density must be > 0");
  require(ratio >= 0, "NetworkConditions: density ratio must be >= 0");
  double gamma_s = total_density / (1.0 + ratio);
  double gamma_t = total_density - gamma_s;
  return NetworkConditions(lambda0, mu_c, p_e, gamma_t, gamma_s, R, theta_f);
}

double poisson_pmf(double mean, int k) {
  if (mean < 0 || k < 0) throw std::domain_error("poisson_pmf: bad arguments");
  if (mean == 0) return k == 0 ? 1.0 : 0.0;
  return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

double mean_inverse_candidates(double gamma_bar_s, SeriesMode mode) {
  if (gamma_bar_s <= 0) {
    throw std::domain_error("mean_inverse_candidates: gamma_bar_s must be > 0");
  }
  if (mode == SeriesMode::approx) {
    return 1.0 / gamma_bar_s + 1.0 / (gamma_bar_s * gamma_bar_s);
  }
  const int cap = term_cap(gamma_bar_s);
  double p = std::exp(-gamma_bar_s);
  double cum = p;
  double sum = 0.0;
  for (int k = 1; cum <= kMassThreshold && k <= cap; ++k) {
    p *= gamma_bar_s / k;
    cum += p;
    sum += p / k;
  }
  return sum;
}

double arrival_rate_upper_bound(const NetworkConditions& cond, int K, SeriesMode mode) {
  if (K < 1) throw std::domain_error("arrival_rate_upper_bound: K must be >= 1");
  return (cond.gamma_bar_t() + 1.0) * cond.lambda0 * K *
         mean_inverse_candidates(cond.gamma_bar_s(), mode);
}

double arrival_rate_exact(const NetworkConditions& cond, int K) {
  if (K < 1) throw std::domain_error("arrival_rate_exact: K must be >= 1");
  const double g = cond.gamma_bar_s();
  const int cap = term_cap(g);
  double p = std::exp(-g);
  double cum = p;
  double head = 0.0;  // P[1 <= Y <= K]: every in-range SeV gets a replica
  double tail = 0.0;  // sum_{k > K} pois(k)/k: K replicas spread over k SeVs
  for (int k = 1; cum <= kMassThreshold && k <= cap; ++k) {
    p *= g / k;
    cum += p;
    if (k <= K) {
      head += p;
    } else {
      tail += p / k;
    }
  }
  return (cond.gamma_bar_t() + 1.0) * cond.lambda0 * (head + K * tail);
}

double expected_execution_delay(const NetworkConditions& cond, int K, LoadModel load) {
  if (K < 1) throw std::domain_error("expected_execution_delay: K must be >= 1");
  const double lambda = load == LoadModel::exact ? arrival_rate_exact(cond, K)
                                                 : arrival_rate_upper_bound(cond, K);
  const double slack = cond.mu_c - lambda;
  if (slack <= 0) return std::numeric_limits<double>::infinity();

  // E[1/S] factors for every possible replica count up to K
  std::vector<double> factor(K + 1, 0.0);
  for (int m = 1; m <= K; ++m) factor[m] = first_response_factor(m, cond.p_e);

  const double g = cond.gamma_bar_s();
  const int cap = term_cap(g);
  double p = std::exp(-g);
  double cum = p;
  double mix = 0.0;
  int n = 0;
  for (n = 1; cum <= kMassThreshold && n <= cap && n < K; ++n) {
    p *= g / n;
    cum += p;
    mix += p * factor[n];
  }
  if (n == K) mix += (1.0 - cum) * factor[K];  // all larger candidate counts use K replicas
  return mix / slack;
}

double near_optimal_replicas(const NetworkConditions& cond) {
  const double c_approx = mean_inverse_candidates(cond.gamma_bar_s(), SeriesMode::approx);
  return cond.mu_c / (2.0 * cond.lambda0 * (cond.gamma_bar_t() + 1.0) * c_approx);
}

double failure_probability(const NetworkConditions& cond, int K) {
  if (K < 1) throw std::domain_error("failure_probability: K must be >= 1");
  const double g = cond.gamma_bar_s();
  const int cap = term_cap(g);
  double p = std::exp(-g);
  double cum = p;
  double sum = 0.0;
  for (int k = 1; cum <= kMassThreshold && k <= cap; ++k) {
    p *= g / k;
    cum += p;
    sum += p * std::pow(cond.p_e, std::min(k, K));
  }
  return sum;
}

int min_replicas_for_reliability(double theta_f, double p_e) {
  if (!(theta_f > 0 && theta_f < 1)) {
    throw std::domain_error("min_replicas_for_reliability: theta_f must lie in (0, 1)");
  }
  if (!(p_e > 0 && p_e < 1)) {
    throw std::domain_error("min_replicas_for_reliability: p_e must lie in (0, 1)");
  }
  double k = std::ceil(std::log(theta_f) / std::log(p_e) - 1e-12);
  return std::max(1, static_cast<int>(k));
}

ReplicaPlan optimal_replicas(const NetworkConditions& cond) {
  ReplicaPlan plan{};
  plan.k_tilde = near_optimal_replicas(cond);
  plan.k_tilde_round = std::max(1, static_cast<int>(std::llround(plan.k_tilde)));
  plan.k_min = (cond.theta_f >= 1.0 || cond.p_e <= 0.0)
                   ? 1
                   : min_replicas_for_reliability(cond.theta_f, cond.p_e);
  plan.k_star = std::max(plan.k_tilde_round, plan.k_min);
  plan.lambda_hat_c = arrival_rate_upper_bound(cond, plan.k_star);
  plan.d_hat_c = expected_execution_delay(cond, plan.k_star, LoadModel::conservative);
  plan.stable = cond.mu_c - plan.lambda_hat_c > 0;
  return plan;
}

int theoretical_optimum_search(const NetworkConditions& cond, int k_max, LoadModel load) {
  if (k_max < 1) throw std::domain_error("theoretical_optimum_search: k_max must be >= 1");
  int best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= k_max; ++k) {
    double d = expected_execution_delay(cond, k, load);
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  if (best_k == 0) {
    throw std::runtime_error("theoretical_optimum_search: no stable K in 1..k_max");
  }
  return best_k;
}

}  // namespace vecrep::analytics
