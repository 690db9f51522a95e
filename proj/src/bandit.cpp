#include "vecrep/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace vecrep::bandit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Expected first-response delay of a partially built subset, given the
// running product of the member CDFs over the grid points 0..l-1:
//   d_max * (1/l) * sum_i prod_i
double delay_from_products(const std::vector<double>& prod, double d_max) {
  double s = std::accumulate(prod.begin(), prod.end(), 0.0);
  return d_max * s / static_cast<double>(prod.size());
}

struct SortedCandidates {
  // indices into the original vector, ordered by (t_n, arm_id)
  std::vector<std::size_t> order;
  int l = 0;
};

SortedCandidates prepare(const std::vector<CandidateArm>& candidates, double d_max) {
  if (candidates.empty()) throw std::invalid_argument("select_subset: empty candidate set");
  if (d_max <= 0) throw std::invalid_argument("select_subset: d_max must be positive");
  std::set<std::int64_t> ids;
  const std::size_t grid = candidates.front().cdf.size();
  if (grid < 2) throw std::invalid_argument("select_subset: CDF grid too small");
  for (const auto& c : candidates) {
    if (!ids.insert(c.arm_id).second)
      throw std::invalid_argument("select_subset: duplicate arm id");
    if (c.cdf.size() != grid)
      throw std::invalid_argument("select_subset: candidates on different grids");
  }
  SortedCandidates out;
  out.l = static_cast<int>(grid) - 1;
  out.order.resize(candidates.size());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    if (x.t_n != y.t_n) return x.t_n < y.t_n;
    return x.arm_id < y.arm_id;
  });
  return out;
}

std::vector<std::int64_t> finish(const std::vector<CandidateArm>& candidates,
                                 std::vector<std::size_t> chosen) {
  std::vector<std::int64_t> ids;
  ids.reserve(chosen.size());
  for (auto i : chosen) ids.push_back(candidates[i].arm_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Number of K-subsets, saturating well above the exact-enumeration cutoff.
double choose_approx(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (c > 1e15) return c;
  }
  return c;
}

}  // namespace

void LearnerConfig::validate() const {
  if (!(alpha > 0) || !std::isfinite(alpha))
    throw std::invalid_argument("LearnerConfig: alpha must be positive");
  if (l < 1) throw std::invalid_argument("LearnerConfig: l must be a positive integer");
  if (!(d_max > 0) || !std::isfinite(d_max))
    throw std::invalid_argument("LearnerConfig: d_max must be positive");
  if (k_replicas < 1)
    throw std::invalid_argument("LearnerConfig: k_replicas must be a positive integer");
}

double normalize_delay(double d, double d_max) {
  if (!(d > 0)) throw std::domain_error("normalize_delay: delay must be positive");
  if (!(d_max > 0)) throw std::domain_error("normalize_delay: d_max must be positive");
  return std::min(d, d_max) / d_max;
}

DelayObservation make_observation(std::int64_t task_index, std::int64_t arm_id,
                                  double raw_delay, double d_max) {
  DelayObservation obs;
  obs.task_index = task_index;
  obs.arm_id = arm_id;
  obs.raw_delay = raw_delay;
  obs.normalized = normalize_delay(raw_delay, d_max);
  return obs;
}

void record_observation(ArmState& arm, const DelayObservation& obs, int l) {
  if (l < 1) throw std::invalid_argument("record_observation: l must be positive");
  if (arm.histogram.empty()) arm.histogram.assign(static_cast<std::size_t>(l), 0);
  if (arm.histogram.size() != static_cast<std::size_t>(l))
    throw std::invalid_argument("record_observation: histogram size does not match l");
  double reward = 1.0 - obs.normalized;
  auto bucket = static_cast<std::int64_t>(std::floor(reward * l));
  bucket = std::clamp<std::int64_t>(bucket, 0, l - 1);
  ++arm.histogram[static_cast<std::size_t>(bucket)];
  ++arm.k_count;
}

double lowered_value(double f_hat, std::int64_t k, double log_dt, double alpha) {
  if (k <= 0) throw std::domain_error("lowered_value: observation count must be positive");
  double pad = std::sqrt(alpha * std::max(log_dt, 0.0) / static_cast<double>(k));
  return std::max(f_hat - pad, 0.0);
}

std::vector<double> lowered_cdf(const ArmState& arm, std::int64_t t, double alpha, int l) {
  if (l < 1) throw std::invalid_argument("lowered_cdf: l must be positive");
  if (t <= arm.t_n)
    throw std::logic_error("lowered_cdf: task clock must exceed the arm's first appearance");
  std::vector<double> cdf(static_cast<std::size_t>(l) + 1, 0.0);
  cdf[static_cast<std::size_t>(l)] = 1.0;
  if (arm.k_count == 0) return cdf;  // maximal optimism for an unobserved arm
  if (arm.histogram.size() != static_cast<std::size_t>(l))
    throw std::invalid_argument("lowered_cdf: histogram size does not match l");
  double log_dt = std::log(static_cast<double>(t - arm.t_n));
  std::int64_t prefix = 0;
  double prev = 0.0;
  for (int i = 0; i < l; ++i) {
    prefix += arm.histogram[static_cast<std::size_t>(i)];
    double f_hat = static_cast<double>(prefix) / static_cast<double>(arm.k_count);
    double v = lowered_value(f_hat, arm.k_count, log_dt, alpha);
    prev = std::max(prev, v);  // keep the vector a valid CDF
    cdf[static_cast<std::size_t>(i)] = prev;
  }
  return cdf;
}

double expected_min_delay(const std::vector<std::vector<double>>& cdfs, double d_max) {
  if (cdfs.empty()) throw std::domain_error("expected_min_delay: no arms");
  if (!(d_max > 0)) throw std::domain_error("expected_min_delay: d_max must be positive");
  const std::size_t grid = cdfs.front().size();
  if (grid < 2) throw std::domain_error("expected_min_delay: CDF grid too small");
  for (const auto& c : cdfs) {
    if (c.size() != grid) throw std::domain_error("expected_min_delay: arms on different grids");
  }
  const std::size_t l = grid - 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    double prod = 1.0;
    for (const auto& c : cdfs) prod *= c[i];
    sum += prod;
  }
  return d_max * sum / static_cast<double>(l);
}

std::vector<std::int64_t> select_subset_exact(const std::vector<CandidateArm>& candidates,
                                              int K, double d_max) {
  SortedCandidates sc = prepare(candidates, d_max);
  const std::size_t n = candidates.size();
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(std::max(K, 0)), n);
  if (K < 1) throw std::invalid_argument("select_subset: K must be positive");
  if (m == n) {
    std::vector<std::size_t> all(sc.order.begin(), sc.order.end());
    return finish(candidates, all);
  }
  const std::size_t l = static_cast<std::size_t>(sc.l);

  // DFS over combinations in lexicographic order of the (t_n, arm_id)-sorted
  // list, carrying the running product of member CDFs per grid point. The
  // first strict minimum wins, so ties resolve to the lexicographically
  // earliest combination.
  std::vector<std::size_t> current, best;
  std::vector<std::vector<double>> prod_stack(m + 1, std::vector<double>(l, 1.0));
  double best_val = std::numeric_limits<double>::infinity();

  auto dfs = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
    if (depth == m) {
      double val = delay_from_products(prod_stack[depth], d_max);
      if (val < best_val) {
        best_val = val;
        best = current;
      }
      return;
    }
    for (std::size_t idx = start; idx + (m - depth) <= n; ++idx) {
      const auto& cdf = candidates[sc.order[idx]].cdf;
      for (std::size_t i = 0; i < l; ++i) prod_stack[depth + 1][i] = prod_stack[depth][i] * cdf[i];
      current.push_back(sc.order[idx]);
      self(self, idx + 1, depth + 1);
      current.pop_back();
    }
  };
  dfs(dfs, 0, 0);
  return finish(candidates, best);
}

std::vector<std::int64_t> select_subset_greedy(const std::vector<CandidateArm>& candidates,
                                               int K, double d_max) {
  SortedCandidates sc = prepare(candidates, d_max);
  const std::size_t n = candidates.size();
  if (K < 1) throw std::invalid_argument("select_subset: K must be positive");
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(K), n);
  if (m == n) {
    std::vector<std::size_t> all(sc.order.begin(), sc.order.end());
    return finish(candidates, all);
  }
  const std::size_t l = static_cast<std::size_t>(sc.l);
  std::vector<double> prod(l, 1.0);
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> chosen;
  for (std::size_t pass = 0; pass < m; ++pass) {
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_pos = n;
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (taken[pos]) continue;
      const auto& cdf = candidates[sc.order[pos]].cdf;
      double s = 0.0;
      for (std::size_t i = 0; i < l; ++i) s += prod[i] * cdf[i];
      double val = d_max * s / static_cast<double>(l);
      if (val < best_val) {  // strict: earliest (t_n, arm_id) wins ties
        best_val = val;
        best_pos = pos;
      }
    }
    taken[best_pos] = true;
    chosen.push_back(sc.order[best_pos]);
    const auto& cdf = candidates[sc.order[best_pos]].cdf;
    for (std::size_t i = 0; i < l; ++i) prod[i] *= cdf[i];
  }
  return finish(candidates, chosen);
}

std::vector<std::int64_t> select_subset(const std::vector<CandidateArm>& candidates, int K,
                                        double d_max) {
  if (K < 1) throw std::invalid_argument("select_subset: K must be positive");
  const std::size_t n = candidates.size();
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(K), n);
  if (choose_approx(n, m) <= 1e4) return select_subset_exact(candidates, K, d_max);
  return select_subset_greedy(candidates, K, d_max);
}

Learner::Learner(LearnerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

const ArmState* Learner::arm(std::int64_t arm_id) const {
  auto it = arms_.find(arm_id);
  return it == arms_.end() ? nullptr : &it->second;
}

Decision Learner::decide(const std::vector<std::int64_t>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("decide: empty candidate set");
  {
    std::set<std::int64_t> uniq(candidates.begin(), candidates.end());
    if (uniq.size() != candidates.size())
      throw std::invalid_argument("decide: duplicate candidate arm id");
  }
  ++t_;
  Decision d;
  d.task_index = t_;

  std::vector<std::int64_t> unseen, seen;
  for (auto id : candidates) {
    if (arms_.count(id)) {
      seen.push_back(id);
    } else {
      unseen.push_back(id);
    }
  }

  const std::size_t target =
      std::min<std::size_t>(static_cast<std::size_t>(cfg_.k_replicas), candidates.size());

  if (!unseen.empty()) {
    // Initialization: every new arm must be probed, padding with the
    // longest-known arms when fewer than K are new.
    d.initialization = true;
    for (auto id : unseen) {
      ArmState a;
      a.arm_id = id;
      a.t_n = t_;
      a.histogram.assign(static_cast<std::size_t>(cfg_.l), 0);
      arms_.emplace(id, a);
      d.subset.push_back(id);
    }
    if (d.subset.size() < target) {
      std::sort(seen.begin(), seen.end(), [&](std::int64_t a, std::int64_t b) {
        const ArmState& x = arms_.at(a);
        const ArmState& y = arms_.at(b);
        if (x.t_n != y.t_n) return x.t_n < y.t_n;
        return x.arm_id < y.arm_id;
      });
      for (auto id : seen) {
        if (d.subset.size() >= target) break;
        d.subset.push_back(id);
      }
    }
  } else {
    d.initialization = false;
    std::vector<CandidateArm> pool;
    pool.reserve(candidates.size());
    for (auto id : candidates) {
      const ArmState& a = arms_.at(id);
      pool.push_back({id, a.t_n, lowered_cdf(a, t_, cfg_.alpha, cfg_.l)});
    }
    d.subset = select_subset(pool, cfg_.k_replicas, cfg_.d_max);
  }

  std::sort(d.subset.begin(), d.subset.end());
  pending_[t_] = d.subset;
  return d;
}

void Learner::observe(std::int64_t task_index, std::int64_t arm_id, double raw_delay) {
  auto it = pending_.find(task_index);
  if (it == pending_.end())
    throw std::logic_error("observe: no outstanding observations for this task");
  auto& open = it->second;
  auto pos = std::find(open.begin(), open.end(), arm_id);
  if (pos == open.end())
    throw std::logic_error("observe: arm was not selected for this task or already reported");
  open.erase(pos);
  if (open.empty()) pending_.erase(it);
  DelayObservation obs = make_observation(task_index, arm_id, raw_delay, cfg_.d_max);
  record_observation(arms_.at(arm_id), obs, cfg_.l);
}

std::string Learner::to_json() const {
  nlohmann::json j;
  j["l"] = cfg_.l;
  j["t"] = t_;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [id, a] : arms_) {
    nlohmann::json e;
    e["arm_id"] = a.arm_id;
    e["t_n"] = a.t_n;
    e["k_count"] = a.k_count;
    e["histogram"] = a.histogram;
    arr.push_back(e);
  }
  j["arms"] = std::move(arr);
  return j.dump();
}

Learner Learner::from_json(const std::string& text, const LearnerConfig& cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("from_json: malformed checkpoint: ") + e.what());
  }
  Learner lr(cfg);
  try {
    if (j.at("l").get<int>() != cfg.l)
      throw std::invalid_argument("from_json: discretization level mismatch");
    lr.t_ = j.at("t").get<std::int64_t>();
    for (const auto& e : j.at("arms")) {
      ArmState a;
      a.arm_id = e.at("arm_id").get<std::int64_t>();
      a.t_n = e.at("t_n").get<std::int64_t>();
      a.k_count = e.at("k_count").get<std::int64_t>();
      a.histogram = e.at("histogram").get<std::vector<std::int64_t>>();
      if (a.histogram.size() != static_cast<std::size_t>(cfg.l))
        throw std::invalid_argument("from_json: histogram size does not match l");
      std::int64_t total = std::accumulate(a.histogram.begin(), a.histogram.end(), std::int64_t{0});
      if (total != a.k_count)
        throw std::invalid_argument("from_json: k_count inconsistent with histogram");
      if (!lr.arms_.emplace(a.arm_id, a).second)
        throw std::invalid_argument("from_json: duplicate arm id");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("from_json: malformed checkpoint: ") + e.what());
  }
  return lr;
}

double true_subset_mean(const std::vector<TrueArm>& arms, const std::vector<int>& subset,
                        double d_max) {
  if (subset.empty()) throw std::invalid_argument("true_subset_mean: empty subset");
  if (!(d_max > 0)) throw std::invalid_argument("true_subset_mean: d_max must be positive");
  double rate_sum = 0.0;
  double point_min = std::numeric_limits<double>::infinity();
  for (int id : subset) {
    auto it = std::find_if(arms.begin(), arms.end(),
                           [&](const TrueArm& a) { return a.arm_id == id; });
    if (it == arms.end()) throw std::invalid_argument("true_subset_mean: unknown arm id");
    if (it->kind == TrueArm::Kind::exponential) {
      if (!(it->param > 0)) throw std::invalid_argument("true_subset_mean: rate must be positive");
      rate_sum += it->param;
    } else {
      if (!(it->param > 0)) throw std::invalid_argument("true_subset_mean: delay must be positive");
      point_min = std::min(point_min, it->param);
    }
  }
  // The first response is min(Exp(rate_sum), point_min), clipped at d_max;
  // E[min(X, m)] for X ~ Exp(theta) is (1 - exp(-theta*m)) / theta.
  double m = std::min(d_max, point_min);
  if (rate_sum == 0.0) return m;
  return (1.0 - std::exp(-rate_sum * m)) / rate_sum;
}

double regret_bound(const std::vector<double>& normalized_gaps, int K, double d_max,
                    std::int64_t horizon) {
  if (K < 1) throw std::invalid_argument("regret_bound: K must be positive");
  if (!(d_max > 0)) throw std::invalid_argument("regret_bound: d_max must be positive");
  if (horizon < 1) throw std::invalid_argument("regret_bound: horizon must be positive");
  double log_t = std::log(static_cast<double>(horizon));
  double sum = 0.0;
  for (double g : normalized_gaps) {
    if (std::isfinite(g) && g > 0) sum += log_t / g;
  }
  double n = static_cast<double>(normalized_gaps.size());
  return d_max * (2136.0 * K * sum + (kPi * kPi / 3.0 + 1.0) * n);
}

RegretReport empirical_regret(const std::vector<double>& per_task_losses,
                              const std::vector<TrueArm>& arms, int K, double d_max,
                              bool stationary) {
  if (!stationary)
    throw std::invalid_argument(
        "empirical_regret: regret is only defined for stationary environments");
  if (arms.empty()) throw std::invalid_argument("empirical_regret: no arms");
  if (per_task_losses.empty()) throw std::invalid_argument("empirical_regret: no losses");
  if (K < 1) throw std::invalid_argument("empirical_regret: K must be positive");
  if (!(d_max > 0)) throw std::invalid_argument("empirical_regret: d_max must be positive");

  const std::size_t n = arms.size();
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(K), n);

  // Enumerate all subsets of size m and their true means.
  std::vector<std::vector<int>> subsets;
  std::vector<int> comb(m);
  auto emit = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
    if (depth == m) {
      subsets.push_back(comb);
      return;
    }
    for (std::size_t i = start; i + (m - depth) <= n; ++i) {
      comb[depth] = static_cast<int>(arms[i].arm_id);
      self(self, i + 1, depth + 1);
    }
  };
  emit(emit, 0, 0);

  std::vector<double> means(subsets.size());
  double mu_star = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    means[s] = true_subset_mean(arms, subsets[s], d_max);
    mu_star = std::min(mu_star, means[s]);
  }

  RegretReport r;
  r.horizon = static_cast<std::int64_t>(per_task_losses.size());
  r.mu_s_star = mu_star;
  for (double loss : per_task_losses) r.cumulative_loss += std::min(loss, d_max);
  r.empirical_regret = r.cumulative_loss - static_cast<double>(r.horizon) * mu_star;

  std::vector<double> gaps;
  gaps.reserve(n);
  for (const auto& a : arms) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      if (std::find(subsets[s].begin(), subsets[s].end(), static_cast<int>(a.arm_id)) ==
          subsets[s].end())
        continue;
      double gap = (means[s] - mu_star) / d_max;
      if (gap > 0) best = std::min(best, gap);
    }
    gaps.push_back(best);
    r.gap_table.emplace_back(a.arm_id, best);
  }
  r.bound = regret_bound(gaps, static_cast<int>(m), d_max, r.horizon);
  return r;
}

}  // namespace vecrep::bandit
