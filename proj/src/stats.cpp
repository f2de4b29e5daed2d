// SPDX-License-Identifier: Apache-2.0
#include "oce/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "oce/errors.hpp"

namespace oce::stats {

namespace {

void check_groups(const GroupedSamples& groups) {
  if (groups.size() < 2) throw ContractViolation("at least two groups are required");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw ContractViolation("group " + std::to_string(g) + " is empty");
    for (double v : groups[g]) {
      if (!std::isfinite(v)) throw ContractViolation("non-finite value in group " + std::to_string(g));
    }
  }
}

double h_from_rank_sums(std::span<const double> rank_sums, std::span<const std::size_t> sizes,
                        double n, double correction) {
  double acc = 0.0;
  for (std::size_t g = 0; g < rank_sums.size(); ++g) {
    acc += rank_sums[g] * rank_sums[g] / static_cast<double>(sizes[g]);
  }
  const double h = (12.0 / (n * (n + 1.0)) * acc - 3.0 * (n + 1.0)) / correction;
  return std::max(0.0, h);
}

std::vector<std::size_t> sizes_of(const GroupedSamples& groups) {
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) sizes.push_back(g.size());
  return sizes;
}

}  // namespace

PooledRanks pooled_midranks(const GroupedSamples& groups) {
  check_groups(groups);
  struct Item {
    double value;
    std::size_t group, index;
  };
  std::vector<Item> items;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].size(); ++i) items.push_back({groups[g][i], g, i});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.value < b.value; });

  PooledRanks out;
  out.total = items.size();
  out.ranks.resize(groups.size());
  out.rank_sums.assign(groups.size(), 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) out.ranks[g].resize(groups[g].size());

  for (std::size_t start = 0; start < items.size();) {
    std::size_t stop = start + 1;
    while (stop < items.size() && items[stop].value == items[start].value) ++stop;
    const double t = static_cast<double>(stop - start);
    const double rank = 0.5 * (static_cast<double>(start + 1) + static_cast<double>(stop));
    for (std::size_t k = start; k < stop; ++k) {
      out.ranks[items[k].group][items[k].index] = rank;
      out.rank_sums[items[k].group] += rank;
    }
    out.tie_term += t * t * t - t;
    start = stop;
  }
  return out;
}

KruskalWallisResult kruskal_wallis(const GroupedSamples& groups) {
  const auto ranks = pooled_midranks(groups);
  const double n = static_cast<double>(ranks.total);
  if (ranks.total < 3) throw ContractViolation("Kruskal-Wallis needs at least 3 observations");

  KruskalWallisResult out;
  out.total = ranks.total;
  out.df = static_cast<int>(groups.size()) - 1;
  out.tie_correction = 1.0 - ranks.tie_term / (n * n * n - n);
  if (out.tie_correction <= 0.0) throw DegenerateTiesError("all values are identical");
  const auto sizes = sizes_of(groups);
  out.h = h_from_rank_sums(ranks.rank_sums, sizes, n, out.tie_correction);
  const boost::math::chi_squared_distribution<double> chi2(out.df);
  out.p_value = boost::math::cdf(boost::math::complement(chi2, out.h));
  return out;
}

double kruskal_wallis_permutation_p(const GroupedSamples& groups) {
  const auto observed = kruskal_wallis(groups);
  const auto ranks = pooled_midranks(groups);
  if (ranks.total > 12) throw ContractViolation("exact permutation p-value is limited to N <= 12");

  std::vector<double> pooled;
  for (const auto& g : ranks.ranks) pooled.insert(pooled.end(), g.begin(), g.end());
  const auto sizes = sizes_of(groups);
  std::vector<std::size_t> labels;
  for (std::size_t g = 0; g < sizes.size(); ++g) labels.insert(labels.end(), sizes[g], g);

  const double n = static_cast<double>(ranks.total);
  const double threshold = observed.h - 1e-9 * std::max(1.0, observed.h);
  std::size_t hits = 0, total = 0;
  std::vector<double> sums(sizes.size());
  do {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) sums[labels[i]] += pooled[i];
    if (h_from_rank_sums(sums, sizes, n, observed.tie_correction) >= threshold) ++hits;
    ++total;
  } while (std::next_permutation(labels.begin(), labels.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<double> holm_adjust(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t rank = 0; rank < m; ++rank) {
    const double scaled = std::min(1.0, static_cast<double>(m - rank) * p_values[order[rank]]);
    running = std::max(running, scaled);
    adjusted[order[rank]] = running;
  }
  return adjusted;
}

ConoverResult conover_posthoc(const GroupedSamples& groups) {
  const auto kw = kruskal_wallis(groups);
  const auto ranks = pooled_midranks(groups);
  const std::size_t k = groups.size();
  const double n = static_cast<double>(ranks.total);
  if (ranks.total <= k) throw ContractViolation("Conover test needs N > k");

  double sum_sq = 0.0;
  for (const auto& g : ranks.ranks) {
    for (double r : g) sum_sq += r * r;
  }
  const double s2 = (sum_sq - n * (n + 1.0) * (n + 1.0) / 4.0) / (n - 1.0);
  const double dof = n - static_cast<double>(k);
  const double pooled_var = s2 * (n - 1.0 - kw.h) / dof;

  ConoverResult out;
  out.df = static_cast<int>(dof);
  out.statistic.assign(k, std::vector<double>(k, 0.0));
  out.p_raw.assign(k, std::vector<double>(k, 1.0));
  out.p_holm.assign(k, std::vector<double>(k, 1.0));

  const boost::math::students_t_distribution<double> t_dist(dof);
  std::vector<double> flat;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double mean_i = ranks.rank_sums[i] / static_cast<double>(groups[i].size());
      const double mean_j = ranks.rank_sums[j] / static_cast<double>(groups[j].size());
      const double diff = std::abs(mean_i - mean_j);
      const double se = std::sqrt(std::max(0.0, pooled_var) *
                                  (1.0 / static_cast<double>(groups[i].size()) +
                                   1.0 / static_cast<double>(groups[j].size())));
      double t = 0.0, p = 1.0;
      if (se > 0.0) {
        t = diff / se;
        p = 2.0 * boost::math::cdf(boost::math::complement(t_dist, t));
      } else if (diff > 0.0) {
        t = std::numeric_limits<double>::infinity();
        p = 0.0;
      }
      p = std::min(1.0, p);
      out.statistic[i][j] = out.statistic[j][i] = t;
      out.p_raw[i][j] = out.p_raw[j][i] = p;
      flat.push_back(p);
      pairs.emplace_back(i, j);
    }
  }
  const auto adjusted = holm_adjust(flat);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto [i, j] = pairs[q];
    out.p_holm[i][j] = out.p_holm[j][i] = adjusted[q];
  }
  return out;
}

nlohmann::json to_json(const KruskalWallisResult& kw) {
  return {{"h", kw.h},
          {"p_value", kw.p_value},
          {"df", kw.df},
          {"tie_correction", kw.tie_correction},
          {"n", kw.total}};
}

nlohmann::json to_json(const ConoverResult& conover) {
  auto matrix = [](const std::vector<std::vector<double>>& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : m) {
      nlohmann::json r = nlohmann::json::array();
      for (double v : row) {
        if (std::isinf(v)) {
          r.push_back("inf");
        } else {
          r.push_back(v);
        }
      }
      rows.push_back(std::move(r));
    }
    return rows;
  };
  return {{"df", conover.df},
          {"statistic", matrix(conover.statistic)},
          {"p_raw", matrix(conover.p_raw)},
          {"p_holm", matrix(conover.p_holm)}};
}

}  // namespace oce::stats
