// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace oce::stats {

/// k groups of real values; k >= 2, every group non-empty.
using GroupedSamples = std::vector<std::vector<double>>;

struct PooledRanks {
  std::vector<std::vector<double>> ranks;  // mid-ranks, same layout as the groups
  std::vector<double> rank_sums;
  std::size_t total = 0;
  double tie_term = 0.0;  // sum over tie blocks of (t^3 - t)
};

/// Mid-ranks (1-based) of all values pooled across groups.
PooledRanks pooled_midranks(const GroupedSamples& groups);

struct KruskalWallisResult {
  double h = 0.0;               // tie-corrected
  double p_value = 1.0;         // chi-squared, k - 1 degrees of freedom
  int df = 0;
  double tie_correction = 1.0;  // 1 - sum(t^3 - t) / (N^3 - N)
  std::size_t total = 0;
};

/// Throws ContractViolation for k < 2, an empty group or N < 3, and
/// DegenerateTiesError when every value is identical.
KruskalWallisResult kruskal_wallis(const GroupedSamples& groups);

/// Exact permutation p-value P(H >= H_obs) over all distinct assignments of the
/// pooled values to groups of the observed sizes. N <= 12 only.
double kruskal_wallis_permutation_p(const GroupedSamples& groups);

struct ConoverResult {
  int df = 0;  // N - k
  std::vector<std::vector<double>> statistic;  // |t|, symmetric, zero diagonal
  std::vector<std::vector<double>> p_raw;      // two-sided, unit diagonal
  std::vector<std::vector<double>> p_holm;
};

/// Conover-Iman pairwise comparisons on pooled mid-ranks; t with N - k degrees
/// of freedom, Holm step-down adjustment over the k(k-1)/2 pairs.
ConoverResult conover_posthoc(const GroupedSamples& groups);

/// Holm step-down adjusted p-values, same order as the input, monotone and capped at 1.
std::vector<double> holm_adjust(std::span<const double> p_values);

nlohmann::json to_json(const KruskalWallisResult& kw);
nlohmann::json to_json(const ConoverResult& conover);

}  // namespace oce::stats
