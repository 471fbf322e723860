#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "autogel/errors.hpp"

namespace autogel {

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks of the pooled scores.
inline double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw ContractError("auc: positive and negative scores must be non-empty");
  std::vector<std::pair<double, bool>> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  for (const auto& [s, p] : all)
    if (std::isnan(s)) throw NumericError("auc: NaN score");
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // doubled mid-ranks keep the arithmetic in integers
  long double twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const auto twice_mid = static_cast<long double>(i + 1 + j);  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) twice_rank_sum += twice_mid;
    i = j;
  }
  const auto np = static_cast<long double>(pos.size()), nn = static_cast<long double>(neg.size());
  const long double twice_u = twice_rank_sum - np * (np + 1);
  return static_cast<double>(twice_u / 2) / static_cast<double>(np * nn);
}

struct RankMetrics {
  double mrr = 0.0;
  std::map<std::size_t, double> hits;  // N -> Hits@N
};

inline RankMetrics mrr_hits(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ns = {1, 3, 10}) {
  if (ranks.empty()) throw ContractError("mrr_hits: no ranks");
  RankMetrics m;
  for (auto n : ns) m.hits[n] = 0.0;
  for (auto r : ranks) {
    if (r < 1) throw ContractError("mrr_hits: ranks start at 1");
    m.mrr += 1.0 / static_cast<double>(r);
    for (auto n : ns)
      if (r <= n) m.hits[n] += 1.0;
  }
  const double count = static_cast<double>(ranks.size());
  m.mrr /= count;
  for (auto& [n, h] : m.hits) h /= count;
  return m;
}

/// Filtered rank of `answer` among `scores`: other candidates listed in
/// `filtered` are skipped; ties count half, rounded down.
inline std::size_t filtered_rank(const double* scores, std::size_t count, std::size_t answer,
                                 const std::unordered_set<std::size_t>& filtered) {
  if (answer >= count) throw ContractError("filtered_rank: answer out of range");
  const double s = scores[answer];
  std::size_t greater = 0, equal = 0;
  for (std::size_t e = 0; e < count; ++e) {
    if (e == answer || filtered.count(e)) continue;
    if (scores[e] > s) ++greater;
    else if (scores[e] == s) ++equal;
  }
  return 1 + greater + equal / 2;
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
inline double accuracy(const std::vector<double>& logits, std::size_t classes, const std::vector<int>& labels) {
  if (labels.empty()) throw ContractError("accuracy: no labels");
  if (logits.size() != labels.size() * classes) throw DimensionError("accuracy: logits do not match labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.begin() + static_cast<std::ptrdiff_t>(i * classes);
    const auto pred = std::max_element(row, row + static_cast<std::ptrdiff_t>(classes)) - row;
    correct += pred == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw ContractError("mean of an empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); zero for a single value.
inline double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Per-seed metric values with their aggregate.
class MetricsReport {
 public:
  void add(std::uint64_t seed, const std::string& metric, double value) {
    auto& row = values_[metric];
    row.push_back({seed, value});
  }

  std::vector<std::string> metrics() const {
    std::vector<std::string> out;
    for (const auto& [m, v] : values_) out.push_back(m);
    return out;
  }

  std::vector<double> values(const std::string& metric) const {
    std::vector<double> out;
    for (const auto& [s, v] : values_.at(metric)) out.push_back(v);
    return out;
  }

  double mean(const std::string& metric) const { return mean_of(values(metric)); }
  double std(const std::string& metric) const { return std_of(values(metric)); }
  std::size_t runs(const std::string& metric) const { return values_.at(metric).size(); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [m, rows] : values_) {
      nlohmann::ordered_json per_seed = nlohmann::ordered_json::object();
      for (const auto& [s, v] : rows) per_seed[std::to_string(s)] = v;
      j[m] = {{"per_seed", per_seed}, {"mean", mean(m)}, {"std", std(m)}, {"n", rows.size()}};
    }
    return j;
  }

  /// Flat rows "dataset,task,seed,metric,value".
  std::string to_csv(const std::string& dataset, const std::string& task, bool header = true) const {
    std::ostringstream out;
    out.precision(17);
    if (header) out << "dataset,task,seed,metric,value\n";
    for (const auto& [m, rows] : values_)
      for (const auto& [s, v] : rows) out << dataset << ',' << task << ',' << s << ',' << m << ',' << v << '\n';
    return out.str();
  }

 private:
  std::map<std::string, std::vector<std::pair<std::uint64_t, double>>> values_;
};

}  // namespace autogel
