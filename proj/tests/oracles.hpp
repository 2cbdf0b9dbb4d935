// Copyright 2026 The emotts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "emotts/common.hpp"
#include "emotts/losses.hpp"

namespace emotts::testing {

/// Triple loop over all pairs and feature dimensions.
inline double BruteForceMmd(const Mat& s, const Mat& t, const losses::KernelBank& bank,
                            double cross_coefficient) {
  auto k = [&](const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) d2 += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    double v = 0.0;
    for (const auto& comp : bank.components) v += comp.eta * std::exp(-0.5 * d2 / comp.sigma);
    return v;
  };
  const double m = static_cast<double>(s.rows()), n = static_cast<double>(t.rows());
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.rows(); ++j) ss += k(s, i, s, j);
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.rows(); ++j) tt += k(t, i, t, j);
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < t.rows(); ++j) st += k(s, i, t, j);
  return ss / (m * m) + tt / (n * n) - cross_coefficient * st / (m * n);
}

/// Reference top-K: who is in the pool (argmax == cls), then a full sort
/// by (posterior desc, id asc) truncated at K.
inline std::vector<std::string> SortOracleTopK(
    const std::vector<std::pair<std::string, std::vector<double>>>& table, int cls, size_t k) {
  std::vector<std::pair<double, std::string>> pool;
  for (const auto& [id, post] : table) {
    int best = 0;
    for (size_t c = 1; c < post.size(); ++c)
      if (post[c] > post[best]) best = static_cast<int>(c);
    if (best == cls) pool.emplace_back(post[cls], id);
  }
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (size_t i = 0; i < pool.size() && i < k; ++i) out.push_back(pool[i].second);
  return out;
}

/// Accuracy figures computed directly from label lists.
struct HandAccuracy {
  double wa = 0.0, ua = 0.0;
};

inline HandAccuracy AccuracyFromLists(const std::vector<int>& truth, const std::vector<int>& pred,
                                      int classes) {
  std::vector<double> hit(classes, 0.0), tot(classes, 0.0);
  double correct = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    tot[truth[i]] += 1.0;
    if (truth[i] == pred[i]) {
      hit[truth[i]] += 1.0;
      correct += 1.0;
    }
  }
  HandAccuracy a;
  a.wa = correct / static_cast<double>(truth.size());
  int present = 0;
  for (int c = 0; c < classes; ++c)
    if (tot[c] > 0) {
      a.ua += hit[c] / tot[c];
      ++present;
    }
  a.ua /= present;
  return a;
}

}  // namespace emotts::testing
