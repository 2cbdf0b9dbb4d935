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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "emotts/common.hpp"

namespace emotts {

/// Attention weights over the style tokens, heads x tokens stored head
/// major in one row. Each head block is a probability vector.
struct StyleTokenWeights {
  int heads = 0;
  int tokens = 0;
  RowVec w;

  StyleTokenWeights() = default;
  StyleTokenWeights(int h, int t, RowVec values) : heads(h), tokens(t), w(std::move(values)) {
    Require(w.size() == static_cast<Eigen::Index>(h) * t, "style weights: size != heads * tokens");
  }

  static StyleTokenWeights Uniform(int h, int t) {
    return {h, t, RowVec::Constant(static_cast<Eigen::Index>(h) * t, 1.0 / t)};
  }

  auto Head(int h) const { return w.segment(static_cast<Eigen::Index>(h) * tokens, tokens); }

  /// Largest |sum - 1| over heads.
  double NormalizationError() const {
    double worst = 0.0;
    for (int h = 0; h < heads; ++h) worst = std::max(worst, std::abs(Head(h).sum() - 1.0));
    return worst;
  }

  void Validate(double tol = 1e-6) const {
    Require(heads > 0 && tokens > 0, "style weights: empty");
    Require(w.minCoeff() >= 0.0, "style weights: negative entry");
    Require(NormalizationError() <= tol, "style weights: a head block does not sum to 1");
  }

  std::vector<double> ToVector() const { return {w.data(), w.data() + w.size()}; }
  static StyleTokenWeights FromVector(int h, int t, const std::vector<double>& v) {
    return {h, t, Eigen::Map<const RowVec>(v.data(), static_cast<Eigen::Index>(v.size()))};
  }
};

}  // namespace emotts
