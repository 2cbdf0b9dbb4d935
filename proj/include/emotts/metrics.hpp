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

// Confusion matrices and weighted / unweighted accuracy.

#include <limits>
#include <string>
#include <vector>

#include "emotts/common.hpp"

namespace emotts::metrics {

/// counts(i, j) = number of items with true class i predicted as j.
struct Confusion {
  Mat counts;

  explicit Confusion(int classes = 0) : counts(Mat::Zero(classes, classes)) {}

  int classes() const { return static_cast<int>(counts.rows()); }
  void Add(int truth, int pred, double weight = 1.0) {
    Require(truth >= 0 && truth < classes() && pred >= 0 && pred < classes(),
            "confusion: class index out of range");
    counts(truth, pred) += weight;
  }
  double total() const { return counts.sum(); }

  /// Row-normalized copy (rows with no items stay zero).
  Mat Normalized() const {
    Mat m = counts;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double s = m.row(i).sum();
      if (s > 0) m.row(i) /= s;
    }
    return m;
  }
};

inline Confusion ConfusionFromLists(const std::vector<int>& truth, const std::vector<int>& pred,
                                    int classes) {
  Require(truth.size() == pred.size(), "confusion: truth and prediction lengths differ");
  Confusion c(classes);
  for (size_t i = 0; i < truth.size(); ++i) c.Add(truth[i], pred[i]);
  return c;
}

struct Accuracy {
  double wa = 0.0;
  double ua = 0.0;
  std::vector<double> recall;  // per class; NaN for classes with no items
  std::vector<int> absent;     // classes excluded from UA
};

/// WA = trace / total; UA = mean recall over classes present in the data.
inline Accuracy AccuracyFromConfusion(const Confusion& c, bool warn_absent = true) {
  Require(c.total() > 0, "accuracy: empty confusion matrix");
  Accuracy a;
  a.wa = c.counts.trace() / c.total();
  double sum = 0.0;
  int present = 0;
  for (int i = 0; i < c.classes(); ++i) {
    const double n = c.counts.row(i).sum();
    if (n <= 0) {
      a.recall.push_back(std::numeric_limits<double>::quiet_NaN());
      a.absent.push_back(i);
      continue;
    }
    a.recall.push_back(c.counts(i, i) / n);
    sum += a.recall.back();
    ++present;
  }
  a.ua = sum / present;
  if (warn_absent && !a.absent.empty())
    LogWarn("accuracy: " + std::to_string(a.absent.size()) +
            " class(es) absent from the test set were excluded from UA");
  return a;
}

}  // namespace emotts::metrics
