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

// Layers, the Adam optimizer and learning-rate schedules on top of the
// autograd tape. Layers own their parameters by value so models are plain
// copyable values; Params() exposes them in a fixed order for optimizers
// and checkpoints.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "emotts/autograd.hpp"
#include "emotts/rng.hpp"

namespace emotts::nn {

using ag::Param;
using ag::Tape;
using ag::Var;

inline Mat UniformInit(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-limit, limit);
  return m;
}

inline Mat GlorotInit(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return UniformInit(fan_in, fan_out, limit, rng);
}

struct Linear {
  Param w, b;

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init = false)
      : w(name + ".w", zero_init ? Mat::Zero(in, out) : GlorotInit(in, out, rng)),
        b(name + ".b", Mat::Zero(1, out)) {}

  Var operator()(Tape& t, const Var& x) {
    return ag::AddRow(ag::MatMul(x, t.Leaf(w)), t.Leaf(b));
  }
  int in() const { return static_cast<int>(w.value.rows()); }
  int out() const { return static_cast<int>(w.value.cols()); }
  void Collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct Conv2d {
  ag::Conv2dGeom geom;
  Param w, b;

  Conv2d() = default;
  Conv2d(const std::string& name, const ag::Conv2dGeom& g, Rng& rng)
      : geom(g),
        w(name + ".w", UniformInit(g.patch(), g.out_c,
                                   std::sqrt(6.0 / static_cast<double>(g.patch())), rng)),
        b(name + ".b", Mat::Zero(1, g.out_c)) {}

  Var operator()(Tape& t, const Var& x) {
    return ag::Conv2d(x, t.Leaf(w), t.Leaf(b), geom);
  }
  void Collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct Conv1d {
  int kernel = 3;
  Param w, b;

  Conv1d() = default;
  Conv1d(const std::string& name, int in_c, int out_c, int k, Rng& rng)
      : kernel(k),
        w(name + ".w", GlorotInit(static_cast<Eigen::Index>(k) * in_c, out_c, rng)),
        b(name + ".b", Mat::Zero(1, out_c)) {}

  Var operator()(Tape& t, const Var& x, Eigen::Index batch, Eigen::Index steps) {
    return ag::Conv1dSeq(x, t.Leaf(w), t.Leaf(b), batch, steps, kernel);
  }
  void Collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

struct GruCell {
  Param wx, wh, bx, bh;

  GruCell() = default;
  GruCell(const std::string& name, int in, int hidden, Rng& rng) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
    wx = Param(name + ".wx", UniformInit(in, 3 * hidden, limit, rng));
    wh = Param(name + ".wh", UniformInit(hidden, 3 * hidden, limit, rng));
    bx = Param(name + ".bx", UniformInit(1, 3 * hidden, limit, rng));
    bh = Param(name + ".bh", UniformInit(1, 3 * hidden, limit, rng));
  }

  int hidden() const { return static_cast<int>(wh.value.rows()); }

  Var operator()(Tape& t, const Var& x, const Var& h, const Mat* mask = nullptr) {
    return ag::GruCell(x, h, t.Leaf(wx), t.Leaf(wh), t.Leaf(bx), t.Leaf(bh), mask);
  }
  void Collect(std::vector<Param*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&bx);
    out.push_back(&bh);
  }
};

struct Embedding {
  Param table;

  Embedding() = default;
  Embedding(const std::string& name, int vocab, int dim, Rng& rng)
      : table(name + ".table", UniformInit(vocab, dim, std::sqrt(3.0 / dim), rng)) {}

  Var operator()(Tape& t, std::vector<int> ids) {
    return ag::GatherRows(t.Leaf(table), std::move(ids));
  }
  void Collect(std::vector<Param*>& out) { out.push_back(&table); }
};

/// Inverted dropout with an explicit RNG; identity when rate is 0.
inline Var Dropout(Tape& t, const Var& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  Mat keep(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < keep.size(); ++i)
    keep.data()[i] = rng.Uniform() < rate ? 0.0 : scale;
  return ag::Mul(x, t.Constant(std::move(keep)));
}

// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void ZeroGrad() {
    for (Param* p : params_) p->ZeroGrad();
  }

  void Step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -=
          lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<Mat> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
inline double ClipGradNorm(const std::vector<Param*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (Param* p : params) p->grad *= s;
  }
  return norm;
}

/// Constant rate that switches to a second value after `switch_step` steps.
struct StepSchedule {
  double initial = 3e-5;
  double after = 3e-4;
  long switch_step = 100;

  double operator()(long step) const { return step < switch_step ? initial : after; }
};

/// Transformer-style warm-up: linear ramp to `initial` over `warmup`
/// steps, then decay as step^power (power = -0.5).
struct WarmupSchedule {
  double initial = 2e-3;
  long warmup = 4000;
  double power = -0.5;

  double operator()(long step) const {
    const double s = static_cast<double>(std::max<long>(step, 1));
    const double w = static_cast<double>(warmup);
    return initial * std::pow(w, -power) * std::min(s * std::pow(w, power - 1.0), std::pow(s, power));
  }
};

inline std::vector<Mat> Snapshot(const std::vector<Param*>& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (const Param* p : params) out.push_back(p->value);
  return out;
}

inline void Restore(const std::vector<Param*>& params, const std::vector<Mat>& values) {
  Require(params.size() == values.size(), "Restore: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

/// Draws indices without replacement, reshuffling at each epoch boundary.
class EpochSampler {
 public:
  EpochSampler(size_t n, uint64_t seed) : rng_(seed), order_(n) {
    for (size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.Shuffle(order_);
  }
  std::vector<size_t> Next(size_t k) {
    std::vector<size_t> out;
    while (out.size() < k) {
      if (pos_ == order_.size()) {
        rng_.Shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

}  // namespace emotts::nn
