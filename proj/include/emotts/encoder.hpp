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

// 2-D conv stack over a (mel x time) image followed by a GRU over the
// downsampled time axis. Shared by the SER encoder and the TTS reference
// encoder. Batches are padded to the longest item; padded positions are
// zeroed after every layer and the GRU keeps its state past each item's
// end, so results do not depend on what else is in the batch.

#include <string>
#include <vector>

#include "json.hpp"

#include "emotts/autograd.hpp"
#include "emotts/common.hpp"
#include "emotts/nn.hpp"
#include "emotts/rng.hpp"

namespace emotts::nn {

struct ConvSpec {
  int channels = 32;
  int kernel = 3;
  int stride = 2;
  std::string nonlinearity = "relu";

  int padding() const { return kernel / 2; }
};

/// Output length of one conv layer along an axis; 0 if nothing survives.
inline int ConvOutLength(int n, const ConvSpec& c) {
  const int span = n + 2 * c.padding() - c.kernel;
  return span < 0 ? 0 : span / c.stride + 1;
}

inline nlohmann::json ConvSpecsToJson(const std::vector<ConvSpec>& layers) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : layers)
    out.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride},
                   {"nonlinearity", l.nonlinearity}});
  return out;
}

inline std::vector<ConvSpec> ConvSpecsFromJson(const nlohmann::json& j) {
  std::vector<ConvSpec> out;
  for (const auto& l : j) {
    ConvSpec s;
    s.channels = l.value("channels", s.channels);
    s.kernel = l.value("kernel", s.kernel);
    s.stride = l.value("stride", s.stride);
    s.nonlinearity = l.value("nonlinearity", s.nonlinearity);
    out.push_back(s);
  }
  return out;
}

/// Per-mel-bin standardization.
struct FeatureNorm {
  RowVec mean;
  RowVec inv_std;

  static FeatureNorm Identity(int dims) { return {RowVec::Zero(dims), RowVec::Ones(dims)}; }

  static FeatureNorm Fit(const std::vector<const Mat*>& mels) {
    Require(!mels.empty(), "feature norm: no data");
    const Eigen::Index d = mels[0]->cols();
    RowVec sum = RowVec::Zero(d), sq = RowVec::Zero(d);
    double n = 0;
    for (const Mat* m : mels) {
      Require(m->cols() == d, "feature norm: inconsistent mel width");
      sum += m->colwise().sum();
      sq += m->array().square().matrix().colwise().sum();
      n += static_cast<double>(m->rows());
    }
    FeatureNorm f;
    f.mean = sum / n;
    RowVec var = sq / n - f.mean.cwiseProduct(f.mean);
    f.inv_std = var.unaryExpr([](double v) { return 1.0 / std::sqrt(std::max(v, 1e-8)); });
    return f;
  }

  /// One mean and one scale shared by every bin.
  static FeatureNorm FitGlobal(const std::vector<const Mat*>& mels) {
    Require(!mels.empty(), "feature norm: no data");
    const Eigen::Index d = mels[0]->cols();
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const Mat* m : mels) {
      Require(m->cols() == d, "feature norm: inconsistent mel width");
      sum += m->sum();
      sq += m->squaredNorm();
      n += static_cast<double>(m->size());
    }
    const double mean = sum / n;
    const double var = std::max(sq / n - mean * mean, 1e-8);
    return {RowVec::Constant(d, mean), RowVec::Constant(d, 1.0 / std::sqrt(var))};
  }

  Mat Apply(const Mat& m) const {
    return ((m.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  }
  Mat Invert(const Mat& m) const {
    return ((m.array().rowwise() / inv_std.array()).matrix().rowwise() + mean);
  }
};

struct ConvGruConfig {
  std::vector<ConvSpec> conv;
  int gru_hidden = 128;
  int input_mels = 80;
  bool bidirectional = true;

  int OutFrames(int frames) const {
    for (const auto& c : conv) frames = ConvOutLength(frames, c);
    return frames;
  }
  int OutMels() const {
    int m = input_mels;
    for (const auto& c : conv) m = ConvOutLength(m, c);
    return m;
  }
  int MinInputFrames() const {
    int n = 1;
    while (OutFrames(n) < 1) ++n;
    return n;
  }
  int gru_input() const { return (conv.empty() ? 1 : conv.back().channels) * OutMels(); }
  int output_dim() const { return (bidirectional ? 2 : 1) * gru_hidden; }

  void Validate(const std::string& what) const {
    for (const auto& c : conv) {
      Require(c.channels > 0 && c.kernel > 0 && c.kernel % 2 == 1 && c.stride > 0,
              what + ": conv layers need positive channels, odd kernel, positive stride");
      Require(c.nonlinearity == "relu" || c.nonlinearity == "tanh",
              what + ": nonlinearity must be relu or tanh");
    }
    Require(gru_hidden > 0, what + ": gru_hidden must be positive");
    Require(input_mels > 0 && OutMels() >= 1, what + ": mel axis does not survive the conv stack");
  }
};

class ConvGruEncoder {
 public:
  ConvGruEncoder() = default;
  ConvGruEncoder(const std::string& prefix, const ConvGruConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in_c = 1;
    for (size_t i = 0; i < cfg_.conv.size(); ++i) {
      const auto& spec = cfg_.conv[i];
      const int patch = in_c * spec.kernel * spec.kernel;
      const std::string name = prefix + "conv" + std::to_string(i);
      conv_w_.emplace_back(name + ".w", UniformInit(patch, spec.channels, std::sqrt(6.0 / patch), rng));
      conv_b_.emplace_back(name + ".b", Mat::Zero(1, spec.channels));
      in_c = spec.channels;
    }
    gru_fw_ = GruCell(prefix + "gru_fw", cfg_.gru_input(), cfg_.gru_hidden, rng);
    if (cfg_.bidirectional) gru_bw_ = GruCell(prefix + "gru_bw", cfg_.gru_input(), cfg_.gru_hidden, rng);
  }

  const ConvGruConfig& config() const { return cfg_; }

  void Collect(std::vector<Param*>& p) {
    for (size_t i = 0; i < conv_w_.size(); ++i) {
      p.push_back(&conv_w_[i]);
      p.push_back(&conv_b_[i]);
    }
    gru_fw_.Collect(p);
    if (cfg_.bidirectional) gru_bw_.Collect(p);
  }

  /// B x output_dim: GRU state(s) at the last valid step of each item. With
  /// `norm`, inputs are standardized first. `train` binds parameters as
  /// gradient leaves; otherwise they enter the tape as constants.
  Var Encode(Tape& t, const std::vector<const Mat*>& mels, bool train,
             const FeatureNorm* norm = nullptr, const std::string& what = "encoder") {
    Require(!mels.empty(), what + ": empty batch");
    const Eigen::Index B = static_cast<Eigen::Index>(mels.size());
    std::vector<int> len(B);
    int W = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const Mat& m = *mels[b];
      Require(m.cols() == cfg_.input_mels, what + ": expected " + std::to_string(cfg_.input_mels) +
                                               " mel bins, got " + std::to_string(m.cols()));
      if (m.rows() < cfg_.MinInputFrames())
        throw ValidationError(what + ": input of " + std::to_string(m.rows()) +
                              " frames is too short after downsampling (need >= " +
                              std::to_string(cfg_.MinInputFrames()) + ")");
      len[b] = static_cast<int>(m.rows());
      W = std::max(W, len[b]);
    }
    int H = cfg_.input_mels;
    // Row layout (channel, mel, time).
    Mat x0 = Mat::Zero(B, static_cast<Eigen::Index>(H) * W);
    for (Eigen::Index b = 0; b < B; ++b) {
      const Mat& m = *mels[b];
      for (int f = 0; f < len[b]; ++f)
        for (int h = 0; h < H; ++h)
          x0(b, h * W + f) = norm ? (m(f, h) - norm->mean(h)) * norm->inv_std(h) : m(f, h);
    }
    Var x = t.Constant(std::move(x0));
    int C = 1;
    for (size_t i = 0; i < cfg_.conv.size(); ++i) {
      const auto& spec = cfg_.conv[i];
      ag::Conv2dGeom g{C, H, W, spec.channels, spec.kernel, spec.kernel,
                       spec.stride, spec.stride, spec.padding(), spec.padding()};
      x = ag::Conv2d(x, Use(t, conv_w_[i], train), Use(t, conv_b_[i], train), g);
      x = spec.nonlinearity == "relu" ? ag::Relu(x) : ag::Tanh(x);
      C = spec.channels;
      H = g.out_h();
      W = g.out_w();
      bool ragged = false;
      for (auto& l : len) {
        l = ConvOutLength(l, spec);
        ragged = ragged || l < W;
      }
      if (ragged) {
        Mat mask = Mat::Zero(B, static_cast<Eigen::Index>(C) * H * W);
        for (Eigen::Index b = 0; b < B; ++b)
          for (int c = 0; c < C * H; ++c)
            mask.row(b).segment(static_cast<Eigen::Index>(c) * W, len[b]).setOnes();
        x = ag::Mul(x, t.Constant(std::move(mask)));
      }
    }
    std::vector<Var> steps;
    for (int w = 0; w < W; ++w) {
      std::vector<int> idx;
      idx.reserve(static_cast<size_t>(C) * H);
      for (int c = 0; c < C * H; ++c) idx.push_back(c * W + w);
      steps.push_back(ag::GatherCols(x, std::move(idx)));
    }
    std::vector<Mat> masks(W, Mat::Ones(B, 1));
    for (int w = 0; w < W; ++w)
      for (Eigen::Index b = 0; b < B; ++b) masks[w](b, 0) = w < len[b] ? 1.0 : 0.0;
    auto run = [&](GruCell& cell, bool reverse) {
      Var h = t.Constant(Mat::Zero(B, cfg_.gru_hidden));
      Var wx = Use(t, cell.wx, train), wh = Use(t, cell.wh, train);
      Var bx = Use(t, cell.bx, train), bh = Use(t, cell.bh, train);
      for (int k = 0; k < W; ++k) {
        const int w = reverse ? W - 1 - k : k;
        h = ag::GruCell(steps[w], h, wx, wh, bx, bh, &masks[w]);
      }
      return h;
    };
    if (!cfg_.bidirectional) return run(gru_fw_, false);
    return ag::ConcatCols({run(gru_fw_, false), run(gru_bw_, true)});
  }

  static Var Use(Tape& t, Param& p, bool train) { return train ? t.Leaf(p) : t.Constant(p.value); }

 private:
  ConvGruConfig cfg_;
  std::vector<Param> conv_w_, conv_b_;
  GruCell gru_fw_, gru_bw_;
};

}  // namespace emotts::nn
