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

// Cross-domain speech emotion recognition: a 4-layer 2-D CNN over the
// log-mel image, a bidirectional GRU whose last valid states form the
// utterance feature, and a 2-layer dense classifier with softmax output.
// Training minimizes weighted CE on labeled source batches plus
// lambda * MMD between source and target encoder features.

#include <optional>
#include <string>
#include <vector>

#include "emotts/autograd.hpp"
#include "emotts/common.hpp"
#include "emotts/encoder.hpp"
#include "emotts/io.hpp"
#include "emotts/losses.hpp"
#include "emotts/metrics.hpp"
#include "emotts/nn.hpp"
#include "emotts/rng.hpp"

namespace emotts::ser {

using ag::Param;
using ag::Tape;
using ag::Var;
using json = nlohmann::json;

using nn::ConvOutLength;
using nn::ConvSpec;
using nn::FeatureNorm;

struct SerEncoderConfig {
  std::vector<ConvSpec> conv_layers = {{32}, {32}, {64}, {64}};
  int gru_hidden = 128;
  int input_mels = 80;

  nn::ConvGruConfig AsConvGru() const { return {conv_layers, gru_hidden, input_mels, true}; }
  int OutFrames(int frames) const { return AsConvGru().OutFrames(frames); }
  int OutMels() const { return AsConvGru().OutMels(); }
  int MinInputFrames() const { return AsConvGru().MinInputFrames(); }
  int feature_dim() const { return 2 * gru_hidden; }
  int gru_input() const { return AsConvGru().gru_input(); }

  void Validate() const {
    Require(conv_layers.size() == 4, "ser encoder: exactly 4 conv layers are required");
    AsConvGru().Validate("ser encoder");
  }
};

struct SerModelConfig {
  SerEncoderConfig encoder;
  int dense_hidden = 64;
  Task task = Task::kCategory4;
  bool zero_init_output = false;

  int classes() const { return NumClasses(task); }
  void Validate() const {
    encoder.Validate();
    Require(dense_hidden > 0, "ser model: dense_hidden must be positive");
  }
};

inline json ToJson(const SerModelConfig& c) {
  return {{"conv_layers", nn::ConvSpecsToJson(c.encoder.conv_layers)},        {"gru_hidden", c.encoder.gru_hidden},
          {"input_mels", c.encoder.input_mels}, {"dense_hidden", c.dense_hidden},
          {"task", TaskName(c.task)},     {"zero_init_output", c.zero_init_output}};
}

inline SerModelConfig SerModelConfigFromJson(const json& j, SerModelConfig c = {}) {
  if (j.contains("conv_layers")) c.encoder.conv_layers = nn::ConvSpecsFromJson(j["conv_layers"]);
  c.encoder.gru_hidden = j.value("gru_hidden", c.encoder.gru_hidden);
  c.encoder.input_mels = j.value("input_mels", c.encoder.input_mels);
  c.dense_hidden = j.value("dense_hidden", c.dense_hidden);
  if (j.contains("task")) c.task = ParseTask(j["task"].get<std::string>());
  c.zero_init_output = j.value("zero_init_output", c.zero_init_output);
  c.Validate();
  return c;
}

class SerModel {
 public:
  SerModel() = default;
  SerModel(const SerModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.Validate();
    Rng rng(DeriveSeed(seed, "ser.init"));
    encoder_ = nn::ConvGruEncoder("", cfg_.encoder.AsConvGru(), rng);
    const int H = cfg_.encoder.gru_hidden;
    dense1_ = nn::Linear("dense1", 2 * H, cfg_.dense_hidden, rng);
    dense2_ = nn::Linear("dense2", cfg_.dense_hidden, cfg_.classes(), rng, cfg_.zero_init_output);
    norm = FeatureNorm::Identity(cfg_.encoder.input_mels);
  }

  const SerModelConfig& config() const { return cfg_; }
  FeatureNorm norm;

  std::vector<Param*> Params() {
    std::vector<Param*> p;
    encoder_.Collect(p);
    dense1_.Collect(p);
    dense2_.Collect(p);
    return p;
  }

  /// B x 2H features: forward and backward GRU states at the last valid
  /// step of every sequence. `train` binds parameters as gradient leaves.
  Var Encode(Tape& t, const std::vector<const Mat*>& mels, bool train) {
    return encoder_.Encode(t, mels, train, &norm, "ser encode");
  }

  Var Logits(Tape& t, const Var& features, bool train) {
    Var h = ag::AddRow(ag::MatMul(features, Use(t, dense1_.w, train)), Use(t, dense1_.b, train));
    h = ag::Relu(h);
    return ag::AddRow(ag::MatMul(h, Use(t, dense2_.w, train)), Use(t, dense2_.b, train));
  }

  /// Eval-mode features, chunked.
  Mat EncodeAll(const std::vector<const Mat*>& mels, size_t chunk = 32) {
    Mat out(static_cast<Eigen::Index>(mels.size()), cfg_.encoder.feature_dim());
    ForChunks(mels, chunk, [&](Tape& t, const std::vector<const Mat*>& part, size_t start) {
      out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(part.size())) =
          Encode(t, part, false).value();
    });
    return out;
  }

  /// Eval-mode posteriors, one row per input.
  Mat Posteriors(const std::vector<const Mat*>& mels, size_t chunk = 32) {
    Mat out(static_cast<Eigen::Index>(mels.size()), cfg_.classes());
    ForChunks(mels, chunk, [&](Tape& t, const std::vector<const Mat*>& part, size_t start) {
      out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(part.size())) =
          ag::SoftmaxRowsOf(Logits(t, Encode(t, part, false), false).value());
    });
    return out;
  }

  static Mat Classify(const Mat& logits) { return ag::SoftmaxRowsOf(logits); }

  io::Archive ToArchive() {
    io::Archive a;
    a.meta["kind"] = "ser_model";
    a.meta["config"] = ToJson(cfg_);
    for (Param* p : Params()) a.Put(p->name, p->value);
    a.Put("norm.mean", norm.mean);
    a.Put("norm.inv_std", norm.inv_std);
    return a;
  }

  static SerModel FromArchive(const io::Archive& a) {
    if (a.meta.value("kind", "") != "ser_model")
      throw ValidationError("archive does not hold a SER model");
    SerModel m(SerModelConfigFromJson(a.meta.at("config")), 0);
    for (Param* p : m.Params()) {
      const Mat& v = a.Get(p->name);
      Require(v.rows() == p->value.rows() && v.cols() == p->value.cols(),
              "SER checkpoint: shape mismatch for " + p->name);
      p->value = v;
      p->ZeroGrad();
    }
    m.norm.mean = a.Get("norm.mean");
    m.norm.inv_std = a.Get("norm.inv_std");
    return m;
  }

 private:
  static Var Use(Tape& t, Param& p, bool train) { return nn::ConvGruEncoder::Use(t, p, train); }

  template <typename F>
  static void ForChunks(const std::vector<const Mat*>& mels, size_t chunk, F&& f) {
    for (size_t start = 0; start < mels.size(); start += chunk) {
      std::vector<const Mat*> part(mels.begin() + start,
                                   mels.begin() + std::min(mels.size(), start + chunk));
      Tape t;
      f(t, part, start);
    }
  }

  SerModelConfig cfg_;
  nn::ConvGruEncoder encoder_;
  nn::Linear dense1_, dense2_;
};

// ---------------------------------------------------------------------------
// Training

struct SerExample {
  std::string id;
  Mat mel;         // frames x mels
  int label = -1;  // class index for the model's task; -1 if unlabeled
};

inline std::vector<const Mat*> MelPointers(const std::vector<SerExample>& xs) {
  std::vector<const Mat*> p;
  p.reserve(xs.size());
  for (const auto& x : xs) p.push_back(&x.mel);
  return p;
}

struct SerTrainConfig {
  int batch_size = 96;
  long max_steps = 20000;
  double lambda = 0.5;
  losses::KernelBank bank = losses::KernelBank::Default();
  losses::MmdCross cross = losses::MmdCross::kStandard;
  int validation_size = 500;
  int patience = 10;
  int eval_every = 100;
  nn::StepSchedule schedule;
  double clip_norm = 0.0;  // 0 disables clipping
  uint64_t seed = 1;

  void Validate() const {
    Require(batch_size >= 2 && batch_size % 2 == 0, "ser train: batch_size must be even and >= 2");
    Require(max_steps >= 1, "ser train: max_steps must be positive");
    Require(lambda >= 0.0, "ser train: lambda must be nonnegative");
    Require(patience >= 1 && eval_every >= 1, "ser train: patience and eval_every must be positive");
    Require(validation_size >= 1, "ser train: validation_size must be positive");
    bank.Validate();
  }
};

inline json ToJson(const SerTrainConfig& c) {
  json bank = json::array();
  for (const auto& k : c.bank.components) bank.push_back({{"sigma", k.sigma}, {"eta", k.eta}});
  return {{"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"lambda", c.lambda},
          {"kernel_bank", bank},
          {"mmd_cross", c.cross == losses::MmdCross::kStandard ? "standard" : "literal"},
          {"validation_size", c.validation_size},
          {"patience", c.patience},
          {"eval_every", c.eval_every},
          {"lr_initial", c.schedule.initial},
          {"lr_after", c.schedule.after},
          {"lr_switch_step", c.schedule.switch_step},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed}};
}

inline SerTrainConfig SerTrainConfigFromJson(const json& j, SerTrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.lambda = j.value("lambda", c.lambda);
  if (j.contains("kernel_bank")) {
    c.bank.components.clear();
    for (const auto& k : j["kernel_bank"]) c.bank.components.push_back({k.at("sigma"), k.at("eta")});
  }
  if (j.contains("mmd_cross")) {
    const std::string s = j["mmd_cross"];
    Require(s == "standard" || s == "literal", "ser train: mmd_cross must be standard or literal");
    c.cross = s == "standard" ? losses::MmdCross::kStandard : losses::MmdCross::kLiteral;
  }
  c.validation_size = j.value("validation_size", c.validation_size);
  c.patience = j.value("patience", c.patience);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.schedule.initial = j.value("lr_initial", c.schedule.initial);
  c.schedule.after = j.value("lr_after", c.schedule.after);
  c.schedule.switch_step = j.value("lr_switch_step", c.schedule.switch_step);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

struct SerHistoryRow {
  long step = 0;
  double ce = 0, mmd = 0, loss = 0;
  std::optional<double> val_wa, val_ua;

  json ToJson() const {
    json j = {{"step", step}, {"L_CE", ce}, {"L_MMD", mmd}, {"L", loss}};
    if (val_wa) {
      j["val_WA"] = *val_wa;
      j["val_UA"] = *val_ua;
    }
    return j;
  }
};

struct SerEvaluation {
  metrics::Confusion confusion;
  metrics::Accuracy accuracy;
  std::vector<int> predictions;
  Mat posteriors;
};

inline SerEvaluation EvaluateSer(SerModel& model, const std::vector<SerExample>& test,
                                 bool warn_absent = true) {
  Require(!test.empty(), "evaluate ser: empty test set");
  SerEvaluation e;
  e.posteriors = model.Posteriors(MelPointers(test));
  e.confusion = metrics::Confusion(model.config().classes());
  for (size_t i = 0; i < test.size(); ++i) {
    Require(test[i].label >= 0, "evaluate ser: unlabeled test example '" + test[i].id + "'");
    Eigen::Index k;
    e.posteriors.row(static_cast<Eigen::Index>(i)).maxCoeff(&k);
    e.predictions.push_back(static_cast<int>(k));
    e.confusion.Add(test[i].label, static_cast<int>(k));
  }
  e.accuracy = metrics::AccuracyFromConfusion(e.confusion, warn_absent);
  return e;
}

struct SerTrainResult {
  SerModel model;
  std::vector<SerHistoryRow> history;
  long best_step = 0;
  double best_val_wa = -1.0;
  bool early_stopped = false;
};

namespace detail {

inline losses::ClassWeights WeightsFromLabels(const std::vector<SerExample>& xs, int classes) {
  std::vector<long> counts(classes, 0);
  for (const auto& x : xs) counts[x.label]++;
  losses::ClassWeights w;
  const double total = static_cast<double>(xs.size());
  for (int c = 0; c < classes; ++c) {
    if (counts[c] == 0) LogWarn("ser train: class " + std::to_string(c) + " absent from training data");
    w.w.push_back(counts[c] > 0 ? total / (classes * static_cast<double>(counts[c])) : 0.0);
  }
  return w;
}

}  // namespace detail

/// Joint CE + lambda * MMD training with early stopping on validation WA.
/// Normalization statistics are fitted on source_train. The returned model
/// holds the parameters of the best validation evaluation.
inline SerTrainResult TrainSer(const std::vector<SerExample>& source_train,
                               const std::vector<SerExample>& source_val,
                               const std::vector<SerExample>& target, const SerModelConfig& model_cfg,
                               const SerTrainConfig& cfg) {
  cfg.Validate();
  if (source_train.empty()) throw ValidationError("ser train: source training set is empty");
  if (source_val.empty()) throw ValidationError("ser train: source validation set is empty");
  if (target.empty()) throw ValidationError("ser train: target domain is empty");
  const int C = model_cfg.classes();
  for (const auto* set : {&source_train, &source_val})
    for (const auto& x : *set)
      Require(x.label >= 0 && x.label < C, "ser train: source example '" + x.id + "' lacks a valid label");

  SerTrainResult res;
  res.model = SerModel(model_cfg, cfg.seed);
  SerModel& model = res.model;
  model.norm = FeatureNorm::Fit(MelPointers(source_train));
  const auto weights = detail::WeightsFromLabels(source_train, C);
  auto params = model.Params();
  nn::Adam adam(params);
  nn::EpochSampler src_sampler(source_train.size(), DeriveSeed(cfg.seed, "ser.source"));
  nn::EpochSampler tgt_sampler(target.size(), DeriveSeed(cfg.seed, "ser.target"));
  const size_t half = static_cast<size_t>(cfg.batch_size / 2);
  std::vector<Mat> best = nn::Snapshot(params);
  int since_best = 0;

  for (long step = 1; step <= cfg.max_steps; ++step) {
    const auto si = src_sampler.Next(half), ti = tgt_sampler.Next(half);
    std::vector<const Mat*> batch;
    Mat y = Mat::Zero(static_cast<Eigen::Index>(half), C);
    for (size_t k = 0; k < half; ++k) {
      batch.push_back(&source_train[si[k]].mel);
      y(static_cast<Eigen::Index>(k), source_train[si[k]].label) = 1.0;
    }
    for (size_t k = 0; k < half; ++k) batch.push_back(&target[ti[k]].mel);

    adam.ZeroGrad();
    Tape t;
    Var feats = model.Encode(t, batch, true);
    Var fs = ag::SliceRows(feats, 0, static_cast<Eigen::Index>(half));
    Var ft = ag::SliceRows(feats, static_cast<Eigen::Index>(half), static_cast<Eigen::Index>(half));
    Var ce = losses::WeightedCeLogp(ag::LogSoftmaxRows(model.Logits(t, fs, true)), y, weights,
                                    losses::Reduction::kMean);
    SerHistoryRow row;
    row.step = step;
    row.ce = ce.value()(0, 0);
    Var loss = ce;
    if (cfg.lambda > 0.0) {
      Var mmd = losses::Mmd(fs, ft, cfg.bank, cfg.cross);
      row.mmd = mmd.value()(0, 0);
      loss = ag::Add(ce, ag::Scale(mmd, cfg.lambda));
    } else {
      row.mmd = losses::MmdLoss(fs.value(), ft.value(), cfg.bank, cfg.cross);
    }
    row.loss = loss.value()(0, 0);
    if (!std::isfinite(row.loss))
      throw RuntimeError("ser train: non-finite loss at step " + std::to_string(step) +
                         " (L_CE=" + std::to_string(row.ce) + ", L_MMD=" + std::to_string(row.mmd) + ")");
    t.Backward(loss);
    if (cfg.clip_norm > 0.0) nn::ClipGradNorm(params, cfg.clip_norm);
    adam.Step(cfg.schedule(step - 1));

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      auto ev = EvaluateSer(model, source_val, false);
      row.val_wa = ev.accuracy.wa;
      row.val_ua = ev.accuracy.ua;
      if (ev.accuracy.wa > res.best_val_wa) {
        res.best_val_wa = ev.accuracy.wa;
        res.best_step = step;
        best = nn::Snapshot(params);
        since_best = 0;
      } else {
        ++since_best;
      }
      LogInfo("ser step " + std::to_string(step) + " L=" + std::to_string(row.loss) +
              " val_WA=" + std::to_string(ev.accuracy.wa));
    }
    res.history.push_back(row);
    if (since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  nn::Restore(params, best);
  return res;
}

}  // namespace emotts::ser
