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

// Character-level attention TTS with global style tokens.
//
//   text -> embedding -> conv -> BiGRU ----+-- memory (per character)
//   style embedding (broadcast) -----------+
//   decoder: prenet -> attention GRU -> location-sensitive attention ->
//            decoder GRU -> r mel frames + stop logit per step
//   post-net: mel -> log-linear spectrum; Griffin-Lim at synthesis
//
// The style embedding comes from the reference encoder and token attention
// during training, and directly from supplied token weights at synthesis.
// An optional head predicts emotion from the token weights.
//
// Mels and log-linear spectra are standardized with one global mean and
// scale each, fitted on the training set and stored with the model.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emotts/autograd.hpp"
#include "emotts/common.hpp"
#include "emotts/dsp.hpp"
#include "emotts/encoder.hpp"
#include "emotts/io.hpp"
#include "emotts/losses.hpp"
#include "emotts/nn.hpp"
#include "emotts/rng.hpp"
#include "emotts/style.hpp"

namespace emotts::tts {

using json = nlohmann::json;
using nn::ConvSpec;
using nn::FeatureNorm;
using nn::Param;
using nn::Tape;
using nn::Var;

// ---------------------------------------------------------------------------
// Text

inline constexpr int kPadId = 0;
inline constexpr int kSpaceId = 27;
inline constexpr int kUnknownId = 28;
inline constexpr int kEosId = 29;
inline constexpr int kVocabSize = 30;

/// Lowercased letters map to 1..26; an end-of-sequence id is appended.
inline std::vector<int> TextToIds(const std::string& text) {
  if (text.empty()) throw ValidationError("tts: empty text");
  std::vector<int> ids;
  ids.reserve(text.size() + 1);
  for (unsigned char c : text) {
    c = static_cast<unsigned char>(std::tolower(c));
    if (c >= 'a' && c <= 'z')
      ids.push_back(1 + (c - 'a'));
    else if (c == ' ')
      ids.push_back(kSpaceId);
    else
      ids.push_back(kUnknownId);
  }
  ids.push_back(kEosId);
  return ids;
}

// ---------------------------------------------------------------------------
// Configuration

enum class HeadKind {
  kCategory,   // one dense layer over all weights -> 4 classes
  kDimension,  // arousal from the first half, valence from the second
};

inline std::string HeadKindName(HeadKind k) { return k == HeadKind::kCategory ? "category" : "dimension"; }

inline HeadKind ParseHeadKind(const std::string& s) {
  if (s == "category") return HeadKind::kCategory;
  if (s == "dimension") return HeadKind::kDimension;
  throw ValidationError("unknown emotion head kind '" + s + "' (expected category or dimension)");
}

/// Tasks predicted by each kind of head, in output order.
inline std::vector<Task> HeadTasks(HeadKind k) {
  if (k == HeadKind::kCategory) return {Task::kCategory4};
  return {Task::kArousal2, Task::kValence2};
}

struct GstConfig {
  int tokens = 10;
  int heads = 4;
  int token_dim = 32;  // style embedding width, split evenly over heads
  nn::ConvGruConfig reference{{{8}, {8}, {16}}, 32, 80, false};

  int head_dim() const { return token_dim / heads; }
  int weight_dim() const { return heads * tokens; }

  void Validate(HeadKind head) const {
    Require(tokens >= 1 && heads >= 1, "gst: tokens and heads must be positive");
    Require(token_dim >= heads && token_dim % heads == 0, "gst: token_dim must be a multiple of heads");
    if (head == HeadKind::kDimension)
      Require(weight_dim() % 2 == 0, "gst: heads * tokens must be even for the two-valve split");
    reference.Validate("reference encoder");
    Require(!reference.bidirectional, "reference encoder: must be unidirectional");
  }
};

struct TtsModelConfig {
  int embed_dim = 32;
  int encoder_channels = 32;
  int encoder_kernel = 5;
  int encoder_gru = 16;  // per direction
  GstConfig gst;
  int prenet1 = 32;
  int prenet2 = 32;
  double prenet_dropout = 0.5;
  int attention_dim = 32;
  int attention_rnn = 64;
  int decoder_rnn = 64;
  int location_filters = 4;
  int location_kernel = 7;
  int reduction = 2;  // frames per decoder step
  int n_mels = 80;
  int n_linear = 513;
  int postnet_channels = 64;
  int postnet_kernel = 5;
  HeadKind head = HeadKind::kCategory;
  int max_decoder_steps = 200;
  double stop_threshold = 0.5;

  int memory_dim() const { return 2 * encoder_gru + gst.token_dim; }

  void Validate() const {
    Require(embed_dim > 0 && encoder_channels > 0 && encoder_gru > 0, "tts: encoder sizes must be positive");
    Require(encoder_kernel % 2 == 1 && postnet_kernel % 2 == 1 && location_kernel % 2 == 1,
            "tts: conv kernels must be odd");
    Require(prenet1 > 0 && prenet2 > 0 && attention_dim > 0 && attention_rnn > 0 && decoder_rnn > 0 &&
                location_filters > 0 && postnet_channels > 0,
            "tts: layer sizes must be positive");
    Require(prenet_dropout >= 0.0 && prenet_dropout < 1.0, "tts: prenet_dropout must be in [0, 1)");
    Require(reduction >= 1, "tts: reduction must be >= 1");
    Require(n_mels == gst.reference.input_mels, "tts: reference encoder input_mels must equal n_mels");
    Require(n_mels > 0 && n_linear > 0, "tts: spectrum sizes must be positive");
    Require(max_decoder_steps >= 1, "tts: max_decoder_steps must be >= 1");
    Require(stop_threshold > 0.0 && stop_threshold < 1.0, "tts: stop_threshold must be in (0, 1)");
    gst.Validate(head);
  }
};

/// Widths close to the original GST-Tacotron setup. Far too slow for the
/// toy pipeline; kept for completeness.
inline TtsModelConfig PaperTtsModelConfig() {
  TtsModelConfig c;
  c.embed_dim = 256;
  c.encoder_channels = 512;
  c.encoder_gru = 128;
  c.gst.token_dim = 256;
  c.gst.reference = {{{32}, {32}, {64}, {64}, {128}, {128}}, 128, 80, false};
  c.prenet1 = 256;
  c.prenet2 = 128;
  c.attention_dim = 128;
  c.attention_rnn = 256;
  c.decoder_rnn = 256;
  c.location_filters = 32;
  c.location_kernel = 31;
  c.postnet_channels = 256;
  c.max_decoder_steps = 1000;
  return c;
}

inline json ToJson(const TtsModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"encoder_channels", c.encoder_channels},
          {"encoder_kernel", c.encoder_kernel},
          {"encoder_gru", c.encoder_gru},
          {"gst",
           {{"tokens", c.gst.tokens},
            {"heads", c.gst.heads},
            {"token_dim", c.gst.token_dim},
            {"reference_conv", nn::ConvSpecsToJson(c.gst.reference.conv)},
            {"reference_gru", c.gst.reference.gru_hidden}}},
          {"prenet1", c.prenet1},
          {"prenet2", c.prenet2},
          {"prenet_dropout", c.prenet_dropout},
          {"attention_dim", c.attention_dim},
          {"attention_rnn", c.attention_rnn},
          {"decoder_rnn", c.decoder_rnn},
          {"location_filters", c.location_filters},
          {"location_kernel", c.location_kernel},
          {"reduction", c.reduction},
          {"n_mels", c.n_mels},
          {"n_linear", c.n_linear},
          {"postnet_channels", c.postnet_channels},
          {"postnet_kernel", c.postnet_kernel},
          {"head", HeadKindName(c.head)},
          {"max_decoder_steps", c.max_decoder_steps},
          {"stop_threshold", c.stop_threshold}};
}

inline TtsModelConfig TtsModelConfigFromJson(const json& j, TtsModelConfig c = {}) {
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
  c.encoder_gru = j.value("encoder_gru", c.encoder_gru);
  if (j.contains("gst")) {
    const json& g = j["gst"];
    c.gst.tokens = g.value("tokens", c.gst.tokens);
    c.gst.heads = g.value("heads", c.gst.heads);
    c.gst.token_dim = g.value("token_dim", c.gst.token_dim);
    if (g.contains("reference_conv")) c.gst.reference.conv = nn::ConvSpecsFromJson(g["reference_conv"]);
    c.gst.reference.gru_hidden = g.value("reference_gru", c.gst.reference.gru_hidden);
  }
  c.prenet1 = j.value("prenet1", c.prenet1);
  c.prenet2 = j.value("prenet2", c.prenet2);
  c.prenet_dropout = j.value("prenet_dropout", c.prenet_dropout);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.attention_rnn = j.value("attention_rnn", c.attention_rnn);
  c.decoder_rnn = j.value("decoder_rnn", c.decoder_rnn);
  c.location_filters = j.value("location_filters", c.location_filters);
  c.location_kernel = j.value("location_kernel", c.location_kernel);
  c.reduction = j.value("reduction", c.reduction);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.gst.reference.input_mels = c.n_mels;
  c.n_linear = j.value("n_linear", c.n_linear);
  c.postnet_channels = j.value("postnet_channels", c.postnet_channels);
  c.postnet_kernel = j.value("postnet_kernel", c.postnet_kernel);
  if (j.contains("head")) c.head = ParseHeadKind(j["head"].get<std::string>());
  c.max_decoder_steps = j.value("max_decoder_steps", c.max_decoder_steps);
  c.stop_threshold = j.value("stop_threshold", c.stop_threshold);
  c.Validate();
  return c;
}

// ---------------------------------------------------------------------------
// Forward-pass context

/// Binds parameters into one tape: as gradient leaves when training,
/// otherwise as constants (cached, so loops do not copy them per step).
class Pass {
 public:
  Pass(Tape& t, bool train, Rng* dropout = nullptr) : t(t), train(train), dropout(dropout) {}

  Var operator()(Param& p) {
    if (train) return t.Leaf(p);
    auto it = consts_.find(&p);
    if (it != consts_.end()) return it->second;
    return consts_.emplace(&p, t.Constant(p.value)).first->second;
  }
  Var Dense(nn::Linear& l, const Var& x) { return ag::AddRow(ag::MatMul(x, (*this)(l.w)), (*this)(l.b)); }
  Var Gru(nn::GruCell& c, const Var& x, const Var& h, const Mat* mask = nullptr) {
    return ag::GruCell(x, h, (*this)(c.wx), (*this)(c.wh), (*this)(c.bx), (*this)(c.bh), mask);
  }
  Var Conv(nn::Conv1d& c, const Var& x, Eigen::Index batch, Eigen::Index steps) {
    return ag::Conv1dSeq(x, (*this)(c.w), (*this)(c.b), batch, steps, c.kernel);
  }

  Tape& t;
  bool train;
  Rng* dropout;

 private:
  std::unordered_map<const Param*, Var> consts_;
};

// ---------------------------------------------------------------------------
// Emotion head

/// Single dense layer (category) or two binary classifiers on the contiguous
/// halves of the weight vector (dimension).
class EmotionHead {
 public:
  EmotionHead() = default;
  EmotionHead(HeadKind kind, int weight_dim, Rng& rng, bool zero_init = false) : kind_(kind), dim_(weight_dim) {
    if (kind_ == HeadKind::kCategory) {
      layers_.emplace_back("emotion.category", dim_, NumClasses(Task::kCategory4), rng, zero_init);
    } else {
      if (dim_ % 2 != 0)
        throw ValidationError("emotion head: weight vector of odd length " + std::to_string(dim_) +
                              " cannot be split into two valves");
      layers_.emplace_back("emotion.arousal", dim_ / 2, 2, rng, zero_init);
      layers_.emplace_back("emotion.valence", dim_ / 2, 2, rng, zero_init);
    }
  }

  HeadKind kind() const { return kind_; }
  int weight_dim() const { return dim_; }

  void Collect(std::vector<Param*>& p) {
    for (auto& l : layers_) l.Collect(p);
  }

  /// One logit matrix per task in HeadTasks() order.
  std::vector<Var> Logits(Pass& P, const Var& weights) {
    if (weights.cols() != dim_)
      throw ValidationError("emotion head: expected weight vectors of length " + std::to_string(dim_) +
                            ", got " + std::to_string(weights.cols()));
    if (kind_ == HeadKind::kCategory) return {P.Dense(layers_[0], weights)};
    const Eigen::Index half = dim_ / 2;
    return {P.Dense(layers_[0], ag::SliceCols(weights, 0, half)),
            P.Dense(layers_[1], ag::SliceCols(weights, half, half))};
  }

  std::vector<Mat> Posteriors(const Mat& weights) {
    if (kind_ == HeadKind::kDimension && weights.cols() % 2 != 0)
      throw ValidationError("emotion head: odd-length weight vector in the dimension task");
    Tape t;
    Pass P(t, false);
    std::vector<Mat> out;
    for (const Var& l : Logits(P, t.Constant(weights))) out.push_back(ag::SoftmaxRowsOf(l.value()));
    return out;
  }
  std::vector<Mat> Posteriors(const StyleTokenWeights& w) { return Posteriors(Mat(w.w)); }

 private:
  HeadKind kind_ = HeadKind::kCategory;
  int dim_ = 0;
  std::vector<nn::Linear> layers_;
};

// ---------------------------------------------------------------------------
// Model

struct GstOutput {
  Var style;    // B x token_dim
  Var weights;  // B x (heads * tokens), head major
};

/// Additive mask putting -1e9 on padded characters.
inline Mat AttentionMask(const std::vector<int>& lengths, int L) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(lengths.size()), L);
  for (size_t b = 0; b < lengths.size(); ++b)
    for (int l = lengths[b]; l < L; ++l) m(static_cast<Eigen::Index>(b), l) = -1e9;
  return m;
}

/// softmax((energies + mask) / temperature) row-wise; the decoder uses the
/// same computation on the tape.
inline Mat AttentionWeights(const Mat& energies, const Mat& mask, double temperature) {
  Require(temperature > 0.0, "attention: temperature must be positive");
  return ag::SoftmaxRowsOf(energies + mask, temperature);
}
inline Mat AttentionWeights(const Mat& energies, double temperature) {
  return AttentionWeights(energies, Mat::Zero(energies.rows(), energies.cols()), temperature);
}

struct Memory {
  Var values;  // (B * L) x memory_dim, item major
  Var keys;    // (B * L) x attention_dim
  Var mask;    // B x L additive
  Eigen::Index batch = 0, length = 0;
};

struct DecoderState {
  Var att_h, dec_h, context, alpha, cum_alpha;
};

class TtsModel {
 public:
  TtsModel() = default;
  TtsModel(const TtsModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.Validate();
    Rng rng(DeriveSeed(seed, "tts.init"));
    const auto& g = cfg_.gst;
    const int M = cfg_.memory_dim();
    embed_ = nn::Embedding("text.embed", kVocabSize, cfg_.embed_dim, rng);
    enc_conv_ = nn::Conv1d("text.conv", cfg_.embed_dim, cfg_.encoder_channels, cfg_.encoder_kernel, rng);
    enc_fw_ = nn::GruCell("text.gru_fw", cfg_.encoder_channels, cfg_.encoder_gru, rng);
    enc_bw_ = nn::GruCell("text.gru_bw", cfg_.encoder_channels, cfg_.encoder_gru, rng);
    ref_ = nn::ConvGruEncoder("ref.", g.reference, rng);
    Mat tok(g.tokens, g.token_dim);
    for (Eigen::Index i = 0; i < tok.size(); ++i) tok.data()[i] = 0.5 * rng.Normal();
    tokens_ = Param("gst.tokens", std::move(tok));
    query_ = nn::Linear("gst.query", g.reference.output_dim(), g.token_dim, rng);
    key_ = nn::Linear("gst.key", g.token_dim, g.token_dim, rng);
    value_ = nn::Linear("gst.value", g.token_dim, g.token_dim, rng);
    prenet1_ = nn::Linear("dec.prenet1", cfg_.n_mels, cfg_.prenet1, rng);
    prenet2_ = nn::Linear("dec.prenet2", cfg_.prenet1, cfg_.prenet2, rng);
    att_rnn_ = nn::GruCell("dec.attention_rnn", cfg_.prenet2 + M, cfg_.attention_rnn, rng);
    att_query_ = nn::Linear("att.query", cfg_.attention_rnn, cfg_.attention_dim, rng);
    att_memory_ = nn::Linear("att.memory", M, cfg_.attention_dim, rng);
    loc_conv_ = nn::Conv1d("att.location_conv", 2, cfg_.location_filters, cfg_.location_kernel, rng);
    loc_proj_ = nn::Linear("att.location", cfg_.location_filters, cfg_.attention_dim, rng);
    att_v_ = nn::Linear("att.v", cfg_.attention_dim, 1, rng);
    dec_rnn_ = nn::GruCell("dec.rnn", cfg_.attention_rnn + M, cfg_.decoder_rnn, rng);
    frames_ = nn::Linear("dec.frames", cfg_.decoder_rnn + M, cfg_.reduction * cfg_.n_mels, rng);
    stop_ = nn::Linear("dec.stop", cfg_.decoder_rnn + M, 1, rng);
    post_conv_ = nn::Conv1d("post.conv", cfg_.n_mels, cfg_.postnet_channels, cfg_.postnet_kernel, rng);
    post_proj_ = nn::Linear("post.linear", cfg_.postnet_channels, cfg_.n_linear, rng);
    // Own stream, so models with and without the head start identical.
    Rng head_rng(DeriveSeed(seed, "tts.emotion_head"));
    head_ = EmotionHead(cfg_.head, g.weight_dim(), head_rng);
    mel_norm = FeatureNorm::Identity(cfg_.n_mels);
    linear_norm = FeatureNorm::Identity(cfg_.n_linear);
  }

  const TtsModelConfig& config() const { return cfg_; }
  FeatureNorm mel_norm, linear_norm;

  /// Everything except the emotion head.
  std::vector<Param*> Params() {
    std::vector<Param*> p;
    embed_.Collect(p);
    enc_conv_.Collect(p);
    enc_fw_.Collect(p);
    enc_bw_.Collect(p);
    ref_.Collect(p);
    p.push_back(&tokens_);
    for (auto* l : {&query_, &key_, &value_, &prenet1_, &prenet2_}) l->Collect(p);
    att_rnn_.Collect(p);
    for (auto* l : {&att_query_, &att_memory_}) l->Collect(p);
    loc_conv_.Collect(p);
    for (auto* l : {&loc_proj_, &att_v_}) l->Collect(p);
    dec_rnn_.Collect(p);
    for (auto* l : {&frames_, &stop_}) l->Collect(p);
    post_conv_.Collect(p);
    post_proj_.Collect(p);
    return p;
  }
  std::vector<Param*> HeadParams() {
    std::vector<Param*> p;
    head_.Collect(p);
    return p;
  }

  EmotionHead& head() { return head_; }
  Param& style_tokens() { return tokens_; }

  // -- reference encoder and style tokens ----------------------------------

  /// B x reference dim from standardized mels.
  Var Reference(Pass& P, const std::vector<const Mat*>& mels) {
    return ref_.Encode(P.t, mels, P.train, nullptr, "reference encoder");
  }

  /// B x (heads * tokens) scaled dot-product logits of the reference
  /// embedding against the token keys.
  Var TokenLogits(Pass& P, const Var& reference) {
    const auto& g = cfg_.gst;
    const int dh = g.head_dim();
    Var keys = ag::MatMul(ag::Tanh(P(tokens_)), P(key_.w));
    Var q = ag::MatMul(reference, P(query_.w));
    std::vector<Var> blocks;
    for (int h = 0; h < g.heads; ++h)
      blocks.push_back(ag::Scale(ag::MatMul(ag::SliceCols(q, h * dh, dh), ag::Transpose(ag::SliceCols(keys, h * dh, dh))),
                                 1.0 / std::sqrt(static_cast<double>(dh))));
    return ag::ConcatCols(blocks);
  }

  /// Per-head softmax of the logits, then the weighted token values.
  GstOutput AttendLogits(Pass& P, const Var& logits) {
    const auto& g = cfg_.gst;
    std::vector<Var> blocks;
    for (int h = 0; h < g.heads; ++h) blocks.push_back(ag::SoftmaxRows(ag::SliceCols(logits, h * g.tokens, g.tokens)));
    Var w = ag::ConcatCols(blocks);
    return {StyleFromWeights(P, w), w};
  }

  GstOutput Attend(Pass& P, const Var& reference) { return AttendLogits(P, TokenLogits(P, reference)); }

  /// Concatenation over heads of w_h . V_h for the given weights.
  Var StyleFromWeights(Pass& P, const Var& weights) {
    const auto& g = cfg_.gst;
    Require(weights.cols() == g.weight_dim(), "gst: weight vector length != heads * tokens");
    const int dh = g.head_dim();
    Var values = ag::MatMul(ag::Tanh(P(tokens_)), P(value_.w));
    std::vector<Var> blocks;
    for (int h = 0; h < g.heads; ++h)
      blocks.push_back(ag::MatMul(ag::SliceCols(weights, h * g.tokens, g.tokens), ag::SliceCols(values, h * dh, dh)));
    return ag::ConcatCols(blocks);
  }

  /// tokens x token_dim value projections.
  Mat TokenValues() {
    Tape t;
    Pass P(t, false);
    return ag::MatMul(ag::Tanh(P(tokens_)), P(value_.w)).value();
  }

  /// Eval-mode reference embeddings for raw (unstandardized) log-mels.
  Mat ReferenceEmbeddings(const std::vector<const Mat*>& mels, size_t chunk = 32) {
    Mat out(static_cast<Eigen::Index>(mels.size()), cfg_.gst.reference.output_dim());
    Chunked(mels, chunk, [&](Pass& P, const std::vector<const Mat*>& part, Eigen::Index start) {
      out.middleRows(start, static_cast<Eigen::Index>(part.size())) = Reference(P, part).value();
    });
    return out;
  }

  /// Eval-mode token weights for raw log-mels, one row per input.
  Mat TokenWeights(const std::vector<const Mat*>& mels, size_t chunk = 32) {
    Mat out(static_cast<Eigen::Index>(mels.size()), cfg_.gst.weight_dim());
    Chunked(mels, chunk, [&](Pass& P, const std::vector<const Mat*>& part, Eigen::Index start) {
      out.middleRows(start, static_cast<Eigen::Index>(part.size())) = Attend(P, Reference(P, part)).weights.value();
    });
    return out;
  }

  StyleTokenWeights TokenWeightsOf(const Mat& mel) {
    const Mat w = TokenWeights({&mel});
    return {cfg_.gst.heads, cfg_.gst.tokens, w.row(0)};
  }

  // -- text encoder and decoder ----------------------------------------------

  /// Encodes padded id sequences and attaches the style embedding to every
  /// character.
  Memory PrepareMemory(Pass& P, const std::vector<std::vector<int>>& ids, const Var& style) {
    const Eigen::Index B = static_cast<Eigen::Index>(ids.size());
    Require(B >= 1 && style.rows() == B, "tts: style rows must match the text batch");
    std::vector<int> len(B);
    int L = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      Require(!ids[b].empty(), "tts: empty id sequence");
      len[b] = static_cast<int>(ids[b].size());
      L = std::max(L, len[b]);
    }
    std::vector<int> flat(static_cast<size_t>(B * L), kPadId);
    Mat valid = Mat::Zero(B * L, 1);
    for (Eigen::Index b = 0; b < B; ++b)
      for (int l = 0; l < len[b]; ++l) {
        const int id = ids[b][l];
        Require(id >= 0 && id < kVocabSize, "tts: character id out of range");
        flat[b * L + l] = id;
        valid(b * L + l, 0) = 1.0;
      }
    Var x = ag::MulCol(ag::GatherRows(P(embed_.table), std::move(flat)), P.t.Constant(valid));
    x = ag::Relu(P.Conv(enc_conv_, x, B, L));
    std::vector<Var> steps;
    std::vector<Mat> masks(L, Mat::Zero(B, 1));
    for (int l = 0; l < L; ++l) {
      std::vector<int> rows(B);
      for (Eigen::Index b = 0; b < B; ++b) {
        rows[b] = static_cast<int>(b * L + l);
        masks[l](b, 0) = l < len[b] ? 1.0 : 0.0;
      }
      steps.push_back(ag::GatherRows(x, std::move(rows)));
    }
    std::vector<Var> fw(L), bw(L);
    Var h = P.t.Constant(Mat::Zero(B, cfg_.encoder_gru));
    for (int l = 0; l < L; ++l) fw[l] = h = P.Gru(enc_fw_, steps[l], h, &masks[l]);
    h = P.t.Constant(Mat::Zero(B, cfg_.encoder_gru));
    for (int l = L - 1; l >= 0; --l) bw[l] = h = P.Gru(enc_bw_, steps[l], h, &masks[l]);
    std::vector<Var> per_step;
    for (int l = 0; l < L; ++l) per_step.push_back(ag::ConcatCols({fw[l], bw[l]}));
    // Step-major (l, b) rows -> item-major (b, l).
    std::vector<int> order(static_cast<size_t>(B * L));
    for (Eigen::Index b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) order[b * L + l] = static_cast<int>(l * B + b);
    Var enc = ag::GatherRows(ag::ConcatRows(per_step), std::move(order));
    Memory m;
    m.values = ag::ConcatCols({enc, ag::RepeatRows(style, L)});
    m.keys = ag::MatMul(m.values, P(att_memory_.w));
    m.mask = P.t.Constant(AttentionMask(len, L));
    m.batch = B;
    m.length = L;
    return m;
  }

  DecoderState InitialState(Pass& P, const Memory& m) {
    DecoderState s;
    s.att_h = P.t.Constant(Mat::Zero(m.batch, cfg_.attention_rnn));
    s.dec_h = P.t.Constant(Mat::Zero(m.batch, cfg_.decoder_rnn));
    s.context = P.t.Constant(Mat::Zero(m.batch, cfg_.memory_dim()));
    s.alpha = P.t.Constant(Mat::Zero(m.batch, m.length));
    s.cum_alpha = s.alpha;
    return s;
  }

  /// One decoder step from the previous frame (B x n_mels). Returns the next
  /// `reduction` frames (B x reduction * n_mels) and the stop logit (B x 1).
  std::pair<Var, Var> Step(Pass& P, const Memory& m, DecoderState& s, const Var& prev_frame,
                           double temperature = 1.0) {
    Require(temperature > 0.0, "tts: attention temperature must be positive");
    Require(P.dropout != nullptr || cfg_.prenet_dropout == 0.0, "tts: prenet dropout needs an RNG");
    Var x = ag::Relu(P.Dense(prenet1_, prev_frame));
    if (cfg_.prenet_dropout > 0.0) x = nn::Dropout(P.t, x, cfg_.prenet_dropout, *P.dropout);
    x = ag::Relu(P.Dense(prenet2_, x));
    if (cfg_.prenet_dropout > 0.0) x = nn::Dropout(P.t, x, cfg_.prenet_dropout, *P.dropout);
    s.att_h = P.Gru(att_rnn_, ag::ConcatCols({x, s.context}), s.att_h);

    const Eigen::Index B = m.batch, L = m.length;
    Var q = ag::RepeatRows(P.Dense(att_query_, s.att_h), L);
    Var loc = ag::ConcatCols({ag::Reshape(s.alpha, B * L, 1), ag::Reshape(s.cum_alpha, B * L, 1)});
    loc = ag::MatMul(P.Conv(loc_conv_, loc, B, L), P(loc_proj_.w));
    Var e = ag::Tanh(ag::Add(ag::Add(q, m.keys), loc));
    Var energies = ag::Reshape(ag::MatMul(e, P(att_v_.w)), B, L);
    s.alpha = ag::SoftmaxRows(ag::Add(energies, m.mask), temperature);
    s.cum_alpha = ag::Add(s.cum_alpha, s.alpha);
    s.context = ag::WeightedRowSum(s.alpha, m.values);

    s.dec_h = P.Gru(dec_rnn_, ag::ConcatCols({s.att_h, s.context}), s.dec_h);
    Var out = ag::ConcatCols({s.dec_h, s.context});
    return {P.Dense(frames_, out), P.Dense(stop_, out)};
  }

  /// (B * F) x n_mels standardized mels -> (B * F) x n_linear.
  Var Postnet(Pass& P, const Var& mel, Eigen::Index batch, Eigen::Index frames) {
    return P.Dense(post_proj_, ag::Relu(P.Conv(post_conv_, mel, batch, frames)));
  }

  // -- checkpoints -------------------------------------------------------------

  io::Archive ToArchive() {
    io::Archive a;
    a.meta["kind"] = "tts_model";
    a.meta["config"] = ToJson(cfg_);
    for (Param* p : Params()) a.Put(p->name, p->value);
    for (Param* p : HeadParams()) a.Put(p->name, p->value);
    a.Put("mel_norm.mean", mel_norm.mean);
    a.Put("mel_norm.inv_std", mel_norm.inv_std);
    a.Put("linear_norm.mean", linear_norm.mean);
    a.Put("linear_norm.inv_std", linear_norm.inv_std);
    return a;
  }

  static TtsModel FromArchive(const io::Archive& a) {
    if (a.meta.value("kind", "") != "tts_model") throw ValidationError("archive does not hold a TTS model");
    TtsModel m(TtsModelConfigFromJson(a.meta.at("config")), 0);
    auto all = m.Params();
    for (Param* p : m.HeadParams()) all.push_back(p);
    for (Param* p : all) {
      const Mat& v = a.Get(p->name);
      Require(v.rows() == p->value.rows() && v.cols() == p->value.cols(),
              "TTS checkpoint: shape mismatch for " + p->name);
      p->value = v;
      p->ZeroGrad();
    }
    m.mel_norm = {a.Get("mel_norm.mean"), a.Get("mel_norm.inv_std")};
    m.linear_norm = {a.Get("linear_norm.mean"), a.Get("linear_norm.inv_std")};
    return m;
  }

 private:
  template <typename F>
  void Chunked(const std::vector<const Mat*>& mels, size_t chunk, F&& f) {
    for (size_t start = 0; start < mels.size(); start += chunk) {
      const size_t end = std::min(mels.size(), start + chunk);
      std::vector<Mat> normed;
      for (size_t i = start; i < end; ++i) normed.push_back(mel_norm.Apply(*mels[i]));
      std::vector<const Mat*> part;
      for (const auto& n : normed) part.push_back(&n);
      Tape t;
      Pass P(t, false);
      f(P, part, static_cast<Eigen::Index>(start));
    }
  }

  TtsModelConfig cfg_;
  nn::Embedding embed_;
  nn::Conv1d enc_conv_;
  nn::GruCell enc_fw_, enc_bw_;
  nn::ConvGruEncoder ref_;
  Param tokens_;
  nn::Linear query_, key_, value_;
  nn::Linear prenet1_, prenet2_;
  nn::GruCell att_rnn_;
  nn::Linear att_query_, att_memory_;
  nn::Conv1d loc_conv_;
  nn::Linear loc_proj_, att_v_;
  nn::GruCell dec_rnn_;
  nn::Linear frames_, stop_;
  nn::Conv1d post_conv_;
  nn::Linear post_proj_;
  EmotionHead head_;
};

// ---------------------------------------------------------------------------
// Training

struct TtsExample {
  std::string id;
  std::vector<int> text_ids;
  Mat mel;         // frames x n_mels, natural-log mel
  Mat log_linear;  // frames x n_linear, log magnitude
  std::vector<RowVec> soft;  // one posterior per head task; empty when unlabeled
};

/// Features for one utterance; the log-linear floor matches the mel floor.
inline TtsExample MakeExample(const std::string& id, const std::string& text, const std::vector<double>& audio,
                              const dsp::FrameConfig& fc) {
  TtsExample x;
  x.id = id;
  x.text_ids = TextToIds(text);
  const auto lin = dsp::StftMagnitude(audio, fc);
  if (lin.frames() < 1) throw ValidationError("tts: utterance '" + id + "' is shorter than one frame");
  x.mel = dsp::LogMel(lin, fc).values;
  x.log_linear = lin.mag.cwiseMax(fc.log_floor).array().log().matrix();
  return x;
}

struct TtsTrainConfig {
  int batch_size = 32;
  long max_steps = 150000;
  nn::WarmupSchedule schedule;
  double emotion_weight = 1.0;  // mu
  bool use_emotion_head = true;
  double clip_norm = 1.0;
  // Diagonal attention prior; 0 disables it.
  double guide_weight = 1.0;
  double guide_width = 0.2;
  uint64_t seed = 1;
  int log_every = 100;

  void Validate() const {
    Require(batch_size >= 1, "tts train: batch_size must be >= 1");
    Require(guide_weight >= 0.0 && guide_width > 0.0, "tts train: guide_weight >= 0 and guide_width > 0 required");
    Require(max_steps >= 1, "tts train: max_steps must be >= 1");
    Require(schedule.initial > 0.0 && schedule.warmup > 0 && schedule.power < 0.0,
            "tts train: schedule needs positive initial rate and warm-up, negative decay power");
    Require(emotion_weight >= 0.0, "tts train: emotion_weight must be nonnegative");
    Require(clip_norm >= 0.0, "tts train: clip_norm must be nonnegative");
    Require(log_every >= 1, "tts train: log_every must be >= 1");
  }
  bool emotion_active() const { return use_emotion_head && emotion_weight > 0.0; }
};

inline json ToJson(const TtsTrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"schedule", {{"initial", c.schedule.initial}, {"warmup", c.schedule.warmup}, {"power", c.schedule.power}}},
          {"emotion_weight", c.emotion_weight},
          {"use_emotion_head", c.use_emotion_head},
          {"clip_norm", c.clip_norm},
          {"guide_weight", c.guide_weight},
          {"guide_width", c.guide_width},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

inline TtsTrainConfig TtsTrainConfigFromJson(const json& j, TtsTrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    c.schedule.initial = s.value("initial", c.schedule.initial);
    c.schedule.warmup = s.value("warmup", c.schedule.warmup);
    c.schedule.power = s.value("power", c.schedule.power);
  }
  c.emotion_weight = j.value("emotion_weight", c.emotion_weight);
  c.use_emotion_head = j.value("use_emotion_head", c.use_emotion_head);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.guide_weight = j.value("guide_weight", c.guide_weight);
  c.guide_width = j.value("guide_width", c.guide_width);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.Validate();
  return c;
}

struct TtsHistoryRow {
  long step = 0;
  double mel = 0.0, linear = 0.0, stop = 0.0, guide = 0.0;
  std::optional<double> emotion;
  double loss = 0.0;

  double reconstruction() const { return mel + linear; }

  json ToJson() const {
    return {{"step", step},
            {"L_mel", mel},
            {"L_linear", linear},
            {"L_stop", stop},
            {"L_guide", guide},
            {"L_emotion", emotion ? json(*emotion) : json(nullptr)},
            {"L", loss}};
  }
};

struct TtsTrainResult {
  TtsModel model;
  std::vector<TtsHistoryRow> history;
};

struct TtsLossTerms {
  Var mel, linear, stop;
  std::optional<Var> guide;
  std::optional<Var> emotion;
};

/// Diagonal prior for step s of S over L characters:
///   1 - exp(-(l / L - s / S)^2 / (2 g^2)).
inline RowVec GuidePenalty(int s, int S, int L, double width) {
  RowVec w(L);
  for (int l = 0; l < L; ++l) {
    const double d = static_cast<double>(l) / L - static_cast<double>(s) / S;
    w(l) = 1.0 - std::exp(-d * d / (2.0 * width * width));
  }
  return w;
}

/// Teacher-forced forward pass over a batch of standardized targets.
/// guide_width > 0 adds the diagonal attention prior.
inline TtsLossTerms TeacherForcedLoss(TtsModel& model, Pass& P, const std::vector<const TtsExample*>& batch,
                                      const std::vector<Mat>& mels, const std::vector<Mat>& lins,
                                      bool with_emotion, double guide_width = 0.0) {
  const auto& cfg = model.config();
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const int r = cfg.reduction, D = cfg.n_mels;
  std::vector<const Mat*> mel_ptrs;
  int frames = 0;
  for (const auto& m : mels) {
    mel_ptrs.push_back(&m);
    frames = std::max(frames, static_cast<int>(m.rows()));
  }
  const int S = (frames + r - 1) / r, F = S * r;

  GstOutput gst = model.Attend(P, model.Reference(P, mel_ptrs));
  std::vector<std::vector<int>> ids;
  for (const auto* x : batch) ids.push_back(x->text_ids);
  Memory mem = model.PrepareMemory(P, ids, gst.style);
  DecoderState st = model.InitialState(P, mem);

  Mat mel_target = Mat::Zero(B * F, D), lin_target = Mat::Zero(B * F, cfg.n_linear);
  Vec frame_mask = Vec::Zero(B * F);
  Mat stop_target = Mat::Zero(B, S);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index n = mels[b].rows();
    mel_target.middleRows(b * F, n) = mels[b];
    lin_target.middleRows(b * F, n) = lins[b];
    frame_mask.segment(b * F, n).setOnes();
    for (int s = 0; s < S; ++s) stop_target(b, s) = (s + 1) * r >= n ? 1.0 : 0.0;
  }
  std::vector<Var> outs, stops, guides;
  double guide_rows = 0.0;
  Var prev = P.t.Constant(Mat::Zero(B, D));
  for (int s = 0; s < S; ++s) {
    auto [frames_var, stop_var] = model.Step(P, mem, st, prev);
    outs.push_back(frames_var);
    stops.push_back(stop_var);
    if (guide_width > 0.0) {
      Mat g = Mat::Zero(B, mem.length);
      for (Eigen::Index b = 0; b < B; ++b) {
        const int n = static_cast<int>(mels[b].rows()), steps = (n + r - 1) / r;
        const int chars = static_cast<int>(batch[b]->text_ids.size());
        if (s >= steps) continue;
        g.row(b).head(chars) = GuidePenalty(s, steps, chars, guide_width);
        guide_rows += 1.0;
      }
      guides.push_back(ag::Sum(ag::Mul(st.alpha, P.t.Constant(std::move(g)))));
    }
    Mat next(B, D);
    for (Eigen::Index b = 0; b < B; ++b) next.row(b) = mel_target.row(b * F + s * r + r - 1);
    prev = P.t.Constant(std::move(next));
  }
  Var mel_pred = ag::Reshape(ag::ConcatCols(outs), B * F, D);
  Var lin_pred = model.Postnet(P, mel_pred, B, F);
  TtsLossTerms out;
  out.mel = losses::MaskedMaeVar(mel_pred, mel_target, frame_mask);
  out.linear = losses::MaskedMaeVar(lin_pred, lin_target, frame_mask);
  out.stop = losses::BceWithLogits(ag::ConcatCols(stops), stop_target, Mat::Ones(B, S));
  if (guide_width > 0.0) {
    Var total = guides[0];
    for (size_t i = 1; i < guides.size(); ++i) total = ag::Add(total, guides[i]);
    out.guide = ag::Scale(total, 1.0 / guide_rows);
  }
  if (with_emotion) {
    const auto tasks = HeadTasks(cfg.head);
    auto logits = model.head().Logits(P, gst.weights);
    Var total;
    for (size_t k = 0; k < tasks.size(); ++k) {
      const int C = NumClasses(tasks[k]);
      Mat y(B, C);
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& soft = batch[b]->soft;
        if (soft.size() != tasks.size() || soft[k].size() != C)
          throw ValidationError("tts train: utterance '" + batch[b]->id + "' lacks a " + TaskName(tasks[k]) +
                                " soft label");
        y.row(b) = soft[k];
      }
      Var ce = losses::WeightedCeLogp(ag::LogSoftmaxRows(logits[k]), y, losses::ClassWeights::Uniform(C),
                                      losses::Reduction::kMean);
      total = k == 0 ? ce : ag::Add(total, ce);
    }
    out.emotion = total;
  }
  return out;
}

/// Joint reconstruction + emotion training. Targets are standardized with
/// statistics fitted on `examples`.
inline TtsTrainResult TrainTts(const std::vector<TtsExample>& examples, const TtsModelConfig& model_cfg,
                               const TtsTrainConfig& cfg) {
  cfg.Validate();
  if (examples.empty()) throw ValidationError("tts train: no training utterances");
  TtsTrainResult res;
  res.model = TtsModel(model_cfg, cfg.seed);
  TtsModel& model = res.model;
  const int min_frames = model_cfg.gst.reference.MinInputFrames();
  std::vector<const Mat*> mel_ptrs, lin_ptrs;
  for (const auto& x : examples) {
    Require(!x.text_ids.empty(), "tts train: utterance '" + x.id + "' has no text");
    Require(x.mel.cols() == model_cfg.n_mels && x.log_linear.cols() == model_cfg.n_linear &&
                x.mel.rows() == x.log_linear.rows(),
            "tts train: utterance '" + x.id + "' has inconsistent spectra");
    if (x.mel.rows() < min_frames)
      throw ValidationError("tts train: utterance '" + x.id + "' is too short for the reference encoder");
    mel_ptrs.push_back(&x.mel);
    lin_ptrs.push_back(&x.log_linear);
  }
  model.mel_norm = FeatureNorm::FitGlobal(mel_ptrs);
  model.linear_norm = FeatureNorm::FitGlobal(lin_ptrs);
  std::vector<Mat> mels, lins;
  for (const auto& x : examples) {
    mels.push_back(model.mel_norm.Apply(x.mel));
    lins.push_back(model.linear_norm.Apply(x.log_linear));
  }

  const bool emotion = cfg.emotion_active();
  auto params = model.Params();
  if (emotion)
    for (Param* p : model.HeadParams()) params.push_back(p);
  nn::Adam adam(params);
  nn::EpochSampler sampler(examples.size(), DeriveSeed(cfg.seed, "tts.batches"));
  Rng dropout(DeriveSeed(cfg.seed, "tts.dropout"));
  const size_t bs = std::min(static_cast<size_t>(cfg.batch_size), examples.size());

  for (long step = 1; step <= cfg.max_steps; ++step) {
    const auto idx = sampler.Next(bs);
    std::vector<const TtsExample*> batch;
    std::vector<Mat> bm, bl;
    for (size_t i : idx) {
      batch.push_back(&examples[i]);
      bm.push_back(mels[i]);
      bl.push_back(lins[i]);
    }
    adam.ZeroGrad();
    Tape t;
    Pass P(t, true, &dropout);
    TtsLossTerms terms =
        TeacherForcedLoss(model, P, batch, bm, bl, emotion, cfg.guide_weight > 0.0 ? cfg.guide_width : 0.0);
    Var loss = ag::Add(ag::Add(terms.mel, terms.linear), terms.stop);
    if (terms.guide) loss = ag::Add(loss, ag::Scale(*terms.guide, cfg.guide_weight));
    TtsHistoryRow row;
    row.step = step;
    row.mel = terms.mel.value()(0, 0);
    row.linear = terms.linear.value()(0, 0);
    row.stop = terms.stop.value()(0, 0);
    if (terms.guide) row.guide = terms.guide->value()(0, 0);
    if (terms.emotion) {
      row.emotion = terms.emotion->value()(0, 0);
      loss = ag::Add(loss, ag::Scale(*terms.emotion, cfg.emotion_weight));
    }
    row.loss = loss.value()(0, 0);
    if (!std::isfinite(row.loss))
      throw RuntimeError("tts train: non-finite loss at step " + std::to_string(step) +
                         " (L_mel=" + std::to_string(row.mel) + ", L_linear=" + std::to_string(row.linear) +
                         ", L_stop=" + std::to_string(row.stop) +
                         ", L_emotion=" + (row.emotion ? std::to_string(*row.emotion) : "n/a") +
                         "); attention has likely diverged");
    t.Backward(loss);
    if (cfg.clip_norm > 0.0) nn::ClipGradNorm(params, cfg.clip_norm);
    adam.Step(cfg.schedule(step));
    if (step % cfg.log_every == 0 || step == cfg.max_steps)
      LogInfo("tts step " + std::to_string(step) + " L=" + std::to_string(row.loss) +
              " recon=" + std::to_string(row.reconstruction()));
    res.history.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisOptions {
  double temperature = 2.0;
  int max_frames = 0;  // 0: max_decoder_steps * reduction
  uint64_t seed = 0;   // prenet dropout stays active at synthesis
  int griffin_lim_iters = 60;
  bool vocode = true;
};

struct SynthesisResult {
  Mat mel;        // frames x n_mels, natural-log mel
  Mat magnitude;  // frames x n_linear, linear magnitude
  std::vector<double> waveform;
  Mat alignment;  // decoder steps x characters
  bool truncated = false;
};

/// Decodes from explicit token weights; the reference encoder is bypassed.
inline SynthesisResult Synthesize(TtsModel& model, const std::string& text, const StyleTokenWeights& weights,
                                  const SynthesisOptions& opt, const dsp::FrameConfig& fc = {}) {
  const auto& cfg = model.config();
  Require(opt.temperature > 0.0, "synthesize: temperature must be positive");
  Require(weights.heads == cfg.gst.heads && weights.tokens == cfg.gst.tokens,
          "synthesize: weights shape does not match the model's style tokens");
  weights.Validate();
  Require(opt.max_frames >= 0 && opt.griffin_lim_iters >= 0, "synthesize: negative limits");
  const int r = cfg.reduction;
  const int max_steps = opt.max_frames > 0 ? (opt.max_frames + r - 1) / r : cfg.max_decoder_steps;

  Tape t;
  Rng dropout(DeriveSeed(opt.seed, "tts.synthesis.prenet"));
  Pass P(t, false, &dropout);
  Var style = model.StyleFromWeights(P, t.Constant(Mat(weights.w)));
  Memory mem = model.PrepareMemory(P, {TextToIds(text)}, style);
  DecoderState st = model.InitialState(P, mem);
  Var prev = t.Constant(Mat::Zero(1, cfg.n_mels));
  std::vector<Var> outs;
  std::vector<RowVec> align;
  SynthesisResult res;
  res.truncated = true;
  for (int s = 0; s < max_steps; ++s) {
    auto [frames, stop] = model.Step(P, mem, st, prev, opt.temperature);
    outs.push_back(frames);
    align.push_back(st.alpha.value().row(0));
    prev = ag::SliceCols(frames, static_cast<Eigen::Index>(r - 1) * cfg.n_mels, cfg.n_mels);
    if (ag::SigmoidOf(stop.value())(0, 0) > cfg.stop_threshold) {
      res.truncated = false;
      break;
    }
  }
  if (res.truncated) LogWarn("synthesize: no stop token within " + std::to_string(max_steps) + " steps; output truncated");
  const Eigen::Index F = static_cast<Eigen::Index>(outs.size()) * r;
  Var mel = ag::Reshape(ag::ConcatCols(outs), F, cfg.n_mels);
  Var lin = model.Postnet(P, mel, 1, F);
  res.mel = model.mel_norm.Invert(mel.value());
  res.magnitude = model.linear_norm.Invert(lin.value()).array().exp().matrix();
  res.alignment.resize(static_cast<Eigen::Index>(align.size()), mem.length);
  for (size_t i = 0; i < align.size(); ++i) res.alignment.row(static_cast<Eigen::Index>(i)) = align[i];
  if (opt.vocode) {
    Require(res.magnitude.cols() == fc.bins(), "synthesize: frame config does not match n_linear");
    res.waveform = dsp::GriffinLim({res.magnitude}, opt.griffin_lim_iters, fc);
    for (double& v : res.waveform) v = std::clamp(v, -1.0, 1.0);
  }
  return res;
}

/// Sidecar record written next to each synthesized WAV.
inline json SynthesisRecord(const std::string& text, const StyleTokenWeights& w, const SynthesisOptions& opt,
                            const SynthesisResult& r) {
  return {{"text", text},
          {"heads", w.heads},
          {"tokens", w.tokens},
          {"weights", w.ToVector()},
          {"temperature", opt.temperature},
          {"seed", opt.seed},
          {"griffin_lim_iters", opt.griffin_lim_iters},
          {"frames", r.mel.rows()},
          {"truncated", r.truncated}};
}

}  // namespace emotts::tts
