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

#include <gtest/gtest.h>

#include "emotts/corpus.hpp"
#include "emotts/labeler.hpp"
#include "emotts/tts.hpp"
#include "grad_check.hpp"

namespace emotts::tts {
namespace {

using testing::RandomMat;

TtsModelConfig Tiny(HeadKind head = HeadKind::kCategory) {
  TtsModelConfig c;
  c.embed_dim = 8;
  c.encoder_channels = 8;
  c.encoder_gru = 4;
  c.gst.token_dim = 8;
  c.gst.reference.conv = {{4}, {4}};
  c.gst.reference.gru_hidden = 8;
  c.prenet1 = c.prenet2 = 8;
  c.attention_dim = 8;
  c.attention_rnn = c.decoder_rnn = 16;
  c.postnet_channels = 8;
  c.max_decoder_steps = 30;
  c.head = head;
  return c;
}

StyleTokenWeights RandomWeights(int heads, int tokens, Rng& rng) {
  RowVec w(heads * tokens);
  for (int h = 0; h < heads; ++h) {
    RowVec logits(tokens);
    for (int k = 0; k < tokens; ++k) logits(k) = 2.0 * rng.Normal();
    w.segment(h * tokens, tokens) = ag::SoftmaxRowsOf(logits);
  }
  return {heads, tokens, w};
}

// Small target-domain corpus shared by the training tests.
const std::vector<TtsExample>& ToyExamples() {
  static const std::vector<TtsExample> xs = [] {
    corpus::SynthCorpusSpec spec;
    spec.n_source = 0;
    spec.n_target = 48;
    spec.seed = 11;
    auto c = corpus::GenerateSyntheticCorpus(spec);
    std::vector<TtsExample> out;
    for (const auto& r : c.target) {
      auto x = MakeExample(r.id, *r.text, r.audio, {});
      RowVec soft = RowVec::Constant(4, 0.1);
      soft(c.target_truth.at(r.id)) = 0.7;
      x.soft = {soft};
      out.push_back(std::move(x));
    }
    return out;
  }();
  return xs;
}

TtsTrainConfig QuickTrain(long steps) {
  TtsTrainConfig c;
  c.batch_size = 8;
  c.max_steps = steps;
  c.schedule.warmup = 50;
  c.log_every = 1000;
  return c;
}

TEST(TtsText, CharacterIds) {
  EXPECT_EQ(TextToIds("Ab z?"), (std::vector<int>{1, 2, kSpaceId, 26, kUnknownId, kEosId}));
  EXPECT_THROW(TextToIds(""), Error);
}

TEST(TtsConfig, Validation) {
  EXPECT_NO_THROW(TtsModelConfig{}.Validate());
  EXPECT_NO_THROW(PaperTtsModelConfig().Validate());
  auto c = Tiny(HeadKind::kDimension);
  c.gst.tokens = 3;
  c.gst.heads = 1;
  EXPECT_THROW(c.Validate(), Error);  // 3 weights cannot be split in two
  c.head = HeadKind::kCategory;
  EXPECT_NO_THROW(c.Validate());
  c = Tiny();
  c.gst.token_dim = 6;  // not a multiple of 4 heads
  EXPECT_THROW(c.Validate(), Error);
  c = Tiny();
  c.encoder_kernel = 4;
  EXPECT_THROW(c.Validate(), Error);
  auto back = TtsModelConfigFromJson(ToJson(Tiny(HeadKind::kDimension)));
  EXPECT_EQ(ToJson(back), ToJson(Tiny(HeadKind::kDimension)));
  auto tc = TtsTrainConfigFromJson(ToJson(QuickTrain(7)));
  EXPECT_EQ(ToJson(tc), ToJson(QuickTrain(7)));
  tc.schedule.warmup = 0;
  EXPECT_THROW(tc.Validate(), Error);
}

TEST(TtsReference, FixedLengthEmbedding) {
  TtsModel m(Tiny(), 1);
  Rng rng(2);
  Mat a = RandomMat(9, 80, rng), b = RandomMat(57, 80, rng);
  Mat e = m.ReferenceEmbeddings({&a, &b});
  EXPECT_EQ(e.rows(), 2);
  EXPECT_EQ(e.cols(), 8);
  EXPECT_EQ(m.ReferenceEmbeddings({&b}).cols(), 8);
}

TEST(TtsReference, DeterministicAndSensitive) {
  TtsModel m(Tiny(), 3);
  Rng rng(4);
  Mat a = RandomMat(30, 80, rng);
  Mat a2 = a;
  Mat scaled = 10.0 * a;
  Mat e = m.ReferenceEmbeddings({&a, &a2, &scaled});
  EXPECT_EQ((e.row(0) - e.row(1)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((e.row(0) - e.row(2)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(TtsReference, TooShortInputRejected) {
  auto c = Tiny();
  c.gst.reference.conv = {{4, 5, 1}};
  c.gst.reference.conv[0].kernel = 5;
  TtsModel m(c, 1);
  Mat a = Mat::Zero(0, 80);
  EXPECT_THROW(m.ReferenceEmbeddings({&a}), Error);
}

TEST(TtsGst, DegenerateAttentionSelectsTokenValue) {
  auto c = Tiny();
  c.gst.heads = 1;
  TtsModel m(c, 5);
  Tape t;
  Pass P(t, false);
  Mat logits = Mat::Zero(1, c.gst.tokens);
  logits(0, 0) = 1000.0;
  GstOutput out = m.AttendLogits(P, t.Constant(logits));
  EXPECT_EQ(out.weights.value()(0, 0), 1.0);
  EXPECT_LT(out.weights.value().rightCols(c.gst.tokens - 1).cwiseAbs().maxCoeff(), 1e-300);
  const Mat values = m.TokenValues();
  EXPECT_LT((out.style.value().row(0) - values.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TtsGst, HeadBlocksNormalized) {
  TtsModel m(Tiny(), 6);
  Rng rng(7);
  std::vector<Mat> mels;
  for (int i = 0; i < 12; ++i) mels.push_back(RandomMat(10 + 3 * i, 80, rng, 1.0 + i));
  std::vector<const Mat*> ptrs;
  for (const auto& x : mels) ptrs.push_back(&x);
  const Mat w = m.TokenWeights(ptrs);
  std::vector<StyleTokenWeights> all;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    StyleTokenWeights s(4, 10, w.row(i));
    EXPECT_LE(s.NormalizationError(), 1e-6);
    EXPECT_GE(s.w.minCoeff(), 0.0);
    all.push_back(s);
  }
  auto avg = labeler::AverageTokenWeights(all);
  EXPECT_LE(avg.NormalizationError(), 1e-6);
  EXPECT_NO_THROW(avg.Validate());
}

TEST(TtsGst, TokenPermutationPermutesWeights) {
  TtsModel a(Tiny(), 8);
  TtsModel b = a;
  const std::vector<int> perm = {3, 0, 9, 1, 7, 2, 8, 4, 6, 5};
  Mat& src = a.style_tokens().value;
  Mat& dst = b.style_tokens().value;
  for (int k = 0; k < 10; ++k) dst.row(k) = src.row(perm[k]);
  Rng rng(9);
  Mat mel = RandomMat(25, 80, rng);
  const Mat wa = a.TokenWeights({&mel}), wb = b.TokenWeights({&mel});
  for (int h = 0; h < 4; ++h)
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(wb(0, h * 10 + k), wa(0, h * 10 + perm[k]), 1e-14);
}

TEST(TtsEmotionHead, ValvesAreIndependent) {
  Rng rng(10);
  EmotionHead head(HeadKind::kDimension, 40, rng);
  auto w = RandomWeights(4, 10, rng);
  auto perturbed = w;
  perturbed.w.tail(20) = RandomWeights(2, 10, rng).w;
  const auto p0 = head.Posteriors(w), p1 = head.Posteriors(perturbed);
  ASSERT_EQ(p0.size(), 2u);
  EXPECT_EQ(p0[0], p1[0]);  // arousal: bit-identical
  EXPECT_GT((p0[1] - p1[1]).cwiseAbs().maxCoeff(), 0.0);
  auto first_half = w;
  first_half.w.head(20) = RandomWeights(2, 10, rng).w;
  EXPECT_EQ(head.Posteriors(first_half)[1], p0[1]);  // valence: bit-identical
}

TEST(TtsEmotionHead, CategoryPosteriorAndZeroInit) {
  Rng rng(11);
  EmotionHead head(HeadKind::kCategory, 40, rng);
  auto p = head.Posteriors(RandomWeights(4, 10, rng));
  ASSERT_EQ(p.size(), 1u);
  ASSERT_EQ(p[0].cols(), 4);
  EXPECT_NEAR(p[0].sum(), 1.0, 1e-12);
  EXPECT_GE(p[0].minCoeff(), 0.0);
  EmotionHead zero(HeadKind::kCategory, 40, rng, true);
  EXPECT_LT((zero.Posteriors(RandomWeights(4, 10, rng))[0].array() - 0.25).abs().maxCoeff(), 1e-15);
  EmotionHead zero2(HeadKind::kDimension, 40, rng, true);
  for (const auto& q : zero2.Posteriors(RandomWeights(4, 10, rng)))
    EXPECT_LT((q.array() - 0.5).abs().maxCoeff(), 1e-15);
}

TEST(TtsEmotionHead, OddLengthRejected) {
  Rng rng(12);
  EXPECT_THROW(EmotionHead(HeadKind::kDimension, 15, rng), Error);
  EmotionHead head(HeadKind::kDimension, 40, rng);
  EXPECT_THROW(head.Posteriors(Mat::Constant(1, 15, 1.0 / 15)), Error);
}

// Soft-label CE through the head, checked against central differences in
// both the head parameters and the input weights.
TEST(TtsEmotionHead, GradientMatchesFiniteDifferences) {
  for (HeadKind kind : {HeadKind::kCategory, HeadKind::kDimension}) {
    Rng rng(13);
    EmotionHead head(kind, 12, rng);
    std::vector<Param*> params;
    head.Collect(params);
    Mat w(3, 12);
    for (int b = 0; b < 3; ++b) w.row(b) = RandomWeights(2, 6, rng).w;
    const auto tasks = HeadTasks(kind);
    std::vector<Mat> targets;
    for (Task task : tasks) {
      Mat y(3, NumClasses(task));
      for (int b = 0; b < 3; ++b) y.row(b) = RandomWeights(1, NumClasses(task), rng).w;
      targets.push_back(y);
    }
    Param input("weights", w);
    auto loss = [&](bool backward) {
      Tape t;
      Pass P(t, true);
      auto logits = head.Logits(P, t.Leaf(input));
      Var total;
      for (size_t k = 0; k < tasks.size(); ++k) {
        Var ce = losses::WeightedCeLogp(ag::LogSoftmaxRows(logits[k]), targets[k],
                                        losses::ClassWeights::Uniform(NumClasses(tasks[k])),
                                        losses::Reduction::kMean);
        total = k == 0 ? ce : ag::Add(total, ce);
      }
      if (backward) t.Backward(total);
      return total.value()(0, 0);
    };
    params.push_back(&input);
    for (Param* p : params) p->ZeroGrad();
    loss(true);
    double worst = 0.0;
    const double h = 1e-5;
    for (Param* p : params)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double orig = p->value.data()[i];
        p->value.data()[i] = orig + h;
        const double up = loss(false);
        p->value.data()[i] = orig - h;
        const double down = loss(false);
        p->value.data()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p->grad.data()[i];
        worst = std::max(worst, std::abs(analytic - numeric) /
                                    std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
      }
    EXPECT_LT(worst, 1e-4) << HeadKindName(kind);
  }
}

TEST(TtsAttention, TemperatureSpotValues) {
  Mat e(1, 2);
  e << 2.0, 0.0;
  const Mat w = AttentionWeights(e, 2.0);
  EXPECT_NEAR(w(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(w(0, 1), 0.2689, 1e-4);
  Rng rng(14);
  Mat r = RandomMat(5, 9, rng, 3.0);
  EXPECT_EQ(AttentionWeights(r, 1.0), ag::SoftmaxRowsOf(r));
  const Mat u = AttentionWeights(r, 1e6);
  EXPECT_LT((u.array() - 1.0 / 9).abs().maxCoeff(), 1e-3);
  EXPECT_THROW(AttentionWeights(r, 0.0), Error);
}

TEST(TtsAttention, PaddedCharactersGetNoWeight) {
  Rng rng(15);
  Mat e = RandomMat(2, 6, rng);
  const Mat w = AttentionWeights(e, AttentionMask({6, 3}, 6), 1e6);
  EXPECT_EQ(w.row(1).tail(3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((w.row(1).head(3).array() - 1.0 / 3).abs().maxCoeff(), 1e-3);
}

TEST(TtsEncoder, TextMemoryIndependentOfPadding) {
  TtsModel m(Tiny(), 16);
  auto memory_of = [&](const std::vector<std::vector<int>>& ids) {
    Tape t;
    Pass P(t, false);
    Var style = t.Constant(Mat::Ones(static_cast<Eigen::Index>(ids.size()), 8));
    return m.PrepareMemory(P, ids, style).values.value();
  };
  const auto a = TextToIds("abc"), b = TextToIds("longer text");
  const Mat alone = memory_of({a});
  const Mat batched = memory_of({a, b});
  EXPECT_LT((batched.topRows(alone.rows()) - alone).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TtsTrain, ReconstructionDecreases) {
  const auto& xs = ToyExamples();
  auto cfg = QuickTrain(600);
  cfg.schedule.initial = 4e-3;
  cfg.schedule.warmup = 200;
  auto res = TrainTts(xs, TtsModelConfig{}, cfg);
  ASSERT_EQ(res.history.size(), 600u);
  // Ten-step means around step 50 and at the end of the budget.
  auto mean = [&](size_t from) {
    double m = 0.0;
    for (size_t i = from; i < from + 10; ++i) m += res.history[i].reconstruction() / 10;
    return m;
  };
  const double at50 = mean(45), tail = mean(590);
  EXPECT_LE(tail, 0.7 * at50) << "step 50: " << at50 << ", final: " << tail;
  for (const auto& h : res.history) ASSERT_TRUE(h.emotion.has_value());
}

TEST(TtsTrain, EmotionLossChangesTrajectoryOnlyAfterFirstStep) {
  const auto& xs = ToyExamples();
  auto with = QuickTrain(3);
  auto without = with;
  without.use_emotion_head = false;
  without.emotion_weight = 0.0;
  auto a = TrainTts(xs, Tiny(), with), b = TrainTts(xs, Tiny(), without);
  EXPECT_EQ(a.history[0].mel, b.history[0].mel);
  EXPECT_EQ(a.history[0].linear, b.history[0].linear);
  EXPECT_EQ(a.history[0].stop, b.history[0].stop);
  EXPECT_FALSE(b.history[0].emotion.has_value());
  EXPECT_NE(a.history[1].reconstruction(), b.history[1].reconstruction());
}

TEST(TtsTrain, Deterministic) {
  const auto& xs = ToyExamples();
  auto a = TrainTts(xs, Tiny(), QuickTrain(4)), b = TrainTts(xs, Tiny(), QuickTrain(4));
  for (size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].ToJson(), b.history[i].ToJson());
}

TEST(TtsTrain, InputErrors) {
  EXPECT_THROW(TrainTts({}, Tiny(), QuickTrain(1)), Error);
  auto xs = ToyExamples();
  xs[3].soft.clear();
  auto c = QuickTrain(20);
  c.batch_size = 48;
  EXPECT_THROW(TrainTts(xs, Tiny(), c), Error);
  c.use_emotion_head = false;
  EXPECT_NO_THROW(TrainTts(xs, Tiny(), QuickTrain(1)));
  xs = ToyExamples();
  xs[0].mel(2, 5) = std::numeric_limits<double>::quiet_NaN();
  try {
    TrainTts(xs, Tiny(), QuickTrain(2));
    FAIL() << "expected a non-finite loss abort";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRuntime);
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

class TtsSynthesis : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new TtsModel(TrainTts(ToyExamples(), Tiny(), QuickTrain(60)).model);
  }
  static void TearDownTestSuite() {
    delete model_;
    model_ = nullptr;
  }
  static TtsModel* model_;
};
TtsModel* TtsSynthesis::model_ = nullptr;

TEST_F(TtsSynthesis, DifferentWeightsGiveDifferentMels) {
  Rng rng(17);
  SynthesisOptions o;
  o.vocode = false;
  o.max_frames = 40;
  auto a = Synthesize(*model_, "hello", RandomWeights(4, 10, rng), o);
  auto b = Synthesize(*model_, "hello", RandomWeights(4, 10, rng), o);
  const Eigen::Index f = std::min(a.mel.rows(), b.mel.rows());
  ASSERT_GT(f, 0);
  EXPECT_GT((a.mel.topRows(f) - b.mel.topRows(f)).cwiseAbs().sum(), 0.0);
}

TEST_F(TtsSynthesis, DeterministicUnderSeed) {
  auto w = StyleTokenWeights::Uniform(4, 10);
  SynthesisOptions o;
  o.max_frames = 24;
  o.griffin_lim_iters = 4;
  auto a = Synthesize(*model_, "abc", w, o), b = Synthesize(*model_, "abc", w, o);
  EXPECT_EQ(a.mel, b.mel);
  EXPECT_EQ(a.waveform, b.waveform);
  o.seed = 99;
  auto c = Synthesize(*model_, "abc", w, o);
  EXPECT_NE(a.mel, c.mel);  // prenet dropout follows the seed
  for (double s : a.waveform) ASSERT_LE(std::abs(s), 1.0);
  EXPECT_EQ(a.magnitude.cols(), 513);
  EXPECT_GT(a.waveform.size(), 0u);
}

TEST_F(TtsSynthesis, HighTemperatureFlattensAlignment) {
  SynthesisOptions o;
  o.vocode = false;
  o.max_frames = 10;
  o.temperature = 1e6;
  auto r = Synthesize(*model_, "abcd", StyleTokenWeights::Uniform(4, 10), o);
  ASSERT_EQ(r.alignment.cols(), 5);
  EXPECT_LT((r.alignment.array() - 0.2).abs().maxCoeff(), 1e-3);
}

TEST_F(TtsSynthesis, TruncationFlaggedAtFrameCap) {
  auto c = model_->config();
  SynthesisOptions o;
  o.vocode = false;
  o.max_frames = 2 * c.reduction;
  TtsModel forced = *model_;
  // A strongly negative stop bias never fires.
  auto a = forced.ToArchive();
  a.tensors["dec.stop.b"](0, 0) = -1e3;
  forced = TtsModel::FromArchive(a);
  auto r = Synthesize(forced, "abcdef", StyleTokenWeights::Uniform(4, 10), o);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.mel.rows(), o.max_frames);
  EXPECT_EQ(SynthesisRecord("abcdef", StyleTokenWeights::Uniform(4, 10), o, r)["truncated"], true);
}

TEST_F(TtsSynthesis, RejectsBadArguments) {
  SynthesisOptions o;
  o.temperature = 0.0;
  EXPECT_THROW(Synthesize(*model_, "a", StyleTokenWeights::Uniform(4, 10), o), Error);
  o.temperature = 2.0;
  EXPECT_THROW(Synthesize(*model_, "a", StyleTokenWeights::Uniform(2, 10), o), Error);
  auto bad = StyleTokenWeights::Uniform(4, 10);
  bad.w(0) += 0.5;
  EXPECT_THROW(Synthesize(*model_, "a", bad, o), Error);
  EXPECT_THROW(Synthesize(*model_, "", StyleTokenWeights::Uniform(4, 10), o), Error);
}

TEST_F(TtsSynthesis, CheckpointRoundTrip) {
  TtsModel back = TtsModel::FromArchive(io::DecodeArchive(io::EncodeArchive(model_->ToArchive()), "mem"));
  SynthesisOptions o;
  o.vocode = false;
  o.max_frames = 16;
  auto w = StyleTokenWeights::Uniform(4, 10);
  EXPECT_EQ(Synthesize(*model_, "round trip", w, o).mel, Synthesize(back, "round trip", w, o).mel);
  io::Archive ser_like;
  ser_like.meta["kind"] = "ser_model";
  EXPECT_THROW(TtsModel::FromArchive(ser_like), Error);
}

}  // namespace
}  // namespace emotts::tts
