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

#include <set>

#include "emotts/labeler.hpp"
#include "oracles.hpp"

namespace emotts::labeler {
namespace {

SoftLabelTable RandomTable(Rng& rng, int n, Task task, bool coarse) {
  SoftLabelTable t;
  t.task = task;
  const int C = NumClasses(task);
  for (int i = 0; i < n; ++i) {
    std::vector<double> p(C);
    double s = 0.0;
    for (auto& v : p) {
      // Coarse values force ties in posterior and in argmax.
      v = coarse ? 1.0 + static_cast<double>(rng.Below(4)) : rng.Uniform(0.01, 1.0);
      s += v;
    }
    for (auto& v : p) v /= s;
    char id[16];
    std::snprintf(id, sizeof(id), "u%03d", static_cast<int>(rng.Below(1000)));
    if (t.posteriors.count(id)) continue;
    t.Insert(id, p);
  }
  return t;
}

std::vector<std::pair<std::string, std::vector<double>>> AsList(const SoftLabelTable& t) {
  return {t.posteriors.begin(), t.posteriors.end()};
}

TEST(SoftLabelTable, InsertValidates) {
  SoftLabelTable t;
  t.task = Task::kArousal2;
  EXPECT_NO_THROW(t.Insert("a", {0.3, 0.7}));
  EXPECT_THROW(t.Insert("a", {0.3, 0.7}), Error);
  EXPECT_THROW(t.Insert("b", {0.3, 0.6}), Error);
  EXPECT_THROW(t.Insert("c", {0.2, 0.3, 0.5}), Error);
  EXPECT_EQ(t.ArgMax("a"), 1);
  EXPECT_THROW(t.at("zzz"), Error);
}

TEST(SoftLabelTable, FileRoundTrip) {
  Rng rng(1);
  auto t = RandomTable(rng, 20, Task::kCategory4, false);
  auto p = fs::temp_directory_path() / "emotts_labeler_soft.jsonl";
  SaveSoftLabels(p, t);
  auto back = LoadSoftLabels(p);
  EXPECT_EQ(back.task, t.task);
  EXPECT_EQ(back.posteriors, t.posteriors);
}

TEST(SelectTopK, HandExample) {
  SoftLabelTable t;
  t.task = Task::kArousal2;
  t.Insert("u1", {0.10, 0.90});
  t.Insert("u2", {0.30, 0.70});
  t.Insert("u3", {0.05, 0.95});
  t.Insert("u4", {0.60, 0.40});
  auto rs = SelectTopK(t, 1, 2);
  EXPECT_EQ(rs.ids(), (std::vector<std::string>{"u3", "u1"}));
  EXPECT_DOUBLE_EQ(rs.members[0].posterior, 0.95);
  EXPECT_EQ(SelectTopK(t, 0, 5).ids(), (std::vector<std::string>{"u4"}));
  // Ranking over every utterance admits u4 into the class-1 list.
  EXPECT_EQ(SelectTopK(t, 1, 10, RankScope::kAllUtterances).ids(),
            (std::vector<std::string>{"u3", "u1", "u2", "u4"}));
}

TEST(SelectTopK, DefaultKIsFifty) { EXPECT_EQ(ReferenceSet{}.k, 50u); }

TEST(SelectTopK, MatchesSortOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Task task = trial % 3 == 0 ? Task::kValence2 : Task::kCategory4;
    auto t = RandomTable(rng, 5 + static_cast<int>(rng.Below(60)), task, trial % 2 == 0);
    const int cls = static_cast<int>(rng.Below(NumClasses(task)));
    const size_t k = 1 + rng.Below(30);
    EXPECT_EQ(SelectTopK(t, cls, k).ids(), testing::SortOracleTopK(AsList(t), cls, k));
  }
}

TEST(SelectTopK, PrefixMonotoneInK) {
  Rng rng(3);
  auto t = RandomTable(rng, 80, Task::kCategory4, true);
  for (int cls = 0; cls < 4; ++cls) {
    std::vector<std::string> prev;
    for (size_t k = 1; k <= 40; ++k) {
      auto ids = SelectTopK(t, cls, k).ids();
      ASSERT_GE(ids.size(), prev.size());
      EXPECT_TRUE(std::equal(prev.begin(), prev.end(), ids.begin()));
      prev = ids;
    }
  }
}

TEST(SelectTopK, InvariantToInsertionOrder) {
  Rng rng(4);
  auto t = RandomTable(rng, 50, Task::kCategory4, true);
  auto rows = AsList(t);
  rng.Shuffle(rows);
  SoftLabelTable u;
  u.task = t.task;
  for (auto& [id, p] : rows) u.Insert(id, p);
  for (int cls = 0; cls < 4; ++cls) EXPECT_EQ(SelectTopK(t, cls, 7).ids(), SelectTopK(u, cls, 7).ids());
}

TEST(SelectTopK, EmptyPoolAndBadK) {
  SoftLabelTable t;
  t.task = Task::kCategory4;
  t.Insert("a", {0.7, 0.1, 0.1, 0.1});
  EXPECT_TRUE(SelectTopK(t, 2, 5).members.empty());
  EXPECT_THROW(SelectTopK(t, 0, 0), Error);
  EXPECT_THROW(SelectTopK(t, 4, 1), Error);
}

TEST(SelectFull, SupersetAndSentinel) {
  Rng rng(5);
  auto t = RandomTable(rng, 60, Task::kCategory4, false);
  for (int cls = 0; cls < 4; ++cls) {
    auto full = SelectFull(t, cls);
    EXPECT_EQ(full.selection, "full");
    EXPECT_EQ(full.ids(), SelectTopK(t, cls, kAllMembers).ids());
    size_t pool = 0;
    for (const auto& [id, p] : t.posteriors) pool += t.ArgMax(id) == cls;
    EXPECT_EQ(full.members.size(), pool);
    auto top = SelectTopK(t, cls, 3);
    auto full_ids = full.ids();
    std::set<std::string> fs_ids(full_ids.begin(), full_ids.end());
    for (const auto& id : top.ids()) EXPECT_EQ(fs_ids.count(id), 1u);
  }
}

TEST(SelectFull, PoolOfSeven) {
  SoftLabelTable t;
  t.task = Task::kValence2;
  for (int i = 0; i < 7; ++i) t.Insert("p" + std::to_string(i), {0.2, 0.8});
  t.Insert("n", {0.9, 0.1});
  EXPECT_EQ(SelectFull(t, 1).members.size(), 7u);
}

StyleTokenWeights RandomWeights(Rng& rng, int heads, int tokens) {
  RowVec w(heads * tokens);
  for (int h = 0; h < heads; ++h) {
    double s = 0.0;
    for (int k = 0; k < tokens; ++k) s += (w(h * tokens + k) = rng.Uniform(0.0, 1.0));
    w.segment(h * tokens, tokens) /= s;
  }
  return {heads, tokens, w};
}

TEST(AverageTokenWeights, SingleAndPair) {
  Rng rng(6);
  auto a = RandomWeights(rng, 4, 10), b = RandomWeights(rng, 4, 10);
  EXPECT_EQ(AverageTokenWeights({a}).w, a.w);
  auto m = AverageTokenWeights({a, b});
  for (Eigen::Index i = 0; i < a.w.size(); ++i) EXPECT_DOUBLE_EQ(m.w(i), (a.w(i) + b.w(i)) / 2.0);
  EXPECT_THROW(AverageTokenWeights(std::vector<StyleTokenWeights>{}), Error);
  EXPECT_THROW(AverageTokenWeights({a, RandomWeights(rng, 2, 10)}), Error);
}

TEST(AverageTokenWeights, PerHeadNormalizationSurvives) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<StyleTokenWeights> ws;
    const int n = 1 + static_cast<int>(rng.Below(60));
    for (int i = 0; i < n; ++i) ws.push_back(RandomWeights(rng, 4, 10));
    EXPECT_LE(AverageTokenWeights(ws).NormalizationError(), 1e-6);
  }
}

TEST(AverageTokenWeights, OverReferenceSet) {
  Rng rng(8);
  std::map<std::string, StyleTokenWeights> store;
  ReferenceSet rs;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "r" + std::to_string(i);
    store[id] = RandomWeights(rng, 2, 3);
    rs.members.push_back({id, 0.9});
  }
  auto avg = AverageTokenWeights(rs, [&](const std::string& id) { return store.at(id); });
  RowVec expect = RowVec::Zero(6);
  for (auto& [id, w] : store) expect += w.w / 5.0;
  EXPECT_LT((avg.w - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(AverageTokenWeights(ReferenceSet{}, [&](const std::string& id) { return store.at(id); }),
               Error);
}

TEST(ReferenceSetFile, RoundTrip) {
  Rng rng(9);
  auto t = RandomTable(rng, 40, Task::kCategory4, false);
  std::vector<ReferenceSet> sets;
  for (int cls = 0; cls < 4; ++cls) {
    auto rs = SelectTopK(t, cls, 5);
    if (cls % 2 == 0) rs.averaged_weights = RandomWeights(rng, 4, 10);
    sets.push_back(rs);
  }
  sets.push_back(SelectFull(t, 1));
  auto p = fs::temp_directory_path() / "emotts_labeler_refs.jsonl";
  SaveReferenceSets(p, sets);
  auto back = LoadReferenceSets(p);
  ASSERT_EQ(back.size(), sets.size());
  for (size_t i = 0; i < sets.size(); ++i) {
    EXPECT_EQ(back[i].members, sets[i].members);
    EXPECT_EQ(back[i].k, sets[i].k);
    EXPECT_EQ(back[i].selection, sets[i].selection);
    EXPECT_EQ(back[i].averaged_weights.has_value(), sets[i].averaged_weights.has_value());
    if (sets[i].averaged_weights) EXPECT_EQ(back[i].averaged_weights->w, sets[i].averaged_weights->w);
  }
}

TEST(SoftLabel, TrainedModelAgreesWithHiddenClass) {
  corpus::SynthCorpusSpec spec;
  spec.n_source = 160;
  spec.n_target = 80;
  spec.seed = 21;
  spec.domain_shift.gain_db = -3.0;
  spec.domain_shift.lowpass_hz = 3500.0;
  auto c = corpus::GenerateSyntheticCorpus(spec);
  dsp::FrameConfig fc;
  std::vector<ser::SerExample> train, val, tgt;
  for (size_t i = 0; i < c.source.size(); ++i) {
    ser::SerExample x{c.source[i].id, dsp::WaveformToLogMel(c.source[i].audio, fc).values,
                      c.source[i].label->index()};
    (i % 5 == 4 ? val : train).push_back(std::move(x));
  }
  for (const auto& r : c.target) tgt.push_back({r.id, dsp::WaveformToLogMel(r.audio, fc).values, -1});
  ser::SerModelConfig mc;
  mc.encoder.conv_layers = {{8}, {8}, {16}, {16}};
  mc.encoder.gru_hidden = 16;
  mc.dense_hidden = 16;
  ser::SerTrainConfig tc;
  tc.batch_size = 16;
  tc.max_steps = 400;
  tc.eval_every = 50;
  tc.seed = 5;
  auto res = ser::TrainSer(train, val, tgt, mc, tc);
  auto table = SoftLabel(res.model, c.target, fc);
  ASSERT_EQ(table.size(), c.target.size());
  int agree = 0;
  for (const auto& [id, p] : table.posteriors) agree += table.ArgMax(id) == c.target_truth.at(id);
  EXPECT_GT(static_cast<double>(agree) / table.size(), 0.6);
  // Deterministic.
  EXPECT_EQ(SoftLabel(res.model, c.target, fc).posteriors, table.posteriors);
  // A record too short for one STFT frame is skipped.
  auto recs = c.target;
  recs.resize(3);
  recs[1].audio.resize(100);
  auto small = SoftLabel(res.model, recs, fc);
  EXPECT_EQ(small.size(), 2u);
  EXPECT_EQ(small.posteriors.count(recs[1].id), 0u);
}

}  // namespace
}  // namespace emotts::labeler
