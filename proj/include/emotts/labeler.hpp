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

// Soft labels for the target corpus, top-K reference sets per class, and
// averaging of style-token weights over a reference set.
//
// Files (JSON lines):
//   soft labels:    {"id", "task", "posterior": [...]}
//   reference sets: {"task", "class", "class_name", "k", "selection",
//                    "members": [{"id", "posterior"}...], "averaged_weights"?}

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emotts/common.hpp"
#include "emotts/corpus.hpp"
#include "emotts/dsp.hpp"
#include "emotts/io.hpp"
#include "emotts/ser.hpp"
#include "emotts/style.hpp"

namespace emotts::labeler {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct SoftLabelTable {
  Task task = Task::kCategory4;
  std::map<std::string, std::vector<double>> posteriors;  // ordered by id

  size_t size() const { return posteriors.size(); }
  const std::vector<double>& at(const std::string& id) const {
    auto it = posteriors.find(id);
    if (it == posteriors.end()) throw ValidationError("soft labels: no entry for '" + id + "'");
    return it->second;
  }

  void Insert(const std::string& id, std::vector<double> p) {
    Require(static_cast<int>(p.size()) == NumClasses(task),
            "soft labels: posterior length does not match task " + TaskName(task));
    double s = 0.0;
    for (double v : p) {
      Require(v >= 0.0 && v <= 1.0, "soft labels: posterior entry outside [0, 1] for '" + id + "'");
      s += v;
    }
    Require(std::abs(s - 1.0) <= 1e-6, "soft labels: posterior for '" + id + "' is not normalized");
    Require(posteriors.emplace(id, std::move(p)).second, "soft labels: duplicate id '" + id + "'");
  }

  int ArgMax(const std::string& id) const {
    const auto& p = at(id);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

inline void SaveSoftLabels(const fs::path& p, const SoftLabelTable& t) {
  std::vector<json> rows;
  for (const auto& [id, post] : t.posteriors)
    rows.push_back({{"id", id}, {"task", TaskName(t.task)}, {"posterior", post}});
  io::WriteJsonl(p, rows);
}

inline SoftLabelTable LoadSoftLabels(const fs::path& p) {
  SoftLabelTable t;
  bool first = true;
  int line = 0;
  for (const auto& j : io::ReadJsonl(p)) {
    ++line;
    const Task task = ParseTask(j.at("task").get<std::string>());
    if (first) t.task = task;
    Require(task == t.task, p.string() + ":" + std::to_string(line) + ": mixed tasks in one table");
    first = false;
    t.Insert(j.at("id").get<std::string>(), j.at("posterior").get<std::vector<double>>());
  }
  return t;
}

/// Posteriors from the trained SER model. Examples are (id, mel).
inline SoftLabelTable SoftLabel(ser::SerModel& model, const std::vector<ser::SerExample>& examples) {
  SoftLabelTable t;
  t.task = model.config().task;
  Mat post = model.Posteriors(ser::MelPointers(examples));
  for (size_t i = 0; i < examples.size(); ++i) {
    const RowVec r = post.row(static_cast<Eigen::Index>(i));
    t.Insert(examples[i].id, {r.data(), r.data() + r.size()});
  }
  return t;
}

/// Extracts features from raw records first; an utterance whose features
/// cannot be computed is skipped with a warning.
inline SoftLabelTable SoftLabel(ser::SerModel& model, const std::vector<corpus::UtteranceRecord>& records,
                                const dsp::FrameConfig& cfg) {
  std::vector<ser::SerExample> xs;
  for (const auto& r : records) {
    try {
      Mat mel = dsp::WaveformToLogMel(r.audio, cfg).values;
      if (mel.rows() < model.config().encoder.MinInputFrames())
        throw ValidationError("too few frames for the encoder");
      xs.push_back({r.id, std::move(mel), -1});
    } catch (const Error& e) {
      LogWarn("soft labels: skipping '" + r.id + "': " + e.what());
    }
  }
  return SoftLabel(model, xs);
}

// ---------------------------------------------------------------------------
// Reference sets

inline constexpr size_t kAllMembers = std::numeric_limits<size_t>::max();

enum class RankScope {
  kArgmaxPool,     // only utterances whose argmax is the class
  kAllUtterances,  // every utterance, ranked by the class posterior
};

struct ReferenceMember {
  std::string id;
  double posterior = 0.0;
  bool operator==(const ReferenceMember&) const = default;
};

struct ReferenceSet {
  Task task = Task::kCategory4;
  int cls = 0;
  size_t k = 50;
  std::string selection = "topk";  // "topk" or "full"
  std::vector<ReferenceMember> members;
  std::optional<StyleTokenWeights> averaged_weights;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& m : members) out.push_back(m.id);
    return out;
  }
};

inline ReferenceSet SelectTopK(const SoftLabelTable& table, int cls, size_t k,
                               RankScope scope = RankScope::kArgmaxPool) {
  Require(k >= 1, "select_topk: K must be at least 1");
  Require(cls >= 0 && cls < NumClasses(table.task), "select_topk: class out of range");
  ReferenceSet rs;
  rs.task = table.task;
  rs.cls = cls;
  rs.k = k;
  rs.selection = k == kAllMembers ? "full" : "topk";
  for (const auto& [id, post] : table.posteriors) {
    const int best = static_cast<int>(std::max_element(post.begin(), post.end()) - post.begin());
    if (scope == RankScope::kArgmaxPool && best != cls) continue;
    rs.members.push_back({id, post[cls]});
  }
  if (rs.members.empty()) {
    LogWarn("select_topk: empty pool for class " + ClassNames(table.task)[cls]);
    return rs;
  }
  auto before = [](const ReferenceMember& a, const ReferenceMember& b) {
    if (a.posterior != b.posterior) return a.posterior > b.posterior;
    return a.id < b.id;
  };
  const size_t keep = std::min(k, rs.members.size());
  std::partial_sort(rs.members.begin(), rs.members.begin() + static_cast<std::ptrdiff_t>(keep),
                    rs.members.end(), before);
  rs.members.resize(keep);
  return rs;
}

inline ReferenceSet SelectFull(const SoftLabelTable& table, int cls) {
  return SelectTopK(table, cls, kAllMembers);
}

/// Element-wise mean; each head block of the result stays a probability
/// vector.
inline StyleTokenWeights AverageTokenWeights(const std::vector<StyleTokenWeights>& ws) {
  Require(!ws.empty(), "average_token_weights: empty reference set");
  StyleTokenWeights out = ws[0];
  for (size_t i = 1; i < ws.size(); ++i) {
    Require(ws[i].heads == out.heads && ws[i].tokens == out.tokens,
            "average_token_weights: inconsistent shapes");
    out.w += ws[i].w;
  }
  out.w /= static_cast<double>(ws.size());
  return out;
}

/// `weights_of` maps an utterance id to its style-token weights (computed
/// by the TTS reference encoder).
inline StyleTokenWeights AverageTokenWeights(
    const ReferenceSet& rs, const std::function<StyleTokenWeights(const std::string&)>& weights_of) {
  if (rs.members.empty()) throw ValidationError("average_token_weights: empty reference set");
  std::vector<StyleTokenWeights> ws;
  for (const auto& m : rs.members) ws.push_back(weights_of(m.id));
  return AverageTokenWeights(ws);
}

inline json ReferenceSetToJson(const ReferenceSet& rs) {
  json members = json::array();
  for (const auto& m : rs.members) members.push_back({{"id", m.id}, {"posterior", m.posterior}});
  json j = {{"task", TaskName(rs.task)},
            {"class", rs.cls},
            {"class_name", ClassNames(rs.task)[rs.cls]},
            {"k", rs.k == kAllMembers ? json(nullptr) : json(rs.k)},
            {"selection", rs.selection},
            {"members", members}};
  if (rs.averaged_weights) {
    j["heads"] = rs.averaged_weights->heads;
    j["tokens"] = rs.averaged_weights->tokens;
    j["averaged_weights"] = rs.averaged_weights->ToVector();
  }
  return j;
}

inline ReferenceSet ReferenceSetFromJson(const json& j) {
  ReferenceSet rs;
  rs.task = ParseTask(j.at("task").get<std::string>());
  rs.cls = j.at("class").get<int>();
  Require(rs.cls >= 0 && rs.cls < NumClasses(rs.task), "reference set: class out of range");
  rs.k = j.at("k").is_null() ? kAllMembers : j.at("k").get<size_t>();
  rs.selection = j.value("selection", std::string("topk"));
  for (const auto& m : j.at("members"))
    rs.members.push_back({m.at("id").get<std::string>(), m.at("posterior").get<double>()});
  if (j.contains("averaged_weights"))
    rs.averaged_weights = StyleTokenWeights::FromVector(j.at("heads"), j.at("tokens"),
                                                        j["averaged_weights"].get<std::vector<double>>());
  return rs;
}

inline void SaveReferenceSets(const fs::path& p, const std::vector<ReferenceSet>& sets) {
  std::vector<json> rows;
  for (const auto& s : sets) rows.push_back(ReferenceSetToJson(s));
  io::WriteJsonl(p, rows);
}

inline std::vector<ReferenceSet> LoadReferenceSets(const fs::path& p) {
  std::vector<ReferenceSet> out;
  for (const auto& j : io::ReadJsonl(p)) out.push_back(ReferenceSetFromJson(j));
  return out;
}

}  // namespace emotts::labeler
