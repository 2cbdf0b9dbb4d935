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

// Stage orchestration. One declarative config (profile defaults, optional
// file overlay, key=value overrides) drives nine stages that read and write
// artifacts under an output root. Each stage directory holds a stage.json
// recording the stage key, the config hash, the seed, and the hash of every
// input and output file; a stage whose key and outputs still match is
// skipped unless forced.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "emotts/common.hpp"
#include "emotts/corpus.hpp"
#include "emotts/dsp.hpp"
#include "emotts/evalviz.hpp"
#include "emotts/io.hpp"
#include "emotts/labeler.hpp"
#include "emotts/ser.hpp"
#include "emotts/tts.hpp"

namespace emotts::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kOutEnv = "EMOTTS_OUT";

enum class Profile { kToy, kPaper };

inline std::string ProfileName(Profile p) { return p == Profile::kToy ? "toy" : "paper"; }
inline Profile ParseProfile(const std::string& s) {
  if (s == "toy") return Profile::kToy;
  if (s == "paper") return Profile::kPaper;
  throw ValidationError("profile must be toy or paper, got '" + s + "'");
}

// ---------------------------------------------------------------- config

inline json ToJson(const corpus::SynthCorpusSpec& s) {
  return {{"n_source", s.n_source},
          {"n_target", s.n_target},
          {"classes", s.classes},
          {"domain_shift",
           {{"lowpass_hz", s.domain_shift.lowpass_hz},
            {"gain_db", s.domain_shift.gain_db},
            {"noise_level", s.domain_shift.noise_level}}},
          {"min_chars", s.min_chars},
          {"max_chars", s.max_chars},
          {"max_seconds", s.max_seconds},
          {"max_text_chars", s.max_text_chars},
          {"jitter", s.jitter}};
}

inline corpus::SynthCorpusSpec CorpusSpecFromJson(const json& j, uint64_t seed) {
  corpus::SynthCorpusSpec s;
  s.n_source = j.value("n_source", s.n_source);
  s.n_target = j.value("n_target", s.n_target);
  s.classes = j.value("classes", s.classes);
  if (j.contains("domain_shift")) {
    const json& d = j["domain_shift"];
    s.domain_shift.lowpass_hz = d.value("lowpass_hz", s.domain_shift.lowpass_hz);
    s.domain_shift.gain_db = d.value("gain_db", s.domain_shift.gain_db);
    s.domain_shift.noise_level = d.value("noise_level", s.domain_shift.noise_level);
  }
  s.min_chars = j.value("min_chars", s.min_chars);
  s.max_chars = j.value("max_chars", s.max_chars);
  s.max_seconds = j.value("max_seconds", s.max_seconds);
  s.max_text_chars = j.value("max_text_chars", s.max_text_chars);
  s.jitter = j.value("jitter", s.jitter);
  s.seed = seed;
  s.Validate();
  return s;
}

inline json ToJson(const dsp::FrameConfig& f) {
  return {{"sample_rate", f.sample_rate}, {"frame_length", f.frame_length}, {"hop_length", f.hop_length},
          {"fft_size", f.fft_size},       {"n_mels", f.n_mels},             {"fmin", f.fmin},
          {"fmax", f.fmax},               {"log_floor", f.log_floor}};
}

inline dsp::FrameConfig FrameConfigFromJson(const json& j) {
  dsp::FrameConfig f;
  f.sample_rate = j.value("sample_rate", f.sample_rate);
  f.frame_length = j.value("frame_length", f.frame_length);
  f.hop_length = j.value("hop_length", f.hop_length);
  f.fft_size = j.value("fft_size", f.fft_size);
  f.n_mels = j.value("n_mels", f.n_mels);
  f.fmin = j.value("fmin", f.fmin);
  f.fmax = j.value("fmax", f.fmax);
  f.log_floor = j.value("log_floor", f.log_floor);
  f.Validate();
  return f;
}

struct LabelerConfig {
  Task task = Task::kCategory4;
  size_t k = 50;
  labeler::RankScope scope = labeler::RankScope::kArgmaxPool;
  // When a class has no utterance in its argmax pool, rank every utterance
  // by that class's posterior instead of leaving the set empty.
  bool fallback_all_utterances = true;
};

struct EvalConfig {
  std::vector<std::string> texts;
  double temperature = 2.0;
  int griffin_lim_iters = 60;
  bool baseline = true;  // also train and score a model without the emotion task
  evalviz::ProjectionOptions projection;
  double gate_margin = 0.0;
  double probe_holdout = 0.2;
};

struct PipelineConfig {
  Profile profile = Profile::kToy;
  uint64_t seed = 1;
  json doc;  // merged configuration, everything except the output root
  std::optional<std::string> out;  // from the config file, if any

  corpus::SynthCorpusSpec corpus;
  dsp::FrameConfig dsp;
  ser::SerModelConfig ser_model;
  ser::SerTrainConfig ser_train;
  bool ser_baseline = true;  // also train the lambda = 0 model for the SER table
  ser::SerTrainConfig probe_train;
  LabelerConfig labeler;
  tts::TtsModelConfig tts_model;
  tts::TtsTrainConfig tts_train;
  EvalConfig eval;

  uint64_t Hash() const { return io::HashBytes(doc.dump()); }
  std::string HashHex() const { return io::HexHash(Hash()); }
  json Section(const std::string& key) const { return doc.at(key); }
};

namespace detail {

inline json StripSeed(json j) {
  j.erase("seed");
  return j;
}

inline const std::vector<std::string>& DefaultTexts() {
  static const std::vector<std::string> t = {"hello", "mosa", "kilu", "a tone", "derim", "vapo", "senu", "lomi"};
  return t;
}

}  // namespace detail

/// Full default document for a profile.
inline json ProfileDefaults(Profile p) {
  corpus::SynthCorpusSpec cs;
  ser::SerModelConfig sm;
  ser::SerTrainConfig st;
  tts::TtsModelConfig tm;
  tts::TtsTrainConfig tt;
  json labeler = {{"task", "category4"}, {"k", 50}, {"rank_scope", "argmax_pool"}, {"fallback_all_utterances", true}};
  json eval = {{"texts", detail::DefaultTexts()},
               {"temperature", 2.0},
               {"griffin_lim_iters", 60},
               {"baseline", true},
               {"projection", "pca"},
               {"perplexity", 10.0},
               {"tsne_iters", 1000},
               {"gate_margin", 0.0},
               {"probe_holdout", 0.2}};
  json probe = {{"seed_offset", 1000}};
  if (p == Profile::kToy) {
    cs.n_source = 240;
    cs.n_target = 240;
    sm.encoder.conv_layers = {{8}, {8}, {16}, {16}};
    sm.encoder.gru_hidden = 32;
    sm.dense_hidden = 32;
    st.batch_size = 16;
    st.max_steps = 1000;
    st.eval_every = 50;
    st.patience = 10;
    st.validation_size = 48;
    tt.batch_size = 16;
    tt.max_steps = 1000;
    tt.schedule.initial = 4e-3;
    tt.schedule.warmup = 200;
    tt.log_every = 100;
    labeler["k"] = 15;
    eval["griffin_lim_iters"] = 30;
  } else {
    cs.n_source = 5000;
    cs.n_target = 5000;
    tm = tts::PaperTtsModelConfig();
    tt.guide_weight = 0.0;
    tt.log_every = 1000;
  }
  return {{"profile", ProfileName(p)},
          {"seed", 1},
          {"corpus", ToJson(cs)},
          {"dsp", ToJson(dsp::FrameConfig{})},
          {"ser", {{"model", ToJson(sm)}, {"train", detail::StripSeed(ser::ToJson(st))}, {"baseline", true}}},
          {"probe", probe},
          {"labeler", labeler},
          {"tts", {{"model", ToJson(tm)}, {"train", detail::StripSeed(tts::ToJson(tt))}}},
          {"eval", eval}};
}

/// Overlays `patch` onto `base`. Keys must already exist in `base`; objects
/// merge recursively, anything else replaces the old value when the JSON
/// kinds agree (integers may replace floats).
inline void MergeInto(json& base, const json& patch, const std::string& path, std::vector<std::string>& errors) {
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) {
      errors.push_back("unknown config key '" + where + "'");
      continue;
    }
    json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) errors.push_back("config key '" + where + "' must be an object");
      else MergeInto(slot, value, where, errors);
      continue;
    }
    const bool ok = (slot.is_number() && value.is_number() && !(slot.is_number_integer() && value.is_number_float())) ||
                    (slot.is_boolean() && value.is_boolean()) || (slot.is_string() && value.is_string()) ||
                    (slot.is_array() && value.is_array()) || slot.is_null();
    if (!ok) {
      errors.push_back("config key '" + where + "' expects " + std::string(slot.type_name()) + ", got " +
                       std::string(value.type_name()));
      continue;
    }
    slot = value;
  }
}

/// "a.b.c=value": the value is parsed as JSON when possible, otherwise taken
/// as a string.
inline json OverrideAsPatch(const std::string& assignment, std::vector<std::string>& errors) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    errors.push_back("override '" + assignment + "' is not of the form key=value");
    return json::object();
  }
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json patch = value;
  std::vector<std::string> parts;
  for (size_t start = 0;;) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) {
      errors.push_back("override '" + assignment + "' has an empty key segment");
      return json::object();
    }
    patch = json{{*it, patch}};
  }
  return patch;
}

struct ConfigRequest {
  std::optional<Profile> profile;
  std::optional<fs::path> config_file;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
};

/// Builds typed configs from the merged document. Every violation found is
/// collected and reported in one ValidationError.
inline PipelineConfig BuildConfig(const ConfigRequest& req) {
  std::vector<std::string> errors;
  json file = json::object();
  if (req.config_file) {
    if (!fs::exists(*req.config_file))
      throw ValidationError("config file '" + req.config_file->string() + "' not found");
    try {
      file = json::parse(io::ReadFile(*req.config_file));
    } catch (const json::exception& e) {
      throw ValidationError("config file '" + req.config_file->string() + "' is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ValidationError("config file must hold a JSON object");
  }
  PipelineConfig c;
  try {
    c.profile = req.profile ? *req.profile
                            : ParseProfile(file.value("profile", std::string("toy")));
  } catch (const Error& e) {
    errors.push_back(e.what());
  }
  c.doc = ProfileDefaults(c.profile);
  if (file.contains("out")) {
    if (file["out"].is_string()) c.out = file["out"].get<std::string>();
    else errors.push_back("config key 'out' must be a string");
    file.erase("out");
  }
  if (file.contains("profile") && file["profile"] != ProfileName(c.profile) && req.profile) file.erase("profile");
  MergeInto(c.doc, file, "", errors);
  for (const auto& o : req.overrides) MergeInto(c.doc, OverrideAsPatch(o, errors), "", errors);
  if (req.seed) c.doc["seed"] = *req.seed;
  c.doc["profile"] = ProfileName(c.profile);

  auto section = [&](const std::string& what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(what + ": " + e.what());
    } catch (const json::exception& e) {
      errors.push_back(what + ": " + e.what());
    }
  };
  const json& d = c.doc;
  section("seed", [&] {
    Require(d["seed"].is_number_unsigned() || (d["seed"].is_number_integer() && d["seed"].get<long long>() >= 0),
            "must be a nonnegative integer");
    c.seed = d["seed"].get<uint64_t>();
  });
  section("corpus", [&] { c.corpus = CorpusSpecFromJson(d["corpus"], c.seed); });
  section("dsp", [&] { c.dsp = FrameConfigFromJson(d["dsp"]); });
  section("ser.model", [&] { c.ser_model = ser::SerModelConfigFromJson(d["ser"]["model"]); });
  section("ser.train", [&] {
    json t = d["ser"]["train"];
    t["seed"] = c.seed;
    c.ser_train = ser::SerTrainConfigFromJson(t);
    c.ser_baseline = d["ser"]["baseline"].get<bool>();
  });
  section("probe", [&] {
    c.probe_train = c.ser_train;
    c.probe_train.lambda = 0.0;
    c.probe_train.seed = c.seed + d["probe"]["seed_offset"].get<uint64_t>();
    Require(c.probe_train.seed != c.seed, "seed_offset must be nonzero");
  });
  section("labeler", [&] {
    const json& l = d["labeler"];
    c.labeler.task = ParseTask(l["task"].get<std::string>());
    const long k = l["k"].get<long>();
    Require(k >= 1, "k must be at least 1");
    c.labeler.k = static_cast<size_t>(k);
    const std::string scope = l["rank_scope"].get<std::string>();
    Require(scope == "argmax_pool" || scope == "all_utterances", "rank_scope must be argmax_pool or all_utterances");
    c.labeler.scope = scope == "argmax_pool" ? labeler::RankScope::kArgmaxPool : labeler::RankScope::kAllUtterances;
    c.labeler.fallback_all_utterances = l["fallback_all_utterances"].get<bool>();
  });
  section("tts.model", [&] { c.tts_model = tts::TtsModelConfigFromJson(d["tts"]["model"]); });
  section("tts.train", [&] {
    json t = d["tts"]["train"];
    t["seed"] = c.seed;
    c.tts_train = tts::TtsTrainConfigFromJson(t);
  });
  section("eval", [&] {
    const json& e = d["eval"];
    c.eval.texts = e["texts"].get<std::vector<std::string>>();
    Require(!c.eval.texts.empty(), "texts must not be empty");
    for (const auto& t : c.eval.texts) tts::TextToIds(t);
    c.eval.temperature = e["temperature"].get<double>();
    Require(c.eval.temperature > 0, "temperature must be positive");
    c.eval.griffin_lim_iters = e["griffin_lim_iters"].get<int>();
    Require(c.eval.griffin_lim_iters >= 1, "griffin_lim_iters must be >= 1");
    c.eval.baseline = e["baseline"].get<bool>();
    c.eval.projection.method = evalviz::ParseProjectionMethod(e["projection"].get<std::string>());
    c.eval.projection.perplexity = e["perplexity"].get<double>();
    c.eval.projection.tsne_iters = e["tsne_iters"].get<int>();
    c.eval.projection.seed = c.seed;
    Require(c.eval.projection.perplexity > 0 && c.eval.projection.tsne_iters > 0,
            "perplexity and tsne_iters must be positive");
    c.eval.gate_margin = e["gate_margin"].get<double>();
    c.eval.probe_holdout = e["probe_holdout"].get<double>();
    Require(c.eval.probe_holdout > 0 && c.eval.probe_holdout < 1, "probe_holdout must lie in (0, 1)");
  });
  if (errors.empty()) {
    section("consistency", [&] {
      Require(c.ser_model.task == c.labeler.task, "ser.model.task must equal labeler.task");
      Require(c.tts_model.head == tts::HeadKind::kCategory && c.labeler.task == Task::kCategory4,
              "the pipeline drives the category head with category4 labels");
      Require(c.dsp.n_mels == c.ser_model.encoder.input_mels && c.dsp.n_mels == c.tts_model.n_mels,
              "dsp.n_mels must match ser.model.input_mels and tts.model.n_mels");
      Require(c.dsp.bins() == c.tts_model.n_linear, "tts.model.n_linear must equal dsp.fft_size / 2 + 1");
      Require(static_cast<int>(c.corpus.classes.size()) == NumClasses(c.labeler.task),
              "corpus.classes must list every class of the labeling task");
      Require(c.ser_train.validation_size < c.corpus.n_source,
              "ser.train.validation_size must be smaller than corpus.n_source");
      Require(c.corpus.n_target >= c.tts_train.batch_size || !c.tts_train.use_emotion_head,
              "corpus.n_target must be at least tts.train.batch_size");
    });
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  return c;
}

/// --out, then the environment variable, then the config file, then
/// runs/<profile>.
inline fs::path ResolveOutputRoot(const std::optional<fs::path>& flag, const PipelineConfig& c) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  if (c.out) return *c.out;
  return fs::path("runs") / ProfileName(c.profile);
}

// ---------------------------------------------------------------- stages

struct StageInfo {
  const char* name;     // directory under the output root
  const char* command;  // CLI subcommand
};

inline const std::vector<StageInfo>& Stages() {
  static const std::vector<StageInfo> s = {
      {"corpus", "gen-corpus"}, {"features", "extract-features"}, {"ser", "train-ser"},
      {"labels", "label"},      {"refs", "select-refs"},          {"tts", "train-tts"},
      {"synth", "synthesize"},  {"eval", "evaluate"}};
  return s;
}

inline std::string CommandFor(const std::string& stage) {
  for (const auto& s : Stages())
    if (stage == s.name) return s.command;
  throw RuntimeError("unknown stage '" + stage + "'");
}

/// "train-tts" -> "cmd_train_tts".
inline std::string CmdName(std::string command) {
  for (char& ch : command)
    if (ch == '-') ch = '_';
  return "cmd_" + command;
}

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::vector<std::string> outputs;
  double seconds = 0.0;
};

struct SynthRequest {
  std::optional<std::string> text;     // default: the first eval text
  std::optional<std::string> emotion;  // default: every class
  std::string selection = "topk";      // topk | full
  std::string model = "ours";          // ours | base
};

struct SynthOutput {
  fs::path wav, sidecar;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, fs::path root, bool force = false)
      : cfg_(std::move(cfg)), root_(std::move(root)), force_(force) {}

  const PipelineConfig& config() const { return cfg_; }
  const fs::path& root() const { return root_; }

  StageResult GenCorpus() {
    return Run("corpus", {{"corpus", cfg_.Section("corpus")}}, {}, [&](Outputs& out) {
      const auto c = corpus::GenerateSyntheticCorpus(cfg_.corpus);
      corpus::SaveManifest(Path("corpus/source.jsonl"), c.source);
      corpus::SaveManifest(Path("corpus/target.jsonl"), c.target);
      // Hidden target classes, read only by the evaluate stage.
      corpus::SaveTruth(Path("corpus/target_truth.jsonl"), c.target_truth);
      out.Add("corpus/source.jsonl");
      out.Add("corpus/target.jsonl");
      out.Add("corpus/target_truth.jsonl");
      for (const auto* set : {&c.source, &c.target})
        for (const auto& r : *set) out.Add("corpus/wav/" + r.id + ".wav");
    });
  }

  StageResult ExtractFeatures() {
    return Run("features", {{"dsp", cfg_.Section("dsp")}}, {"corpus"}, [&](Outputs& out) {
      io::Archive src = Meta("source_mel"), mel = Meta("target_mel"), lin = Meta("target_linear");
      for (const auto& r : corpus::LoadManifest(Path("corpus/source.jsonl")))
        src.Put(r.id, dsp::WaveformToLogMel(r.audio, cfg_.dsp).values, io::DType::kF32);
      for (const auto& r : corpus::LoadManifest(Path("corpus/target.jsonl"))) {
        auto x = tts::MakeExample(r.id, *r.text, r.audio, cfg_.dsp);
        mel.Put(r.id, std::move(x.mel), io::DType::kF32);
        lin.Put(r.id, std::move(x.log_linear), io::DType::kF32);
      }
      Save(out, "features/source_mel.bin", src);
      Save(out, "features/target_mel.bin", mel);
      Save(out, "features/target_linear.bin", lin);
    });
  }

  StageResult TrainSer() {
    return Run("ser", {{"ser", cfg_.Section("ser")}}, {"corpus", "features"}, [&](Outputs& out) {
      auto [train, val] = SourceSplit(cfg_.ser_train.validation_size, DeriveSeed(cfg_.seed, "pipeline.ser_split"));
      const auto target = TargetExamples();
      auto fit = [&](double lambda, const std::string& name) {
        auto tc = cfg_.ser_train;
        tc.lambda = lambda;
        auto res = ser::TrainSer(train, val, target, cfg_.ser_model, tc);
        auto a = res.model.ToArchive();
        Stamp(a.meta, name);
        a.meta["best_step"] = res.best_step;
        a.meta["best_val_wa"] = res.best_val_wa;
        Save(out, "ser/" + name + ".bin", a);
        std::vector<json> rows;
        for (const auto& h : res.history) rows.push_back(h.ToJson());
        SaveJsonl(out, "ser/" + name + "_history.jsonl", rows);
      };
      fit(cfg_.ser_train.lambda, "ser");
      if (cfg_.ser_baseline) fit(0.0, "ser_base");
    });
  }

  StageResult Label() {
    return Run("labels", {{"task", cfg_.Section("labeler")["task"]}}, {"features", "ser"}, [&](Outputs& out) {
      auto model = ser::SerModel::FromArchive(io::ReadArchive(Path("ser/ser.bin")));
      labeler::SaveSoftLabels(Path("labels/soft_labels.jsonl"), labeler::SoftLabel(model, TargetExamples()));
      out.Add("labels/soft_labels.jsonl");
    });
  }

  StageResult SelectRefs() {
    return Run("refs", {{"labeler", cfg_.Section("labeler")}}, {"labels"}, [&](Outputs& out) {
      const auto table = labeler::LoadSoftLabels(Path("labels/soft_labels.jsonl"));
      std::vector<labeler::ReferenceSet> sets;
      json summary = json::array();
      for (int c = 0; c < NumClasses(table.task); ++c) {
        for (const bool full : {false, true}) {
          const size_t k = full ? labeler::kAllMembers : cfg_.labeler.k;
          auto rs = labeler::SelectTopK(table, c, k, cfg_.labeler.scope);
          bool fallback = false;
          if (rs.members.empty() && cfg_.labeler.fallback_all_utterances) {
            rs = labeler::SelectTopK(table, c, k, labeler::RankScope::kAllUtterances);
            fallback = true;
          }
          if (rs.members.empty())
            throw RuntimeError("select-refs: no utterance available for class " + ClassNames(table.task)[c]);
          summary.push_back({{"class", ClassNames(table.task)[c]}, {"selection", rs.selection},
                             {"size", rs.members.size()}, {"fallback_all_utterances", fallback}});
          sets.push_back(std::move(rs));
        }
      }
      labeler::SaveReferenceSets(Path("refs/reference_sets.jsonl"), sets);
      out.Add("refs/reference_sets.jsonl");
      SaveJson(out, "refs/summary.json", {{"sets", summary}});
    });
  }

  StageResult TrainTts() {
    json slice = {{"tts", cfg_.Section("tts")}, {"baseline", cfg_.eval.baseline}};
    return Run("tts", slice, {"corpus", "features", "labels", "refs"}, [&](Outputs& out) {
      const auto xs = TtsExamples();
      const auto sets = labeler::LoadReferenceSets(Path("refs/reference_sets.jsonl"));
      std::map<std::string, const Mat*> mel_of;
      for (const auto& x : xs) mel_of[x.id] = &x.mel;
      auto fit = [&](const std::string& name, tts::TtsTrainConfig tc) {
        auto res = tts::TrainTts(xs, cfg_.tts_model, tc);
        auto a = res.model.ToArchive();
        Stamp(a.meta, name);
        Save(out, "tts/" + name + ".bin", a);
        std::vector<json> rows;
        for (const auto& h : res.history) rows.push_back(h.ToJson());
        SaveJsonl(out, "tts/" + name + "_history.jsonl", rows);
        auto controls = sets;
        for (auto& rs : controls)
          rs.averaged_weights = labeler::AverageTokenWeights(rs, [&](const std::string& id) {
            auto it = mel_of.find(id);
            if (it == mel_of.end()) throw RuntimeError("train-tts: reference '" + id + "' has no features");
            return res.model.TokenWeightsOf(*it->second);
          });
        labeler::SaveReferenceSets(Path("tts/" + name + "_controls.jsonl"), controls);
        out.Add("tts/" + name + "_controls.jsonl");
      };
      fit("ours", cfg_.tts_train);
      if (cfg_.eval.baseline) {
        auto tc = cfg_.tts_train;
        tc.use_emotion_head = false;
        tc.emotion_weight = 0.0;
        fit("base", tc);
      }
    });
  }

  /// One WAV plus a JSON sidecar per requested emotion.
  std::vector<SynthOutput> Synthesize(const SynthRequest& req, StageResult* result = nullptr) {
    Require(req.selection == "topk" || req.selection == "full", "synthesize: selection must be topk or full");
    Require(req.model == "ours" || req.model == "base", "synthesize: model must be ours or base");
    const std::string text = req.text.value_or(cfg_.eval.texts.front());
    tts::TextToIds(text);
    const auto names = ClassNames(cfg_.labeler.task);
    std::vector<int> classes;
    if (req.emotion) {
      classes.push_back(ClassIndex(cfg_.labeler.task, *req.emotion));
    } else {
      for (int c = 0; c < static_cast<int>(names.size()); ++c) classes.push_back(c);
    }
    const std::string slug = Slug(text) + "_" + (req.emotion ? *req.emotion : std::string("all")) + "_" +
                             req.selection + "_" + req.model;
    json slice = {{"text", text}, {"emotion", req.emotion ? json(*req.emotion) : json(nullptr)},
                  {"selection", req.selection}, {"model", req.model},
                  {"temperature", cfg_.eval.temperature}, {"griffin_lim_iters", cfg_.eval.griffin_lim_iters}};
    std::vector<SynthOutput> files;
    auto r = Run("synth", slice, {"tts"}, [&](Outputs& out) {
      if (req.model == "base" && !fs::exists(Path("tts/base.bin")))
        throw MissingDependency("synthesize: no baseline model; enable eval.baseline and rerun train-tts");
      auto model = tts::TtsModel::FromArchive(io::ReadArchive(Path("tts/" + req.model + ".bin")));
      const auto controls = labeler::LoadReferenceSets(Path("tts/" + req.model + "_controls.jsonl"));
      for (int c : classes) {
        const auto& rs = FindSet(controls, c, req.selection);
        tts::SynthesisOptions so;
        so.temperature = cfg_.eval.temperature;
        so.griffin_lim_iters = cfg_.eval.griffin_lim_iters;
        so.seed = cfg_.seed;
        const auto s = tts::Synthesize(model, text, *rs.averaged_weights, so, cfg_.dsp);
        const std::string base = "synth/" + Slug(text) + "_" + names[c] + "_" + req.selection + "_" + req.model;
        io::WriteWav(Path(base + ".wav"), s.waveform, cfg_.dsp.sample_rate);
        out.Add(base + ".wav");
        json side = tts::SynthesisRecord(text, *rs.averaged_weights, so, s);
        side["emotion"] = names[c];
        side["selection"] = req.selection;
        side["model"] = req.model;
        side["reference_ids"] = rs.ids();
        side["sample_rate"] = cfg_.dsp.sample_rate;
        Stamp(side, "synthesis");
        SaveJson(out, base + ".json", side);
      }
    }, "stage_" + slug + ".json");
    for (int c : classes) {
      const std::string base = "synth/" + Slug(text) + "_" + names[c] + "_" + req.selection + "_" + req.model;
      files.push_back({Path(base + ".wav"), Path(base + ".json")});
    }
    if (result) *result = r;
    return files;
  }

  StageResult Evaluate() {
    json slice = {{"eval", cfg_.Section("eval")}, {"probe", cfg_.Section("probe")}, {"ser", cfg_.Section("ser")}};
    return Run("eval", slice, {"corpus", "features", "ser", "labels", "refs", "tts"}, [&](Outputs& out) {
      EvaluateBody(out);
    });
  }

  std::vector<StageResult> RunAll() {
    std::vector<StageResult> r;
    r.push_back(GenCorpus());
    r.push_back(ExtractFeatures());
    r.push_back(TrainSer());
    r.push_back(Label());
    r.push_back(SelectRefs());
    r.push_back(TrainTts());
    StageResult s;
    Synthesize({}, &s);
    r.push_back(s);
    r.push_back(Evaluate());
    return r;
  }

 private:
  class Outputs {
   public:
    void Add(const std::string& rel) { files_.push_back(rel); }
    const std::vector<std::string>& files() const { return files_; }

   private:
    std::vector<std::string> files_;
  };

  fs::path Path(const std::string& rel) const { return root_ / rel; }

  void Stamp(json& meta, const std::string& artifact) const {
    meta["artifact"] = artifact;
    meta["config_hash"] = cfg_.HashHex();
    meta["seed"] = cfg_.seed;
  }

  io::Archive Meta(const std::string& artifact) const {
    io::Archive a;
    Stamp(a.meta, artifact);
    return a;
  }

  void Save(Outputs& out, const std::string& rel, const io::Archive& a) {
    io::WriteArchive(Path(rel), a);
    out.Add(rel);
  }
  void SaveJson(Outputs& out, const std::string& rel, const json& j) {
    io::WriteFile(Path(rel), j.dump(2) + "\n");
    out.Add(rel);
  }
  void SaveJsonl(Outputs& out, const std::string& rel, const std::vector<json>& rows) {
    io::WriteJsonl(Path(rel), rows);
    out.Add(rel);
  }

  static std::string Slug(const std::string& text) {
    std::string s;
    for (char ch : text) s += std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '_';
    return s.substr(0, 40);
  }

  static const labeler::ReferenceSet& FindSet(const std::vector<labeler::ReferenceSet>& sets, int cls,
                                              const std::string& selection) {
    for (const auto& s : sets)
      if (s.cls == cls && s.selection == selection && s.averaged_weights) return s;
    throw RuntimeError("no " + selection + " reference set with weights for class " + std::to_string(cls));
  }

  /// Hashes of an upstream stage's recorded outputs, after checking that the
  /// files on disk still match.
  json UpstreamDigest(const std::string& stage, const std::string& consumer) const {
    const fs::path rec = Path(stage + "/stage.json");
    const std::string producer = CommandFor(stage);
    if (!fs::exists(rec))
      throw MissingDependency(consumer + ": missing upstream artifacts in '" + (root_ / stage).string() +
                              "'; run `emotts " + producer + "` first (" + CmdName(producer) + ")");
    const json j = json::parse(io::ReadFile(rec));
    for (const auto& [rel, hash] : j.at("outputs").items()) {
      if (!fs::exists(Path(rel)) || io::HexHash(io::HashFile(Path(rel))) != hash.get<std::string>())
        throw MissingDependency(consumer + ": artifact '" + rel + "' is missing or changed since `" + producer +
                                "` wrote it; rerun `emotts " + producer + "` (" + CmdName(producer) + ")");
    }
    return j.at("outputs");
  }

  template <class Body>
  StageResult Run(const std::string& stage, const json& slice, const std::vector<std::string>& upstream, Body&& body,
                  const std::string& record_name = "stage.json") {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string consumer = CommandFor(stage);
    json inputs = json::object();
    for (const auto& u : upstream) inputs[u] = UpstreamDigest(u, consumer);
    const json key_doc = {{"stage", stage}, {"config", slice}, {"seed", cfg_.seed}, {"inputs", inputs}};
    const std::string key = io::HexHash(io::HashBytes(key_doc.dump()));
    const fs::path rec = Path(stage + "/" + record_name);
    StageResult result{stage, false, {}, 0.0};
    if (!force_ && fs::exists(rec)) {
      try {
        const json old = json::parse(io::ReadFile(rec));
        bool fresh = old.value("key", "") == key;
        for (const auto& [rel, hash] : old.at("outputs").items()) {
          if (!fresh) break;
          fresh = fs::exists(Path(rel)) && io::HexHash(io::HashFile(Path(rel))) == hash.template get<std::string>();
          result.outputs.push_back(rel);
        }
        if (fresh) {
          result.skipped = true;
          LogInfo(consumer + ": up to date");
          return result;
        }
      } catch (const json::exception&) {
        // Unreadable record: rerun.
      }
      result.outputs.clear();
    }
    LogInfo(consumer + ": running");
    Outputs out;
    body(out);
    json outputs = json::object();
    for (const auto& rel : out.files()) outputs[rel] = io::HexHash(io::HashFile(Path(rel)));
    const json record = {{"stage", stage},        {"command", consumer},
                         {"key", key},            {"config_hash", cfg_.HashHex()},
                         {"seed", cfg_.seed},     {"profile", ProfileName(cfg_.profile)},
                         {"config", slice},       {"inputs", inputs},
                         {"outputs", outputs}};
    io::WriteFile(rec, record.dump(2) + "\n");
    result.outputs = out.files();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

  // ------------------------------------------------------------ stage data

  struct SourceData {
    std::vector<ser::SerExample> train, validation;
  };

  std::vector<ser::SerExample> SourceExamples() const {
    const auto mels = io::ReadArchive(Path("features/source_mel.bin"));
    std::vector<ser::SerExample> xs;
    for (const auto& r : corpus::LoadManifest(Path("corpus/source.jsonl"), false)) {
      Require(r.label.has_value(), "source record '" + r.id + "' has no label");
      Require(r.label->task == cfg_.labeler.task, "source labels do not match the labeling task");
      xs.push_back({r.id, mels.Get(r.id), r.label->index()});
    }
    return xs;
  }

  SourceData SourceSplit(int validation, uint64_t seed) const {
    const auto xs = SourceExamples();
    std::vector<corpus::UtteranceRecord> ids;
    for (const auto& x : xs) {
      corpus::UtteranceRecord r;
      r.id = x.id;
      ids.push_back(std::move(r));
    }
    const auto tv = corpus::SplitValidationCount(ids, static_cast<size_t>(validation), seed);
    std::set<std::string> val_ids;
    for (const auto& r : tv.validation) val_ids.insert(r.id);
    SourceData d;
    for (const auto& x : xs) (val_ids.count(x.id) ? d.validation : d.train).push_back(x);
    return d;
  }

  std::vector<ser::SerExample> TargetExamples(const std::map<std::string, int>* truth = nullptr) const {
    const auto mels = io::ReadArchive(Path("features/target_mel.bin"));
    std::vector<ser::SerExample> xs;
    for (const auto& [id, m] : mels.tensors) xs.push_back({id, m, truth ? truth->at(id) : -1});
    return xs;
  }

  std::vector<tts::TtsExample> TtsExamples() const {
    const auto mels = io::ReadArchive(Path("features/target_mel.bin"));
    const auto lins = io::ReadArchive(Path("features/target_linear.bin"));
    const auto table = labeler::LoadSoftLabels(Path("labels/soft_labels.jsonl"));
    std::vector<tts::TtsExample> xs;
    for (const auto& r : corpus::LoadManifest(Path("corpus/target.jsonl"), false)) {
      tts::TtsExample x;
      x.id = r.id;
      x.text_ids = tts::TextToIds(*r.text);
      x.mel = mels.Get(r.id);
      x.log_linear = lins.Get(r.id);
      const auto& p = table.at(r.id);
      x.soft = {Eigen::Map<const RowVec>(p.data(), static_cast<Eigen::Index>(p.size()))};
      xs.push_back(std::move(x));
    }
    return xs;
  }

  // ------------------------------------------------------------ evaluate

  void EvaluateBody(Outputs& out) {
    const auto truth = corpus::LoadTruth(Path("corpus/target_truth.jsonl"));
    const auto names = ClassNames(cfg_.labeler.task);
    const auto target = TargetExamples(&truth);
    evalviz::Report report;
    report.title = "emotts evaluation (" + ProfileName(cfg_.profile) + " profile, seed " +
                   std::to_string(cfg_.seed) + ")";
    report.notes.push_back(
        "Perception scores are an objective proxy: a held-out SER probe classifies synthesized audio in place "
        "of human listeners. They are not listening-test or MOS results.");
    json results = {{"config_hash", cfg_.HashHex()}, {"seed", cfg_.seed}, {"profile", ProfileName(cfg_.profile)}};

    // SER on the target domain.
    for (const std::string name : {"ser", "ser_base"}) {
      if (!fs::exists(Path("ser/" + name + ".bin"))) continue;
      auto m = ser::SerModel::FromArchive(io::ReadArchive(Path("ser/" + name + ".bin")));
      const auto ev = ser::EvaluateSer(m, target, false);
      const std::string tag = name == "ser" ? "ser_mmd" : "ser_base";
      report.metrics.push_back({{"metric", "ser_target"}, {"model", tag}, {"wa", ev.accuracy.wa},
                                {"ua", ev.accuracy.ua}});
      report.matrices[tag + "_target"] = {ev.confusion, names};
      results["ser"][tag] = evalviz::ToJson(ev.accuracy);
    }

    // Soft-label and reference-set quality against the hidden classes.
    const auto table = labeler::LoadSoftLabels(Path("labels/soft_labels.jsonl"));
    {
      std::vector<int> t, p;
      for (const auto& [id, post] : table.posteriors) {
        t.push_back(truth.at(id));
        p.push_back(table.ArgMax(id));
      }
      const auto r = evalviz::ConfusionAndAccuracy(t, p, names);
      report.metrics.push_back({{"metric", "soft_label_agreement"}, {"wa", r.accuracy.wa}, {"ua", r.accuracy.ua}});
      results["labels"] = evalviz::ToJson(r.accuracy);
    }
    for (const auto& rs : labeler::LoadReferenceSets(Path("refs/reference_sets.jsonl"))) {
      size_t hit = 0;
      for (const auto& m : rs.members) hit += truth.at(m.id) == rs.cls;
      const double purity = static_cast<double>(hit) / static_cast<double>(rs.members.size());
      report.metrics.push_back({{"metric", "reference_purity"}, {"class", names[rs.cls]},
                                {"selection", rs.selection}, {"size", rs.members.size()}, {"purity", purity}});
      results["reference_purity"][rs.selection][names[rs.cls]] = purity;
    }

    // Probe: trained with its own seed on source audio plus target audio
    // with its hidden class, then gated on held-out source audio.
    auto probe = TrainProbe(out, truth, results, report);

    auto ours = tts::TtsModel::FromArchive(io::ReadArchive(Path("tts/ours.bin")));
    const auto ours_controls = labeler::LoadReferenceSets(Path("tts/ours_controls.jsonl"));
    std::optional<tts::TtsModel> base;
    std::vector<labeler::ReferenceSet> base_controls;
    if (fs::exists(Path("tts/base.bin"))) {
      base = tts::TtsModel::FromArchive(io::ReadArchive(Path("tts/base.bin")));
      base_controls = labeler::LoadReferenceSets(Path("tts/base_controls.jsonl"));
    }

    // Same text, different emotion weights: the mels must differ.
    {
      tts::SynthesisOptions so;
      so.temperature = cfg_.eval.temperature;
      so.seed = cfg_.seed;
      so.vocode = false;
      const auto a = tts::Synthesize(ours, cfg_.eval.texts.front(), *FindSet(ours_controls, 0, "topk").averaged_weights, so, cfg_.dsp);
      double l1 = 0.0;
      for (int c = 1; c < NumClasses(cfg_.labeler.task); ++c) {
        const auto b = tts::Synthesize(ours, cfg_.eval.texts.front(), *FindSet(ours_controls, c, "topk").averaged_weights, so, cfg_.dsp);
        const Eigen::Index n = std::min(a.mel.rows(), b.mel.rows());
        double d = (a.mel.topRows(n) - b.mel.topRows(n)).cwiseAbs().mean();
        if (a.mel.rows() != b.mel.rows()) d += 1.0;  // different lengths differ as well
        l1 = c == 1 ? d : std::min(l1, d);
      }
      results["min_mel_l1_between_emotions"] = l1;
      report.metrics.push_back({{"metric", "min_mel_l1_between_emotions"}, {"value", l1}});
    }

    // Perception with the probe.
    const ProbeVerdict gate = results["probe"]["gate_passed"].get<bool>() ? ProbeVerdict::kPassed : ProbeVerdict::kFailed;
    auto perceive = [&](const std::string& name, tts::TtsModel& m, const std::vector<labeler::ReferenceSet>& controls,
                        const std::string& selection) {
      if (gate != ProbeVerdict::kPassed) return;
      std::vector<evalviz::ClassControl> ctl;
      for (int c = 0; c < NumClasses(cfg_.labeler.task); ++c)
        ctl.push_back({c, *FindSet(controls, c, selection).averaged_weights});
      evalviz::PerceptionOptions po;
      po.synthesis.temperature = cfg_.eval.temperature;
      po.synthesis.griffin_lim_iters = cfg_.eval.griffin_lim_iters;
      po.synthesis.seed = cfg_.seed;
      auto r = evalviz::ObjectivePerception(m, probe, cfg_.eval.texts, ctl, po, cfg_.dsp);
      report.matrices["perception_" + name] = r.matrix;
      json row = {{"metric", "perception"}, {"profile", name}, {"items", r.matrix.confusion.total()},
                  {"skipped", r.skipped.size()}};
      if (r.accuracy) {
        row["average_accuracy"] = r.accuracy->ua;
        results["perception"][name] = evalviz::ToJson(*r.accuracy);
      }
      report.metrics.push_back(row);
    };
    perceive("topk", ours, ours_controls, "topk");
    perceive("full", ours, ours_controls, "full");
    if (base) perceive("base", *base, base_controls, "topk");
    if (results.contains("perception") && results["perception"].contains("topk") &&
        results["perception"].contains("full") && results["perception"].contains("base")) {
      const double a = results["perception"]["topk"]["ua"], b = results["perception"]["full"]["ua"],
                   c = results["perception"]["base"]["ua"];
      results["ordering_topk_full_base"] = a >= b && b >= c;
      report.metrics.push_back({{"metric", "ordering_topk_full_base"}, {"holds", a >= b && b >= c}});
    }

    // Token weights of the top-K reference utterances, projected to 2-D.
    {
      const auto xs = TargetExamples(&truth);
      std::map<std::string, const Mat*> mel_of;
      for (const auto& x : xs) mel_of[x.id] = &x.mel;
      auto project = [&](const std::string& name, tts::TtsModel& m, const std::vector<labeler::ReferenceSet>& controls) {
        std::vector<const Mat*> mels;
        std::vector<std::string> tags, ids;
        for (const auto& rs : controls) {
          if (rs.selection != "topk") continue;
          for (const auto& mem : rs.members) {
            mels.push_back(mel_of.at(mem.id));
            tags.push_back(names[rs.cls]);
            ids.push_back(mem.id);
          }
        }
        if (mels.size() < 2) return;
        const Mat w = m.TokenWeights(mels);
        auto p = evalviz::Project2D(w, tags, ids, cfg_.eval.projection);
        report.metrics.push_back({{"metric", "token_weight_silhouette"}, {"model", name}, {"method", p.method},
                                  {"silhouette_2d", p.silhouette}, {"silhouette_weights", p.silhouette_raw}});
        results["silhouette"][name] = {{"2d", p.silhouette}, {"weights", p.silhouette_raw}};
        report.projections["weights_" + name] = std::move(p);
      };
      project("ours", ours, ours_controls);
      if (base) project("base", *base, base_controls);
    }

    for (const auto& f : evalviz::RenderReports(report, Path("eval/report"))) out.Add("eval/report/" + f);
    SaveJson(out, "eval/results.json", results);
  }

  enum class ProbeVerdict { kPassed, kFailed };

  ser::SerModel TrainProbe(Outputs& out, const std::map<std::string, int>& truth, json& results,
                           evalviz::Report& report) {
    const uint64_t pseed = cfg_.probe_train.seed;
    const int holdout = std::max(1, static_cast<int>(std::lround(cfg_.eval.probe_holdout * cfg_.corpus.n_source)));
    auto [src_train, src_held] = SourceSplit(holdout, DeriveSeed(pseed, "pipeline.probe_split"));
    auto tgt = TargetExamples(&truth);
    std::vector<corpus::UtteranceRecord> ids;
    for (const auto& x : tgt) {
      corpus::UtteranceRecord r;
      r.id = x.id;
      ids.push_back(std::move(r));
    }
    const auto tv = corpus::Split(ids, 1.0 - cfg_.eval.probe_holdout, cfg_.eval.probe_holdout,
                                  DeriveSeed(pseed, "pipeline.probe_target_split"));
    std::set<std::string> tgt_held_ids;
    for (const auto& r : tv.validation) tgt_held_ids.insert(r.id);
    std::vector<ser::SerExample> train = src_train, val = src_held, tgt_val;
    for (const auto& x : tgt) (tgt_held_ids.count(x.id) ? tgt_val : train).push_back(x);
    val.insert(val.end(), tgt_val.begin(), tgt_val.end());
    auto tc = cfg_.probe_train;
    tc.lambda = 0.0;
    auto res = ser::TrainSer(train, val, tgt, cfg_.ser_model, tc);
    auto a = res.model.ToArchive();
    Stamp(a.meta, "probe");
    Save(out, "eval/probe.bin", a);
    const auto gate = evalviz::CheckProbe(res.model, src_held, cfg_.eval.gate_margin);
    const auto tgt_ev = ser::EvaluateSer(res.model, tgt_val, false);
    results["probe"] = {{"heldout_source_ua", gate.ua}, {"heldout_target_ua", tgt_ev.accuracy.ua},
                        {"chance", gate.chance}, {"threshold", gate.threshold}, {"gate_passed", gate.passed}};
    report.metrics.push_back({{"metric", "probe_gate"}, {"heldout_source_ua", gate.ua},
                              {"heldout_target_ua", tgt_ev.accuracy.ua}, {"threshold", gate.threshold},
                              {"passed", gate.passed}});
    if (!gate.passed)
      report.notes.push_back("The probe did not beat chance on held-out source audio; perception was not scored.");
    return std::move(res.model);
  }

  PipelineConfig cfg_;
  fs::path root_;
  bool force_ = false;
};

}  // namespace emotts::pipeline
