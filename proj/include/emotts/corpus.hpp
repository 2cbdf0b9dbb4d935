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

// Utterance records, manifests, splits, and a synthetic two-domain
// emotional speech generator.
//
// The generator "reads" a character string with a toy source-filter voice:
// every letter maps to a phone (voiced with formants, fricative noise, or a
// short plosive burst), and the emotion class shapes pitch level and
// contour, vibrato, loudness, attack and tempo. Target-domain audio is
// passed through a fixed channel (low-pass, gain, hiss) so the two domains
// have measurably different feature distributions.
//
// Manifest: UTF-8 JSON lines with fields
//   id, wav_path (relative to the manifest), sample_rate, domain,
//   text (optional), label_task (optional), label_index (optional)

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emotts/common.hpp"
#include "emotts/io.hpp"
#include "emotts/rng.hpp"

namespace emotts::corpus {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class Domain { kSource, kTarget };

inline std::string DomainName(Domain d) { return d == Domain::kSource ? "source" : "target"; }

inline Domain ParseDomain(std::string_view s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ValidationError("unknown domain '" + std::string(s) + "'");
}

struct EmotionAnnotation {
  Task task = Task::kCategory4;
  std::vector<double> value;  // one-hot

  static EmotionAnnotation OneHot(Task task, int index) {
    EmotionAnnotation a;
    a.task = task;
    a.value.assign(NumClasses(task), 0.0);
    Require(index >= 0 && index < NumClasses(task),
            "label index " + std::to_string(index) + " out of range for task " + TaskName(task));
    a.value[index] = 1.0;
    return a;
  }

  int index() const {
    return static_cast<int>(std::max_element(value.begin(), value.end()) - value.begin());
  }

  bool IsOneHot() const {
    if (static_cast<int>(value.size()) != NumClasses(task)) return false;
    int ones = 0;
    for (double v : value) {
      if (v == 1.0)
        ++ones;
      else if (v != 0.0)
        return false;
    }
    return ones == 1;
  }

  bool operator==(const EmotionAnnotation&) const = default;
};

struct UtteranceRecord {
  std::string id;
  std::vector<double> audio;
  int sample_rate = 16000;
  std::optional<std::string> text;
  Domain domain = Domain::kSource;
  std::optional<EmotionAnnotation> label;

  bool operator==(const UtteranceRecord&) const = default;
};

/// Checks the per-record invariants; `where` prefixes error messages.
inline void ValidateRecord(const UtteranceRecord& r, const std::string& where) {
  if (r.id.empty()) throw ValidationError(where + ": empty id");
  if (r.sample_rate <= 0) throw ValidationError(where + ": invalid sample rate");
  for (double s : r.audio)
    if (!(s >= -1.0 && s <= 1.0))
      throw ValidationError(where + ": amplitude out of range [-1, 1] in '" + r.id + "'");
  if (r.domain == Domain::kTarget && !r.text)
    throw ValidationError(where + ": target-domain record '" + r.id + "' has no text");
  if (r.label && !r.label->IsOneHot())
    throw ValidationError(where + ": label of '" + r.id + "' is not one-hot");
}

// ---------------------------------------------------------------------------
// Synthetic corpus specification

struct ClassSignature {
  std::string name;
  double f0_hz = 150.0;
  double f0_slope = 0.0;       // relative F0 change from start to end
  double vibrato_depth = 0.0;  // relative
  double vibrato_hz = 5.0;
  double amplitude = 0.3;
  double attack_s = 0.02;
  double tempo = 1.0;
  double tilt = 1.0;  // harmonic roll-off exponent; lower is brighter

  bool SameAs(const ClassSignature& o) const {
    return f0_hz == o.f0_hz && f0_slope == o.f0_slope && vibrato_depth == o.vibrato_depth &&
           vibrato_hz == o.vibrato_hz && amplitude == o.amplitude && attack_s == o.attack_s &&
           tempo == o.tempo && tilt == o.tilt;
  }
};

/// Default signatures for the four categories.
inline std::vector<ClassSignature> DefaultSignatures() {
  return {
      {"neutral", 150.0, 0.0, 0.0, 5.0, 0.25, 0.020, 1.00, 1.3},
      {"happy", 235.0, 0.30, 0.06, 5.5, 0.42, 0.012, 1.20, 1.1},
      {"sad", 115.0, -0.30, 0.0, 5.0, 0.12, 0.045, 0.80, 1.6},
      {"angry", 205.0, -0.10, 0.0, 5.0, 0.70, 0.004, 1.10, 0.7},
  };
}

struct DomainShift {
  double lowpass_hz = 2500.0;
  double gain_db = -10.0;
  double noise_level = 0.004;
};

struct SynthCorpusSpec {
  int n_source = 200;
  int n_target = 200;
  std::vector<std::string> classes = {"neutral", "happy", "sad", "angry"};
  uint64_t seed = 7;
  int sample_rate = 16000;
  DomainShift domain_shift;
  std::vector<ClassSignature> signatures = DefaultSignatures();
  int min_chars = 3;
  int max_chars = 6;
  // Upper bounds on generated utterances.
  double max_seconds = 14.0;
  int max_text_chars = 100;
  double jitter = 0.08;  // per-utterance relative spread of signature values

  const ClassSignature& Signature(const std::string& cls) const {
    for (const auto& s : signatures)
      if (s.name == cls) return s;
    throw ValidationError("no signature for class '" + cls + "'");
  }

  void Validate() const {
    if (classes.empty()) throw ValidationError("corpus spec: class list is empty");
    if (sample_rate != 16000)
      throw ValidationError("corpus spec: invalid sample rate " + std::to_string(sample_rate) +
                            " (synthetic audio is fixed at 16000 Hz)");
    Require(n_source >= 0 && n_target >= 0, "corpus spec: counts must be nonnegative");
    Require(min_chars >= 1 && min_chars <= max_chars && max_chars <= max_text_chars,
            "corpus spec: need 1 <= min_chars <= max_chars <= max_text_chars");
    Require(domain_shift.lowpass_hz > 0.0 && domain_shift.lowpass_hz < sample_rate / 2.0,
            "corpus spec: low-pass cutoff must lie in (0, sample_rate / 2)");
    Require(jitter >= 0.0 && jitter < 0.5, "corpus spec: jitter must lie in [0, 0.5)");
    std::set<std::string> seen;
    for (const auto& c : classes) {
      Require(seen.insert(c).second, "corpus spec: duplicate class '" + c + "'");
      ClassIndex(Task::kCategory4, c);
      Signature(c);
    }
    for (size_t i = 0; i < classes.size(); ++i)
      for (size_t j = i + 1; j < classes.size(); ++j)
        Require(!Signature(classes[i]).SameAs(Signature(classes[j])),
                "corpus spec: classes '" + classes[i] + "' and '" + classes[j] +
                    "' share a signature");
  }
};

// ---------------------------------------------------------------------------
// Toy voice

namespace detail {

enum class PhoneKind { kVoiced, kFricative, kPlosive };

struct Phone {
  PhoneKind kind;
  double f1, f2, f3;  // formants (voiced) or noise band centre in f2
  double gain;
  double duration_s;
};

inline const Phone& PhoneFor(char c) {
  static const std::map<char, Phone> table = {
      {'a', {PhoneKind::kVoiced, 730, 1090, 2440, 1.0, 0.110}},
      {'e', {PhoneKind::kVoiced, 530, 1840, 2480, 1.0, 0.100}},
      {'i', {PhoneKind::kVoiced, 270, 2290, 3010, 0.9, 0.095}},
      {'o', {PhoneKind::kVoiced, 570, 840, 2410, 1.0, 0.110}},
      {'u', {PhoneKind::kVoiced, 300, 870, 2240, 0.9, 0.100}},
      {'y', {PhoneKind::kVoiced, 300, 2100, 2900, 0.8, 0.090}},
      {'m', {PhoneKind::kVoiced, 250, 1100, 2200, 0.5, 0.075}},
      {'n', {PhoneKind::kVoiced, 250, 1700, 2600, 0.5, 0.075}},
      {'l', {PhoneKind::kVoiced, 360, 1300, 2800, 0.6, 0.070}},
      {'r', {PhoneKind::kVoiced, 420, 1150, 1600, 0.6, 0.070}},
      {'w', {PhoneKind::kVoiced, 300, 700, 2200, 0.6, 0.070}},
      {'v', {PhoneKind::kVoiced, 220, 1300, 2400, 0.4, 0.065}},
      {'z', {PhoneKind::kVoiced, 250, 1600, 2600, 0.4, 0.070}},
      {'s', {PhoneKind::kFricative, 0, 5500, 0, 0.35, 0.085}},
      {'f', {PhoneKind::kFricative, 0, 4200, 0, 0.20, 0.080}},
      {'h', {PhoneKind::kFricative, 0, 1800, 0, 0.15, 0.060}},
      {'x', {PhoneKind::kFricative, 0, 3600, 0, 0.30, 0.085}},
      {'c', {PhoneKind::kFricative, 0, 3000, 0, 0.30, 0.080}},
      {'j', {PhoneKind::kFricative, 0, 2600, 0, 0.30, 0.075}},
      {'b', {PhoneKind::kPlosive, 0, 800, 0, 0.5, 0.050}},
      {'d', {PhoneKind::kPlosive, 0, 1800, 0, 0.5, 0.050}},
      {'g', {PhoneKind::kPlosive, 0, 2200, 0, 0.5, 0.055}},
      {'p', {PhoneKind::kPlosive, 0, 900, 0, 0.6, 0.055}},
      {'t', {PhoneKind::kPlosive, 0, 3800, 0, 0.6, 0.055}},
      {'k', {PhoneKind::kPlosive, 0, 2600, 0, 0.6, 0.060}},
      {'q', {PhoneKind::kPlosive, 0, 2000, 0, 0.6, 0.060}},
  };
  static const Phone silence{PhoneKind::kFricative, 0, 1000, 0, 0.0, 0.060};
  auto it = table.find(c);
  return it == table.end() ? silence : it->second;
}

inline std::string RandomText(Rng& rng, int min_chars, int max_chars) {
  static const std::string vowels = "aeiouy";
  static const std::string consonants = "mnlrwvzsfhxcjbdgptkq";
  const int n = min_chars + static_cast<int>(rng.Below(max_chars - min_chars + 1));
  std::string s;
  // Mostly consonant-vowel alternation.
  bool vowel = rng.Uniform() < 0.5;
  for (int i = 0; i < n; ++i) {
    const std::string& pool = vowel ? vowels : consonants;
    s += pool[rng.Below(pool.size())];
    vowel = rng.Uniform() < 0.8 ? !vowel : vowel;
  }
  return s;
}

inline double FormantGain(double f, const Phone& p) {
  auto peak = [f](double centre, double bw) {
    const double d = (f - centre) / bw;
    return std::exp(-0.5 * d * d);
  };
  return 0.05 + peak(p.f1, 90.0) + 0.7 * peak(p.f2, 120.0) + 0.4 * peak(p.f3, 160.0);
}

// Second-order Butterworth low-pass, direct form I.
inline void LowPass(std::vector<double>& x, double cutoff, int sample_rate) {
  const double w0 = 2.0 * std::numbers::pi * cutoff / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * std::sqrt(0.5));
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double b0 = (1.0 - cw) / 2.0 / a0, b1 = (1.0 - cw) / a0, b2 = b0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

// One-pole resonant-ish noise shaping: band-pass by mixing a low-passed and
// high-passed white noise around `centre`.
inline double ShapedNoise(Rng& rng, double centre, int sample_rate, double& state) {
  const double a = std::exp(-2.0 * std::numbers::pi * centre / sample_rate);
  const double w = rng.Normal();
  const double lp = (1.0 - a) * w + a * state;
  state = lp;
  return w - lp * 0.5;
}

}  // namespace detail

struct SpeechParams {
  double f0_scale = 1.0, amp_scale = 1.0, tempo_scale = 1.0;
};

/// Renders `text` with the voice of `sig`; deterministic given rng state.
inline std::vector<double> RenderUtterance(const std::string& text, const ClassSignature& sig,
                                           int sample_rate, double jitter, Rng& rng) {
  SpeechParams p;
  p.f0_scale = 1.0 + rng.Uniform(-jitter, jitter);
  p.amp_scale = 1.0 + rng.Uniform(-2.0 * jitter, 2.0 * jitter);
  p.tempo_scale = 1.0 + rng.Uniform(-jitter, jitter);
  const double sr = sample_rate;
  const double tempo = sig.tempo * p.tempo_scale;
  const double lead = 0.06, tail = 0.06;
  std::vector<double> durations;
  double speech_len = 0.0;
  for (char c : text) {
    durations.push_back(detail::PhoneFor(c).duration_s / tempo);
    speech_len += durations.back();
  }
  const size_t n = static_cast<size_t>((lead + speech_len + tail) * sr);
  std::vector<double> y(n, 0.0);
  const double f0_base = sig.f0_hz * p.f0_scale;
  double phase = 0.0;
  double noise_state = 0.0;
  size_t pos = static_cast<size_t>(lead * sr);
  for (size_t ci = 0; ci < text.size(); ++ci) {
    const auto& ph = detail::PhoneFor(text[ci]);
    const size_t len = static_cast<size_t>(durations[ci] * sr);
    // Harmonic amplitudes are fixed per phone at the mean F0 of the segment.
    const double seg_mid = (static_cast<double>(pos) + len / 2.0) / sr - lead;
    const double rel_mid = speech_len > 0 ? seg_mid / speech_len : 0.5;
    const double f0_mid = f0_base * (1.0 + sig.f0_slope * (rel_mid - 0.5));
    std::vector<double> harm;
    for (int h = 1; h * f0_mid < 0.45 * sr && h <= 60; ++h)
      harm.push_back(detail::FormantGain(h * f0_mid, ph) / std::pow(h, sig.tilt));
    double norm = 0.0;
    for (double a : harm) norm += a * a;
    norm = norm > 0 ? 1.0 / std::sqrt(norm / 2.0) : 0.0;
    const double attack = std::max(sig.attack_s, 1e-3) * sr;
    const double release = 0.015 * sr;
    for (size_t i = 0; i < len && pos + i < n; ++i) {
      const double t = static_cast<double>(pos + i) / sr;
      const double rel = std::clamp((t - lead) / speech_len, 0.0, 1.0);
      double env = std::min(1.0, (i + 1) / attack);
      env *= std::min(1.0, static_cast<double>(len - i) / release);
      const double amp = sig.amplitude * p.amp_scale * ph.gain * env;
      double v = 0.0;
      if (ph.kind == detail::PhoneKind::kVoiced) {
        const double f0 = f0_base * (1.0 + sig.f0_slope * (rel - 0.5)) *
                          (1.0 + sig.vibrato_depth * std::sin(2.0 * std::numbers::pi * sig.vibrato_hz * t));
        phase += 2.0 * std::numbers::pi * f0 / sr;
        if (phase > 2.0 * std::numbers::pi * 1e6) phase = std::fmod(phase, 2.0 * std::numbers::pi);
        for (size_t h = 0; h < harm.size(); ++h) v += harm[h] * std::sin((h + 1) * phase);
        v *= norm;
      } else if (ph.kind == detail::PhoneKind::kFricative) {
        v = detail::ShapedNoise(rng, ph.f2, sample_rate, noise_state);
      } else {
        // Closure then a short burst.
        const bool burst = i > len / 2 && i < len / 2 + static_cast<size_t>(0.012 * sr);
        v = burst ? detail::ShapedNoise(rng, ph.f2, sample_rate, noise_state) * 2.0 : 0.0;
      }
      y[pos + i] += amp * v;
    }
    pos += len;
  }
  for (double& v : y) v += 0.001 * rng.Normal();
  return y;
}

inline void ApplyChannel(std::vector<double>& x, const DomainShift& shift, int sample_rate, Rng& rng) {
  detail::LowPass(x, shift.lowpass_hz, sample_rate);
  detail::LowPass(x, shift.lowpass_hz, sample_rate);
  const double g = std::pow(10.0, shift.gain_db / 20.0);
  for (double& v : x) v = v * g + shift.noise_level * rng.Normal();
}

inline void FinalizeAudio(std::vector<double>& x) {
  for (double& v : x) v = io::QuantizePcm16(std::clamp(v, -1.0, 1.0));
}

struct GeneratedCorpus {
  std::vector<UtteranceRecord> source;
  std::vector<UtteranceRecord> target;
  // Hidden category of each target utterance (never written into the
  // target manifest); used only for evaluation.
  std::map<std::string, int> target_truth;
};

inline std::string UtteranceId(Domain d, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05d", d == Domain::kSource ? "src" : "tgt", i);
  return buf;
}

/// Classes are assigned round-robin so every class is equally represented
/// in both domains; everything else is drawn from a per-utterance stream
/// seeded by (seed, id).
inline GeneratedCorpus GenerateSyntheticCorpus(const SynthCorpusSpec& spec) {
  spec.Validate();
  GeneratedCorpus out;
  auto make = [&](Domain d, int i) {
    UtteranceRecord r;
    r.id = UtteranceId(d, i);
    r.domain = d;
    r.sample_rate = spec.sample_rate;
    Rng rng(DeriveSeed(spec.seed, r.id));
    const std::string& cls = spec.classes[i % spec.classes.size()];
    const int cat = ClassIndex(Task::kCategory4, cls);
    const std::string text = detail::RandomText(rng, spec.min_chars, spec.max_chars);
    r.audio = RenderUtterance(text, spec.Signature(cls), spec.sample_rate, spec.jitter, rng);
    if (d == Domain::kTarget) {
      ApplyChannel(r.audio, spec.domain_shift, spec.sample_rate, rng);
      r.text = text;
      out.target_truth[r.id] = cat;
    } else {
      r.label = EmotionAnnotation::OneHot(Task::kCategory4, cat);
    }
    FinalizeAudio(r.audio);
    if (r.audio.size() > static_cast<size_t>(spec.max_seconds * spec.sample_rate))
      throw RuntimeError("generated utterance " + r.id + " exceeds the duration cap");
    return r;
  };
  for (int i = 0; i < spec.n_source; ++i) out.source.push_back(make(Domain::kSource, i));
  for (int i = 0; i < spec.n_target; ++i) out.target.push_back(make(Domain::kTarget, i));
  return out;
}

/// Maps category annotations onto a polarity task (arousal or valence).
inline std::vector<UtteranceRecord> RelabelForTask(std::vector<UtteranceRecord> records, Task task) {
  for (auto& r : records) {
    if (!r.label) continue;
    if (r.label->task == task) continue;
    Require(r.label->task == Task::kCategory4, "relabel: only category labels can be mapped");
    r.label = EmotionAnnotation::OneHot(task, PolarityOfCategory(task, r.label->index()));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Manifests

/// Writes WAVs under `<dir>/<wav_subdir>/<id>.wav` and the manifest at
/// `manifest_path`; returns the manifest path.
inline fs::path SaveManifest(const fs::path& manifest_path, const std::vector<UtteranceRecord>& records,
                             const std::string& wav_subdir = "wav") {
  std::set<std::string> ids;
  std::vector<json> rows;
  const fs::path dir = manifest_path.parent_path();
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ValidateRecord(r, "record " + std::to_string(i));
    Require(ids.insert(r.id).second, "duplicate id '" + r.id + "'");
    const std::string rel = wav_subdir + "/" + r.id + ".wav";
    io::WriteWav(dir / rel, r.audio, r.sample_rate);
    json row = {{"id", r.id}, {"wav_path", rel}, {"sample_rate", r.sample_rate},
                {"domain", DomainName(r.domain)}};
    if (r.text) row["text"] = *r.text;
    if (r.label) {
      row["label_task"] = TaskName(r.label->task);
      row["label_index"] = r.label->index();
    }
    rows.push_back(std::move(row));
  }
  io::WriteJsonl(manifest_path, rows);
  return manifest_path;
}

inline std::vector<UtteranceRecord> LoadManifest(const fs::path& path, bool load_audio = true) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("manifest '" + path.string() + "' not found");
  std::vector<UtteranceRecord> out;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw ValidationError(where + ": malformed line (not JSON)");
    }
    try {
      UtteranceRecord r;
      r.id = j.at("id").get<std::string>();
      r.sample_rate = j.at("sample_rate").get<int>();
      r.domain = ParseDomain(j.at("domain").get<std::string>());
      if (j.contains("text") && !j["text"].is_null()) r.text = j["text"].get<std::string>();
      const bool has_task = j.contains("label_task") && !j["label_task"].is_null();
      const bool has_index = j.contains("label_index") && !j["label_index"].is_null();
      if (has_task != has_index)
        throw ValidationError(where + ": label_task and label_index must appear together");
      if (has_task)
        r.label = EmotionAnnotation::OneHot(ParseTask(j["label_task"].get<std::string>()),
                                            j["label_index"].get<int>());
      auto [it, fresh] = seen.emplace(r.id, lineno);
      if (!fresh)
        throw ValidationError(where + ": duplicate id '" + r.id + "' (first seen on line " +
                              std::to_string(it->second) + ")");
      const std::string wav = j.at("wav_path").get<std::string>();
      if (load_audio) {
        const fs::path wav_path = path.parent_path() / wav;
        auto w = io::ReadWav(wav_path);
        if (w.sample_rate != r.sample_rate)
          throw ValidationError(where + ": sample rate " + std::to_string(r.sample_rate) +
                                " does not match WAV header " + std::to_string(w.sample_rate));
        r.audio = std::move(w.samples);
      }
      ValidateRecord(r, where);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ValidationError(where + ": malformed record (" + e.what() + ")");
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.rfind(where, 0) == 0) throw;
      throw Error(e.kind(), where + ": " + msg);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

/// Partitions records by fractions. Assignment depends only on (seed, id),
/// not on input order; part sizes are rounded with the first part taking
/// the remainder.
inline std::vector<std::vector<UtteranceRecord>> SplitFractions(
    const std::vector<UtteranceRecord>& records, const std::vector<double>& fractions, uint64_t seed) {
  Require(!fractions.empty(), "split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    Require(f >= 0.0, "split: fractions must be nonnegative");
    total += f;
  }
  Require(std::abs(total - 1.0) < 1e-9, "split: fractions must sum to 1");
  std::vector<std::pair<uint64_t, size_t>> order;
  for (size_t i = 0; i < records.size(); ++i)
    order.emplace_back(DeriveSeed(seed, records[i].id), i);
  std::sort(order.begin(), order.end());
  const size_t n = records.size();
  std::vector<size_t> sizes(fractions.size());
  size_t assigned = 0;
  for (size_t k = 1; k < fractions.size(); ++k) {
    sizes[k] = static_cast<size_t>(std::llround(fractions[k] * static_cast<double>(n)));
    assigned += sizes[k];
  }
  Require(assigned <= n, "split: rounding exceeded record count");
  sizes[0] = n - assigned;
  std::vector<std::vector<UtteranceRecord>> parts(fractions.size());
  size_t pos = 0;
  for (size_t k = 0; k < fractions.size(); ++k)
    for (size_t c = 0; c < sizes[k]; ++c) parts[k].push_back(records[order[pos++].second]);
  return parts;
}

struct TrainValidation {
  std::vector<UtteranceRecord> train, validation;
};

inline TrainValidation Split(const std::vector<UtteranceRecord>& records, double train_fraction,
                             double validation_fraction, uint64_t seed) {
  auto parts = SplitFractions(records, {train_fraction, validation_fraction}, seed);
  return {std::move(parts[0]), std::move(parts[1])};
}

/// Holds out exactly n_validation records (the large-corpus convention).
inline TrainValidation SplitValidationCount(const std::vector<UtteranceRecord>& records,
                                            size_t n_validation, uint64_t seed) {
  Require(n_validation < records.size(),
          "split: requested " + std::to_string(n_validation) + " validation records from " +
              std::to_string(records.size()));
  const double f = static_cast<double>(n_validation) / static_cast<double>(records.size());
  auto tv = Split(records, 1.0 - f, f, seed);
  return tv;
}

inline std::map<std::string, int> LoadTruth(const fs::path& p) {
  std::map<std::string, int> out;
  for (const auto& j : io::ReadJsonl(p)) out[j.at("id").get<std::string>()] = j.at("class").get<int>();
  return out;
}

inline void SaveTruth(const fs::path& p, const std::map<std::string, int>& truth) {
  std::vector<json> rows;
  for (const auto& [id, c] : truth) rows.push_back({{"id", id}, {"class", c}});
  io::WriteJsonl(p, rows);
}

}  // namespace emotts::corpus
