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

// Command-line front end. Exit codes: 0 success, 1 validation error,
// 2 runtime error, 3 missing upstream artifact.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "emotts/common.hpp"
#include "emotts/pipeline.hpp"

namespace emotts::cli {

inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;
inline constexpr int kMissing = 3;

inline int ExitCode(ErrorKind k) {
  switch (k) {
    case ErrorKind::kValidation: return kValidation;
    case ErrorKind::kRuntime: return kRuntime;
    case ErrorKind::kMissingDependency: return kMissing;
  }
  return kRuntime;
}

inline void Print(std::ostream& out, const pipeline::StageResult& r) {
  const std::string cmd = pipeline::CommandFor(r.stage);
  if (r.skipped) {
    out << cmd << ": up to date (" << r.outputs.size() << " artifacts)\n";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", r.seconds);
    out << cmd << ": done in " << buf << " s (" << r.outputs.size() << " artifacts)\n";
  }
}

inline int Main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Emotional TTS from emotion-unlabeled data: cross-domain SER labels, GST TTS, evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<std::string> config_file, profile, out_dir;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
  bool force = false, verbose = false, quiet = false;
  app.add_option("--config", config_file, "JSON config file overlaid on the profile defaults");
  app.add_option("--profile", profile, "Profile defaults: toy or paper")->check(CLI::IsMember({"toy", "paper"}));
  app.add_option("--seed", seed, "Seed used by every stage");
  app.add_option("--out", out_dir, std::string("Output root (overrides $") + pipeline::kOutEnv + ")");
  app.add_option("--set", overrides, "Override a config key, e.g. --set tts.train.max_steps=200")->take_all();
  app.add_flag("--force", force, "Rerun stages even when their inputs are unchanged");
  app.add_flag("-v,--verbose", verbose, "Log stage progress");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"gen-corpus", "Generate the synthetic source and target corpora"},
      {"extract-features", "Compute log-mel and log-linear spectrograms"},
      {"train-ser", "Train the cross-domain SER model (and its lambda = 0 baseline)"},
      {"label", "Soft-label the target corpus with the SER model"},
      {"select-refs", "Select top-K and full reference sets per emotion"},
      {"train-tts", "Train the TTS model with the emotion task (and the baseline without it)"},
      {"synthesize", "Synthesize speech for a text and emotion"},
      {"evaluate", "Score SER, labels, and synthesized emotion; write reports"},
      {"run-all", "Run every stage in order"},
      {"print-config", "Print the merged configuration"}};
  std::map<std::string, CLI::App*> cmd;
  for (const auto& s : subs) {
    cmd[s.name] = app.add_subcommand(s.name, s.help);
    cmd[s.name]->fallthrough();
  }
  pipeline::SynthRequest req;
  std::optional<std::string> text, emotion;
  cmd["synthesize"]->add_option("--text", text, "Text to speak (default: first evaluation text)");
  cmd["synthesize"]->add_option("--emotion", emotion, "Emotion class (default: every class)");
  cmd["synthesize"]->add_option("--selection", req.selection, "Reference set: topk or full")
      ->check(CLI::IsMember({"topk", "full"}));
  cmd["synthesize"]->add_option("--model", req.model, "ours or base")->check(CLI::IsMember({"ours", "base"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kValidation;
  }
  GlobalLogLevel() = quiet ? LogLevel::kQuiet : verbose ? LogLevel::kInfo : LogLevel::kWarn;

  try {
    pipeline::ConfigRequest creq;
    if (profile) creq.profile = pipeline::ParseProfile(*profile);
    if (config_file) creq.config_file = *config_file;
    creq.seed = seed;
    creq.overrides = overrides;
    auto cfg = pipeline::BuildConfig(creq);
    if (cmd["print-config"]->parsed()) {
      out << cfg.doc.dump(2) << "\n";
      return kOk;
    }
    const auto root = pipeline::ResolveOutputRoot(out_dir ? std::optional<std::filesystem::path>(*out_dir) : std::nullopt, cfg);
    pipeline::Pipeline p(std::move(cfg), root, force);
    if (cmd["gen-corpus"]->parsed()) Print(out, p.GenCorpus());
    else if (cmd["extract-features"]->parsed()) Print(out, p.ExtractFeatures());
    else if (cmd["train-ser"]->parsed()) Print(out, p.TrainSer());
    else if (cmd["label"]->parsed()) Print(out, p.Label());
    else if (cmd["select-refs"]->parsed()) Print(out, p.SelectRefs());
    else if (cmd["train-tts"]->parsed()) Print(out, p.TrainTts());
    else if (cmd["evaluate"]->parsed()) Print(out, p.Evaluate());
    else if (cmd["synthesize"]->parsed()) {
      req.text = text;
      req.emotion = emotion;
      pipeline::StageResult r;
      for (const auto& f : p.Synthesize(req, &r)) out << f.wav.string() << "\n";
      Print(out, r);
    } else if (cmd["run-all"]->parsed()) {
      for (const auto& r : p.RunAll()) Print(out, r);
      out << "reports: " << (root / "eval" / "report").string() << "\n";
    }
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace emotts::cli
