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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Optional arguments select criteria by number,
// e.g. `acceptance 1 4 9`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emotts/dsp.hpp"
#include "emotts/evalviz.hpp"
#include "emotts/labeler.hpp"
#include "emotts/losses.hpp"
#include "emotts/pipeline.hpp"
#include "emotts/tts.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace emotts;
using testing::RandomMat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof(b), f, a);
  return b;
}

double CpuSeconds(std::clock_t since) { return static_cast<double>(std::clock() - since) / CLOCKS_PER_SEC; }

// ---------------------------------------------------------------------------

Outcome MmdOracle() {
  Rng rng(101);
  const auto bank = losses::KernelBank::Default();
  const auto t0 = std::clock();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.Below(10)), n = 1 + static_cast<int>(rng.Below(12));
    const int d = 1 + static_cast<int>(rng.Below(8));
    Mat s = RandomMat(m, d, rng, 1.5), t = RandomMat(n, d, rng, 2.0);
    worst = std::max(worst, std::abs(losses::MmdLoss(s, t, bank) - testing::BruteForceMmd(s, t, bank, 2.0)));
  }
  const double secs = CpuSeconds(t0);
  return {worst <= 1e-10 && secs < 5.0,
          "max |diff| " + Fmt("%.2e", worst) + " over 100 instances, " + Fmt("%.3f", secs) + " s"};
}

Outcome MmdProperties() {
  Rng rng(102);
  const auto bank = losses::KernelBank::Default();
  double self = 0.0, asym = 0.0, perm = 0.0, most_negative = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + static_cast<int>(rng.Below(10)), n = 1 + static_cast<int>(rng.Below(12));
    const int d = 1 + static_cast<int>(rng.Below(8));
    Mat s = RandomMat(m, d, rng), t = RandomMat(n, d, rng, 1.0 + rng.Uniform(0.0, 2.0));
    const double v = losses::MmdLoss(s, t, bank);
    most_negative = std::min(most_negative, v);
    if (trial < 100) {
      self = std::max(self, std::abs(losses::MmdLoss(s, s, bank)));
      asym = std::max(asym, std::abs(losses::MmdLoss(t, s, bank) - v));
      std::vector<int> ps(m), pt(n);
      std::iota(ps.begin(), ps.end(), 0);
      std::iota(pt.begin(), pt.end(), 0);
      rng.Shuffle(ps);
      rng.Shuffle(pt);
      Mat sp(m, d), tp(n, d);
      for (int i = 0; i < m; ++i) sp.row(i) = s.row(ps[i]);
      for (int i = 0; i < n; ++i) tp.row(i) = t.row(pt[i]);
      perm = std::max(perm, std::abs(losses::MmdLoss(sp, tp, bank) - v));
    }
  }
  const bool ok = self <= 1e-8 && asym <= 1e-10 && perm <= 1e-10 && most_negative >= -1e-12;
  return {ok, "MMD(S,S) " + Fmt("%.1e", self) + ", symmetry " + Fmt("%.1e", asym) + ", permutation " +
                  Fmt("%.1e", perm) + ", min over 1000 " + Fmt("%.3e", most_negative)};
}

double HeadGradError(tts::HeadKind kind) {
  Rng rng(103);
  tts::EmotionHead head(kind, 12, rng);
  std::vector<ag::Param*> params;
  head.Collect(params);
  Mat w(3, 12);
  for (int b = 0; b < 3; ++b)
    for (int h = 0; h < 2; ++h) {
      RowVec logits(6);
      for (int k = 0; k < 6; ++k) logits(k) = 2.0 * rng.Normal();
      w.row(b).segment(h * 6, 6) = ag::SoftmaxRowsOf(logits);
    }
  const auto tasks = tts::HeadTasks(kind);
  std::vector<Mat> targets;
  for (Task task : tasks) {
    Mat y = ag::SoftmaxRowsOf(RandomMat(3, NumClasses(task), rng, 2.0));
    targets.push_back(y);
  }
  ag::Param input("weights", w);
  auto loss = [&](bool backward) {
    ag::Tape t;
    tts::Pass P(t, true);
    auto logits = head.Logits(P, t.Leaf(input));
    ag::Var total;
    for (size_t k = 0; k < tasks.size(); ++k) {
      ag::Var ce = losses::WeightedCeLogp(ag::LogSoftmaxRows(logits[k]), targets[k],
                                          losses::ClassWeights::Uniform(NumClasses(tasks[k])),
                                          losses::Reduction::kMean);
      total = k == 0 ? ce : ag::Add(total, ce);
    }
    if (backward) t.Backward(total);
    return total.value()(0, 0);
  };
  params.push_back(&input);
  for (ag::Param* p : params) p->ZeroGrad();
  loss(true);
  double worst = 0.0;
  const double h = 1e-5;
  for (ag::Param* p : params)
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
  return worst;
}

Outcome Gradients() {
  Rng rng(104);
  const auto bank = losses::KernelBank::Default();
  double mmd = 0.0;
  for (auto cross : {losses::MmdCross::kStandard, losses::MmdCross::kLiteral}) {
    auto f = [&](ag::Tape&, std::vector<ag::Var>& in) { return losses::Mmd(in[0], in[1], bank, cross); };
    mmd = std::max(mmd, testing::MaxRelativeGradError(f, {RandomMat(4, 3, rng), RandomMat(5, 3, rng)}));
  }
  const Mat y = ag::SoftmaxRowsOf(RandomMat(4, 4, rng, 2.0));
  const losses::ClassWeights cw{{1.5, 0.5, 2.0, 1.0}};
  auto ce = [&](ag::Tape&, std::vector<ag::Var>& in) {
    return losses::WeightedCeProb(ag::SoftmaxRows(in[0]), y, cw);
  };
  const double ce_err = testing::MaxRelativeGradError(ce, {RandomMat(4, 4, rng)});
  const double head = std::max(HeadGradError(tts::HeadKind::kCategory), HeadGradError(tts::HeadKind::kDimension));
  const double worst = std::max({mmd, ce_err, head});
  return {worst < 1e-4, "max relative error: mmd " + Fmt("%.1e", mmd) + ", weighted CE " + Fmt("%.1e", ce_err) +
                            ", emotion head " + Fmt("%.1e", head)};
}

Outcome WeightedCeClosedForm() {
  const losses::ClassWeights w{{2.0, 1.0}};
  const double v = losses::WeightedCe(std::vector<double>{1, 0}, std::vector<double>{0.8, 0.2}, w);
  Rng rng(105);
  bool linear = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(4), yt(4), wv(4);
    double sp = 0, sy = 0;
    for (auto& x : p) sp += (x = rng.Uniform(0.05, 1.0));
    for (auto& x : yt) sy += (x = rng.Uniform(0.0, 1.0));
    for (auto& x : p) x /= sp;
    for (auto& x : yt) x /= sy;
    for (auto& x : wv) x = rng.Uniform(0.1, 3.0);
    std::vector<double> w2 = wv, w4 = wv;
    for (auto& x : w2) x *= 2.0;
    for (auto& x : w4) x *= 0.25;
    const double base = losses::WeightedCe(yt, p, {wv});
    linear = linear && losses::WeightedCe(yt, p, {w2}) == 2.0 * base && losses::WeightedCe(yt, p, {w4}) == 0.25 * base;
  }
  const bool ok = std::abs(v - 0.44629) <= 1e-5 && linear;
  return {ok, "CE((1,0),(0.8,0.2);(2,1)) = " + Fmt("%.6f", v) + ", weight scaling exact: " + (linear ? "yes" : "no")};
}

Outcome Accuracy() {
  std::vector<int> truth, pred;
  auto add = [&](int t, int p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  add(0, 0, 81);
  add(0, 1, 9);
  add(1, 0, 5);
  add(1, 1, 5);
  const auto r = evalviz::ConfusionAndAccuracy(truth, pred, {"a", "b"});
  const auto oracle = testing::AccuracyFromLists(truth, pred, 2);
  bool hand = std::abs(r.accuracy.wa - 0.86) <= 1e-12 && std::abs(r.accuracy.ua - 0.70) <= 1e-12 &&
              std::abs(oracle.wa - 0.86) <= 1e-12 && std::abs(oracle.ua - 0.70) <= 1e-12;
  Rng rng(106);
  double gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + static_cast<int>(rng.Below(4)), per = 1 + static_cast<int>(rng.Below(20));
    std::vector<int> t, p;
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < per; ++i) {
        t.push_back(c);
        p.push_back(static_cast<int>(rng.Below(C)));
      }
    std::vector<std::string> names(C, "");
    for (int c = 0; c < C; ++c) names[c] = "c" + std::to_string(c);
    const auto a = evalviz::ConfusionAndAccuracy(t, p, names).accuracy;
    gap = std::max(gap, std::abs(a.wa - a.ua));
  }
  return {hand && gap <= 1e-12, "WA " + Fmt("%.4f", r.accuracy.wa) + " UA " + Fmt("%.4f", r.accuracy.ua) +
                                    ", max |WA-UA| balanced " + Fmt("%.1e", gap)};
}

Outcome TopK() {
  Rng rng(107);
  int mismatches = 0, prefix_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    labeler::SoftLabelTable t;
    t.task = Task::kCategory4;
    const int n = 5 + static_cast<int>(rng.Below(80));
    for (int i = 0; i < n; ++i) {
      std::vector<double> p(4);
      double s = 0.0;
      // Coarse values on even trials force posterior ties.
      for (auto& v : p) s += (v = trial % 2 == 0 ? 1.0 + static_cast<double>(rng.Below(4)) : rng.Uniform(0.01, 1.0));
      for (auto& v : p) v /= s;
      const std::string id = "u" + std::to_string(rng.Below(100000));
      if (!t.posteriors.count(id)) t.Insert(id, p);
    }
    const std::vector<std::pair<std::string, std::vector<double>>> list(t.posteriors.begin(), t.posteriors.end());
    const int cls = static_cast<int>(rng.Below(4));
    const size_t k = 1 + rng.Below(40);
    if (labeler::SelectTopK(t, cls, k).ids() != testing::SortOracleTopK(list, cls, k)) ++mismatches;
    std::vector<std::string> prev;
    for (size_t kk = 1; kk <= 40; ++kk) {
      const auto ids = labeler::SelectTopK(t, cls, kk).ids();
      if (ids.size() < prev.size() || !std::equal(prev.begin(), prev.end(), ids.begin())) ++prefix_violations;
      prev = ids;
    }
  }
  return {mismatches == 0 && prefix_violations == 0, std::to_string(mismatches) + "/100 oracle mismatches, " +
                                                         std::to_string(prefix_violations) + " prefix violations"};
}

Outcome GstInvariants() {
  tts::TtsModelConfig c;
  tts::TtsModel m(c, 108);
  Rng rng(108);
  double worst = 0.0, min_w = 1.0;
  std::vector<StyleTokenWeights> all;
  for (int i = 0; i < 50; ++i) {
    Mat mel = RandomMat(12 + static_cast<int>(rng.Below(60)), c.n_mels, rng, 0.5 + 3.0 * rng.Uniform(0.0, 1.0));
    const StyleTokenWeights s = m.TokenWeightsOf(mel);
    worst = std::max(worst, s.NormalizationError());
    min_w = std::min(min_w, s.w.minCoeff());
    all.push_back(s);
  }
  double avg_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<StyleTokenWeights> subset;
    for (const auto& s : all)
      if (rng.Below(3) == 0) subset.push_back(s);
    if (subset.empty()) subset.push_back(all[trial]);
    avg_err = std::max(avg_err, labeler::AverageTokenWeights(subset).NormalizationError());
  }
  // Valves: arousal reads the first half of the head-major vector, valence the second.
  tts::EmotionHead head(tts::HeadKind::kDimension, c.gst.heads * c.gst.tokens, rng);
  bool independent = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto& a = all[trial];
    const auto& b = all[trial + 20];
    const Eigen::Index half = a.w.size() / 2;
    StyleTokenWeights mix = a;
    mix.w.tail(half) = b.w.tail(half);
    const auto p0 = head.Posteriors(a), p1 = head.Posteriors(mix);
    independent = independent && p0[0] == p1[0];
    StyleTokenWeights mix2 = a;
    mix2.w.head(half) = b.w.head(half);
    independent = independent && head.Posteriors(mix2)[1] == p0[1];
  }
  const bool ok = worst <= 1e-6 && avg_err <= 1e-6 && min_w >= 0.0 && independent;
  return {ok, "per-head sum error " + Fmt("%.1e", worst) + " (50 passes), after averaging " + Fmt("%.1e", avg_err) +
                  ", valves independent: " + (independent ? "yes" : "no")};
}

Outcome Temperature() {
  Mat e(1, 2);
  e << 2.0, 0.0;
  const Mat w = tts::AttentionWeights(e, 2.0);
  Rng rng(109);
  const Mat r = RandomMat(6, 9, rng, 3.0);
  const bool identity = tts::AttentionWeights(r, 1.0) == ag::SoftmaxRowsOf(r);
  const double flat = (tts::AttentionWeights(r, 1e6).array() - 1.0 / 9).abs().maxCoeff();
  const bool ok = identity && std::abs(w(0, 0) - 0.7311) <= 1e-4 && std::abs(w(0, 1) - 0.2689) <= 1e-4 && flat < 1e-3;
  return {ok, "T=2 (2,0) -> (" + Fmt("%.4f", w(0, 0)) + ", " + Fmt("%.4f", w(0, 1)) + "), T=1 identity " +
                  (identity ? "yes" : "no") + ", T=1e6 deviation " + Fmt("%.1e", flat)};
}

Outcome GriffinLim() {
  dsp::FrameConfig cfg;
  std::vector<double> x(8000);
  for (size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * i / cfg.sample_rate);
  const auto target = dsp::StftMagnitude(x, cfg);
  const auto y60 = dsp::GriffinLim(target, 60, cfg);
  const RowVec avg = dsp::StftMagnitude(y60, cfg).mag.colwise().mean();
  Eigen::Index bin;
  avg.maxCoeff(&bin);
  const double expected = 440.0 * cfg.fft_size / cfg.sample_rate;
  const double d5 = dsp::SpectralDistance(dsp::GriffinLim(target, 5, cfg), target, cfg);
  const double d60 = dsp::SpectralDistance(y60, target, cfg);
  const bool ok = std::abs(static_cast<double>(bin) - expected) <= 1.0 && d60 <= d5;
  return {ok, "dominant bin " + std::to_string(bin) + " (expected " + Fmt("%.2f", expected) + "), distance 5 it " +
                  Fmt("%.4f", d5) + " vs 60 it " + Fmt("%.4f", d60)};
}

// ---------------------------------------------------------------------------
// Pipeline criteria share one set of toy runs.

struct ToyRun {
  uint64_t seed = 0;
  fs::path dir;
  double cpu_seconds = 0.0;
  double ser_seconds = 0.0;
  nlohmann::json results;
  std::string error;
};

fs::path WorkRoot() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "emotts_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

ToyRun RunToy(uint64_t seed, const std::string& name) {
  ToyRun r;
  r.seed = seed;
  r.dir = WorkRoot() / name;
  try {
    pipeline::ConfigRequest req;
    req.profile = pipeline::Profile::kToy;
    req.seed = seed;
    pipeline::Pipeline p(pipeline::BuildConfig(req), r.dir, true);
    const auto t0 = std::clock();
    for (const auto& s : p.RunAll())
      if (s.stage == "ser") r.ser_seconds = s.seconds;
    r.cpu_seconds = CpuSeconds(t0);
    std::ifstream in(r.dir / "eval" / "results.json");
    r.results = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  std::cout << "  toy run seed " << seed << " (" << name << "): " << Fmt("%.1f", r.cpu_seconds) << " s CPU"
            << (r.error.empty() ? "" : ", error: " + r.error) << std::endl;
  return r;
}

const std::vector<ToyRun>& ToyRuns() {
  static const std::vector<ToyRun> runs = [] {
    std::vector<ToyRun> v;
    for (uint64_t s = 1; s <= 5; ++s) v.push_back(RunToy(s, "seed" + std::to_string(s)));
    return v;
  }();
  return runs;
}

Outcome SerCrossDomain() {
  int wins = 0, completed = 0;
  bool fast = true;
  std::ostringstream d;
  for (const auto& r : ToyRuns()) {
    if (!r.error.empty()) continue;
    ++completed;
    const double mmd = r.results["ser"]["ser_mmd"]["ua"], base = r.results["ser"]["ser_base"]["ua"];
    wins += mmd >= base;
    // The stage trains both models, so its time bounds each run.
    fast = fast && r.ser_seconds < 180.0;
    d << " s" << r.seed << " " << Fmt("%.3f", mmd) << "/" << Fmt("%.3f", base);
  }
  return {completed == 5 && wins >= 4 && fast,
          std::to_string(wins) + "/5 seeds with MMD UA >= base UA (mmd/base:" + d.str() + ")"};
}

Outcome EndToEnd() {
  int ordered = 0, completed = 0;
  bool fast = true, distinct = true;
  std::ostringstream d;
  for (const auto& r : ToyRuns()) {
    if (!r.error.empty()) continue;
    ++completed;
    fast = fast && r.cpu_seconds < 900.0;
    const double l1 = r.results.value("min_mel_l1_between_emotions", 0.0);
    distinct = distinct && l1 > 0.0;
    const bool ord = r.results.value("ordering_topk_full_base", false);
    ordered += ord;
    d << " s" << r.seed;
    if (r.results.contains("perception"))
      d << " " << Fmt("%.3f", r.results["perception"]["topk"]["ua"]) << "/"
        << Fmt("%.3f", r.results["perception"]["full"]["ua"]) << "/"
        << Fmt("%.3f", r.results["perception"]["base"]["ua"]);
    else
      d << " gate failed";
  }
  return {completed == 5 && fast && distinct && ordered >= 3,
          std::to_string(ordered) + "/5 seeds with topk >= full >= base, distinct mels: " +
              (distinct ? "yes" : "no") + " (topk/full/base:" + d.str() + ")"};
}

std::map<std::string, std::string> Snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Outcome Determinism() {
  const auto& first = ToyRuns().front();
  const ToyRun again = RunToy(first.seed, "seed1_again");
  if (!first.error.empty() || !again.error.empty()) return {false, "toy run failed"};
  const auto a = Snapshot(first.dir), b = Snapshot(again.dir);
  int differing = 0;
  std::string example;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      if (example.empty()) example = name;
      ++differing;
    }
  }
  differing += static_cast<int>(b.size() > a.size() ? b.size() - a.size() : 0);
  return {differing == 0 && !a.empty(), std::to_string(a.size()) + " files compared, " + std::to_string(differing) +
                                            " differ" + (example.empty() ? "" : " (e.g. " + example + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  GlobalLogLevel() = LogLevel::kQuiet;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"MMD matches brute-force oracle", MmdOracle},
      {"MMD identity, symmetry, permutation, nonnegativity", MmdProperties},
      {"gradients match finite differences", Gradients},
      {"weighted CE closed form and weight linearity", WeightedCeClosedForm},
      {"WA/UA hand example and balanced equality", Accuracy},
      {"SER with MMD beats baseline on target UA", SerCrossDomain},
      {"top-K matches sort oracle, prefix monotone", TopK},
      {"style token weight invariants", GstInvariants},
      {"attention temperature", Temperature},
      {"Griffin-Lim frequency and convergence", GriffinLim},
      {"end-to-end toy pipeline ordering", EndToEnd},
      {"byte-identical reruns", Determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
