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

// Objective evaluation: confusion matrices, a probe-based stand-in for the
// listening test, 2-D projections of style-token weights, and report files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "emotts/common.hpp"
#include "emotts/dsp.hpp"
#include "emotts/io.hpp"
#include "emotts/metrics.hpp"
#include "emotts/rng.hpp"
#include "emotts/ser.hpp"
#include "emotts/style.hpp"
#include "emotts/tts.hpp"

namespace emotts::evalviz {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- confusion

struct ConfusionMatrix {
  metrics::Confusion confusion;
  std::vector<std::string> classes;

  int size() const { return confusion.classes(); }
  double RowSum(int i) const { return confusion.counts.row(i).sum(); }
};

struct ConfusionResult {
  ConfusionMatrix matrix;
  metrics::Accuracy accuracy;
};

/// Shares the WA/UA definition with ser::EvaluateSer.
inline ConfusionResult ConfusionAndAccuracy(const std::vector<int>& truth, const std::vector<int>& pred,
                                            const std::vector<std::string>& classes) {
  Require(!classes.empty(), "confusion: empty class list");
  Require(truth.size() == pred.size(), "confusion: truth and prediction lengths differ");
  const int C = static_cast<int>(classes.size());
  for (size_t i = 0; i < truth.size(); ++i)
    if (truth[i] < 0 || truth[i] >= C || pred[i] < 0 || pred[i] >= C)
      throw ValidationError("confusion: label at position " + std::to_string(i) +
                            " is outside the class set");
  ConfusionResult r{{metrics::ConfusionFromLists(truth, pred, C), classes}, {}};
  if (!truth.empty()) r.accuracy = metrics::AccuracyFromConfusion(r.matrix.confusion, false);
  return r;
}

inline json ToJson(const ConfusionMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.size(); ++j) row.push_back(static_cast<long>(std::lround(m.confusion.counts(i, j))));
    rows.push_back(row);
  }
  return {{"classes", m.classes}, {"counts", rows}};
}

inline json ToJson(const metrics::Accuracy& a) {
  json recall = json::array();
  for (double r : a.recall) recall.push_back(std::isnan(r) ? json(nullptr) : json(r));
  return {{"wa", a.wa}, {"ua", a.ua}, {"recall", recall}};
}

// ---------------------------------------------------------------- perception

struct ProbeGate {
  double ua = 0.0;
  double chance = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

/// The probe must beat chance (plus `margin`) on held-out real audio before
/// its verdicts on synthesized audio are trusted.
inline ProbeGate CheckProbe(ser::SerModel& probe, const std::vector<ser::SerExample>& heldout,
                            double margin = 0.0) {
  Require(!heldout.empty(), "probe gate: no held-out examples");
  const auto ev = ser::EvaluateSer(probe, heldout, false);
  ProbeGate g;
  g.ua = ev.accuracy.ua;
  g.chance = 1.0 / probe.config().classes();
  g.threshold = g.chance + margin;
  g.passed = g.ua > g.threshold;
  return g;
}

struct ClassControl {
  int cls = 0;
  StyleTokenWeights weights;
};

struct PerceptionOptions {
  tts::SynthesisOptions synthesis;
  /// Item i of each class is synthesized with seed synthesis.seed + i.
  bool per_text_seed = true;
};

struct PerceptionResult {
  ConfusionMatrix matrix;
  std::optional<metrics::Accuracy> accuracy;
  std::vector<std::string> skipped;  // "class/text: reason"
};

/// Synthesizes every (text, class) pair with that class's control weights
/// and lets the probe pick an emotion for the resulting audio.
inline PerceptionResult ObjectivePerception(tts::TtsModel& model, ser::SerModel& probe,
                                            const std::vector<std::string>& texts,
                                            const std::vector<ClassControl>& controls,
                                            const PerceptionOptions& opt, const dsp::FrameConfig& fc) {
  Require(!texts.empty(), "perception: no texts");
  Require(!controls.empty(), "perception: no reference sets");
  const Task task = probe.config().task;
  const int C = NumClasses(task);
  PerceptionResult r;
  r.matrix = {metrics::Confusion(C), ClassNames(task)};
  for (const auto& ctl : controls) {
    Require(ctl.cls >= 0 && ctl.cls < C, "perception: class out of range");
    std::vector<Mat> mels;
    for (size_t i = 0; i < texts.size(); ++i) {
      tts::SynthesisOptions so = opt.synthesis;
      if (opt.per_text_seed) so.seed = opt.synthesis.seed + i;
      so.vocode = true;
      try {
        const auto s = tts::Synthesize(model, texts[i], ctl.weights, so, fc);
        Mat mel = dsp::WaveformToLogMel(s.waveform, fc).values;
        if (mel.rows() < probe.config().encoder.MinInputFrames()) throw RuntimeError("synthesized audio too short for the probe");
        mels.push_back(std::move(mel));
      } catch (const Error& e) {
        const std::string why = r.matrix.classes[ctl.cls] + "/" + texts[i] + ": " + e.what();
        LogWarn("perception: skipped " + why);
        r.skipped.push_back(why);
      }
    }
    if (mels.empty()) continue;
    std::vector<const Mat*> ptrs;
    for (const auto& m : mels) ptrs.push_back(&m);
    const Mat post = probe.Posteriors(ptrs);
    for (Eigen::Index i = 0; i < post.rows(); ++i) {
      Eigen::Index j;
      post.row(i).maxCoeff(&j);
      r.matrix.confusion.Add(ctl.cls, static_cast<int>(j));
    }
  }
  if (r.matrix.confusion.total() > 0) r.accuracy = metrics::AccuracyFromConfusion(r.matrix.confusion, false);
  return r;
}

// ---------------------------------------------------------------- projection

struct ProjectedPoint {
  double x = 0.0, y = 0.0;
  std::string tag;
  std::string id;
};

struct Projection2D {
  std::string method;
  std::vector<ProjectedPoint> points;
  double silhouette = 0.0;      // on the 2-D coordinates
  double silhouette_raw = 0.0;  // on the input vectors
};

enum class ProjectionMethod { kPca, kTsne };

inline ProjectionMethod ParseProjectionMethod(const std::string& s) {
  if (s == "pca") return ProjectionMethod::kPca;
  if (s == "tsne") return ProjectionMethod::kTsne;
  throw ValidationError("projection method must be pca or tsne, got '" + s + "'");
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// score 0; with fewer than two clusters the score is 0.
inline double Silhouette(const Mat& x, const std::vector<std::string>& tags) {
  Require(static_cast<size_t>(x.rows()) == tags.size(), "silhouette: tag count mismatch");
  std::map<std::string, int> ids;
  for (const auto& t : tags) ids.emplace(t, static_cast<int>(ids.size()));
  const int K = static_cast<int>(ids.size());
  const Eigen::Index n = x.rows();
  if (K < 2 || n < 2) return 0.0;
  std::vector<int> lab(n), count(K, 0);
  for (Eigen::Index i = 0; i < n; ++i) ++count[lab[i] = ids[tags[i]]];
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (count[lab[i]] < 2) continue;
    std::vector<double> sum(K, 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[lab[j]] += (x.row(i) - x.row(j)).norm();
    const double a = sum[lab[i]] / (count[lab[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k)
      if (k != lab[i] && count[k] > 0) b = std::min(b, sum[k] / count[k]);
    const double m = std::max(a, b);
    if (m > 0) total += std::clamp((b - a) / m, -1.0, 1.0);
  }
  return total / static_cast<double>(n);
}

namespace detail {

inline Mat Pca2(const Mat& x) {
  const Eigen::Index n = x.rows();
  Mat centered = x.rowwise() - x.colwise().mean();
  Mat out = Mat::Zero(n, 2);
  if (x.cols() == 0) return out;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd axis = es.eigenvectors().col(d - 1 - c);
    if (es.eigenvalues()(d - 1 - c) <= 1e-12 * std::max(1.0, es.eigenvalues()(d - 1))) continue;
    // Sign convention: the largest-magnitude loading is positive.
    Eigen::Index k;
    axis.cwiseAbs().maxCoeff(&k);
    if (axis(k) < 0) axis = -axis;
    out.col(c) = centered * axis;
  }
  return out;
}

/// Exact t-SNE (O(n^2) per iteration).
inline Mat Tsne2(const Mat& x, double perplexity, int iters, uint64_t seed) {
  const Eigen::Index n = x.rows();
  Mat out = Mat::Zero(n, 2);
  if (n < 3) return Pca2(x);
  perplexity = std::min(perplexity, (static_cast<double>(n) - 1.0) / 3.0);
  Mat d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  Mat p = Mat::Zero(n, n);
  const double target = std::log(perplexity);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), beta = 1.0;
    for (int it = 0; it < 100; ++it) {
      double sum = 0.0, dsum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-beta * d2(i, j));
        p(i, j) = v;
        sum += v;
        dsum += v * d2(i, j);
      }
      if (sum <= 0) {
        hi = beta;
        beta = (lo + hi) / 2;
        continue;
      }
      const double h = std::log(sum) + beta * dsum / sum;
      p.row(i) /= sum;
      if (std::abs(h - target) < 1e-6) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (lo + hi) / 2;
      } else {
        hi = beta;
        beta = (lo + hi) / 2;
      }
    }
  }
  Mat P = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  P = P.cwiseMax(1e-12);
  for (Eigen::Index i = 0; i < n; ++i) P(i, i) = 0.0;
  Rng rng(DeriveSeed(seed, "evalviz.tsne"));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) out(i, c) = 1e-4 * rng.Normal();
  Mat vel = Mat::Zero(n, 2), gains = Mat::Ones(n, 2);
  const double lr = std::max(static_cast<double>(n) / 12.0, 50.0);
  for (int it = 0; it < iters; ++it) {
    const double exaggeration = it < 100 ? 12.0 : 1.0;
    const double momentum = it < 250 ? 0.5 : 0.8;
    Mat num(n, n);
    double qsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (out.row(i) - out.row(j)).squaredNorm());
        qsum += num(i, j);
      }
    Mat grad = Mat::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num(i, j) / qsum, 1e-12);
        grad.row(i) += 4.0 * (exaggeration * P(i, j) - q) * num(i, j) * (out.row(i) - out.row(j));
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        const bool same = (grad(i, c) > 0) == (vel(i, c) > 0);
        gains(i, c) = std::max(same ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
        vel(i, c) = momentum * vel(i, c) - lr * gains(i, c) * grad(i, c);
        out(i, c) += vel(i, c);
      }
    out = out.rowwise() - out.colwise().mean();
  }
  return out;
}

}  // namespace detail

struct ProjectionOptions {
  ProjectionMethod method = ProjectionMethod::kPca;
  double perplexity = 10.0;
  int tsne_iters = 1000;
  uint64_t seed = 0;
};

/// One row of `x` per point.
inline Projection2D Project2D(const Mat& x, const std::vector<std::string>& tags,
                              const std::vector<std::string>& ids, const ProjectionOptions& opt = {}) {
  Require(x.rows() >= 2, "project_2d: need at least 2 points, got " + std::to_string(x.rows()));
  Require(static_cast<size_t>(x.rows()) == tags.size() && tags.size() == ids.size(),
          "project_2d: tags and ids must match the number of points");
  Require(x.allFinite(), "project_2d: non-finite input");
  Require(opt.perplexity > 0 && opt.tsne_iters > 0, "project_2d: perplexity and iterations must be positive");
  const Mat y = opt.method == ProjectionMethod::kPca ? detail::Pca2(x)
                                                     : detail::Tsne2(x, opt.perplexity, opt.tsne_iters, opt.seed);
  Projection2D p;
  p.method = opt.method == ProjectionMethod::kPca ? "pca" : "tsne";
  for (Eigen::Index i = 0; i < y.rows(); ++i) p.points.push_back({y(i, 0), y(i, 1), tags[i], ids[i]});
  p.silhouette = Silhouette(y, tags);
  p.silhouette_raw = Silhouette(x, tags);
  return p;
}

// ---------------------------------------------------------------- reports

struct Report {
  std::string title = "emotts evaluation";
  std::vector<json> metrics;                         // one record per line in metrics.jsonl
  std::map<std::string, ConfusionMatrix> matrices;   // name -> matrix
  std::map<std::string, Projection2D> projections;   // name -> projection
  std::vector<std::string> notes;
};

namespace detail {

inline std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string Xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

inline std::string Csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline const char* Colour(size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

inline std::string ConfusionCsv(const ConfusionMatrix& m) {
  std::string s = "true\\pred";
  for (const auto& c : m.classes) s += "," + Csv(c);
  s += "\n";
  for (int i = 0; i < m.size(); ++i) {
    s += Csv(m.classes[i]);
    for (int j = 0; j < m.size(); ++j) s += "," + Num(m.confusion.counts(i, j));
    s += "\n";
  }
  return s;
}

inline std::string ConfusionSvg(const std::string& name, const ConfusionMatrix& m) {
  const int cell = 60, left = 90, top = 50, C = m.size();
  const int w = left + C * cell + 20, h = top + C * cell + 40;
  const Mat norm = m.confusion.Normalized();
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                  std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<text x=\"10\" y=\"20\" font-size=\"14\">" + Xml(name) + " (rows: true, columns: predicted)</text>\n";
  for (int i = 0; i < C; ++i) {
    s += "<text x=\"10\" y=\"" + std::to_string(top + i * cell + cell / 2 + 4) + "\">" + Xml(m.classes[i]) +
         "</text>\n";
    s += "<text x=\"" + std::to_string(left + i * cell + 6) + "\" y=\"" + std::to_string(top + C * cell + 18) +
         "\">" + Xml(m.classes[i]) + "</text>\n";
    for (int j = 0; j < C; ++j) {
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - norm(i, j))));
      char fill[16];
      std::snprintf(fill, sizeof(fill), "#%02x%02xff", shade, shade);
      const int x = left + j * cell, y = top + i * cell;
      s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
           std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" + fill +
           "\" stroke=\"#444\"/>\n";
      s += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" + std::to_string(y + cell / 2 + 4) +
           "\" text-anchor=\"middle\">" + Num(m.confusion.counts(i, j)) + "</text>\n";
    }
  }
  return s + "</svg>\n";
}

inline std::string ProjectionCsv(const Projection2D& p) {
  std::string s = "id,tag,x,y\n";
  for (const auto& q : p.points) s += Csv(q.id) + "," + Csv(q.tag) + "," + Num(q.x) + "," + Num(q.y) + "\n";
  return s;
}

inline std::string ProjectionSvg(const std::string& name, const Projection2D& p) {
  const double W = 420, H = 420, pad = 30;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  if (!p.points.empty()) {
    x0 = x1 = p.points[0].x;
    y0 = y1 = p.points[0].y;
  }
  std::map<std::string, size_t> tag_ids;
  for (const auto& q : p.points) {
    x0 = std::min(x0, q.x), x1 = std::max(x1, q.x), y0 = std::min(y0, q.y), y1 = std::max(y1, q.y);
    tag_ids.emplace(q.tag, 0);
  }
  size_t k = 0;
  for (auto& [tag, id] : tag_ids) id = k++;
  const double sx = x1 > x0 ? (W - 2 * pad) / (x1 - x0) : 0.0, sy = y1 > y0 ? (H - 2 * pad) / (y1 - y0) : 0.0;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + Num(W + 120) + "\" height=\"" + Num(H) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<text x=\"10\" y=\"18\" font-size=\"14\">" + Xml(name) + " (" + p.method + ", silhouette " +
       Num(p.silhouette) + ")</text>\n";
  s += "<rect x=\"" + Num(pad / 2) + "\" y=\"" + Num(pad / 2) + "\" width=\"" + Num(W - pad) + "\" height=\"" +
       Num(H - pad) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (const auto& q : p.points) {
    const double cx = sx > 0 ? pad + (q.x - x0) * sx : W / 2;
    const double cy = sy > 0 ? H - pad - (q.y - y0) * sy : H / 2;
    s += "<circle cx=\"" + Num(cx) + "\" cy=\"" + Num(cy) + "\" r=\"4\" fill=\"" + Colour(tag_ids[q.tag]) +
         "\"><title>" + Xml(q.id) + "</title></circle>\n";
  }
  double ly = 40;
  for (const auto& [tag, id] : tag_ids) {
    s += "<circle cx=\"" + Num(W + 10) + "\" cy=\"" + Num(ly - 4) + "\" r=\"5\" fill=\"" + Colour(id) + "\"/>\n";
    s += "<text x=\"" + Num(W + 20) + "\" y=\"" + Num(ly) + "\">" + Xml(tag) + "</text>\n";
    ly += 18;
  }
  return s + "</svg>\n";
}

inline std::string FileSafe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

}  // namespace detail

/// Writes metrics.jsonl, summary.txt and index.json, plus CSV and SVG files
/// for each confusion matrix and projection. Returns the written file
/// names, sorted.
inline std::vector<std::string> RenderReports(const Report& r, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw RuntimeError("render_reports: cannot create directory '" + out_dir.string() + "'");
  std::vector<std::string> files;
  auto write = [&](const std::string& name, const std::string& body) {
    io::WriteFile(out_dir / name, body);
    files.push_back(name);
  };

  std::string jsonl;
  for (const auto& m : r.metrics) jsonl += m.dump() + "\n";
  write("metrics.jsonl", jsonl);

  std::string txt = r.title + "\n" + std::string(r.title.size(), '=') + "\n\n";
  txt += "Metrics\n-------\n";
  if (r.metrics.empty()) txt += "no data\n";
  for (const auto& m : r.metrics) {
    std::string line;
    for (const auto& [k, v] : m.items()) {
      if (v.is_structured()) continue;
      line += (line.empty() ? "" : "  ") + k + "=" + (v.is_number_float() ? detail::Num(v.get<double>()) : v.dump());
    }
    txt += line + "\n";
  }
  txt += "\nConfusion matrices\n------------------\n";
  if (r.matrices.empty()) txt += "no data\n";
  for (const auto& [name, m] : r.matrices) {
    const std::string base = "confusion_" + detail::FileSafe(name);
    write(base + ".csv", detail::ConfusionCsv(m));
    write(base + ".svg", detail::ConfusionSvg(name, m));
    txt += name + " (rows true, columns predicted)\n";
    if (m.confusion.total() <= 0) {
      txt += "  no data\n";
      continue;
    }
    for (int i = 0; i < m.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "  %-10s", m.classes[i].c_str());
      txt += buf;
      for (int j = 0; j < m.size(); ++j) {
        std::snprintf(buf, sizeof(buf), " %6s", detail::Num(m.confusion.counts(i, j)).c_str());
        txt += buf;
      }
      txt += "\n";
    }
    const auto acc = metrics::AccuracyFromConfusion(m.confusion, false);
    txt += "  WA " + detail::Num(acc.wa) + "  UA " + detail::Num(acc.ua) + "\n";
  }
  txt += "\nProjections\n-----------\n";
  if (r.projections.empty()) txt += "no data\n";
  for (const auto& [name, p] : r.projections) {
    const std::string base = "projection_" + detail::FileSafe(name);
    write(base + ".csv", detail::ProjectionCsv(p));
    write(base + ".svg", detail::ProjectionSvg(name, p));
    txt += name + ": " + p.method + ", " + std::to_string(p.points.size()) + " points, silhouette " +
           detail::Num(p.silhouette) + " (2-D), " + detail::Num(p.silhouette_raw) + " (weights)\n";
  }
  if (!r.notes.empty()) {
    txt += "\nNotes\n-----\n";
    for (const auto& n : r.notes) txt += "- " + n + "\n";
  }
  write("summary.txt", txt);
  files.push_back("index.json");
  std::sort(files.begin(), files.end());
  io::WriteFile(out_dir / "index.json", json{{"files", files}}.dump(2) + "\n");
  return files;
}

}  // namespace emotts::evalviz
