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

// Training objectives: the multi-RBF kernel and the MMD domain loss between
// encoder features, class-weighted cross-entropy, and spectrogram
// reconstruction error. Each loss has a plain value function and an
// autograd operation with an analytic backward pass.

#include <string>
#include <utility>
#include <vector>

#include "emotts/autograd.hpp"

namespace emotts::losses {

struct RbfComponent {
  double sigma = 1.0;
  double eta = 1.0;
};

/// k(x, y) = sum_n eta_n * exp(-||x - y||^2 / (2 sigma_n)).
struct KernelBank {
  std::vector<RbfComponent> components;

  static KernelBank Default() {
    KernelBank b;
    for (double s : {1.0, 2.0, 4.0, 8.0, 16.0}) b.components.push_back({s, 0.2});
    return b;
  }

  void Validate() const {
    Require(!components.empty(), "kernel bank must be nonempty");
    for (const auto& c : components)
      Require(c.sigma > 0.0 && c.eta > 0.0, "kernel bank: sigma and eta must be positive");
  }

  double EtaSum() const {
    double s = 0.0;
    for (const auto& c : components) s += c.eta;
    return s;
  }

  double FromSquaredDistance(double d2) const {
    double k = 0.0;
    for (const auto& c : components) k += c.eta * std::exp(-d2 / (2.0 * c.sigma));
    return k;
  }

  /// dk/d(d2)
  double Derivative(double d2) const {
    double k = 0.0;
    for (const auto& c : components) k -= c.eta / (2.0 * c.sigma) * std::exp(-d2 / (2.0 * c.sigma));
    return k;
  }
};

template <typename A, typename B>
double Kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const KernelBank& bank) {
  if (x.size() != y.size())
    throw ValidationError("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x.derived().data()[i] - y.derived().data()[i];
    d2 += d * d;
  }
  return bank.FromSquaredDistance(d2);
}

inline double Kernel(const std::vector<double>& x, const std::vector<double>& y,
                     const KernelBank& bank) {
  return Kernel(Eigen::Map<const RowVec>(x.data(), static_cast<Eigen::Index>(x.size())),
                Eigen::Map<const RowVec>(y.data(), static_cast<Eigen::Index>(y.size())), bank);
}

/// Coefficient on the source/target cross term. kStandard (2 / mn) gives
/// the squared RKHS distance between the empirical mean embeddings;
/// kLiteral (1 / mn) is kept for comparison and has no sign guarantee.
enum class MmdCross { kStandard, kLiteral };

inline double CrossCoefficient(MmdCross c) { return c == MmdCross::kStandard ? 2.0 : 1.0; }

namespace detail {

inline Mat SquaredDistances(const Mat& a, const Mat& b) {
  Mat d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

inline Mat KernelMatrix(const Mat& a, const Mat& b, const KernelBank& bank) {
  return SquaredDistances(a, b).unaryExpr([&](double d2) { return bank.FromSquaredDistance(d2); });
}

inline void CheckMmdInputs(const Mat& s, const Mat& t, const KernelBank& bank) {
  if (s.rows() < 1 || t.rows() < 1) throw ValidationError("mmd_loss: empty feature matrix");
  if (s.cols() != t.cols())
    throw ValidationError("mmd_loss: feature dimension mismatch (" + std::to_string(s.cols()) +
                          " vs " + std::to_string(t.cols()) + ")");
  bank.Validate();
}

// Gradient of sum_ij c * k(a_i, b_j) w.r.t. a, using dk/da_i = 2 k'(d2) (a_i - b_j).
inline Mat PairGradient(const Mat& a, const Mat& b, const Mat& d2, const KernelBank& bank, double c) {
  Mat w = d2.unaryExpr([&](double v) { return bank.Derivative(v); }) * (2.0 * c);
  Mat g = (a.array().colwise() * w.rowwise().sum().array()).matrix() - w * b;
  return g;
}

}  // namespace detail

/// Biased estimator including i == j terms.
inline double MmdLoss(const Mat& source, const Mat& target, const KernelBank& bank,
                      MmdCross cross = MmdCross::kStandard) {
  detail::CheckMmdInputs(source, target, bank);
  const double m = static_cast<double>(source.rows()), n = static_cast<double>(target.rows());
  const double ss = detail::KernelMatrix(source, source, bank).sum() / (m * m);
  const double tt = detail::KernelMatrix(target, target, bank).sum() / (n * n);
  const double st = detail::KernelMatrix(source, target, bank).sum() / (m * n);
  return ss + tt - CrossCoefficient(cross) * st;
}

struct MmdWithGrad {
  double value = 0.0;
  Mat d_source, d_target;
};

inline MmdWithGrad MmdLossAndGrad(const Mat& source, const Mat& target, const KernelBank& bank,
                                  MmdCross cross = MmdCross::kStandard) {
  detail::CheckMmdInputs(source, target, bank);
  const double m = static_cast<double>(source.rows()), n = static_cast<double>(target.rows());
  const double c = CrossCoefficient(cross);
  const Mat dss = detail::SquaredDistances(source, source);
  const Mat dtt = detail::SquaredDistances(target, target);
  const Mat dst = detail::SquaredDistances(source, target);
  auto k = [&](const Mat& d) { return d.unaryExpr([&](double v) { return bank.FromSquaredDistance(v); }); };
  MmdWithGrad out;
  out.value = k(dss).sum() / (m * m) + k(dtt).sum() / (n * n) - c * k(dst).sum() / (m * n);
  // Each unordered within-domain pair appears twice, hence the factor 2.
  out.d_source = detail::PairGradient(source, source, dss, bank, 2.0 / (m * m)) -
                 detail::PairGradient(source, target, dst, bank, c / (m * n));
  out.d_target = detail::PairGradient(target, target, dtt, bank, 2.0 / (n * n)) -
                 detail::PairGradient(target, source, dst.transpose(), bank, c / (m * n));
  return out;
}

/// Autograd version; gradients flow into both feature matrices.
inline ag::Var Mmd(const ag::Var& source, const ag::Var& target, const KernelBank& bank,
                   MmdCross cross = MmdCross::kStandard) {
  auto r = MmdLossAndGrad(source.value(), target.value(), bank, cross);
  Mat v(1, 1);
  v(0, 0) = r.value;
  const int is = source.id(), it = target.id();
  return source.tape()->Make(std::move(v), {source, target},
                             [is, it, ds = std::move(r.d_source), dt = std::move(r.d_target)](
                                 ag::Tape& t, int self) {
                               const double g = t.grad(self)(0, 0);
                               t.Accum(is, ds * g);
                               t.Accum(it, dt * g);
                             });
}

// ---------------------------------------------------------------------------

struct ClassWeights {
  std::vector<double> w;
  size_t size() const { return w.size(); }
  double operator[](size_t k) const { return w[k]; }

  static ClassWeights Uniform(int classes) { return ClassWeights{std::vector<double>(classes, 1.0)}; }

  void Validate() const {
    Require(!w.empty(), "class weights must be nonempty");
    for (double v : w) Require(v > 0.0, "class weights must be positive");
  }
};

/// w_k = total / (C * count_k): inversely proportional to class frequency,
/// all ones when the classes are balanced.
inline ClassWeights ClassWeightsFromCounts(const std::vector<long>& counts) {
  Require(!counts.empty(), "class_weights_from_counts: no classes");
  double total = 0.0;
  for (size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 1)
      throw ValidationError("class_weights_from_counts: class " + std::to_string(k) +
                            " has no samples");
    total += static_cast<double>(counts[k]);
  }
  ClassWeights cw;
  const double c = static_cast<double>(counts.size());
  for (long n : counts) cw.w.push_back(total / (c * static_cast<double>(n)));
  return cw;
}

inline constexpr double kProbEpsilon = 1e-7;
inline constexpr double kNormTolerance = 1e-4;

enum class Reduction { kSum, kMean };

namespace detail {

inline int ArgMax(const Eigen::Ref<const RowVec>& v) {
  Eigen::Index k = 0;
  v.maxCoeff(&k);
  return static_cast<int>(k);
}

inline void CheckDistributions(const Mat& y_true, const Mat& y_pred, const ClassWeights& w) {
  Require(y_true.rows() == y_pred.rows() && y_true.cols() == y_pred.cols(),
          "weighted_ce: shape mismatch between targets and predictions");
  Require(static_cast<size_t>(y_true.cols()) == w.size(),
          "weighted_ce: class weight count does not match class count");
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    if (std::abs(y_true.row(i).sum() - 1.0) > kNormTolerance ||
        std::abs(y_pred.row(i).sum() - 1.0) > kNormTolerance)
      throw ValidationError("weighted_ce: row " + std::to_string(i) + " is not normalized");
  }
}

}  // namespace detail

/// -sum_i w_{argmax(y_i)} * y_i . log(y_hat_i), one sample per row.
/// Soft targets are allowed; predictions are clamped at kProbEpsilon.
inline double WeightedCe(const Mat& y_true, const Mat& y_pred, const ClassWeights& w,
                         Reduction red = Reduction::kSum) {
  detail::CheckDistributions(y_true, y_pred, w);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    const double wi = w[detail::ArgMax(y_true.row(i))];
    for (Eigen::Index k = 0; k < y_true.cols(); ++k)
      loss -= wi * y_true(i, k) * std::log(std::max(y_pred(i, k), kProbEpsilon));
  }
  return red == Reduction::kMean ? loss / static_cast<double>(y_true.rows()) : loss;
}

inline double WeightedCe(const std::vector<double>& y_true, const std::vector<double>& y_pred,
                         const ClassWeights& w) {
  return WeightedCe(Eigen::Map<const Mat>(y_true.data(), 1, static_cast<Eigen::Index>(y_true.size())),
                    Eigen::Map<const Mat>(y_pred.data(), 1, static_cast<Eigen::Index>(y_pred.size())),
                    w);
}

/// Autograd version over probabilities.
inline ag::Var WeightedCeProb(const ag::Var& y_pred, const Mat& y_true, const ClassWeights& w,
                              Reduction red = Reduction::kSum) {
  const Mat& p = y_pred.value();
  detail::CheckDistributions(y_true, p, w);
  const double scale = red == Reduction::kMean ? 1.0 / static_cast<double>(p.rows()) : 1.0;
  Mat coef(y_true.rows(), y_true.cols());
  for (Eigen::Index i = 0; i < y_true.rows(); ++i)
    coef.row(i) = y_true.row(i) * (w[detail::ArgMax(y_true.row(i))] * scale);
  Mat v(1, 1);
  v(0, 0) = -(coef.array() * p.array().max(kProbEpsilon).log()).sum();
  const int ip = y_pred.id();
  return y_pred.tape()->Make(std::move(v), {y_pred}, [ip, coef](ag::Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Mat& pv = t.value(ip);
    Mat d = (pv.array() > kProbEpsilon).select(-coef.cwiseQuotient(pv), 0.0);
    t.Accum(ip, d * g);
  });
}

/// Autograd version over log-probabilities (numerically preferable inside
/// models: feed LogSoftmaxRows output).
inline ag::Var WeightedCeLogp(const ag::Var& log_probs, const Mat& y_true, const ClassWeights& w,
                              Reduction red = Reduction::kSum) {
  Require(y_true.rows() == log_probs.rows() && y_true.cols() == log_probs.cols(),
          "weighted_ce: shape mismatch between targets and predictions");
  Require(static_cast<size_t>(y_true.cols()) == w.size(),
          "weighted_ce: class weight count does not match class count");
  const double scale = red == Reduction::kMean ? 1.0 / static_cast<double>(y_true.rows()) : 1.0;
  Mat coef(y_true.rows(), y_true.cols());
  for (Eigen::Index i = 0; i < y_true.rows(); ++i)
    coef.row(i) = y_true.row(i) * (-w[detail::ArgMax(y_true.row(i))] * scale);
  ag::Tape& t = *log_probs.tape();
  return ag::Sum(ag::Mul(log_probs, t.Constant(std::move(coef))));
}

/// L = L_CE + lambda * L_MMD.
inline double SerTotalLoss(double ce, double mmd, double lambda) {
  Require(lambda >= 0.0, "ser_total_loss: lambda must be nonnegative");
  return ce + lambda * mmd;
}

// ---------------------------------------------------------------------------

/// Mean absolute error over valid rows (frames). row_mask holds one 0/1
/// entry per row; padded rows contribute nothing.
inline double MaskedMae(const Mat& pred, const Mat& target, const Vec& row_mask) {
  Require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "reconstruction_loss: shape mismatch");
  Require(row_mask.size() == pred.rows(), "reconstruction_loss: mask length mismatch");
  const double valid = row_mask.sum();
  if (valid <= 0.0) return 0.0;
  const double total = ((pred - target).cwiseAbs().array().colwise() * row_mask.array()).sum();
  return total / (valid * static_cast<double>(pred.cols()));
}

inline double ReconstructionLoss(const Mat& pred_mel, const Mat& true_mel, const Mat& pred_linear,
                                 const Mat& true_linear, const Vec& row_mask) {
  return MaskedMae(pred_mel, true_mel, row_mask) + MaskedMae(pred_linear, true_linear, row_mask);
}

inline double ReconstructionLoss(const Mat& pred_mel, const Mat& true_mel, const Mat& pred_linear,
                                 const Mat& true_linear) {
  return ReconstructionLoss(pred_mel, true_mel, pred_linear, true_linear,
                            Vec::Ones(pred_mel.rows()));
}

inline ag::Var MaskedMaeVar(const ag::Var& pred, const Mat& target, const Vec& row_mask) {
  Require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "reconstruction_loss: shape mismatch");
  Require(row_mask.size() == pred.rows(), "reconstruction_loss: mask length mismatch");
  const double valid = std::max(row_mask.sum(), 1.0);
  const double scale = 1.0 / (valid * static_cast<double>(pred.cols()));
  Mat diff = pred.value() - target;
  Mat v(1, 1);
  v(0, 0) = (diff.cwiseAbs().array().colwise() * row_mask.array()).sum() * scale;
  Mat sign = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
  sign = (sign.array().colwise() * row_mask.array()).matrix() * scale;
  const int ip = pred.id();
  return pred.tape()->Make(std::move(v), {pred}, [ip, sign = std::move(sign)](ag::Tape& t, int self) {
    t.Accum(ip, sign * t.grad(self)(0, 0));
  });
}

/// Masked mean of binary cross-entropy on logits:
///   softplus(x) - y x, computed as max(x, 0) - y x + log(1 + exp(-|x|)).
inline ag::Var BceWithLogits(const ag::Var& logits, const Mat& targets, const Mat& mask) {
  Require(logits.rows() == targets.rows() && logits.cols() == targets.cols() &&
              mask.rows() == targets.rows() && mask.cols() == targets.cols(),
          "bce: shape mismatch");
  const double n = mask.sum();
  Require(n > 0, "bce: empty mask");
  const Mat& x = logits.value();
  Mat v(1, 1);
  v(0, 0) = (mask.array() * (x.array().max(0.0) - targets.array() * x.array() +
                             (1.0 + (-x.array().abs()).exp()).log()))
                .sum() /
            n;
  ag::Tape& t = *logits.tape();
  const int il = logits.id();
  return t.Make(std::move(v), {logits}, [il, targets, mask, n](ag::Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    Mat p = ag::SigmoidOf(t.value(il));
    t.Accum(il, (g / n) * (mask.array() * (p - targets).array()).matrix());
  });
}

}  // namespace emotts::losses
