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

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation of one forward pass; Backward()
// replays it in reverse. Batched data is laid out one item per row.

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emotts/common.hpp"

namespace emotts::ag {

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  inline const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), false, false, nullptr});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Leaf bound to a parameter; Backward() accumulates into p.grad. The
  /// same parameter always maps to the same leaf within one tape.
  Var Leaf(Param& p) {
    auto it = leaves_.find(&p);
    if (it != leaves_.end()) return Var(this, it->second);
    Param* ptr = &p;
    nodes_.push_back(Node{p.value, Mat(), true, false, [ptr](Tape& t, int self) {
                            ptr->grad += t.grad(self);
                          }});
    const int id = static_cast<int>(nodes_.size()) - 1;
    leaves_.emplace(&p, id);
    return Var(this, id);
  }

  Var Make(Mat value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), Mat(), needs, false,
                          needs ? std::move(fn) : BackwardFn()});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }
  Var Make(Mat value, const std::vector<Var>& parents, BackwardFn fn) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), Mat(), needs, false,
                          needs ? std::move(fn) : BackwardFn()});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Mat& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool has_grad(int id) const { return nodes_[id].has_grad; }

  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  template <typename Expr>
  void Accum(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void Backward(const Var& loss) {
    Require(loss.rows() == 1 && loss.cols() == 1, "Backward() needs a scalar loss");
    grad(loss.id()).setOnes();
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.has_grad && n.back) n.back(*this, i);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad;
    bool has_grad;
    BackwardFn back;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Param*, int> leaves_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra operations.

inline Var MatMul(const Var& a, const Var& b) {
  Require(a.cols() == b.rows(), "MatMul: inner dimension mismatch");
  Tape& t = *a.tape();
  Mat v = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return t.Make(std::move(v), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.Accum(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.Accum(ib, t.value(ia).transpose() * g);
  });
}

inline Var Add(const Var& a, const Var& b) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), "Add: shape mismatch");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.Make(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.Accum(ia, t.grad(self));
    t.Accum(ib, t.grad(self));
  });
}

inline Var Sub(const Var& a, const Var& b) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), "Sub: shape mismatch");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.Make(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.Accum(ia, t.grad(self));
    t.Accum(ib, -t.grad(self));
  });
}

inline Var Mul(const Var& a, const Var& b) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), "Mul: shape mismatch");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.Make(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.Accum(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.Accum(ib, g.cwiseProduct(t.value(ia)));
  });
}

inline Var Scale(const Var& a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    t.Accum(ia, t.grad(self) * s);
  });
}

inline Var AddScalar(const Var& a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make((a.value().array() + s).matrix(), {a},
                [ia](Tape& t, int self) { t.Accum(ia, t.grad(self)); });
}

/// a (R x C) + row (1 x C) broadcast over rows.
inline Var AddRow(const Var& a, const Var& row) {
  Require(row.rows() == 1 && row.cols() == a.cols(), "AddRow: shape mismatch");
  Tape& t = *a.tape();
  Mat v = a.value();
  v.rowwise() += row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return t.Make(std::move(v), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.Accum(ia, g);
    if (t.needs_grad(ir)) t.Accum(ir, g.colwise().sum());
  });
}

/// Scales row r of a (R x C) by col(r, 0).
inline Var MulCol(const Var& a, const Var& col) {
  Require(col.cols() == 1 && col.rows() == a.rows(), "MulCol: shape mismatch");
  Tape& t = *a.tape();
  Mat v = a.value().array().colwise() * col.value().col(0).array();
  const int ia = a.id(), ic = col.id();
  return t.Make(std::move(v), {a, col}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) t.Accum(ia, (g.array().colwise() * t.value(ic).col(0).array()).matrix());
    if (t.needs_grad(ic)) t.Accum(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

inline Var Tanh(const Var& a) {
  Tape& t = *a.tape();
  Mat v = a.value().array().tanh().matrix();
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.Accum(ia, (t.grad(self).array() * (1.0 - y.array().square())).matrix());
  });
}

inline Mat SigmoidOf(const Mat& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

inline Var Sigmoid(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(SigmoidOf(a.value()), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.Accum(ia, (t.grad(self).array() * y.array() * (1.0 - y.array())).matrix());
  });
}

inline Var Relu(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.Accum(ia, (x.array() > 0.0).select(t.grad(self), 0.0).matrix());
  });
}

inline Var Exp(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
    t.Accum(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

inline Var Log(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().array().log().matrix(), {a}, [ia](Tape& t, int self) {
    t.Accum(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

inline Var Abs(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().cwiseAbs(), {a}, [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    Mat sign = x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    t.Accum(ia, t.grad(self).cwiseProduct(sign));
  });
}

/// Row-wise softmax of a / temperature.
inline Mat SoftmaxRowsOf(const Mat& a, double temperature = 1.0) {
  Mat z = a / temperature;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

inline Var SoftmaxRows(const Var& a, double temperature = 1.0) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(SoftmaxRowsOf(a.value(), temperature), {a},
                [ia, temperature](Tape& t, int self) {
                  const Mat& y = t.value(self);
                  const Mat& g = t.grad(self);
                  Mat dot = g.cwiseProduct(y).rowwise().sum();
                  Mat dx = y.array() * (g.array().colwise() - dot.col(0).array());
                  t.Accum(ia, dx / temperature);
                });
}

inline Var LogSoftmaxRows(const Var& a) {
  Tape& t = *a.tape();
  Mat z = a.value();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    z.row(r).array() -= lse;
  }
  const int ia = a.id();
  return t.Make(std::move(z), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    Mat gsum = g.rowwise().sum();
    Mat dx = g.array() - y.array().exp().colwise() * gsum.col(0).array();
    t.Accum(ia, dx);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

inline Var ConcatCols(const std::vector<Var>& parts) {
  Require(!parts.empty(), "ConcatCols: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    Require(p.rows() == rows, "ConcatCols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offs.push_back(off);
    off += p.cols();
  }
  return t.Make(std::move(v), parts, [ids, offs](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      t.Accum(ids[k], g.middleCols(offs[k], t.value(ids[k]).cols()));
    }
  });
}

inline Var ConcatRows(const std::vector<Var>& parts) {
  Require(!parts.empty(), "ConcatRows: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    Require(p.cols() == cols, "ConcatRows: col mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offs.push_back(off);
    off += p.rows();
  }
  return t.Make(std::move(v), parts, [ids, offs](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      t.Accum(ids[k], g.middleRows(offs[k], t.value(ids[k]).rows()));
    }
  });
}

inline Var SliceCols(const Var& a, Eigen::Index start, Eigen::Index n) {
  Require(start >= 0 && start + n <= a.cols(), "SliceCols: out of range");
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().middleCols(start, n), {a}, [ia, start, n](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    t.grad(ia).middleCols(start, n) += t.grad(self);
  });
}

inline Var SliceRows(const Var& a, Eigen::Index start, Eigen::Index n) {
  Require(start >= 0 && start + n <= a.rows(), "SliceRows: out of range");
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().middleRows(start, n), {a}, [ia, start, n](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    t.grad(ia).middleRows(start, n) += t.grad(self);
  });
}

/// Picks columns by index (indices may repeat).
inline Var GatherCols(const Var& a, std::vector<int> idx) {
  Tape& t = *a.tape();
  Mat v(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) v.col(k) = a.value().col(idx[k]);
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    Mat& ga = t.grad(ia);
    const Mat& g = t.grad(self);
    for (size_t k = 0; k < idx.size(); ++k) ga.col(idx[k]) += g.col(k);
  });
}

/// Picks rows by index (embedding lookup when `a` is a parameter table).
inline Var GatherRows(const Var& a, std::vector<int> idx) {
  Tape& t = *a.tape();
  Mat v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t k = 0; k < idx.size(); ++k) v.row(k) = a.value().row(idx[k]);
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    Mat& ga = t.grad(ia);
    const Mat& g = t.grad(self);
    for (size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(k);
  });
}

/// Each row of a repeated `times` times consecutively.
inline Var RepeatRows(const Var& a, Eigen::Index times) {
  Tape& t = *a.tape();
  Mat v(a.rows() * times, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index k = 0; k < times; ++k) v.row(r * times + k) = a.value().row(r);
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia, times](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    Mat& ga = t.grad(ia);
    const Mat& g = t.grad(self);
    for (Eigen::Index r = 0; r < ga.rows(); ++r)
      ga.row(r) += g.middleRows(r * times, times).colwise().sum();
  });
}

inline Var Transpose(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.Accum(ia, t.grad(self).transpose());
  });
}

/// Row-major reshape.
inline Var Reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  Require(rows * cols == a.rows() * a.cols(), "Reshape: size mismatch");
  Tape& t = *a.tape();
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& x = t.value(ia);
    t.Accum(ia, Eigen::Map<const Mat>(g.data(), x.rows(), x.cols()));
  });
}

inline Var Sum(const Var& a) {
  Tape& t = *a.tape();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id();
  return t.Make(std::move(v), {a}, [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Mat& x = t.value(ia);
    t.Accum(ia, Mat::Constant(x.rows(), x.cols(), g));
  });
}

inline Var Mean(const Var& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.rows() * a.cols()));
}

/// Sum over columns, giving R x 1.
inline Var SumCols(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.Make(a.value().rowwise().sum(), {a}, [ia](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& x = t.value(ia);
    Mat dx(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) dx.col(c) = g.col(0);
    t.Accum(ia, dx);
  });
}

/// Attention read-out: alpha is B x L, values is (B*L) x D laid out item
/// major; returns B x D with row b = sum_j alpha(b, j) * values(b*L + j).
inline Var WeightedRowSum(const Var& alpha, const Var& values) {
  const Eigen::Index B = alpha.rows(), L = alpha.cols();
  Require(values.rows() == B * L, "WeightedRowSum: shape mismatch");
  Tape& t = *alpha.tape();
  Mat v(B, values.cols());
  for (Eigen::Index b = 0; b < B; ++b)
    v.row(b) = alpha.value().row(b) * values.value().middleRows(b * L, L);
  const int ia = alpha.id(), iv = values.id();
  return t.Make(std::move(v), {alpha, values}, [ia, iv, B, L](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Mat da(B, L);
      const Mat& vals = t.value(iv);
      for (Eigen::Index b = 0; b < B; ++b)
        da.row(b) = g.row(b) * vals.middleRows(b * L, L).transpose();
      t.Accum(ia, da);
    }
    if (t.needs_grad(iv)) {
      const Mat& al = t.value(ia);
      Mat& dv = t.grad(iv);
      for (Eigen::Index b = 0; b < B; ++b)
        dv.middleRows(b * L, L) += al.row(b).transpose() * g.row(b);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions and recurrent cells.

/// 2-D convolution geometry. Inputs are one item per row, flattened as
/// (channel, height, width) with width fastest.
struct Conv2dGeom {
  int in_c = 1, in_h = 1, in_w = 1;
  int out_c = 1;
  int k_h = 3, k_w = 3;
  int stride_h = 1, stride_w = 1;
  int pad_h = 1, pad_w = 1;

  int out_h() const { return (in_h + 2 * pad_h - k_h) / stride_h + 1; }
  int out_w() const { return (in_w + 2 * pad_w - k_w) / stride_w + 1; }
  int patch() const { return in_c * k_h * k_w; }
};

namespace detail {

// For each (output position, patch element) the flat input index or -1.
inline std::shared_ptr<std::vector<int>> Conv2dIndex(const Conv2dGeom& g) {
  const int oh = g.out_h(), ow = g.out_w(), P = g.patch();
  auto idx = std::make_shared<std::vector<int>>(static_cast<size_t>(oh) * ow * P, -1);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      int* row = idx->data() + static_cast<size_t>(i * ow + j) * P;
      int k = 0;
      for (int c = 0; c < g.in_c; ++c)
        for (int ki = 0; ki < g.k_h; ++ki)
          for (int kj = 0; kj < g.k_w; ++kj, ++k) {
            const int h = i * g.stride_h - g.pad_h + ki;
            const int w = j * g.stride_w - g.pad_w + kj;
            if (h >= 0 && h < g.in_h && w >= 0 && w < g.in_w)
              row[k] = (c * g.in_h + h) * g.in_w + w;
          }
    }
  return idx;
}

}  // namespace detail

/// weight: patch x out_c, bias: 1 x out_c.
inline Var Conv2d(const Var& x, const Var& weight, const Var& bias, const Conv2dGeom& g) {
  Require(x.cols() == static_cast<Eigen::Index>(g.in_c) * g.in_h * g.in_w,
          "Conv2d: input size does not match geometry");
  Require(weight.rows() == g.patch() && weight.cols() == g.out_c, "Conv2d: weight shape");
  Require(g.out_h() >= 1 && g.out_w() >= 1, "Conv2d: input too small for kernel");
  Tape& t = *x.tape();
  auto idx = detail::Conv2dIndex(g);
  const int positions = g.out_h() * g.out_w(), P = g.patch();
  const Eigen::Index B = x.rows();
  Mat out(B, static_cast<Eigen::Index>(g.out_c) * positions);
  Mat cols(positions, P);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double* src = x.value().row(b).data();
    for (int p = 0; p < positions; ++p)
      for (int k = 0; k < P; ++k) {
        const int s = (*idx)[static_cast<size_t>(p) * P + k];
        cols(p, k) = s >= 0 ? src[s] : 0.0;
      }
    Mat y = cols * weight.value();
    y.rowwise() += bias.value().row(0);
    // (positions x out_c) -> (out_c, positions) flattened.
    Eigen::Map<Mat>(out.row(b).data(), g.out_c, positions) = y.transpose();
  }
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return t.Make(std::move(out), {x, weight, bias}, [ix, iw, ib, g, idx](Tape& t, int self) {
    const int positions = g.out_h() * g.out_w(), P = g.patch();
    const Mat& gout = t.grad(self);
    const Mat& xv = t.value(ix);
    const Mat& wv = t.value(iw);
    const Eigen::Index B = xv.rows();
    Mat dw = Mat::Zero(P, g.out_c);
    Mat db = Mat::Zero(1, g.out_c);
    const bool need_x = t.needs_grad(ix);
    Mat dx;
    if (need_x) dx = Mat::Zero(xv.rows(), xv.cols());
    Mat cols(positions, P);
    for (Eigen::Index b = 0; b < B; ++b) {
      const double* src = xv.row(b).data();
      for (int p = 0; p < positions; ++p)
        for (int k = 0; k < P; ++k) {
          const int s = (*idx)[static_cast<size_t>(p) * P + k];
          cols(p, k) = s >= 0 ? src[s] : 0.0;
        }
      Mat gy = Eigen::Map<const Mat>(gout.row(b).data(), g.out_c, positions).transpose();
      dw.noalias() += cols.transpose() * gy;
      db += gy.colwise().sum();
      if (need_x) {
        Mat dcols = gy * wv.transpose();
        double* dst = dx.row(b).data();
        for (int p = 0; p < positions; ++p)
          for (int k = 0; k < P; ++k) {
            const int s = (*idx)[static_cast<size_t>(p) * P + k];
            if (s >= 0) dst[s] += dcols(p, k);
          }
      }
    }
    if (need_x) t.Accum(ix, dx);
    t.Accum(iw, dw);
    t.Accum(ib, db);
  });
}

/// 1-D "same" convolution over time for a batch of sequences stored as
/// (batch * steps) x channels rows, item major. weight: (k * in_c) x out_c
/// with the tap index slowest. Sequences do not leak into one another.
inline Var Conv1dSeq(const Var& x, const Var& weight, const Var& bias,
                     Eigen::Index batch, Eigen::Index steps, int kernel) {
  const Eigen::Index in_c = x.cols();
  Require(x.rows() == batch * steps, "Conv1dSeq: rows != batch * steps");
  Require(weight.rows() == kernel * in_c, "Conv1dSeq: weight shape");
  Tape& t = *x.tape();
  const int pad = kernel / 2;
  auto im2col = [=](const Mat& xv) {
    Mat cols = Mat::Zero(batch * steps, kernel * in_c);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index s = 0; s < steps; ++s)
        for (int k = 0; k < kernel; ++k) {
          const Eigen::Index src = s + k - pad;
          if (src < 0 || src >= steps) continue;
          cols.block(b * steps + s, k * in_c, 1, in_c) = xv.row(b * steps + src);
        }
    return cols;
  };
  Mat cols = im2col(x.value());
  Mat out = cols * weight.value();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return t.Make(std::move(out), {x, weight, bias},
                [=, cols = std::move(cols)](Tape& t, int self) {
                  const Mat& g = t.grad(self);
                  t.Accum(iw, cols.transpose() * g);
                  t.Accum(ib, g.colwise().sum());
                  if (!t.needs_grad(ix)) return;
                  Mat dcols = g * t.value(iw).transpose();
                  Mat dx = Mat::Zero(batch * steps, in_c);
                  for (Eigen::Index b = 0; b < batch; ++b)
                    for (Eigen::Index s = 0; s < steps; ++s)
                      for (int k = 0; k < kernel; ++k) {
                        const Eigen::Index src = s + k - pad;
                        if (src < 0 || src >= steps) continue;
                        dx.row(b * steps + src) += dcols.block(b * steps + s, k * in_c, 1, in_c);
                      }
                  t.Accum(ix, dx);
                });
}

/// GRU cell (reset gate applied after the hidden projection).
///   r = s(x Wr + h Ur + b), z = s(x Wz + h Uz + b),
///   n = tanh(x Wn + bn_x + r * (h Un + bn_h)), h' = (1 - z) n + z h.
/// wx: in x 3H, wh: H x 3H, gate blocks ordered [r | z | n].
/// With a mask (B x 1 of 0/1), rows with mask 0 keep their previous state.
inline Var GruCell(const Var& x, const Var& h, const Var& wx, const Var& wh, const Var& bx,
                   const Var& bh, const Mat* mask = nullptr) {
  const Eigen::Index H = h.cols();
  Require(wx.cols() == 3 * H && wh.cols() == 3 * H && wh.rows() == H, "GruCell: weight shape");
  Require(x.cols() == wx.rows() && x.rows() == h.rows(), "GruCell: input shape");
  Tape& t = *x.tape();
  Mat gx = x.value() * wx.value();
  gx.rowwise() += bx.value().row(0);
  Mat gh = h.value() * wh.value();
  gh.rowwise() += bh.value().row(0);
  Mat r = SigmoidOf(gx.leftCols(H) + gh.leftCols(H));
  Mat z = SigmoidOf(gx.middleCols(H, H) + gh.middleCols(H, H));
  Mat ghn = gh.rightCols(H);
  Mat n = (gx.rightCols(H) + r.cwiseProduct(ghn)).array().tanh().matrix();
  Mat hn = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h.value());
  Mat m;
  if (mask) {
    m = *mask;
    Mat blended = hn;
    for (Eigen::Index b = 0; b < hn.rows(); ++b)
      if (m(b, 0) == 0.0) blended.row(b) = h.value().row(b);
    hn = std::move(blended);
  }
  const int ixv = x.id(), ih = h.id(), iwx = wx.id(), iwh = wh.id(), ibx = bx.id(), ibh = bh.id();
  return t.Make(
      std::move(hn), {x, h, wx, wh, bx, bh},
      [=, r = std::move(r), z = std::move(z), n = std::move(n), ghn = std::move(ghn),
       m = std::move(m)](Tape& t, int self) {
        Mat gout = t.grad(self);
        const Mat& hv = t.value(ih);
        Mat dh_direct = Mat::Zero(hv.rows(), H);
        if (m.size() > 0) {
          for (Eigen::Index b = 0; b < gout.rows(); ++b)
            if (m(b, 0) == 0.0) {
              dh_direct.row(b) = gout.row(b);
              gout.row(b).setZero();
            }
        }
        Mat dn = gout.cwiseProduct((1.0 - z.array()).matrix());
        Mat dz = gout.cwiseProduct(hv - n);
        Mat dpre_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
        Mat dr = dpre_n.cwiseProduct(ghn);
        Mat dpre_r = (dr.array() * r.array() * (1.0 - r.array())).matrix();
        Mat dpre_z = (dz.array() * z.array() * (1.0 - z.array())).matrix();
        Mat dgx(hv.rows(), 3 * H), dgh(hv.rows(), 3 * H);
        dgx << dpre_r, dpre_z, dpre_n;
        dgh << dpre_r, dpre_z, dpre_n.cwiseProduct(r);
        if (t.needs_grad(ixv)) t.Accum(ixv, dgx * t.value(iwx).transpose());
        if (t.needs_grad(ih))
          t.Accum(ih, dgh * t.value(iwh).transpose() + gout.cwiseProduct(z) + dh_direct);
        t.Accum(iwx, t.value(ixv).transpose() * dgx);
        t.Accum(iwh, hv.transpose() * dgh);
        t.Accum(ibx, dgx.colwise().sum());
        t.Accum(ibh, dgh.colwise().sum());
      });
}

}  // namespace emotts::ag
