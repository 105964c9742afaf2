// Copyright 2026 Sonamix Authors
// Tape-based reverse-mode automatic differentiation on row-major matrices.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sonamix/common.hpp"
#include "sonamix/rng.hpp"
#include "sonamix/tensor.hpp"

namespace sonamix::ag {

using sonamix::Mat;

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // lazily allocated; empty means no gradient flow reached it
  bool requires_grad = false;
  std::function<void()> backward;

  void ensure_grad() {
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
  }
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

// A dynamic computation graph. Ops append nodes in creation order, which is a
// valid topological order for the reverse sweep. When `grad_enabled` is false
// nothing is recorded and intermediates are freed as their Vars go out of
// scope (inference mode). FLOPs are counted analytically per op either way.
template <typename S>
class Graph {
 public:
  bool training = false;     // enables dropout
  bool grad_enabled = true;  // records the tape
  Rng* dropout_rng = nullptr;

  uint64_t flops() const { return flops_; }
  void reset_flops() { flops_ = 0; }

  Var<S> input(Mat<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    return n;
  }

  Var<S> param(const Mat<S>& v) {
    auto n = std::make_shared<Node<S>>();
    n->value = v;
    n->requires_grad = true;
    return n;
  }

  // ---- elementwise -------------------------------------------------------

  Var<S> add(Var<S> a, Var<S> b) {
    check_same_shape(a, b, "add");
    auto out = make(a->value + b->value, {a, b});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
        if (b->requires_grad) { b->ensure_grad(); b->grad += self->grad; }
      };
    }
    return out;
  }

  Var<S> sub(Var<S> a, Var<S> b) {
    check_same_shape(a, b, "sub");
    auto out = make(a->value - b->value, {a, b});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
        if (b->requires_grad) { b->ensure_grad(); b->grad -= self->grad; }
      };
    }
    return out;
  }

  Var<S> mul(Var<S> a, Var<S> b) {
    check_same_shape(a, b, "mul");
    auto out = make(a->value.cwiseProduct(b->value), {a, b});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad.cwiseProduct(b->value); }
        if (b->requires_grad) { b->ensure_grad(); b->grad += self->grad.cwiseProduct(a->value); }
      };
    }
    return out;
  }

  Var<S> scale(Var<S> a, S c) {
    auto out = make(a->value * c, {a});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, c] {
        if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad * c; }
      };
    }
    return out;
  }

  // Adds a 1 x D row vector to every row of a T x D matrix.
  Var<S> add_row(Var<S> a, Var<S> row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols())
      throw ConfigError("add_row: shape mismatch");
    auto out = make(a->value.rowwise() + row->value.row(0), {a, row});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, row] {
        if (a->requires_grad) { a->ensure_grad(); a->grad += self->grad; }
        if (row->requires_grad) {
          row->ensure_grad();
          row->grad.row(0) += self->grad.colwise().sum();
        }
      };
    }
    return out;
  }

  // ---- matrix products ---------------------------------------------------

  Var<S> matmul(Var<S> a, Var<S> b) {
    if (a->value.cols() != b->value.rows()) throw ConfigError("matmul: inner dims differ");
    auto out = make((a->value * b->value).eval(), {a, b});
    flops_ += 2ull * a->value.rows() * a->value.cols() * b->value.cols();
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) {
          a->ensure_grad();
          a->grad.noalias() += self->grad * b->value.transpose();
        }
        if (b->requires_grad) {
          b->ensure_grad();
          b->grad.noalias() += a->value.transpose() * self->grad;
        }
      };
    }
    return out;
  }

  // a (n x k) times b^T (k x m) where b is stored m x k.
  Var<S> matmul_nt(Var<S> a, Var<S> b) {
    if (a->value.cols() != b->value.cols()) throw ConfigError("matmul_nt: inner dims differ");
    auto out = make((a->value * b->value.transpose()).eval(), {a, b});
    flops_ += 2ull * a->value.rows() * a->value.cols() * b->value.rows();
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) {
          a->ensure_grad();
          a->grad.noalias() += self->grad * b->value;
        }
        if (b->requires_grad) {
          b->ensure_grad();
          b->grad.noalias() += self->grad.transpose() * a->value;
        }
      };
    }
    return out;
  }

  // x (T x in) through a weight stored out x in, plus bias 1 x out.
  Var<S> linear(Var<S> x, Var<S> w, Var<S> b) { return add_row(matmul_nt(x, w), b); }

  // ---- activations -------------------------------------------------------

  Var<S> gelu(Var<S> a) {
    Mat<S> y = a->value.unaryExpr([](S x) {
      return static_cast<S>(0.5 * double(x) * (1.0 + std::erf(double(x) * M_SQRT1_2)));
    });
    auto out = make(std::move(y), {a});
    flops_ += 8ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        Mat<S> d = a->value.unaryExpr([](S xs) {
          double x = double(xs);
          double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
          double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
          return static_cast<S>(cdf + x * pdf);
        });
        a->grad += self->grad.cwiseProduct(d);
      };
    }
    return out;
  }

  Var<S> sigmoid(Var<S> a) {
    Mat<S> y = a->value.unaryExpr([](S x) { return static_cast<S>(1.0 / (1.0 + std::exp(-double(x)))); });
    auto out = make(std::move(y), {a});
    flops_ += 3ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        Mat<S> d = self->value.cwiseProduct((Mat<S>::Ones(self->value.rows(), self->value.cols()) - self->value));
        a->grad += self->grad.cwiseProduct(d);
      };
    }
    return out;
  }

  Var<S> silu(Var<S> a) {
    Mat<S> y = a->value.unaryExpr([](S xs) {
      double x = double(xs);
      return static_cast<S>(x / (1.0 + std::exp(-x)));
    });
    auto out = make(std::move(y), {a});
    flops_ += 4ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        Mat<S> d = a->value.unaryExpr([](S xs) {
          double x = double(xs);
          double s = 1.0 / (1.0 + std::exp(-x));
          return static_cast<S>(s * (1.0 + x * (1.0 - s)));
        });
        a->grad += self->grad.cwiseProduct(d);
      };
    }
    return out;
  }

  // ---- normalization and softmax -----------------------------------------

  Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    const auto T = x->value.rows();
    const auto D = x->value.cols();
    if (gamma->value.rows() != 1 || gamma->value.cols() != D || beta->value.rows() != 1 ||
        beta->value.cols() != D)
      throw ConfigError("layer_norm: affine shape mismatch");
    Mat<S> xhat(T, D), y(T, D);
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(T);
    for (Eigen::Index t = 0; t < T; ++t) {
      S mu = x->value.row(t).mean();
      auto centered = (x->value.row(t).array() - mu).eval();
      S var = centered.square().sum() / static_cast<S>(D);
      S is = S(1) / std::sqrt(var + eps);
      inv_std(t) = is;
      xhat.row(t) = centered * is;
      y.row(t) = xhat.row(t).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
    }
    auto out = make(std::move(y), {x, gamma, beta});
    flops_ += 8ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const auto T = x->value.rows();
        const auto D = x->value.cols();
        if (beta->requires_grad) {
          beta->ensure_grad();
          beta->grad.row(0) += self->grad.colwise().sum();
        }
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          gamma->grad.row(0) += self->grad.cwiseProduct(xhat).colwise().sum();
        }
        if (x->requires_grad) {
          x->ensure_grad();
          for (Eigen::Index t = 0; t < T; ++t) {
            auto gy = self->grad.row(t).cwiseProduct(gamma->value.row(0)).eval();
            S m1 = gy.mean();
            S m2 = gy.cwiseProduct(xhat.row(t)).mean();
            x->grad.row(t) +=
                (gy.array() - m1 - xhat.row(t).array() * m2).matrix() * inv_std(t);
          }
          (void)D;
        }
      };
    }
    return out;
  }

  Var<S> softmax_rows(Var<S> x) {
    Mat<S> y(x->value.rows(), x->value.cols());
    for (Eigen::Index t = 0; t < x->value.rows(); ++t) {
      S mx = x->value.row(t).maxCoeff();
      auto e = (x->value.row(t).array() - mx).exp().eval();
      y.row(t) = (e / e.sum()).matrix();
    }
    auto out = make(std::move(y), {x});
    flops_ += 5ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (Eigen::Index t = 0; t < x->value.rows(); ++t) {
          S dot = self->grad.row(t).cwiseProduct(self->value.row(t)).sum();
          x->grad.row(t) +=
              self->value.row(t).cwiseProduct((self->grad.row(t).array() - dot).matrix());
        }
      };
    }
    return out;
  }

  // ---- reductions and shape ops ------------------------------------------

  // Column means over time: T x D -> 1 x D. Counted as T*D flops
  // ((T-1) adds plus one scale per column), keeping block FLOP totals exactly
  // proportional to T.
  Var<S> mean_rows(Var<S> x) {
    if (x->value.rows() == 0) throw InputError("mean_rows: empty input");
    Mat<S> y = x->value.colwise().mean();
    auto out = make(std::move(y), {x});
    flops_ += numel(x);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        S inv = S(1) / static_cast<S>(x->value.rows());
        x->grad += (self->grad.row(0) * inv).colwise().replicate(x->value.rows());
      };
    }
    return out;
  }

  Var<S> broadcast_row(Var<S> row, Eigen::Index rows) {
    if (row->value.rows() != 1) throw ConfigError("broadcast_row: input must be 1 x D");
    Mat<S> y = row->value.colwise().replicate(rows);
    auto out = make(std::move(y), {row});
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, row] {
        if (!row->requires_grad) return;
        row->ensure_grad();
        row->grad.row(0) += self->grad.colwise().sum();
      };
    }
    return out;
  }

  Var<S> concat_cols(Var<S> a, Var<S> b) {
    if (a->value.rows() != b->value.rows()) throw ConfigError("concat_cols: row mismatch");
    Mat<S> y(a->value.rows(), a->value.cols() + b->value.cols());
    y.leftCols(a->value.cols()) = a->value;
    y.rightCols(b->value.cols()) = b->value;
    auto out = make(std::move(y), {a, b});
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, a, b] {
        if (a->requires_grad) {
          a->ensure_grad();
          a->grad += self->grad.leftCols(a->value.cols());
        }
        if (b->requires_grad) {
          b->ensure_grad();
          b->grad += self->grad.rightCols(b->value.cols());
        }
      };
    }
    return out;
  }

  Var<S> slice_cols(Var<S> x, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || len < 0 || start + len > x->value.cols())
      throw ConfigError("slice_cols: out of range");
    Mat<S> y = x->value.middleCols(start, len);
    auto out = make(std::move(y), {x});
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x, start, len] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad.middleCols(start, len) += self->grad;
      };
    }
    return out;
  }

  Var<S> sum_all(Var<S> x) {
    Mat<S> y(1, 1);
    y(0, 0) = x->value.sum();
    auto out = make(std::move(y), {x});
    flops_ += numel(x);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad.array() += self->grad(0, 0);
      };
    }
    return out;
  }

  // ---- position encoding --------------------------------------------------

  // Rotary encoding on a T x D matrix (one attention head): consecutive pairs
  // (2i, 2i+1) are rotated by angle (pos_offset + t) * base^(-2i/D). Rotations
  // are orthogonal, so the backward pass applies the inverse rotation.
  Var<S> rotary(Var<S> x, Eigen::Index pos_offset = 0, double base = 10000.0) {
    const auto T = x->value.rows();
    const auto D = x->value.cols();
    if (D % 2 != 0) throw ConfigError("rotary: head dimension must be even");
    Mat<S> y(T, D);
    rotate_into(x->value, y, T, D, pos_offset, base, /*inverse=*/false);
    auto out = make(std::move(y), {x});
    flops_ += 3ull * numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [this, self, x, pos_offset, base] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        Mat<S> gx(self->grad.rows(), self->grad.cols());
        rotate_into(self->grad, gx, self->grad.rows(), self->grad.cols(), pos_offset, base,
                    /*inverse=*/true);
        x->grad += gx;
      };
    }
    return out;
  }

  // ---- convolutions --------------------------------------------------------

  // Unfolds a T x C sequence into sliding patches of `kernel` steps taken at
  // `stride`, zero-padded by pad_l / pad_r. Output is T_out x (kernel * C)
  // with column index k * C + c. Combined with matmul_nt this gives a strided
  // 1-D convolution whose backward comes for free.
  Var<S> im2col(Var<S> x, int kernel, int stride, int pad_l, int pad_r) {
    const auto T = x->value.rows();
    const auto C = x->value.cols();
    if (kernel <= 0 || stride <= 0) throw ConfigError("im2col: kernel and stride must be positive");
    const Eigen::Index padded = T + pad_l + pad_r;
    if (padded < kernel) throw InputError("im2col: input shorter than kernel");
    const Eigen::Index T_out = (padded - kernel) / stride + 1;
    Mat<S> y = Mat<S>::Zero(T_out, static_cast<Eigen::Index>(kernel) * C);
    for (Eigen::Index t = 0; t < T_out; ++t) {
      const Eigen::Index base = t * stride - pad_l;
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = base + k;
        if (src < 0 || src >= T) continue;
        y.row(t).segment(static_cast<Eigen::Index>(k) * C, C) = x->value.row(src);
      }
    }
    auto out = make(std::move(y), {x});
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x, kernel, stride, pad_l] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const auto T = x->value.rows();
        const auto C = x->value.cols();
        for (Eigen::Index t = 0; t < self->value.rows(); ++t) {
          const Eigen::Index base = t * stride - pad_l;
          for (int k = 0; k < kernel; ++k) {
            const Eigen::Index src = base + k;
            if (src < 0 || src >= T) continue;
            x->grad.row(src) += self->grad.row(t).segment(static_cast<Eigen::Index>(k) * C, C);
          }
        }
      };
    }
    return out;
  }

  // Depthwise temporal convolution with same-length output (odd kernel).
  // Weight is k x C (tap j, channel c), bias 1 x C.
  Var<S> depthwise_conv(Var<S> x, Var<S> w, Var<S> b) {
    const auto T = x->value.rows();
    const auto C = x->value.cols();
    const auto K = w->value.rows();
    if (K % 2 == 0) throw ConfigError("depthwise_conv: kernel must be odd");
    if (w->value.cols() != C || b->value.cols() != C || b->value.rows() != 1)
      throw ConfigError("depthwise_conv: weight/bias shape mismatch");
    const Eigen::Index H = (K - 1) / 2;
    Mat<S> y(T, C);
    for (Eigen::Index t = 0; t < T; ++t) {
      y.row(t) = b->value.row(0);
      for (Eigen::Index j = 0; j < K; ++j) {
        const Eigen::Index src = t + j - H;
        if (src < 0 || src >= T) continue;
        y.row(t) += x->value.row(src).cwiseProduct(w->value.row(j));
      }
    }
    auto out = make(std::move(y), {x, w, b});
    flops_ += 2ull * T * C * K;
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x, w, b] {
        const auto T = x->value.rows();
        const auto K = w->value.rows();
        const Eigen::Index H = (K - 1) / 2;
        if (b->requires_grad) {
          b->ensure_grad();
          b->grad.row(0) += self->grad.colwise().sum();
        }
        for (Eigen::Index t = 0; t < T; ++t) {
          for (Eigen::Index j = 0; j < K; ++j) {
            const Eigen::Index src = t + j - H;
            if (src < 0 || src >= T) continue;
            if (x->requires_grad) {
              x->ensure_grad();
              x->grad.row(src) += self->grad.row(t).cwiseProduct(w->value.row(j));
            }
            if (w->requires_grad) {
              w->ensure_grad();
              w->grad.row(j) += self->grad.row(t).cwiseProduct(x->value.row(src));
            }
          }
        }
      };
    }
    return out;
  }

  // ---- regularization ------------------------------------------------------

  // Inverted dropout; identity when the graph is not in training mode.
  Var<S> dropout(Var<S> x, double p) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
    if (dropout_rng == nullptr) throw ConfigError("dropout: graph has no rng");
    Mat<S> mask(x->value.rows(), x->value.cols());
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        mask(i, j) = dropout_rng->uniform() < p ? S(0) : keep_scale;
    auto out = make(x->value.cwiseProduct(mask), {x});
    flops_ += numel(out);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, x, mask = std::move(mask)] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += self->grad.cwiseProduct(mask);
      };
    }
    return out;
  }

  // ---- losses ---------------------------------------------------------------

  // Mean cross-entropy from logits over the given rows only, via the
  // log-sum-exp form. Rows outside `rows` contribute nothing and receive an
  // exactly zero gradient (they are never touched).
  Var<S> masked_cross_entropy(Var<S> logits, const std::vector<int>& targets,
                              const std::vector<int>& rows) {
    const auto T = logits->value.rows();
    const auto V = logits->value.cols();
    if (static_cast<Eigen::Index>(targets.size()) != T)
      throw InputError("masked_cross_entropy: target length mismatch");
    for (int r : rows)
      if (r < 0 || r >= T) throw InputError("masked_cross_entropy: masked index out of range");
    Mat<S> y = Mat<S>::Zero(1, 1);
    for (int r : rows) {
      S mx = logits->value.row(r).maxCoeff();
      S lse = mx + std::log((logits->value.row(r).array() - mx).exp().sum());
      y(0, 0) += lse - logits->value(r, targets[static_cast<size_t>(r)]);
    }
    if (!rows.empty()) y(0, 0) /= static_cast<S>(rows.size());
    auto out = make(std::move(y), {logits});
    flops_ += 4ull * rows.size() * static_cast<uint64_t>(V);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, logits, targets, rows] {
        if (!logits->requires_grad || rows.empty()) return;
        logits->ensure_grad();
        const S g = self->grad(0, 0) / static_cast<S>(rows.size());
        for (int r : rows) {
          S mx = logits->value.row(r).maxCoeff();
          auto e = (logits->value.row(r).array() - mx).exp().eval();
          auto p = (e / e.sum()).eval();
          logits->grad.row(r) += (p * g).matrix();
          logits->grad(r, targets[static_cast<size_t>(r)]) -= g;
        }
      };
    }
    return out;
  }

  // Mean squared error over the given rows (mean over rows and columns).
  Var<S> masked_mse(Var<S> pred, const Mat<S>& target, const std::vector<int>& rows) {
    const auto T = pred->value.rows();
    const auto D = pred->value.cols();
    if (target.rows() != T || target.cols() != D)
      throw InputError("masked_mse: target shape mismatch");
    for (int r : rows)
      if (r < 0 || r >= T) throw InputError("masked_mse: masked index out of range");
    Mat<S> y = Mat<S>::Zero(1, 1);
    for (int r : rows) y(0, 0) += (pred->value.row(r) - target.row(r)).squaredNorm();
    if (!rows.empty()) y(0, 0) /= static_cast<S>(rows.size()) * static_cast<S>(D);
    auto out = make(std::move(y), {pred});
    flops_ += 4ull * rows.size() * static_cast<uint64_t>(D);
    if (recording(out)) {
      Node<S>* self = out.get();
      out->backward = [self, pred, target, rows] {
        if (!pred->requires_grad || rows.empty()) return;
        pred->ensure_grad();
        const auto D = pred->value.cols();
        const S g = self->grad(0, 0) * S(2) / (static_cast<S>(rows.size()) * static_cast<S>(D));
        for (int r : rows) pred->grad.row(r) += (pred->value.row(r) - target.row(r)) * g;
      };
    }
    return out;
  }

  // ---- reverse sweep --------------------------------------------------------

  void backward(const Var<S>& loss) {
    if (!grad_enabled) throw ConfigError("backward: graph recorded no tape");
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
      throw ConfigError("backward: loss must be a 1 x 1 scalar");
    loss->ensure_grad();
    loss->grad(0, 0) = S(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<S>* n = it->get();
      if (n->backward && n->grad.size() != 0) n->backward();
    }
  }

 private:
  std::vector<Var<S>> order_;
  uint64_t flops_ = 0;

  static uint64_t numel(const Var<S>& v) { return static_cast<uint64_t>(v->value.size()); }

  static void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
      throw ConfigError(std::string(op) + ": shape mismatch");
  }

  Var<S> make(Mat<S> value, std::initializer_list<Var<S>> parents) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (!grad_enabled) n->requires_grad = false;
    if (n->requires_grad) order_.push_back(n);
    return n;
  }

  // Whether a backward closure should be attached to this node.
  bool recording(const Var<S>& n) const { return grad_enabled && n->requires_grad; }

  static void rotate_into(const Mat<S>& src, Mat<S>& dst, Eigen::Index T, Eigen::Index D,
                          Eigen::Index pos_offset, double base, bool inverse) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const double pos = static_cast<double>(pos_offset + t);
      for (Eigen::Index i = 0; i < D / 2; ++i) {
        double theta = pos * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(D));
        if (inverse) theta = -theta;
        const S c = static_cast<S>(std::cos(theta));
        const S s = static_cast<S>(std::sin(theta));
        const S a = src(t, 2 * i);
        const S b = src(t, 2 * i + 1);
        dst(t, 2 * i) = c * a - s * b;
        dst(t, 2 * i + 1) = s * a + c * b;
      }
    }
  }
};

}  // namespace sonamix::ag
