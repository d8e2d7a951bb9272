// Copyright 2026 The exitwise Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EXITWISE_AUTODIFF_HPP
#define EXITWISE_AUTODIFF_HPP

// Reverse-mode automatic differentiation over the operator set the
// architectures need: 1-D same-padded convolution, dense, ReLU, residual add,
// max-pooling (window 2), flatten, rank-1 concat, and softmax cross-entropy.
// A Tape records one forward pass eagerly and replays closures in reverse
// creation order, which is a valid reverse topological order because the
// tape is append-only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitwise/rng.hpp"
#include "exitwise/tensor.hpp"

namespace exitwise {

// ---------------------------------------------------------------------------
// Raw kernels. Activations are [L, C] row-major, conv weights [K, Cin, Cout],
// dense weights [Din, Dout]. These run both under the tape and in the
// forward-only inference path.
// ---------------------------------------------------------------------------

// Channel-axis dot product with eight explicit partial sums. Written out so
// the compiler can vectorize the reduction without reassociation flags; the
// summation order is fixed by the source, keeping replays bit-identical.
template <typename T>
T dot_product(const T* a, const T* b, int n) {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Same-padded 1-D convolution, K odd: out[l,co] = b[co] + sum_{k,ci}
// in[l+k-K/2, ci] * w[k,ci,co], zero outside [0, L).
template <typename T>
void conv1d_forward(const T* in, int L, int c_in, const T* w, int K, int c_out,
                    const T* bias, T* out) {
  const int off = K / 2;
  for (int l = 0; l < L; ++l) {
    T* out_row = out + static_cast<std::size_t>(l) * c_out;
    for (int co = 0; co < c_out; ++co) out_row[co] = bias[co];
  }
  for (int l = 0; l < L; ++l) {
    T* out_row = out + static_cast<std::size_t>(l) * c_out;
    for (int k = 0; k < K; ++k) {
      const int i = l + k - off;
      if (i < 0 || i >= L) continue;
      const T* in_row = in + static_cast<std::size_t>(i) * c_in;
      const T* w_k = w + static_cast<std::size_t>(k) * c_in * c_out;
      for (int ci = 0; ci < c_in; ++ci) {
        const T a = in_row[ci];
        const T* w_row = w_k + static_cast<std::size_t>(ci) * c_out;
        for (int co = 0; co < c_out; ++co) out_row[co] += a * w_row[co];
      }
    }
  }
}

// Accumulates into d_in (when non-null), d_w and d_b.
template <typename T>
void conv1d_backward(const T* in, int L, int c_in, const T* w, int K, int c_out,
                     const T* d_out, T* d_in, T* d_w, T* d_b) {
  const int off = K / 2;
  if (d_b != nullptr) {
    for (int l = 0; l < L; ++l) {
      const T* g_row = d_out + static_cast<std::size_t>(l) * c_out;
      for (int co = 0; co < c_out; ++co) d_b[co] += g_row[co];
    }
  }
  for (int l = 0; l < L; ++l) {
    const T* g_row = d_out + static_cast<std::size_t>(l) * c_out;
    for (int k = 0; k < K; ++k) {
      const int i = l + k - off;
      if (i < 0 || i >= L) continue;
      const T* in_row = in + static_cast<std::size_t>(i) * c_in;
      const T* w_k = w + static_cast<std::size_t>(k) * c_in * c_out;
      T* dw_k = d_w ? d_w + static_cast<std::size_t>(k) * c_in * c_out : nullptr;
      T* din_row = d_in ? d_in + static_cast<std::size_t>(i) * c_in : nullptr;
      for (int ci = 0; ci < c_in; ++ci) {
        const T a = in_row[ci];
        const T* w_row = w_k + static_cast<std::size_t>(ci) * c_out;
        if (dw_k != nullptr) {
          T* dw_row = dw_k + static_cast<std::size_t>(ci) * c_out;
          for (int co = 0; co < c_out; ++co) dw_row[co] += a * g_row[co];
        }
        if (din_row != nullptr) {
          din_row[ci] += dot_product(g_row, w_row, c_out);
        }
      }
    }
  }
}

template <typename T>
void dense_forward(const T* in, int d_in, const T* w, int d_out, const T* bias,
                   T* out) {
  for (int o = 0; o < d_out; ++o) out[o] = bias[o];
  for (int i = 0; i < d_in; ++i) {
    const T a = in[i];
    const T* w_row = w + static_cast<std::size_t>(i) * d_out;
    for (int o = 0; o < d_out; ++o) out[o] += a * w_row[o];
  }
}

template <typename T>
void dense_backward(const T* in, int d_in, const T* w, int d_out, const T* d_out_grad,
                    T* d_in_grad, T* d_w, T* d_b) {
  if (d_b != nullptr) {
    for (int o = 0; o < d_out; ++o) d_b[o] += d_out_grad[o];
  }
  for (int i = 0; i < d_in; ++i) {
    const T* w_row = w + static_cast<std::size_t>(i) * d_out;
    if (d_w != nullptr) {
      const T a = in[i];
      T* dw_row = d_w + static_cast<std::size_t>(i) * d_out;
      for (int o = 0; o < d_out; ++o) dw_row[o] += a * d_out_grad[o];
    }
    if (d_in_grad != nullptr) {
      d_in_grad[i] += dot_product(d_out_grad, w_row, d_out);
    }
  }
}

template <typename T>
void relu_forward(const T* in, std::int64_t n, T* out) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// Derivative at 0 is 0.
template <typename T>
void relu_backward(const T* in, std::int64_t n, const T* d_out, T* d_in) {
  for (std::int64_t i = 0; i < n; ++i) {
    if (in[i] > T(0)) d_in[i] += d_out[i];
  }
}

// Non-overlapping max pooling (window = stride) over [L, C]; ties keep the
// first element in the window. sel[p*C+c] records the winning offset.
template <typename T>
void maxpool_forward(const T* in, int L, int C, int window, T* out,
                     std::uint8_t* sel) {
  const int P = L / window;
  for (int p = 0; p < P; ++p) {
    const T* base = in + static_cast<std::size_t>(p) * window * C;
    T* o = out + static_cast<std::size_t>(p) * C;
    std::uint8_t* s = sel + static_cast<std::size_t>(p) * C;
    for (int c = 0; c < C; ++c) {
      o[c] = base[c];
      s[c] = 0;
    }
    for (int k = 1; k < window; ++k) {
      const T* row = base + static_cast<std::size_t>(k) * C;
      for (int c = 0; c < C; ++c) {
        if (row[c] > o[c]) {
          o[c] = row[c];
          s[c] = static_cast<std::uint8_t>(k);
        }
      }
    }
  }
}

template <typename T>
void maxpool_backward(int L, int C, int window, const std::uint8_t* sel,
                      const T* d_out, T* d_in) {
  const int P = L / window;
  for (int p = 0; p < P; ++p) {
    const T* g = d_out + static_cast<std::size_t>(p) * C;
    const std::uint8_t* s = sel + static_cast<std::size_t>(p) * C;
    T* base = d_in + static_cast<std::size_t>(p) * window * C;
    for (int c = 0; c < C; ++c) base[static_cast<std::size_t>(s[c]) * C + c] += g[c];
  }
}

// Numerically stable softmax (max subtraction).
template <typename T>
void softmax_forward(const T* logits, int n, T* probs) {
  T max_v = logits[0];
  for (int i = 1; i < n; ++i) max_v = std::max(max_v, logits[i]);
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - max_v);
    sum += probs[i];
  }
  const T inv = T(1) / sum;
  for (int i = 0; i < n; ++i) probs[i] *= inv;
}

// ---------------------------------------------------------------------------
// Parameters and tape
// ---------------------------------------------------------------------------

template <typename T = float>
struct Variable {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Variable(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros(value.shape)) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T = float>
class Tape {
 public:
  using Id = int;

  // grad_enabled=false records values only: no gradient buffers, no backward
  // closures. Evaluation paths use this to skip bookkeeping entirely.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // Constant leaf (no gradient tracked).
  Id input(Tensor<T> v) { return push(std::move(v), /*needs_grad=*/false); }

  // Leaf whose gradient is wanted (e.g. d loss / d input in tests).
  Id leaf(Tensor<T> v) { return push(std::move(v), /*needs_grad=*/true); }

  const Tensor<T>& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Valid after backward(); only nodes created with needs_grad carry one.
  const Tensor<T>& grad(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) throw std::logic_error("tape: node has no gradient");
    return n.grad;
  }

  Id conv1d(Id x, Variable<T>* w, Variable<T>* b) {
    const Tensor<T>& in = value(x);
    require(in.rank() == 2, "conv1d: input must be [L, C]");
    const int L = in.dim(0), c_in = in.dim(1);
    require(w->value.rank() == 3, "conv1d: weights must be [K, Cin, Cout]");
    const int K = w->value.dim(0), c_out = w->value.dim(2);
    require(K % 2 == 1, "conv1d: kernel size must be odd");
    require(w->value.dim(1) == c_in, "conv1d: Cin mismatch");
    require(b->value.rank() == 1 && b->value.dim(0) == c_out, "conv1d: bias shape");
    Tensor<T> out = Tensor<T>::zeros({L, c_out});
    conv1d_forward(in.data.data(), L, c_in, w->value.data.data(), K, c_out,
                   b->value.data.data(), out.data.data());
    flops_ += static_cast<std::int64_t>(K) * c_in * c_out * L +
              static_cast<std::int64_t>(c_out) * L;
    const bool ng = grad_enabled_ && (node_needs_grad(x) || !w->frozen || !b->frozen);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, x, w, b, L, c_in, K, c_out]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(x)];
        conv1d_backward(xn.value.data.data(), L, c_in, w->value.data.data(), K,
                        c_out, self.grad.data.data(),
                        xn.grad.data.empty() ? nullptr : xn.grad.data.data(),
                        w->frozen ? nullptr : w->grad.data.data(),
                        b->frozen ? nullptr : b->grad.data.data());
      });
    }
    return id;
  }

  Id dense(Id x, Variable<T>* w, Variable<T>* b) {
    const Tensor<T>& in = value(x);
    require(in.rank() == 1, "dense: input must be rank-1");
    const int d_in = in.dim(0);
    require(w->value.rank() == 2 && w->value.dim(0) == d_in, "dense: weight shape");
    const int d_out = w->value.dim(1);
    require(b->value.rank() == 1 && b->value.dim(0) == d_out, "dense: bias shape");
    Tensor<T> out = Tensor<T>::zeros({d_out});
    dense_forward(in.data.data(), d_in, w->value.data.data(), d_out,
                  b->value.data.data(), out.data.data());
    flops_ += static_cast<std::int64_t>(d_in) * d_out + d_out;
    const bool ng = grad_enabled_ && (node_needs_grad(x) || !w->frozen || !b->frozen);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, x, w, b, d_in, d_out]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(x)];
        dense_backward(xn.value.data.data(), d_in, w->value.data.data(), d_out,
                       self.grad.data.data(),
                       xn.grad.data.empty() ? nullptr : xn.grad.data.data(),
                       w->frozen ? nullptr : w->grad.data.data(),
                       b->frozen ? nullptr : b->grad.data.data());
      });
    }
    return id;
  }

  Id relu(Id x) {
    const Tensor<T>& in = value(x);
    Tensor<T> out = Tensor<T>::zeros(in.shape);
    relu_forward(in.data.data(), in.size(), out.data.data());
    const bool ng = node_needs_grad(x);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, x]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(x)];
        relu_backward(xn.value.data.data(), xn.value.size(),
                      self.grad.data.data(), xn.grad.data.data());
      });
    }
    return id;
  }

  Id add(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    require(va.same_shape(vb), "add: shape mismatch");
    Tensor<T> out = Tensor<T>::zeros(va.shape);
    for (std::int64_t i = 0; i < va.size(); ++i) out.data[i] = va.data[i] + vb.data[i];
    const bool ng = node_needs_grad(a) || node_needs_grad(b);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, a, b]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        for (Id p : {a, b}) {
          Node& pn = nodes_[static_cast<std::size_t>(p)];
          if (pn.grad.data.empty()) continue;
          for (std::int64_t i = 0; i < self.grad.size(); ++i) {
            pn.grad.data[i] += self.grad.data[i];
          }
        }
      });
    }
    return id;
  }

  Id maxpool(Id x, int window) {
    const Tensor<T>& in = value(x);
    require(in.rank() == 2, "maxpool: input must be [L, C]");
    const int L = in.dim(0), C = in.dim(1);
    require(window >= 2 && window <= 255, "maxpool: window out of range");
    require(L % window == 0, "maxpool: window must divide length");
    Tensor<T> out = Tensor<T>::zeros({L / window, C});
    auto sel = std::make_shared<std::vector<std::uint8_t>>(
        static_cast<std::size_t>(L / window) * C);
    maxpool_forward(in.data.data(), L, C, window, out.data.data(), sel->data());
    const bool ng = node_needs_grad(x);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, x, L, C, window, sel]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(x)];
        maxpool_backward(L, C, window, sel->data(), self.grad.data.data(),
                         xn.grad.data.data());
      });
    }
    return id;
  }

  Id flatten(Id x) {
    const Tensor<T>& in = value(x);
    Tensor<T> out({static_cast<int>(in.size())}, in.data);
    const bool ng = node_needs_grad(x);
    const Id id = push(std::move(out), ng);
    if (ng) {
      set_back(id, [this, id, x]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(x)];
        for (std::int64_t i = 0; i < self.grad.size(); ++i) {
          xn.grad.data[i] += self.grad.data[i];
        }
      });
    }
    return id;
  }

  // Rank-1 concatenation preserving operand order.
  Id concat(const std::vector<Id>& xs) {
    require(!xs.empty(), "concat: no operands");
    int total = 0;
    bool ng = false;
    for (Id x : xs) {
      require(value(x).rank() == 1, "concat: operands must be rank-1");
      total += value(x).dim(0);
      ng = ng || node_needs_grad(x);
    }
    Tensor<T> out = Tensor<T>::zeros({total});
    int pos = 0;
    for (Id x : xs) {
      const Tensor<T>& v = value(x);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + pos);
      pos += v.dim(0);
    }
    const Id id = push(std::move(out), ng);
    if (ng) {
      auto parts = std::make_shared<std::vector<Id>>(xs);
      set_back(id, [this, id, parts]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        int at = 0;
        for (Id x : *parts) {
          Node& xn = nodes_[static_cast<std::size_t>(x)];
          const int n = xn.value.dim(0);
          if (!xn.grad.data.empty()) {
            for (int i = 0; i < n; ++i) xn.grad.data[i] += self.grad.data[at + i];
          }
          at += n;
        }
      });
    }
    return id;
  }

  struct SoftmaxXentResult {
    Id loss;
    Tensor<T> probs;
  };

  // probs = softmax(logits), loss = -ln probs[label]. The gradient flows to
  // the logits as probs - onehot(label).
  SoftmaxXentResult softmax_cross_entropy(Id logits, int label) {
    const Tensor<T>& in = value(logits);
    require(in.rank() == 1 && in.dim(0) >= 2, "softmax_cross_entropy: need M >= 2 logits");
    const int M = in.dim(0);
    require(label >= 0 && label < M, "softmax_cross_entropy: label out of range");
    Tensor<T> probs = Tensor<T>::zeros({M});
    softmax_forward(in.data.data(), M, probs.data.data());
    Tensor<T> loss = Tensor<T>::zeros({1});
    // Clamp to avoid -inf on hard-zero probabilities (extreme logits in f32).
    const T p = std::max(probs.data[static_cast<std::size_t>(label)],
                         std::numeric_limits<T>::min());
    loss.data[0] = -std::log(p);
    const bool ng = node_needs_grad(logits);
    const Id id = push(std::move(loss), ng);
    if (ng) {
      auto saved = std::make_shared<Tensor<T>>(probs);
      set_back(id, [this, id, logits, label, saved]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        Node& xn = nodes_[static_cast<std::size_t>(logits)];
        const T g = self.grad.data[0];
        for (int i = 0; i < saved->dim(0); ++i) {
          const T onehot = (i == label) ? T(1) : T(0);
          xn.grad.data[static_cast<std::size_t>(i)] += g * (saved->data[static_cast<std::size_t>(i)] - onehot);
        }
      });
    }
    return {id, std::move(probs)};
  }

  // Sum of scalar nodes (the joint loss over exits).
  Id add_scalars(const std::vector<Id>& xs) {
    require(!xs.empty(), "add_scalars: no operands");
    T sum = T(0);
    bool ng = false;
    for (Id x : xs) {
      require(value(x).size() == 1, "add_scalars: operands must be scalar");
      sum += value(x).data[0];
      ng = ng || node_needs_grad(x);
    }
    Tensor<T> out = Tensor<T>::zeros({1});
    out.data[0] = sum;
    const Id id = push(std::move(out), ng);
    if (ng) {
      auto parts = std::make_shared<std::vector<Id>>(xs);
      set_back(id, [this, id, parts]() {
        Node& self = nodes_[static_cast<std::size_t>(id)];
        for (Id x : *parts) {
          Node& xn = nodes_[static_cast<std::size_t>(x)];
          if (!xn.grad.data.empty()) xn.grad.data[0] += self.grad.data[0];
        }
      });
    }
    return id;
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse
  // creation order (reverse topological order on an append-only tape), each
  // exactly once. Accumulates into unfrozen Variable::grad buffers.
  void backward(Id loss) {
    Node& ln = nodes_[static_cast<std::size_t>(loss)];
    require(ln.value.size() == 1, "backward: loss must be scalar");
    if (ln.grad.data.empty()) return;  // disconnected from every parameter
    ln.grad.data[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) n.back();
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Forward FLOPs executed so far, under the shared convention: one FLOP per
  // multiply-accumulate plus bias adds; everything else free.
  std::int64_t flops() const { return flops_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty when needs_grad is false
    std::function<void()> back;
  };

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  bool node_needs_grad(Id id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.data.empty();
  }

  Id push(Tensor<T> v, bool needs_grad) {
    Node n;
    if (needs_grad && grad_enabled_) n.grad = Tensor<T>::zeros(v.shape);
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  void set_back(Id id, std::function<void()> fn) {
    nodes_[static_cast<std::size_t>(id)].back = std::move(fn);
  }

  bool grad_enabled_ = true;
  std::int64_t flops_ = 0;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int entries_checked = 0;
};

// Compares analytic gradients already stored in each variable's grad buffer
// against central finite differences of loss_fn. loss_fn must re-run the
// forward pass with the variables' current values. subsample_fraction < 1
// checks a random subset of entries.
template <typename T, typename LossFn>
GradCheckReport grad_check(const std::vector<Variable<T>*>& params, LossFn&& loss_fn,
                           double h, double subsample_fraction = 1.0,
                           std::uint64_t subsample_seed = 0) {
  GradCheckReport report;
  Rng rng(subsample_seed);
  for (Variable<T>* var : params) {
    for (std::size_t i = 0; i < var->value.data.size(); ++i) {
      if (subsample_fraction < 1.0 && rng.uniform() >= subsample_fraction) continue;
      const T saved = var->value.data[i];
      var->value.data[i] = saved + static_cast<T>(h);
      const double up = loss_fn();
      var->value.data[i] = saved - static_cast<T>(h);
      const double down = loss_fn();
      var->value.data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = static_cast<double>(var->grad.data[i]);
      const double abs_err = std::abs(fd - analytic);
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
      ++report.entries_checked;
    }
  }
  return report;
}

}  // namespace exitwise

#endif  // EXITWISE_AUTODIFF_HPP
