#pragma once

#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fieldrecon/common.hpp"

namespace fieldrecon::net {

/// Node in a dynamically built reverse-mode graph. Values and gradients are
/// flat row-major arrays; `shape` carries the logical dims. Graphs are built
/// per forward call and torn down with the shared_ptrs.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Tensor>> parents;
  std::function<void()> backward_fn;  // reads this->grad, accumulates into parents
  bool backward_done = false;

  Eigen::Index size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<S>::Zero(value.size());
  }
};

template <typename S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

inline Eigen::Index numel(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  return n;
}

template <typename S>
TensorPtr<S> make_leaf(std::vector<int> shape, ArrayX<S> value, bool requires_grad = false) {
  require(numel(shape) == value.size(), "make_leaf: shape/value mismatch");
  auto t = std::make_shared<Tensor<S>>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  return t;
}

template <typename S>
TensorPtr<S> make_node(std::vector<int> shape, ArrayX<S> value,
                       std::vector<TensorPtr<S>> parents) {
  require(numel(shape) == value.size(), "make_node: shape/value mismatch");
  auto t = std::make_shared<Tensor<S>>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->parents = std::move(parents);
  for (const auto& p : t->parents) t->requires_grad = t->requires_grad || p->requires_grad;
  return t;
}

/// Accumulates `g` into the parent's gradient if it participates in autodiff.
template <typename S, typename Expr>
void accum(const TensorPtr<S>& p, const Expr& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  p->grad += g;
}

/// Reverse-mode sweep from a scalar loss. Topological order via iterative
/// DFS; each node's backward_fn runs exactly once. A second call on the same
/// graph is an error (intermediate values may have been consumed).
template <typename S>
void backward(const TensorPtr<S>& loss) {
  require(loss->size() == 1, "backward: loss must be scalar");
  require(!loss->backward_done, "backward: graph already differentiated; re-run forward first");
  loss->backward_done = true;

  std::vector<Tensor<S>*> order;
  std::unordered_set<Tensor<S>*> seen;
  std::vector<std::pair<Tensor<S>*, size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Tensor<S>* child = node->parents[next_child].get();
      ++next_child;
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor<S>* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn();
  }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

template <typename S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape == b->shape, "add: shape mismatch");
  auto out = make_node<S>(a->shape, a->value + b->value, {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b] {
      accum(a, self->grad);
      accum(b, self->grad);
    };
  }
  return out;
}

template <typename S>
TensorPtr<S> sub(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape == b->shape, "sub: shape mismatch");
  auto out = make_node<S>(a->shape, a->value - b->value, {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b] {
      accum(a, self->grad);
      accum(b, -self->grad);
    };
  }
  return out;
}

template <typename S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape == b->shape, "mul: shape mismatch");
  auto out = make_node<S>(a->shape, a->value * b->value, {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b] {
      accum(a, self->grad * b->value);
      accum(b, self->grad * a->value);
    };
  }
  return out;
}

template <typename S>
TensorPtr<S> scale(const TensorPtr<S>& a, S s) {
  auto out = make_node<S>(a->shape, a->value * s, {a});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, s] { accum(a, self->grad * s); };
  }
  return out;
}

template <typename S>
TensorPtr<S> add_scalar(const TensorPtr<S>& a, S s) {
  auto out = make_node<S>(a->shape, a->value + s, {a});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a] { accum(a, self->grad); };
  }
  return out;
}

template <typename S>
TensorPtr<S> silu(const TensorPtr<S>& a) {
  ArrayX<S> sig = (S(1) / (S(1) + (-a->value).exp()));
  auto out = make_node<S>(a->shape, a->value * sig, {a});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, sig] {
      accum(a, self->grad * sig * (S(1) + a->value * (S(1) - sig)));
    };
  }
  return out;
}

template <typename S>
TensorPtr<S> sum(const TensorPtr<S>& a) {
  ArrayX<S> v(1);
  v[0] = a->value.sum();
  auto out = make_node<S>({1}, std::move(v), {a});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a] { accum(a, ArrayX<S>::Constant(a->size(), self->grad[0])); };
  }
  return out;
}

template <typename S>
TensorPtr<S> mean(const TensorPtr<S>& a) {
  return scale(sum(a), S(1) / S(a->size()));
}

/// Weighted sum against a fixed (non-differentiated) weight array.
template <typename S>
TensorPtr<S> weighted_sum(const TensorPtr<S>& a, const ArrayX<S>& w) {
  require(a->size() == w.size(), "weighted_sum: weight size mismatch");
  ArrayX<S> v(1);
  v[0] = (a->value * w).sum();
  auto out = make_node<S>({1}, std::move(v), {a});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, w] { accum(a, w * self->grad[0]); };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix ops (2D tensors {rows, cols}, row-major)

template <typename S>
Eigen::Map<const RowMajorMatrix<S>> as_matrix(const TensorPtr<S>& t) {
  require(t->shape.size() == 2, "as_matrix: tensor is not 2D");
  return {t->value.data(), t->shape[0], t->shape[1]};
}

template <typename S>
TensorPtr<S> matmul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[0],
          "matmul: incompatible shapes");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  ArrayX<S> v(Eigen::Index(m) * n);
  Eigen::Map<RowMajorMatrix<S>>(v.data(), m, n).noalias() = as_matrix(a) * as_matrix(b);
  auto out = make_node<S>({m, n}, std::move(v), {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b, m, k, n] {
      Eigen::Map<const RowMajorMatrix<S>> dy(self->grad.data(), m, n);
      if (a->requires_grad) {
        a->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(a->grad.data(), m, k).noalias() += dy * as_matrix(b).transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(b->grad.data(), k, n).noalias() += as_matrix(a).transpose() * dy;
      }
    };
  }
  return out;
}

/// A · Bᵀ without materializing the transpose.
template <typename S>
TensorPtr<S> matmul_nt(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[1],
          "matmul_nt: incompatible shapes");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  ArrayX<S> v(Eigen::Index(m) * n);
  Eigen::Map<RowMajorMatrix<S>>(v.data(), m, n).noalias() = as_matrix(a) * as_matrix(b).transpose();
  auto out = make_node<S>({m, n}, std::move(v), {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b, m, k, n] {
      Eigen::Map<const RowMajorMatrix<S>> dy(self->grad.data(), m, n);
      if (a->requires_grad) {
        a->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(a->grad.data(), m, k).noalias() += dy * as_matrix(b);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(b->grad.data(), n, k).noalias() += dy.transpose() * as_matrix(a);
      }
    };
  }
  return out;
}

/// X · Wᵀ + b for token matrices X {T, in}, weights W {out, in}, bias {out}.
template <typename S>
TensorPtr<S> linear(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& b) {
  require(x->shape.size() == 2 && w->shape.size() == 2 && x->shape[1] == w->shape[1],
          "linear: incompatible shapes");
  require(b->shape == std::vector<int>{w->shape[0]}, "linear: bias shape mismatch");
  const int t = x->shape[0], in = x->shape[1], out_dim = w->shape[0];
  ArrayX<S> v(Eigen::Index(t) * out_dim);
  Eigen::Map<RowMajorMatrix<S>> y(v.data(), t, out_dim);
  y.noalias() = as_matrix(x) * as_matrix(w).transpose();
  y.rowwise() += Eigen::Map<const VectorX<S>>(b->value.data(), out_dim).transpose();
  auto out = make_node<S>({t, out_dim}, std::move(v), {x, w, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, w, b, t, in, out_dim] {
      Eigen::Map<const RowMajorMatrix<S>> dy(self->grad.data(), t, out_dim);
      if (x->requires_grad) {
        x->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(x->grad.data(), t, in).noalias() += dy * as_matrix(w);
      }
      if (w->requires_grad) {
        w->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(w->grad.data(), out_dim, in).noalias() +=
            dy.transpose() * as_matrix(x);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<VectorX<S>>(b->grad.data(), out_dim) += dy.colwise().sum().transpose();
      }
    };
  }
  return out;
}

/// Row-wise softmax of a {T, N} tensor.
template <typename S>
TensorPtr<S> softmax_rows(const TensorPtr<S>& x) {
  require(x->shape.size() == 2, "softmax_rows: tensor is not 2D");
  const int t = x->shape[0], n = x->shape[1];
  ArrayX<S> v = x->value;
  Eigen::Map<ArrayXX<S>> y(v.data(), t, n);
  for (int r = 0; r < t; ++r) {
    auto row = y.row(r);
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  auto out = make_node<S>(x->shape, std::move(v), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, t, n] {
      Eigen::Map<const ArrayXX<S>> y(self->value.data(), t, n);
      Eigen::Map<const ArrayXX<S>> dy(self->grad.data(), t, n);
      x->ensure_grad();
      Eigen::Map<ArrayXX<S>> dx(x->grad.data(), t, n);
      for (int r = 0; r < t; ++r) {
        const S dot = (dy.row(r) * y.row(r)).sum();
        dx.row(r) += (dy.row(r) - dot) * y.row(r);
      }
    };
  }
  return out;
}

/// softmax(Q Kᵀ / √d_k) V with single-head row-wise attention.
template <typename S>
TensorPtr<S> attention(const TensorPtr<S>& q, const TensorPtr<S>& k, const TensorPtr<S>& v) {
  require(q->shape.size() == 2 && k->shape.size() == 2 && v->shape.size() == 2,
          "attention: inputs must be 2D");
  require(q->shape[1] == k->shape[1], "attention: query/key dim mismatch");
  require(k->shape[0] == v->shape[0], "attention: key/value row mismatch");
  const S inv_sqrt_dk = S(1) / std::sqrt(S(q->shape[1]));
  return matmul(softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk)), v);
}

/// Column mean of a {T, D} tensor -> {D}.
template <typename S>
TensorPtr<S> mean_rows(const TensorPtr<S>& x) {
  require(x->shape.size() == 2, "mean_rows: tensor is not 2D");
  const int t = x->shape[0], d = x->shape[1];
  ArrayX<S> v(d);
  Eigen::Map<const ArrayXX<S>> xm(x->value.data(), t, d);
  for (int j = 0; j < d; ++j) v[j] = xm.col(j).mean();
  auto out = make_node<S>({d}, std::move(v), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, t, d] {
      x->ensure_grad();
      Eigen::Map<ArrayXX<S>> dx(x->grad.data(), t, d);
      for (int r = 0; r < t; ++r)
        dx.row(r) += Eigen::Map<const ArrayX<S>>(self->grad.data(), d).transpose() / S(t);
    };
  }
  return out;
}

/// Same data, new logical dims (element count must match).
template <typename S>
TensorPtr<S> reshape(const TensorPtr<S>& x, std::vector<int> shape) {
  require(numel(shape) == x->size(), "reshape: element count mismatch");
  auto out = make_node<S>(std::move(shape), ArrayX<S>(x->value), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x] { accum(x, self->grad); };
  }
  return out;
}

/// Contiguous slice of a flat vector {N} -> {len}.
template <typename S>
TensorPtr<S> slice(const TensorPtr<S>& x, int start, int len) {
  require(x->shape.size() == 1, "slice: tensor is not 1D");
  require(start >= 0 && len > 0 && start + len <= x->shape[0], "slice: range out of bounds");
  auto out = make_node<S>({len}, ArrayX<S>(x->value.segment(start, len)), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, start, len] {
      x->ensure_grad();
      x->grad.segment(start, len) += self->grad;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image ops (3D tensors {C, H, W})

template <typename S>
void check_image(const TensorPtr<S>& t, const char* who) {
  require(t->shape.size() == 3, std::string(who) + ": tensor is not {C,H,W}");
}

/// Cross-correlation with odd square kernels {F, C, k, k}, symmetric zero
/// padding. Output {F, Ho, Wo} with Ho = (H + 2p - k)/stride + 1.
template <typename S>
TensorPtr<S> conv2d(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& b,
                    int stride = 1, int pad = -1) {
  check_image(x, "conv2d");
  require(w->shape.size() == 4 && w->shape[2] == w->shape[3] && w->shape[2] % 2 == 1,
          "conv2d: kernel must be {F,C,k,k} with odd k");
  require(w->shape[1] == x->shape[0], "conv2d: channel mismatch");
  require(b->shape == std::vector<int>{w->shape[0]}, "conv2d: bias shape mismatch");
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  const int c = x->shape[0], h = x->shape[1], wd = x->shape[2];
  const int f = w->shape[0], k = w->shape[2];
  if (pad < 0) pad = k / 2;
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");

  // im2col: {C*k*k, Ho*Wo}; kept for the backward pass.
  auto cols = std::make_shared<RowMajorMatrix<S>>(Eigen::Index(c) * k * k, Eigen::Index(ho) * wo);
  cols->setZero();
  for (int ch = 0; ch < c; ++ch) {
    const auto xc = Eigen::Map<const ArrayXX<S>>(x->value.data() + Eigen::Index(ch) * h * wd, h, wd);
    for (int p = 0; p < k; ++p)
      for (int q = 0; q < k; ++q) {
        const Eigen::Index row = (Eigen::Index(ch) * k + p) * k + q;
        for (int i = 0; i < ho; ++i) {
          const int src_r = i * stride - pad + p;
          if (src_r < 0 || src_r >= h) continue;
          for (int j = 0; j < wo; ++j) {
            const int src_c = j * stride - pad + q;
            if (src_c < 0 || src_c >= wd) continue;
            (*cols)(row, Eigen::Index(i) * wo + j) = xc(src_r, src_c);
          }
        }
      }
  }

  ArrayX<S> v(Eigen::Index(f) * ho * wo);
  Eigen::Map<RowMajorMatrix<S>> y(v.data(), f, Eigen::Index(ho) * wo);
  y.noalias() = Eigen::Map<const RowMajorMatrix<S>>(w->value.data(), f, Eigen::Index(c) * k * k) * (*cols);
  y.colwise() += Eigen::Map<const VectorX<S>>(b->value.data(), f);

  auto out = make_node<S>({f, ho, wo}, std::move(v), {x, w, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, w, b, cols, c, h, wd, f, k, pad, stride, ho, wo] {
      Eigen::Map<const RowMajorMatrix<S>> dy(self->grad.data(), f, Eigen::Index(ho) * wo);
      if (b->requires_grad) {
        b->ensure_grad();
        Eigen::Map<VectorX<S>>(b->grad.data(), f) += dy.rowwise().sum();
      }
      if (w->requires_grad) {
        w->ensure_grad();
        Eigen::Map<RowMajorMatrix<S>>(w->grad.data(), f, Eigen::Index(c) * k * k).noalias() +=
            dy * cols->transpose();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        RowMajorMatrix<S> dcols(Eigen::Index(c) * k * k, Eigen::Index(ho) * wo);
        dcols.noalias() =
            Eigen::Map<const RowMajorMatrix<S>>(w->value.data(), f, Eigen::Index(c) * k * k)
                .transpose() *
            dy;
        for (int ch = 0; ch < c; ++ch) {
          auto dxc = Eigen::Map<ArrayXX<S>>(x->grad.data() + Eigen::Index(ch) * h * wd, h, wd);
          for (int p = 0; p < k; ++p)
            for (int q = 0; q < k; ++q) {
              const Eigen::Index row = (Eigen::Index(ch) * k + p) * k + q;
              for (int i = 0; i < ho; ++i) {
                const int src_r = i * stride - pad + p;
                if (src_r < 0 || src_r >= h) continue;
                for (int j = 0; j < wo; ++j) {
                  const int src_c = j * stride - pad + q;
                  if (src_c < 0 || src_c >= wd) continue;
                  dxc(src_r, src_c) += dcols(row, Eigen::Index(i) * wo + j);
                }
              }
            }
        }
      }
    };
  }
  return out;
}

/// Nearest-neighbor 2x upsample: each cell becomes a 2x2 block.
template <typename S>
TensorPtr<S> upsample_nearest2(const TensorPtr<S>& x) {
  check_image(x, "upsample_nearest2");
  const int c = x->shape[0], h = x->shape[1], w = x->shape[2];
  ArrayX<S> v(Eigen::Index(c) * 4 * h * w);
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < 2 * h; ++r)
      for (int col = 0; col < 2 * w; ++col)
        v[(Eigen::Index(ch) * 2 * h + r) * 2 * w + col] =
            x->value[(Eigen::Index(ch) * h + r / 2) * w + col / 2];
  auto out = make_node<S>({c, 2 * h, 2 * w}, std::move(v), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, c, h, w] {
      x->ensure_grad();
      for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < 2 * h; ++r)
          for (int col = 0; col < 2 * w; ++col)
            x->grad[(Eigen::Index(ch) * h + r / 2) * w + col / 2] +=
                self->grad[(Eigen::Index(ch) * 2 * h + r) * 2 * w + col];
    };
  }
  return out;
}

/// Group normalization over {C, H, W} with affine per-channel parameters.
template <typename S>
TensorPtr<S> group_norm(const TensorPtr<S>& x, const TensorPtr<S>& gamma, const TensorPtr<S>& beta,
                        int groups, S eps = S(1e-5)) {
  check_image(x, "group_norm");
  const int c = x->shape[0], h = x->shape[1], w = x->shape[2];
  require(gamma->shape == std::vector<int>{c} && beta->shape == std::vector<int>{c},
          "group_norm: affine parameter shape mismatch");
  require(groups >= 1 && c % groups == 0, "group_norm: groups must divide channels");
  const Eigen::Index hw = Eigen::Index(h) * w;
  const int gs = c / groups;
  const Eigen::Index gn = Eigen::Index(gs) * hw;

  ArrayX<S> xhat(x->size());
  auto inv_sigma = std::make_shared<ArrayX<S>>(groups);
  for (int g = 0; g < groups; ++g) {
    auto seg = x->value.segment(Eigen::Index(g) * gn, gn);
    const S mu = seg.mean();
    const S var = (seg - mu).square().mean();
    (*inv_sigma)[g] = S(1) / std::sqrt(var + eps);
    xhat.segment(Eigen::Index(g) * gn, gn) = (seg - mu) * (*inv_sigma)[g];
  }
  auto xhat_keep = std::make_shared<ArrayX<S>>(xhat);

  ArrayX<S> v(x->size());
  for (int ch = 0; ch < c; ++ch)
    v.segment(Eigen::Index(ch) * hw, hw) =
        xhat.segment(Eigen::Index(ch) * hw, hw) * gamma->value[ch] + beta->value[ch];

  auto out = make_node<S>(x->shape, std::move(v), {x, gamma, beta});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, gamma, beta, xhat_keep, inv_sigma, c, hw, gs, gn, groups] {
      const ArrayX<S>& xh = *xhat_keep;
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
          gamma->grad[ch] +=
              (self->grad.segment(Eigen::Index(ch) * hw, hw) * xh.segment(Eigen::Index(ch) * hw, hw))
                  .sum();
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        for (int ch = 0; ch < c; ++ch) beta->grad[ch] += self->grad.segment(Eigen::Index(ch) * hw, hw).sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        ArrayX<S> dxhat(gn);
        for (int g = 0; g < groups; ++g) {
          for (int k = 0; k < gs; ++k) {
            const int ch = g * gs + k;
            dxhat.segment(Eigen::Index(k) * hw, hw) =
                self->grad.segment(Eigen::Index(ch) * hw, hw) * gamma->value[ch];
          }
          auto xh_g = xh.segment(Eigen::Index(g) * gn, gn);
          const S mean_d = dxhat.mean();
          const S mean_dx = (dxhat * xh_g).mean();
          x->grad.segment(Eigen::Index(g) * gn, gn) +=
              (*inv_sigma)[g] * (dxhat - mean_d - xh_g * mean_dx);
        }
      }
    };
  }
  return out;
}

/// Layer normalization over the last dim of {T, D} with affine {D} params.
template <typename S>
TensorPtr<S> layer_norm(const TensorPtr<S>& x, const TensorPtr<S>& gamma, const TensorPtr<S>& beta,
                        S eps = S(1e-5)) {
  require(x->shape.size() == 2, "layer_norm: tensor is not 2D");
  const int t = x->shape[0], d = x->shape[1];
  require(gamma->shape == std::vector<int>{d} && beta->shape == std::vector<int>{d},
          "layer_norm: affine parameter shape mismatch");

  auto xhat_keep = std::make_shared<ArrayX<S>>(x->size());
  auto inv_sigma = std::make_shared<ArrayX<S>>(t);
  ArrayX<S> v(x->size());
  for (int r = 0; r < t; ++r) {
    auto row = x->value.segment(Eigen::Index(r) * d, d);
    const S mu = row.mean();
    const S var = (row - mu).square().mean();
    (*inv_sigma)[r] = S(1) / std::sqrt(var + eps);
    auto xh = (row - mu) * (*inv_sigma)[r];
    xhat_keep->segment(Eigen::Index(r) * d, d) = xh;
    v.segment(Eigen::Index(r) * d, d) = xh * gamma->value + beta->value;
  }

  auto out = make_node<S>(x->shape, std::move(v), {x, gamma, beta});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, gamma, beta, xhat_keep, inv_sigma, t, d] {
      for (int r = 0; r < t; ++r) {
        auto dy = self->grad.segment(Eigen::Index(r) * d, d);
        auto xh = xhat_keep->segment(Eigen::Index(r) * d, d);
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          gamma->grad += dy * xh;
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          beta->grad += dy;
        }
        if (x->requires_grad) {
          x->ensure_grad();
          ArrayX<S> dxhat = dy * gamma->value;
          const S mean_d = dxhat.mean();
          const S mean_dx = (dxhat * xh).mean();
          x->grad.segment(Eigen::Index(r) * d, d) += (*inv_sigma)[r] * (dxhat - mean_d - xh * mean_dx);
        }
      }
    };
  }
  return out;
}

/// Per-channel affine modulation: y[ch] = scale[ch] * x[ch] + shift[ch].
template <typename S>
TensorPtr<S> film(const TensorPtr<S>& x, const TensorPtr<S>& sc, const TensorPtr<S>& sh) {
  check_image(x, "film");
  const int c = x->shape[0];
  require(sc->shape == std::vector<int>{c} && sh->shape == std::vector<int>{c},
          "film: scale/shift length mismatch");
  const Eigen::Index hw = Eigen::Index(x->shape[1]) * x->shape[2];
  ArrayX<S> v(x->size());
  for (int ch = 0; ch < c; ++ch)
    v.segment(Eigen::Index(ch) * hw, hw) =
        x->value.segment(Eigen::Index(ch) * hw, hw) * sc->value[ch] + sh->value[ch];
  auto out = make_node<S>(x->shape, std::move(v), {x, sc, sh});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, sc, sh, c, hw] {
      for (int ch = 0; ch < c; ++ch) {
        auto dy = self->grad.segment(Eigen::Index(ch) * hw, hw);
        if (x->requires_grad) {
          x->ensure_grad();
          x->grad.segment(Eigen::Index(ch) * hw, hw) += dy * sc->value[ch];
        }
        if (sc->requires_grad) {
          sc->ensure_grad();
          sc->grad[ch] += (dy * x->value.segment(Eigen::Index(ch) * hw, hw)).sum();
        }
        if (sh->requires_grad) {
          sh->ensure_grad();
          sh->grad[ch] += dy.sum();
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtr<S> concat_channels(const TensorPtr<S>& a, const TensorPtr<S>& b) {
  check_image(a, "concat_channels");
  check_image(b, "concat_channels");
  require(a->shape[1] == b->shape[1] && a->shape[2] == b->shape[2],
          "concat_channels: spatial shape mismatch");
  ArrayX<S> v(a->size() + b->size());
  v.head(a->size()) = a->value;
  v.tail(b->size()) = b->value;
  auto out = make_node<S>({a->shape[0] + b->shape[0], a->shape[1], a->shape[2]}, std::move(v), {a, b});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, a, b] {
      accum(a, self->grad.head(a->size()));
      accum(b, self->grad.tail(b->size()));
    };
  }
  return out;
}

/// Non-overlapping P×P patches as tokens: {C,H,W} -> {(H/P)(W/P), C*P*P}.
/// Token (br,bc) feature layout: channel-major, then row, then column.
template <typename S>
TensorPtr<S> patchify(const TensorPtr<S>& x, int p) {
  check_image(x, "patchify");
  const int c = x->shape[0], h = x->shape[1], w = x->shape[2];
  require(p > 0 && h % p == 0 && w % p == 0, "patchify: spatial dims not divisible by patch size");
  const int bh = h / p, bw = w / p;
  const int t = bh * bw, d = c * p * p;
  ArrayX<S> v(Eigen::Index(t) * d);
  for (int br = 0; br < bh; ++br)
    for (int bc = 0; bc < bw; ++bc)
      for (int ch = 0; ch < c; ++ch)
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc)
            v[Eigen::Index(br * bw + bc) * d + (Eigen::Index(ch) * p + pr) * p + pc] =
                x->value[(Eigen::Index(ch) * h + br * p + pr) * w + bc * p + pc];
  auto out = make_node<S>({t, d}, std::move(v), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, c, h, w, p, bh, bw, d] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int br = 0; br < bh; ++br)
        for (int bc = 0; bc < bw; ++bc)
          for (int ch = 0; ch < c; ++ch)
            for (int pr = 0; pr < p; ++pr)
              for (int pc = 0; pc < p; ++pc)
                x->grad[(Eigen::Index(ch) * h + br * p + pr) * w + bc * p + pc] +=
                    self->grad[Eigen::Index(br * bw + bc) * d + (Eigen::Index(ch) * p + pr) * p + pc];
    };
  }
  return out;
}

/// {C,H,W} -> {H*W, C} token matrix (one token per cell).
template <typename S>
TensorPtr<S> image_to_tokens(const TensorPtr<S>& x) {
  check_image(x, "image_to_tokens");
  const int c = x->shape[0];
  const Eigen::Index hw = Eigen::Index(x->shape[1]) * x->shape[2];
  ArrayX<S> v(x->size());
  for (int ch = 0; ch < c; ++ch)
    for (Eigen::Index i = 0; i < hw; ++i) v[i * c + ch] = x->value[Eigen::Index(ch) * hw + i];
  auto out = make_node<S>({int(hw), c}, std::move(v), {x});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, x, c, hw] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int ch = 0; ch < c; ++ch)
        for (Eigen::Index i = 0; i < hw; ++i)
          x->grad[Eigen::Index(ch) * hw + i] += self->grad[i * c + ch];
    };
  }
  return out;
}

/// Inverse of image_to_tokens: {H*W, C} tokens back to {C,H,W}.
template <typename S>
TensorPtr<S> tokens_to_image(const TensorPtr<S>& t, int h, int w) {
  require(t->shape.size() == 2 && t->shape[0] == h * w, "tokens_to_image: token count mismatch");
  const int c = t->shape[1];
  const Eigen::Index hw = Eigen::Index(h) * w;
  ArrayX<S> v(t->size());
  for (int ch = 0; ch < c; ++ch)
    for (Eigen::Index i = 0; i < hw; ++i) v[Eigen::Index(ch) * hw + i] = t->value[i * c + ch];
  auto out = make_node<S>({c, h, w}, std::move(v), {t});
  if (out->requires_grad) {
    Tensor<S>* self = out.get();
    out->backward_fn = [self, t, c, hw] {
      if (!t->requires_grad) return;
      t->ensure_grad();
      for (int ch = 0; ch < c; ++ch)
        for (Eigen::Index i = 0; i < hw; ++i)
          t->grad[i * c + ch] += self->grad[Eigen::Index(ch) * hw + i];
    };
  }
  return out;
}

}  // namespace fieldrecon::net
