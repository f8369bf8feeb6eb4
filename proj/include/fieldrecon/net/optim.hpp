#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fieldrecon/net/tensor.hpp"

namespace fieldrecon::net {

/// Named, ordered collection of trainable leaves. Order is creation order and
/// fixes the layout of optimizer state, EMA shadows, and checkpoints.
template <typename S>
class ParamStore {
 public:
  TensorPtr<S> add(const std::string& name, std::vector<int> shape, ArrayX<S> init) {
    require(find(name) == nullptr, "ParamStore: duplicate parameter '" + name + "'");
    auto t = make_leaf<S>(std::move(shape), std::move(init), true);
    items_.emplace_back(name, t);
    return t;
  }

  TensorPtr<S> find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    return nullptr;
  }

  const std::vector<std::pair<std::string, TensorPtr<S>>>& items() const { return items_; }

  Eigen::Index count() const {
    Eigen::Index n = 0;
    for (const auto& [name, t] : items_) n += t->size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : items_)
      if (t->grad.size() == t->value.size()) t->grad.setZero();
  }

 private:
  std::vector<std::pair<std::string, TensorPtr<S>>> items_;
};

/// Decoupled weight decay Adam. Decay is applied directly to the parameter,
/// not through the moment estimates.
template <typename S>
class AdamW {
 public:
  S lr = S(1e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S weight_decay = S(0.01);

  explicit AdamW(const ParamStore<S>& params) {
    for (const auto& [name, t] : params.items()) {
      m_.push_back(ArrayX<S>::Zero(t->size()));
      v_.push_back(ArrayX<S>::Zero(t->size()));
    }
  }

  /// One update from the gradients currently on the parameters.
  void step(ParamStore<S>& params) {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1, S(t_));
    const S bc2 = S(1) - std::pow(beta2, S(t_));
    size_t i = 0;
    for (auto& [name, p] : params.items()) {
      ArrayX<S> g = p->grad.size() == p->value.size() ? p->grad : ArrayX<S>::Zero(p->size());
      m_[i] = beta1 * m_[i] + (S(1) - beta1) * g;
      v_[i] = beta2 * v_[i] + (S(1) - beta2) * g.square();
      const ArrayX<S> m_hat = m_[i] / bc1;
      const ArrayX<S> v_hat = v_[i] / bc2;
      p->value -=
          lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p->value);
      ++i;
    }
  }

  int steps_taken() const { return t_; }

 private:
  int t_ = 0;
  std::vector<ArrayX<S>> m_, v_;
};

/// shadow <- rate * shadow + (1 - rate) * params, one array per parameter.
template <typename S>
class EmaShadow {
 public:
  explicit EmaShadow(const ParamStore<S>& params) {
    for (const auto& [name, t] : params.items()) values_.push_back(t->value);
  }

  void update(const ParamStore<S>& params, S rate) {
    require(rate >= S(0) && rate <= S(1), "EmaShadow: rate must lie in [0,1]");
    size_t i = 0;
    for (const auto& [name, t] : params.items()) {
      values_[i] = rate * values_[i] + (S(1) - rate) * t->value;
      ++i;
    }
  }

  const std::vector<ArrayX<S>>& values() const { return values_; }
  std::vector<ArrayX<S>>& values() { return values_; }

  /// Writes the shadow into the live parameters (used at evaluation time).
  void copy_to(ParamStore<S>& params) const {
    size_t i = 0;
    for (auto& [name, t] : params.items()) {
      t->value = values_[i];
      ++i;
    }
  }

 private:
  std::vector<ArrayX<S>> values_;
};

/// Warmup-capped EMA decay: the 0.999 cap, the (1+t)/(10+t) ramp, and the
/// 1-(1+t)^-0.75 ramp; the minimum of the three governs early steps.
template <typename S>
S ema_decay(int step, S cap = S(0.999)) {
  require(step >= 0, "ema_decay: negative step");
  const S t = S(1 + step);
  const S ramp_a = t / (S(9) + t);
  const S ramp_b = S(1) - std::pow(t, S(-0.75));
  return std::min(cap, std::min(ramp_a, ramp_b));
}

// ---------------------------------------------------------------------------
// Initializers

/// Kaiming-style normal init scaled by fan-in.
template <typename S>
ArrayX<S> init_kaiming(Rng& rng, Eigen::Index n, Eigen::Index fan_in) {
  ArrayX<S> v = rng.normal_array<S>(n);
  return v * S(std::sqrt(2.0 / double(fan_in)));
}

template <typename S>
ArrayX<S> init_zeros(Eigen::Index n) {
  return ArrayX<S>::Zero(n);
}

template <typename S>
ArrayX<S> init_ones(Eigen::Index n) {
  return ArrayX<S>::Ones(n);
}

/// Small-scale normal init (used where kaiming would be too hot, e.g.
/// position embeddings).
template <typename S>
ArrayX<S> init_normal(Rng& rng, Eigen::Index n, S std_dev) {
  return rng.normal_array<S>(n) * std_dev;
}

}  // namespace fieldrecon::net
