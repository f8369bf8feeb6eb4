#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fieldrecon/container.hpp"
#include "fieldrecon/datagen/dataset.hpp"
#include "fieldrecon/fields.hpp"
#include "fieldrecon/net/optim.hpp"
#include "fieldrecon/net/unet.hpp"

namespace fieldrecon::edm {

/// Training-time noise distribution (log-normal in σ) and the data scale the
/// preconditioner is tuned to.
struct NoiseSchedule {
  double p_mean = 1.2;
  double p_std = 1.7;
  double sigma_data = 0.5;

  void validate() const {
    require(p_std > 0, "NoiseSchedule: p_std must be positive");
    require(sigma_data > 0, "NoiseSchedule: sigma_data must be positive");
  }
};

/// σ = exp(P_mean + P_std·n), n standard normal.
template <typename S>
S sample_sigma(Rng& rng, const NoiseSchedule& sched = {}) {
  sched.validate();
  return S(std::exp(sched.p_mean + sched.p_std * rng.normal()));
}

/// Input/output scalings of the denoiser wrapper and the loss weight λ(σ).
/// λ·c_out² = 1 for every σ, so the weighted loss is uniform in the network
/// output space.
template <typename S>
struct PrecondCoeffs {
  S c_skip, c_out, c_in, c_noise, loss_weight;
};

template <typename S>
PrecondCoeffs<S> precondition_coeffs(S sigma, S sigma_data) {
  require(sigma > S(0), "precondition_coeffs: sigma must be positive");
  require(sigma_data > S(0), "precondition_coeffs: sigma_data must be positive");
  const S s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  PrecondCoeffs<S> c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  c.c_in = S(1) / std::sqrt(s2 + d2);
  c.c_noise = std::log(sigma) / S(4);
  c.loss_weight = (s2 + d2) / (s2 * d2);
  return c;
}

/// Variance-exploding forward process: x = x₀ + σ·ε. Returns (x_noised, ε).
template <typename S>
std::pair<FieldTensor<S>, FieldTensor<S>> add_noise(const FieldTensor<S>& x0, S sigma, Rng& rng) {
  require(sigma >= S(0), "add_noise: sigma must be nonnegative");
  FieldTensor<S> eps(x0.channels, x0.height, x0.width, rng.normal_array<S>(x0.size()));
  FieldTensor<S> noised(x0.channels, x0.height, x0.width, x0.values + sigma * eps.values);
  return {std::move(noised), std::move(eps)};
}

/// D(x;σ) = c_skip·x + c_out·F(c_in·x; c_noise) as a differentiable graph.
template <typename S>
net::TensorPtr<S> denoise(const net::DenoiserNet<S>& dn, const net::TensorPtr<S>& x, S sigma,
                          const std::type_identity_t<net::TensorPtr<S>>& condition, S sigma_data) {
  const auto c = precondition_coeffs(sigma, sigma_data);
  auto f = dn.forward(net::scale(x, c.c_in), c.c_noise, condition);
  return net::add(net::scale(x, c.c_skip), net::scale(f, c.c_out));
}

/// Value-level denoise for sampling: no gradients, plain fields in and out.
template <typename S>
FieldTensor<S> denoise_field(const net::DenoiserNet<S>& dn, const FieldTensor<S>& x, S sigma,
                             const std::type_identity_t<net::TensorPtr<S>>& condition,
                             S sigma_data) {
  auto x_in = net::make_leaf<S>({x.channels, x.height, x.width}, x.values);
  auto d = denoise(dn, x_in, sigma, condition, sigma_data);
  return FieldTensor<S>(x.channels, x.height, x.width, std::move(d->value));
}

/// Conditional training input: clean values on observed cells, noised values
/// elsewhere.
template <typename S>
FieldTensor<S> compose_input(const FieldTensor<S>& x0, const FieldTensor<S>& noised,
                             const ObservationMask& mask) {
  auto [obs_part, unused] = mask_partition(x0, mask);
  auto [unused2, noise_part] = mask_partition(noised, mask);
  return FieldTensor<S>(x0.channels, x0.height, x0.width, obs_part.values + noise_part.values);
}

/// Per-entry loss weights: λ(σ)/n on the counted cells (the mask complement,
/// or everything when mask is null), zero elsewhere.
template <typename S>
ArrayX<S> loss_cell_weights(int channels, int height, int width, const ObservationMask* mask,
                            S lambda) {
  const Eigen::Index cells = Eigen::Index(height) * width;
  ArrayX<S> w(Eigen::Index(channels) * cells);
  if (mask == nullptr) {
    w.setConstant(lambda / S(channels * cells));
    return w;
  }
  require(mask->height == height && mask->width == width, "loss_cell_weights: mask shape mismatch");
  const Eigen::Index counted = cells - mask->count();
  require(counted > 0, "loss_cell_weights: every cell is observed, nothing to train on");
  const S v = lambda / S(Eigen::Index(channels) * counted);
  w.setZero();
  for (int r = 0; r < height; ++r)
    for (int col = 0; col < width; ++col)
      if (!mask->at(r, col))
        for (int c = 0; c < channels; ++c) w[(Eigen::Index(c) * height + r) * width + col] = v;
  return w;
}

/// Weighted squared error Σ w·(d − target)² as a scalar graph node.
template <typename S>
net::TensorPtr<S> weighted_field_mse(const net::TensorPtr<S>& d, const FieldTensor<S>& target,
                                     const ArrayX<S>& weights) {
  require(d->size() == target.size(), "weighted_field_mse: shape mismatch");
  auto diff = net::sub(d, net::make_leaf<S>(d->shape, target.values));
  return net::weighted_sum(net::mul(diff, diff), weights);
}

/// One training-loss sample: noise x₀ at level σ, compose the conditional
/// input (observed cells clean) when a mask is given, denoise, and return
/// λ(σ)·mean squared error over the counted cells. Equals the scaled
/// network-output matching loss algebraically.
template <typename S>
net::TensorPtr<S> training_loss(const net::DenoiserNet<S>& dn, const FieldTensor<S>& x0,
                                const std::type_identity_t<net::TensorPtr<S>>& condition, S sigma,
                                Rng& rng, const NoiseSchedule& sched,
                                const ObservationMask* mask) {
  auto [noised, eps] = add_noise(x0, sigma, rng);
  const FieldTensor<S> input = mask ? compose_input(x0, noised, *mask) : std::move(noised);
  auto x_in = net::make_leaf<S>({x0.channels, x0.height, x0.width}, input.values);
  const auto coeffs = precondition_coeffs(sigma, S(sched.sigma_data));
  auto d = denoise(dn, x_in, sigma, condition, S(sched.sigma_data));
  return weighted_field_mse(d, x0,
                            loss_cell_weights<S>(x0.channels, x0.height, x0.width, mask,
                                                 coeffs.loss_weight));
}

// ---------------------------------------------------------------------------
// Model bundle: network + params + normalization, also the checkpoint unit.

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"unconditional", "cfg", "cross-attention", "vtunet"};
  return names;
}

template <typename S>
struct ModelBundle {
  std::string model;  // one of model_names()
  net::NetConfig config;
  NoiseSchedule schedule;
  NormStats<S> norm;
  long step = 0;
  nlohmann::json extra = nlohmann::json::object();  // problem name, channel labels

  std::shared_ptr<net::ParamStore<S>> params;
  std::shared_ptr<net::DenoiserNet<S>> denoiser;          // null for vtunet
  std::shared_ptr<net::VtUnet<S>> vtunet;                 // null otherwise
  std::shared_ptr<net::ConditionEncoder<S>> encoder;      // cfg / cross-attention only

  bool is_vtunet() const { return model == "vtunet"; }
  bool conditional() const { return model == "cfg" || model == "cross-attention"; }
};

template <typename S>
ModelBundle<S> make_bundle(const std::string& model, net::NetConfig config, NormStats<S> norm,
                           std::uint64_t seed) {
  bool known = false;
  for (const auto& n : model_names()) known = known || n == model;
  require(known, "make_bundle: unknown model '" + model + "'");
  norm.validate();
  require(int(norm.mean.size()) == config.field_channels,
          "make_bundle: normalization channel count mismatch");

  ModelBundle<S> b;
  b.model = model;
  b.norm = std::move(norm);
  b.params = std::make_shared<net::ParamStore<S>>();
  Rng rng(seed, 0);
  if (model == "vtunet") {
    config.mode = net::CondMode::none;
    b.vtunet = std::make_shared<net::VtUnet<S>>(*b.params, rng, config);
  } else {
    config.mode = net::parse_cond_mode(model);
    b.denoiser = std::make_shared<net::DenoiserNet<S>>(*b.params, rng, config);
    if (config.mode != net::CondMode::none)
      b.encoder = std::make_shared<net::ConditionEncoder<S>>(*b.params, rng, "encoder", config);
  }
  b.config = config;
  return b;
}

template <typename S>
void save_checkpoint(const ModelBundle<S>& b, const net::EmaShadow<S>& ema,
                     const std::string& path) {
  Container c;
  c.meta = nlohmann::json{{"model", b.model},
                          {"step", b.step},
                          {"grid", b.config.grid},
                          {"field_channels", b.config.field_channels},
                          {"plan", b.config.channel_plan()},
                          {"emb_dim", b.config.emb_dim},
                          {"patch", b.config.patch},
                          {"token_dim", b.config.token_dim},
                          {"enc_attn_layers", b.config.enc_attn_layers},
                          {"p_mean", b.schedule.p_mean},
                          {"p_std", b.schedule.p_std},
                          {"sigma_data", b.schedule.sigma_data},
                          {"target_std", double(b.norm.target_std)},
                          {"extra", b.extra}};
  auto shape_of = [](const net::TensorPtr<S>& t) {
    return std::vector<std::int64_t>(t->shape.begin(), t->shape.end());
  };
  const auto& items = b.params->items();
  require(ema.values().size() == items.size(), "save_checkpoint: EMA/param store mismatch");
  for (size_t i = 0; i < items.size(); ++i) {
    c.add("param/" + items[i].first, shape_of(items[i].second), items[i].second->value);
    c.add("ema/" + items[i].first, shape_of(items[i].second), ema.values()[i]);
  }
  c.add("norm/mean", {std::int64_t(b.norm.mean.size())}, ArrayX<S>(b.norm.mean.array()));
  c.add("norm/std", {std::int64_t(b.norm.std.size())}, ArrayX<S>(b.norm.std.array()));
  c.write(path);
}

/// Rebuilds the bundle recorded at `path`. With use_ema the shadow weights
/// (the evaluation weights) are loaded into the live parameters.
template <typename S>
ModelBundle<S> load_bundle(const std::string& path, bool use_ema = true) {
  const Container c = Container::read(path);
  const auto& m = c.meta;
  require(m.contains("model"), "load_bundle: checkpoint has no model metadata");

  net::NetConfig config;
  config.grid = m.at("grid").get<int>();
  config.field_channels = m.at("field_channels").get<int>();
  config.plan = m.at("plan").get<std::vector<int>>();
  config.emb_dim = m.at("emb_dim").get<int>();
  config.patch = m.at("patch").get<int>();
  config.token_dim = m.at("token_dim").get<int>();
  config.enc_attn_layers = m.at("enc_attn_layers").get<int>();

  NormStats<S> norm;
  norm.mean = c.values<S>("norm/mean").matrix();
  norm.std = c.values<S>("norm/std").matrix();
  norm.target_std = S(m.at("target_std").get<double>());

  auto b = make_bundle<S>(m.at("model").get<std::string>(), config, std::move(norm), 0);
  b.step = m.at("step").get<long>();
  b.schedule.p_mean = m.at("p_mean").get<double>();
  b.schedule.p_std = m.at("p_std").get<double>();
  b.schedule.sigma_data = m.at("sigma_data").get<double>();
  b.extra = m.value("extra", nlohmann::json::object());

  const std::string prefix = use_ema ? "ema/" : "param/";
  for (auto& [name, p] : b.params->items()) {
    const ArrayX<S> v = c.values<S>(prefix + name);
    require(v.size() == p->size(), "load_bundle: size mismatch for '" + name + "'");
    p->value = v;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  long steps = 2000;
  int batch = 2;
  double lr = 1e-4;
  double lr_final = -1;  // end-of-run lr for cosine annealing; negative keeps lr constant
  double weight_decay = 0.01;
  double ema_cap = 0.999;
  double ratio_max = 0.1;     // observed-cell ratio upper bound (exclusive)
  double null_dropout = 0.1;  // CFG null-condition probability
  double train_frac = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    require(steps >= 0 && batch >= 1, "TrainConfig: steps/batch out of range");
    require(ratio_max > 0 && ratio_max < 1, "TrainConfig: ratio_max must lie in (0,1)");
    require(null_dropout >= 0 && null_dropout <= 1, "TrainConfig: null_dropout must lie in [0,1]");
  }

  /// Learning rate at a given global step: cosine-annealed from `lr` (step 0)
  /// to `lr_final` (step `steps`, clamped beyond), or constant when disabled.
  double lr_at(long step) const {
    if (lr_final < 0 || steps <= 0) return lr;
    const double t = std::min(1.0, double(step) / double(steps));
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(t * 3.14159265358979323846));
  }
};

/// Ratio of observed cells, uniform on the open interval (0, ratio_max).
inline double sample_ratio(Rng& rng, double ratio_max = 0.1) {
  double r = 0;
  while (r == 0) r = ratio_max * rng.uniform();
  return r;
}

/// Optimizes a bundle on normalized dataset snapshots. Each batch sample gets
/// its own deterministic RNG substream, so runs with equal seeds are
/// bit-identical. Snapshots are drawn from the training split only.
template <typename S>
class Trainer {
 public:
  Trainer(ModelBundle<S>& bundle, const datagen::Dataset<S>& data, TrainConfig config)
      : bundle_(bundle), data_(data), config_(config), opt_(*bundle.params), ema_(*bundle.params) {
    config.validate();
    require(data.channels == bundle.config.field_channels,
            "Trainer: dataset/model channel mismatch");
    require(data.height == bundle.config.grid && data.width == bundle.config.grid,
            "Trainer: dataset/model grid mismatch");
    opt_.lr = S(config.lr);
    opt_.weight_decay = S(config.weight_decay);
  }

  /// One optimization step; returns the batch-mean loss.
  double step() {
    bundle_.params->zero_grad();
    double total = 0;
    for (int s = 0; s < config_.batch; ++s) {
      Rng rng(config_.seed, std::uint64_t(bundle_.step) * std::uint64_t(config_.batch) +
                                std::uint64_t(s) + 1);
      auto loss = net::scale(sample_loss(rng), S(1) / S(config_.batch));
      total += double(loss->value[0]);
      net::backward(loss);
    }
    if (!std::isfinite(total))
      fail("train_loop: non-finite loss at step " + std::to_string(bundle_.step));
    opt_.lr = S(config_.lr_at(bundle_.step));
    opt_.step(*bundle_.params);
    ema_.update(*bundle_.params, net::ema_decay(int(bundle_.step), S(config_.ema_cap)));
    ++bundle_.step;
    return total;
  }

  /// Runs `n` steps, invoking `on_step(step_index, loss)` when provided.
  void run(long n, const std::function<void(long, double)>& on_step = nullptr) {
    for (long i = 0; i < n; ++i) {
      const long at = bundle_.step;
      const double loss = step();
      if (on_step) on_step(at, loss);
    }
  }

  const net::EmaShadow<S>& ema() const { return ema_; }

 private:
  net::TensorPtr<S> sample_loss(Rng& rng) {
    const int sim = int(rng.below(std::uint64_t(data_.train_sims(config_.train_frac))));
    const int t = int(rng.below(std::uint64_t(data_.n_steps)));
    const FieldTensor<S> x0 = data_.snapshot_normalized(sim, t);

    if (bundle_.is_vtunet()) {
      const ObservationMask mask = sample_mask(rng);
      const auto obs = observe(x0, mask);
      auto y = bundle_.vtunet->forward(voronoi_tessellate(obs, x0.height, x0.width),
                                       sensor_indicator<S>(mask));
      return weighted_field_mse(
          y, x0, ArrayX<S>(ArrayX<S>::Constant(x0.size(), S(1) / S(x0.size()))));
    }

    const S sigma = sample_sigma<S>(rng, bundle_.schedule);
    if (!bundle_.conditional())
      return training_loss(*bundle_.denoiser, x0, nullptr, sigma, rng, bundle_.schedule, nullptr);

    const ObservationMask mask = sample_mask(rng);
    const bool drop = bundle_.model == "cfg" && rng.uniform() < config_.null_dropout;
    typename net::ConditionEncoder<S>::Output cond;
    if (drop) {
      cond = bundle_.encoder->forward_null();
    } else {
      const auto obs = observe(x0, mask);
      cond = bundle_.encoder->forward(voronoi_tessellate(obs, x0.height, x0.width),
                                      sensor_indicator<S>(mask));
    }
    const auto condition = bundle_.model == "cfg" ? cond.pooled : cond.tokens;
    return training_loss(*bundle_.denoiser, x0, condition, sigma, rng, bundle_.schedule, &mask);
  }

  ObservationMask sample_mask(Rng& rng) {
    const Eigen::Index cells = Eigen::Index(data_.height) * data_.width;
    const double ratio = sample_ratio(rng, config_.ratio_max);
    const int n_obs = std::max(1, int(ratio * double(cells)));
    const auto flat = rng.sample_without_replacement(int(cells), n_obs);
    std::vector<std::pair<int, int>> positions;
    positions.reserve(flat.size());
    for (int i : flat) positions.emplace_back(i / data_.width, i % data_.width);
    return make_mask(positions, data_.height, data_.width);
  }

  ModelBundle<S>& bundle_;
  const datagen::Dataset<S>& data_;
  TrainConfig config_;
  net::AdamW<S> opt_;
  net::EmaShadow<S> ema_;
};

}  // namespace fieldrecon::edm
