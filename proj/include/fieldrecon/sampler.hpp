#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fieldrecon/edm.hpp"
#include "fieldrecon/fields.hpp"

namespace fieldrecon::sampler {

enum class Scheme { euler, heun_pc, multistep2 };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::euler: return "euler";
    case Scheme::heun_pc: return "heun-pc";
    case Scheme::multistep2: return "multistep2";
  }
  fail("scheme_name: invalid scheme");
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "euler") return Scheme::euler;
  if (name == "heun-pc") return Scheme::heun_pc;
  if (name == "multistep2") return Scheme::multistep2;
  fail("parse_scheme: unknown scheme '" + name + "'");
}

/// Reverse-process settings: σ discretization, integrator, conditioning mode,
/// guidance weight, ensemble size, and the seed all trajectories derive from.
struct SamplerConfig {
  int n_steps = 20;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  Scheme scheme = Scheme::heun_pc;
  std::string mode = "cross-attention";  // guided | cfg | cross-attention
  double guidance = 1.0;                 // γ; 1 collapses to the conditional model
  int ensemble = 25;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_steps >= 1, "SamplerConfig: n_steps must be at least 1");
    require(sigma_min > 0 && sigma_max > sigma_min,
            "SamplerConfig: need sigma_max > sigma_min > 0");
    require(rho > 0, "SamplerConfig: rho must be positive");
    require(ensemble >= 1, "SamplerConfig: ensemble size must be at least 1");
    require(mode == "guided" || mode == "cfg" || mode == "cross-attention",
            "SamplerConfig: unknown mode '" + mode + "'");
  }
};

/// ρ-power noise grid σ_0 > σ_1 > … > σ_{N-1} > σ_N = 0 with
/// σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ.
/// Returns N+1 values; the appended 0 makes the last step land on clean data.
template <typename S>
std::vector<S> sigma_steps(const SamplerConfig& config) {
  config.validate();
  const int n = config.n_steps;
  std::vector<S> sigmas(size_t(n) + 1);
  const double inv_rho = 1.0 / config.rho;
  const double hi = std::pow(config.sigma_max, inv_rho);
  const double lo = std::pow(config.sigma_min, inv_rho);
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : double(i) / double(n - 1);
    sigmas[size_t(i)] = S(std::pow(hi + frac * (lo - hi), config.rho));
  }
  sigmas[size_t(n)] = S(0);
  for (int i = 0; i < n; ++i)
    require(sigmas[size_t(i)] > sigmas[size_t(i) + 1], "sigma_steps: grid not decreasing");
  return sigmas;
}

/// A denoiser evaluation D(x;σ); the network, conditioning, and any
/// observed-cell handling are baked in by the caller.
template <typename S>
using DenoiseFn = std::function<FieldTensor<S>(const FieldTensor<S>&, S)>;

/// Probability-flow ODE right-hand side dx/dσ = (x − D(x;σ))/σ.
template <typename S>
FieldTensor<S> ode_rhs(const FieldTensor<S>& x, S sigma, const DenoiseFn<S>& denoiser) {
  require(sigma > S(0), "ode_rhs: sigma must be positive");
  const FieldTensor<S> d = denoiser(x, sigma);
  require(d.channels == x.channels && d.height == x.height && d.width == x.width,
          "ode_rhs: denoiser changed the field shape");
  return FieldTensor<S>(x.channels, x.height, x.width, (x.values - d.values) / sigma);
}

template <typename S>
FieldTensor<S> step_euler(const FieldTensor<S>& x, S sigma, S sigma_next,
                          const DenoiseFn<S>& denoiser) {
  const FieldTensor<S> d = ode_rhs(x, sigma, denoiser);
  return FieldTensor<S>(x.channels, x.height, x.width, x.values + (sigma_next - sigma) * d.values);
}

/// Heun predictor-corrector: Euler to σ_next, then average the RHS at both
/// ends. Exact when the RHS is affine in σ along the trajectory. The final
/// step to σ_next = 0 stays predictor-only (the RHS is undefined at 0).
template <typename S>
FieldTensor<S> step_heun_pc(const FieldTensor<S>& x, S sigma, S sigma_next,
                            const DenoiseFn<S>& denoiser) {
  require(sigma_next < sigma, "step_heun_pc: sigma must decrease");
  const S h = sigma_next - sigma;
  const FieldTensor<S> d1 = ode_rhs(x, sigma, denoiser);
  FieldTensor<S> xp(x.channels, x.height, x.width, x.values + h * d1.values);
  if (sigma_next == S(0)) return xp;
  const FieldTensor<S> d2 = ode_rhs(xp, sigma_next, denoiser);
  return FieldTensor<S>(x.channels, x.height, x.width,
                        x.values + (h / S(2)) * (d1.values + d2.values));
}

/// One 2-step Adams–Bashforth update with nonuniform steps:
/// x += h·[(1 + h/(2h_prev))·d − (h/(2h_prev))·d_prev]. The weights sum to h,
/// so a constant RHS reproduces Euler exactly. Returns the new state; `d` is
/// the RHS at (x, σ) the caller must keep as the next step's history.
template <typename S>
FieldTensor<S> step_multistep2(const FieldTensor<S>& x, S sigma, S sigma_next,
                               const FieldTensor<S>& d,
                               const std::type_identity_t<FieldTensor<S>>* d_prev, S h_prev) {
  const S h = sigma_next - sigma;
  if (d_prev == nullptr)
    return FieldTensor<S>(x.channels, x.height, x.width, x.values + h * d.values);
  require(h_prev != S(0), "step_multistep2: zero previous step");
  const S r = h / (S(2) * h_prev);
  return FieldTensor<S>(x.channels, x.height, x.width,
                        x.values + h * ((S(1) + r) * d.values - r * d_prev->values));
}

/// Guidance combination on denoiser outputs: uncond + γ·(cond − uncond).
/// Scores are affine in D at fixed (x,σ), so combining D's is the same
/// combination of scores. γ = 1 and γ = 0 return their input unchanged.
template <typename S>
FieldTensor<S> cfg_combine(const FieldTensor<S>& cond, const FieldTensor<S>& uncond, S gamma) {
  require(cond.channels == uncond.channels && cond.height == uncond.height &&
              cond.width == uncond.width,
          "cfg_combine: shape mismatch");
  if (gamma == S(1)) return cond;
  if (gamma == S(0)) return uncond;
  return FieldTensor<S>(cond.channels, cond.height, cond.width,
                        uncond.values + gamma * (cond.values - uncond.values));
}

/// Integrates the PF ODE along the σ grid. `project`, when given, restores
/// the held cells after every accepted step (the denoiser-facing handling of
/// those cells lives inside `fn`).
template <typename S>
FieldTensor<S> integrate(FieldTensor<S> x, const std::vector<S>& sigmas, Scheme scheme,
                         const DenoiseFn<S>& fn,
                         const std::function<void(FieldTensor<S>&)>& project = nullptr) {
  require(sigmas.size() >= 2, "integrate: need at least one step");
  FieldTensor<S> d_prev;
  S h_prev = 0;
  bool have_prev = false;
  for (size_t i = 0; i + 1 < sigmas.size(); ++i) {
    const S sigma = sigmas[i], sigma_next = sigmas[i + 1];
    switch (scheme) {
      case Scheme::euler:
        x = step_euler(x, sigma, sigma_next, fn);
        break;
      case Scheme::heun_pc:
        x = step_heun_pc(x, sigma, sigma_next, fn);
        break;
      case Scheme::multistep2: {
        FieldTensor<S> d = ode_rhs(x, sigma, fn);
        x = step_multistep2(x, sigma, sigma_next, d, have_prev ? &d_prev : nullptr, h_prev);
        d_prev = std::move(d);
        h_prev = sigma_next - sigma;
        have_prev = true;
        break;
      }
    }
    if (project) project(x);
  }
  return x;
}

/// Wraps a model bundle as a DenoiseFn. Conditional bundles get their
/// encoder state computed once from the observations; CFG additionally
/// blends with the null-condition branch when γ ≠ 1.
template <typename S>
DenoiseFn<S> make_denoise_fn(const edm::ModelBundle<S>& bundle,
                             const ObservationSet<S>& obs_normalized, S gamma) {
  const S sigma_data = S(bundle.schedule.sigma_data);
  if (!bundle.conditional()) {
    require(bundle.denoiser != nullptr, "make_denoise_fn: bundle has no denoiser");
    auto dn = bundle.denoiser;
    return [dn, sigma_data](const FieldTensor<S>& x, S sigma) {
      return edm::denoise_field(*dn, x, sigma, nullptr, sigma_data);
    };
  }

  require(obs_normalized.count() > 0, "make_denoise_fn: empty observation set");
  const int grid = bundle.config.grid;
  const auto mask = make_mask(obs_normalized.positions, grid, grid);
  const auto cond = bundle.encoder->forward(voronoi_tessellate(obs_normalized, grid, grid),
                                            sensor_indicator<S>(mask));
  auto dn = bundle.denoiser;

  if (bundle.model == "cross-attention") {
    auto tokens = cond.tokens;
    return [dn, tokens, sigma_data](const FieldTensor<S>& x, S sigma) {
      return edm::denoise_field(*dn, x, sigma, tokens, sigma_data);
    };
  }

  // CFG: γ = 1 is plain conditional sampling and needs a single model call;
  // otherwise blend the conditional and null-condition outputs.
  auto pooled = cond.pooled;
  if (gamma == S(1)) {
    return [dn, pooled, sigma_data](const FieldTensor<S>& x, S sigma) {
      return edm::denoise_field(*dn, x, sigma, pooled, sigma_data);
    };
  }
  auto pooled_null = bundle.encoder->forward_null().pooled;
  return [dn, pooled, pooled_null, sigma_data, gamma](const FieldTensor<S>& x, S sigma) {
    if (gamma == S(0)) return edm::denoise_field(*dn, x, sigma, pooled_null, sigma_data);
    return cfg_combine(edm::denoise_field(*dn, x, sigma, pooled, sigma_data),
                       edm::denoise_field(*dn, x, sigma, pooled_null, sigma_data), gamma);
  };
}

/// Overwrites the masked cells of `x` (all channels) with values from `src`.
template <typename S>
void overwrite_observed(FieldTensor<S>& x, const ObservationMask& mask,
                        const FieldTensor<S>& src) {
  for (int r = 0; r < x.height; ++r)
    for (int col = 0; col < x.width; ++col)
      if (mask.at(r, col))
        for (int c = 0; c < x.channels; ++c) x.at(c, r, col) = src.at(c, r, col);
}

/// Observed-cell refresh of guided sampling: masked cells are re-set to the
/// clean observed values plus fresh σ-scaled noise, so the denoiser input
/// carries a uniform noise level. σ = 0 restores the observations exactly.
template <typename S>
FieldTensor<S> refresh_observed(const FieldTensor<S>& x, const FieldTensor<S>& clean,
                                const ObservationMask& mask, S sigma, Rng& rng) {
  require(sigma >= S(0), "refresh_observed: sigma must be nonnegative");
  FieldTensor<S> out = x;
  for (int r = 0; r < x.height; ++r)
    for (int col = 0; col < x.width; ++col)
      if (mask.at(r, col))
        for (int c = 0; c < x.channels; ++c)
          out.at(c, r, col) = clean.at(c, r, col) + sigma * S(rng.normal());
  return out;
}

namespace detail {

template <typename S>
FieldTensor<S> initial_noise(int channels, int grid, S sigma_max, Rng& rng) {
  return FieldTensor<S>(channels, grid, grid,
                        sigma_max * rng.normal_array<S>(Eigen::Index(channels) * grid * grid));
}

template <typename S>
void check_observations(const edm::ModelBundle<S>& bundle, const ObservationSet<S>& obs) {
  require(obs.count() > 0, "sample: empty observation set");
  require(obs.channels() == bundle.config.field_channels,
          "sample: observation channel count does not match the checkpoint");
}

}  // namespace detail

/// Reconstructs one field from observations with a conditional checkpoint
/// (cfg or cross-attention). Observed cells are pinned to their normalized
/// values for every denoiser evaluation and every accepted step; the ODE
/// updates only the unobserved cells. Returns a denormalized field whose
/// observed cells carry the input observations bit-for-bit.
/// `override_fn`, when given, replaces the model evaluation (all pinning and
/// masking still applies): the injection point for oracle-denoiser tests.
template <typename S>
FieldTensor<S> sample_conditional(const edm::ModelBundle<S>& bundle, const ObservationSet<S>& obs,
                                  const SamplerConfig& config, Rng& rng,
                                  const DenoiseFn<S>* override_fn = nullptr) {
  config.validate();
  require(bundle.conditional(), "sample_conditional: checkpoint is not a conditional model");
  require(config.mode == bundle.model,
          "sample_conditional: sampler mode '" + config.mode + "' does not match checkpoint '" +
              bundle.model + "'");
  detail::check_observations(bundle, obs);

  const int grid = bundle.config.grid;
  const auto obs_norm = normalize(obs, bundle.norm);
  const auto mask = make_mask(obs_norm.positions, grid, grid);
  const auto pinned = scatter(obs_norm, grid, grid);
  const auto fn_model =
      override_fn ? *override_fn : make_denoise_fn(bundle, obs_norm, S(config.guidance));
  const DenoiseFn<S> fn = [&](const FieldTensor<S>& x, S sigma) {
    FieldTensor<S> x_pinned = x;
    overwrite_observed(x_pinned, mask, pinned);
    return fn_model(x_pinned, sigma);
  };

  const auto sigmas = sigma_steps<S>(config);
  auto x = detail::initial_noise<S>(bundle.config.field_channels, grid, sigmas[0], rng);
  overwrite_observed(x, mask, pinned);
  x = integrate<S>(std::move(x), sigmas, config.scheme, fn,
                   [&](FieldTensor<S>& y) { overwrite_observed(y, mask, pinned); });

  auto out = denormalize(x, bundle.norm);
  overwrite_observed(out, mask, scatter(obs, grid, grid));
  return out;
}

/// Reconstructs one field from observations with an unconditional checkpoint
/// via inpainting: unobserved cells follow the PF ODE while observed cells
/// are re-noised to the current σ before every denoiser call. The final
/// refresh at σ = 0 makes observed cells exact.
template <typename S>
FieldTensor<S> sample_guided(const edm::ModelBundle<S>& bundle, const ObservationSet<S>& obs,
                             const SamplerConfig& config, Rng& rng,
                             const DenoiseFn<S>* override_fn = nullptr) {
  config.validate();
  require(bundle.model == "unconditional",
          "sample_guided: checkpoint is not an unconditional model");
  require(config.mode == "guided", "sample_guided: sampler mode must be 'guided'");
  detail::check_observations(bundle, obs);

  const int grid = bundle.config.grid;
  const auto obs_norm = normalize(obs, bundle.norm);
  const auto mask = make_mask(obs_norm.positions, grid, grid);
  const auto pinned = scatter(obs_norm, grid, grid);
  const auto fn_model =
      override_fn ? *override_fn : make_denoise_fn(bundle, obs_norm, S(config.guidance));
  const DenoiseFn<S> fn = [&](const FieldTensor<S>& x, S sigma) {
    return fn_model(refresh_observed(x, pinned, mask, sigma, rng), sigma);
  };

  const auto sigmas = sigma_steps<S>(config);
  auto x = detail::initial_noise<S>(bundle.config.field_channels, grid, sigmas[0], rng);
  x = integrate<S>(std::move(x), sigmas, config.scheme, fn);

  auto out = denormalize(x, bundle.norm);
  overwrite_observed(out, mask, scatter(obs, grid, grid));
  return out;
}

/// Routes to the sampler matching the checkpoint's conditioning.
template <typename S>
FieldTensor<S> sample(const edm::ModelBundle<S>& bundle, const ObservationSet<S>& obs,
                      const SamplerConfig& config, Rng& rng,
                      const DenoiseFn<S>* override_fn = nullptr) {
  return bundle.conditional() ? sample_conditional(bundle, obs, config, rng, override_fn)
                              : sample_guided(bundle, obs, config, rng, override_fn);
}

/// Independent reconstructions with shared observations plus their exact
/// per-cell sample statistics (unbiased variance; zero for a single member).
template <typename S>
struct Ensemble {
  std::vector<FieldTensor<S>> members;
  FieldTensor<S> mean;
  FieldTensor<S> variance;
};

template <typename S>
Ensemble<S> ensemble_sample(const edm::ModelBundle<S>& bundle, const ObservationSet<S>& obs,
                            const SamplerConfig& config,
                            const DenoiseFn<S>* override_fn = nullptr) {
  config.validate();
  Ensemble<S> e;
  e.members.reserve(size_t(config.ensemble));
  for (int m = 0; m < config.ensemble; ++m) {
    Rng rng(config.seed, std::uint64_t(m));
    e.members.push_back(sample(bundle, obs, config, rng, override_fn));
  }

  // Welford's update keeps cells that are identical across members (the
  // pinned observations) at exactly their value with exactly zero variance.
  const auto& first = e.members.front();
  ArrayX<S> mean = ArrayX<S>::Zero(first.size());
  ArrayX<S> m2 = ArrayX<S>::Zero(first.size());
  S n = 0;
  for (const auto& m : e.members) {
    n += S(1);
    const ArrayX<S> delta = m.values - mean;
    mean += delta / n;
    m2 += delta * (m.values - mean);
  }
  e.mean = FieldTensor<S>(first.channels, first.height, first.width, std::move(mean));
  e.variance = FieldTensor<S>(
      first.channels, first.height, first.width,
      ArrayX<S>(e.members.size() > 1 ? ArrayX<S>(m2 / S(e.members.size() - 1))
                                     : ArrayX<S>(ArrayX<S>::Zero(first.size()))));
  return e;
}

}  // namespace fieldrecon::sampler
