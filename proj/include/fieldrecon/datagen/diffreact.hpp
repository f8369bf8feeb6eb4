#pragma once

#include <cmath>
#include <vector>

#include "fieldrecon/common.hpp"
#include "fieldrecon/fields.hpp"

namespace fieldrecon::datagen {

/// Two-species activator/inhibitor system on a square with zero-flux walls.
struct DiffReactConfig {
  int grid = 32;
  double domain_side = 2.0;
  double d_u = 1e-3;
  double d_v = 5e-3;
  double k = 5e-3;
  double dt = 0.0;  // <= 0: half the diffusion stability bound
  int n_steps = 101;
  std::uint64_t seed = 0;

  double dx() const { return domain_side / grid; }
  double stability_bound() const {
    const double dmax = std::max(d_u, d_v);
    require(dmax > 0, "DiffReactConfig: stability bound undefined with zero diffusion");
    return dx() * dx() / (4.0 * dmax);
  }
  double step_dt() const { return dt > 0.0 ? dt : 0.5 * stability_bound(); }

  void validate() const {
    require(grid >= 8, "DiffReactConfig: grid must be >= 8");
    require(domain_side > 0, "DiffReactConfig: domain side must be positive");
    require(d_u >= 0 && d_v >= 0, "DiffReactConfig: diffusivities must be nonnegative");
    require(n_steps >= 1, "DiffReactConfig: n_steps must be >= 1");
    if (std::max(d_u, d_v) > 0)
      require(step_dt() <= stability_bound() * (1 + 1e-12),
              "DiffReactConfig: dt violates the diffusion stability bound");
    else
      require(dt > 0, "DiffReactConfig: explicit dt required when diffusion is zero");
  }
};

template <typename Scalar>
Scalar dr_reaction_u(Scalar u, Scalar v, Scalar k) {
  return u - u * u * u - k - v;
}

template <typename Scalar>
Scalar dr_reaction_v(Scalar u, Scalar v) {
  return u - v;
}

/// Channels: 0 = activator u, 1 = inhibitor v.
template <typename Scalar>
using DrState = FieldTensor<Scalar>;

/// Every cell of both species drawn i.i.d. standard normal.
template <typename Scalar>
DrState<Scalar> dr_init(const DiffReactConfig& config, Rng& rng) {
  config.validate();
  const int n = config.grid;
  return DrState<Scalar>(2, n, n, rng.normal_array<Scalar>(Eigen::Index(2) * n * n));
}

/// One explicit Euler step: 5-point Laplacian with zero-flux ghost cells
/// (mirrored indices), then the pointwise reactions.
template <typename Scalar>
DrState<Scalar> dr_step(const DrState<Scalar>& state, double dt, const DiffReactConfig& config) {
  const int n = config.grid;
  require(state.channels == 2 && state.height == n && state.width == n,
          "dr_step: state must be 2 x grid x grid");
  require(dt > 0, "dr_step: dt must be positive");
  if (std::max(config.d_u, config.d_v) > 0)
    require(dt <= config.stability_bound() * (1 + 1e-12), "dr_step: dt violates stability bound");

  const auto u = state.channel(0);
  const auto v = state.channel(1);
  DrState<Scalar> out = DrState<Scalar>::zeros(2, n, n);
  auto un = out.channel(0);
  auto vn = out.channel(1);

  const Scalar inv_dx2 = Scalar(1.0 / (config.dx() * config.dx()));
  const Scalar k = Scalar(config.k);
  auto reflect = [n](int i) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  for (int r = 0; r < n; ++r) {
    const int rm = reflect(r - 1), rp = reflect(r + 1);
    for (int c = 0; c < n; ++c) {
      const int cm = reflect(c - 1), cp = reflect(c + 1);
      const Scalar lap_u =
          (u(rm, c) + u(rp, c) + u(r, cm) + u(r, cp) - Scalar(4) * u(r, c)) * inv_dx2;
      const Scalar lap_v =
          (v(rm, c) + v(rp, c) + v(r, cm) + v(r, cp) - Scalar(4) * v(r, c)) * inv_dx2;
      un(r, c) = u(r, c) + Scalar(dt) * (Scalar(config.d_u) * lap_u +
                                         dr_reaction_u(u(r, c), v(r, c), k));
      vn(r, c) = v(r, c) + Scalar(dt) * (Scalar(config.d_v) * lap_v +
                                         dr_reaction_v(u(r, c), v(r, c)));
    }
  }
  out.require_finite("dr_step: blow-up");
  return out;
}

/// Snapshots of the state before each step: n_steps frames starting at t=0.
template <typename Scalar>
std::vector<DrState<Scalar>> dr_simulate(const DiffReactConfig& config, Rng& rng) {
  config.validate();
  std::vector<DrState<Scalar>> frames;
  frames.reserve(size_t(config.n_steps));
  DrState<Scalar> state = dr_init<Scalar>(config, rng);
  const double dt = config.step_dt();
  for (int k = 0; k < config.n_steps; ++k) {
    frames.push_back(state);
    if (k + 1 == config.n_steps) break;
    try {
      state = dr_step(state, dt, config);
    } catch (const std::exception&) {
      fail("dr_simulate: blow-up at step " + std::to_string(k + 1));
    }
  }
  return frames;
}

}  // namespace fieldrecon::datagen
