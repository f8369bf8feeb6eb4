#pragma once

#include <cmath>
#include <vector>

#include "fieldrecon/common.hpp"
#include "fieldrecon/fields.hpp"

namespace fieldrecon::datagen {

/// Dam-break waves on a doubly periodic square. Lengths are in the domain's
/// mm unit; gravity is 1 in this nondimensional form, so velocities are in
/// grid units rather than physical m/s.
struct ShallowWaterConfig {
  int grid = 64;
  double domain_side = 50.0;      // mm
  double column_radius = 4.0;     // mm
  double column_height = 0.1;     // mm above background
  double background_height = 1.0; // ambient depth, mm; sets the wave speed
  double init_speed = 0.0;        // uniform initial u and v; equation-block default is rest
  double drag = 0.0;              // linear drag b
  double dt = 0.0;                // <= 0: half the CFL bound
  int n_steps = 50;               // snapshots (state before each step)
  std::uint64_t seed = 0;

  double dx() const { return domain_side / grid; }
  double wave_speed() const { return std::sqrt(background_height + column_height); }  // g = 1
  double cfl_bound() const { return dx() / (std::numbers::sqrt2 * wave_speed()); }
  double step_dt() const { return dt > 0.0 ? dt : 0.5 * cfl_bound(); }

  void validate() const {
    require(grid >= 8, "ShallowWaterConfig: grid must be >= 8");
    require(domain_side > 0 && column_radius > 0 && column_height > 0,
            "ShallowWaterConfig: lengths must be positive");
    require(column_radius < domain_side / 2, "ShallowWaterConfig: radius must be < side/2");
    require(background_height > 0, "ShallowWaterConfig: background height must be positive");
    require(n_steps >= 1, "ShallowWaterConfig: n_steps must be >= 1");
    require(step_dt() <= cfl_bound() * (1 + 1e-12),
            "ShallowWaterConfig: dt violates the CFL bound");
  }
};

/// Channels: 0 = height h, 1 = velocity u (x, along columns), 2 = velocity v
/// (y, along rows).
template <typename Scalar>
using SwState = FieldTensor<Scalar>;

/// Water column of the configured radius dropped at a cell, distances taken
/// on the torus; velocities start uniform at init_speed.
template <typename Scalar>
SwState<Scalar> sw_init(std::pair<int, int> center, const ShallowWaterConfig& config) {
  config.validate();
  const int n = config.grid;
  const auto& [r0, c0] = center;
  require(0 <= r0 && r0 < n && 0 <= c0 && c0 < n, "sw_init: center outside the grid");
  SwState<Scalar> s = SwState<Scalar>::zeros(3, n, n);
  const double dx = config.dx();
  const double radius_sq = config.column_radius * config.column_radius;
  for (int r = 0; r < n; ++r) {
    const int dr = std::min(std::abs(r - r0), n - std::abs(r - r0));
    for (int c = 0; c < n; ++c) {
      const int dc = std::min(std::abs(c - c0), n - std::abs(c - c0));
      const double d2 = (double(dr) * dr + double(dc) * dc) * dx * dx;
      s.at(0, r, c) = Scalar(config.background_height + (d2 <= radius_sq ? config.column_height : 0.0));
      s.at(1, r, c) = Scalar(config.init_speed);
      s.at(2, r, c) = Scalar(config.init_speed);
    }
  }
  return s;
}

/// One forward-in-time centered-in-space step of
///   dh/dt = -d(hu)/dx - d(hv)/dy
///   du/dt = -g dh/dx - b u,   dv/dt = -g dh/dy - b v
/// with periodic boundaries and g = 1. All derivatives read the old state.
template <typename Scalar>
SwState<Scalar> sw_step_ftcs(const SwState<Scalar>& state, double dt,
                             const ShallowWaterConfig& config) {
  const int n = config.grid;
  require(state.channels == 3 && state.height == n && state.width == n,
          "sw_step_ftcs: state must be 3 x grid x grid");
  require(dt > 0 && dt <= config.cfl_bound() * (1 + 1e-12), "sw_step_ftcs: dt violates CFL");

  const auto h = state.channel(0);
  const auto u = state.channel(1);
  const auto v = state.channel(2);
  SwState<Scalar> out = SwState<Scalar>::zeros(3, n, n);
  auto hn = out.channel(0);
  auto un = out.channel(1);
  auto vn = out.channel(2);

  const Scalar inv2dx = Scalar(1.0 / (2.0 * config.dx()));
  const Scalar b = Scalar(config.drag);
  auto wrap = [n](int i) { return (i + n) % n; };
  for (int r = 0; r < n; ++r) {
    const int rm = wrap(r - 1), rp = wrap(r + 1);
    for (int c = 0; c < n; ++c) {
      const int cm = wrap(c - 1), cp = wrap(c + 1);
      const Scalar dhu_dx = (h(r, cp) * u(r, cp) - h(r, cm) * u(r, cm)) * inv2dx;
      const Scalar dhv_dy = (h(rp, c) * v(rp, c) - h(rm, c) * v(rm, c)) * inv2dx;
      const Scalar dh_dx = (h(r, cp) - h(r, cm)) * inv2dx;
      const Scalar dh_dy = (h(rp, c) - h(rm, c)) * inv2dx;
      hn(r, c) = h(r, c) - Scalar(dt) * (dhu_dx + dhv_dy);
      un(r, c) = u(r, c) - Scalar(dt) * (dh_dx + b * u(r, c));
      vn(r, c) = v(r, c) - Scalar(dt) * (dh_dy + b * v(r, c));
    }
  }
  out.require_finite("sw_step_ftcs: blow-up");
  return out;
}

/// Snapshots of the state before each step: n_steps frames starting at t=0.
template <typename Scalar>
std::vector<SwState<Scalar>> sw_simulate(const ShallowWaterConfig& config, Rng& rng) {
  config.validate();
  const int n = config.grid;
  const std::pair<int, int> center{int(rng.below(std::uint64_t(n))),
                                   int(rng.below(std::uint64_t(n)))};
  std::vector<SwState<Scalar>> frames;
  frames.reserve(size_t(config.n_steps));
  SwState<Scalar> state = sw_init<Scalar>(center, config);
  const double dt = config.step_dt();
  for (int k = 0; k < config.n_steps; ++k) {
    frames.push_back(state);
    if (k + 1 == config.n_steps) break;
    try {
      state = sw_step_ftcs(state, dt, config);
    } catch (const std::exception&) {
      fail("sw_simulate: blow-up at step " + std::to_string(k + 1));
    }
  }
  return frames;
}

}  // namespace fieldrecon::datagen
