#pragma once

#include <string>
#include <vector>

#include "fieldrecon/container.hpp"
#include "fieldrecon/datagen/darcy.hpp"
#include "fieldrecon/datagen/diffreact.hpp"
#include "fieldrecon/datagen/shallow_water.hpp"
#include "fieldrecon/fields.hpp"

namespace fieldrecon::datagen {

enum class Problem { darcy, shallow_water, diff_react };

inline std::string problem_name(Problem p) {
  switch (p) {
    case Problem::darcy: return "darcy";
    case Problem::shallow_water: return "shallow-water";
    case Problem::diff_react: return "diff-react";
  }
  fail("problem_name: bad enum");
}

inline Problem parse_problem(const std::string& s) {
  if (s == "darcy") return Problem::darcy;
  if (s == "shallow-water") return Problem::shallow_water;
  if (s == "diff-react") return Problem::diff_react;
  fail("unknown problem '" + s + "' (expected darcy | shallow-water | diff-react)");
}

inline std::vector<std::string> channel_names(Problem p) {
  switch (p) {
    case Problem::darcy: return {"permeability", "pressure"};
    case Problem::shallow_water: return {"height", "velocity_u", "velocity_v"};
    case Problem::diff_react: return {"activator", "inhibitor"};
  }
  fail("channel_names: bad enum");
}

struct DatasetSpec {
  Problem problem = Problem::darcy;
  int n_sims = 1;
  std::uint64_t seed = 0;
  DarcyConfig darcy;
  ShallowWaterConfig shallow_water;
  DiffReactConfig diff_react;
};

/// Runs all simulations and packs them into a container:
///   "fields"    (sims, time, channels, H, W), raw values
///   "norm_mean" (channels), "norm_std" (channels), population statistics
/// plus descriptive metadata. Each simulation draws from its own
/// (seed, sim index) stream.
inline Container build_dataset(const DatasetSpec& spec) {
  require(spec.n_sims >= 1, "build_dataset: n_sims must be >= 1");

  int grid = 0, n_steps = 0, channels = 0;
  std::vector<float> data;
  NormAccumulator<double> norm(0);

  auto append = [&](const FieldTensor<double>& f) {
    for (Eigen::Index i = 0; i < f.size(); ++i) data.push_back(float(f.values[i]));
    norm.add(f);
  };

  switch (spec.problem) {
    case Problem::darcy: {
      DarcyConfig cfg = spec.darcy;
      cfg.validate();
      grid = cfg.grid;
      n_steps = 1;
      channels = 2;
      norm = NormAccumulator<double>(channels);
      for (int s = 0; s < spec.n_sims; ++s) {
        Rng rng(spec.seed, std::uint64_t(s));
        append(darcy_simulate<double>(cfg, rng));
      }
      break;
    }
    case Problem::shallow_water: {
      ShallowWaterConfig cfg = spec.shallow_water;
      cfg.validate();
      grid = cfg.grid;
      n_steps = cfg.n_steps;
      channels = 3;
      norm = NormAccumulator<double>(channels);
      for (int s = 0; s < spec.n_sims; ++s) {
        Rng rng(spec.seed, std::uint64_t(s));
        for (const auto& frame : sw_simulate<double>(cfg, rng)) append(frame);
      }
      break;
    }
    case Problem::diff_react: {
      DiffReactConfig cfg = spec.diff_react;
      cfg.validate();
      grid = cfg.grid;
      n_steps = cfg.n_steps;
      channels = 2;
      norm = NormAccumulator<double>(channels);
      for (int s = 0; s < spec.n_sims; ++s) {
        Rng rng(spec.seed, std::uint64_t(s));
        for (const auto& frame : dr_simulate<double>(cfg, rng)) append(frame);
      }
      break;
    }
  }

  const NormStats<double> stats = norm.stats();
  Container c;
  c.add("fields", {spec.n_sims, n_steps, channels, grid, grid}, std::move(data));
  c.add("norm_mean", {channels}, ArrayX<double>(stats.mean.array()));
  c.add("norm_std", {channels}, ArrayX<double>(stats.std.array()));
  c.meta = {{"problem", problem_name(spec.problem)},
            {"grid", grid},
            {"sims", spec.n_sims},
            {"time_steps", n_steps},
            {"channels", channels},
            {"channel_names", channel_names(spec.problem)},
            {"seed", spec.seed}};
  return c;
}

inline void generate_dataset(const DatasetSpec& spec, const std::string& path) {
  build_dataset(spec).write(path);
}

/// In-memory view of a generated dataset. Snapshots are stored raw; the
/// normalization that training and sampling expect is applied on access.
template <typename Scalar>
struct Dataset {
  Problem problem = Problem::darcy;
  int n_sims = 0, n_steps = 0, channels = 0, height = 0, width = 0;
  std::vector<float> raw;  // (sims, time, channels, H, W)
  NormStats<Scalar> stats;

  int n_snapshots() const { return n_sims * n_steps; }
  Eigen::Index snapshot_size() const { return Eigen::Index(channels) * height * width; }

  /// Number of simulations in the training split: the leading fraction,
  /// at least one and leaving at least one for evaluation when possible.
  int train_sims(double frac = 0.8) const {
    int k = int(std::floor(frac * n_sims));
    k = std::max(1, std::min(k, n_sims > 1 ? n_sims - 1 : 1));
    return k;
  }
  int train_snapshots(double frac = 0.8) const { return train_sims(frac) * n_steps; }

  FieldTensor<Scalar> snapshot_raw(int sim, int t) const {
    require(0 <= sim && sim < n_sims && 0 <= t && t < n_steps, "Dataset: snapshot out of range");
    const Eigen::Index sz = snapshot_size();
    const Eigen::Index base = (Eigen::Index(sim) * n_steps + t) * sz;
    ArrayX<Scalar> v(sz);
    for (Eigen::Index i = 0; i < sz; ++i) v[i] = Scalar(raw[size_t(base + i)]);
    return FieldTensor<Scalar>(channels, height, width, std::move(v));
  }

  FieldTensor<Scalar> snapshot_raw(int snap) const {
    return snapshot_raw(snap / n_steps, snap % n_steps);
  }

  FieldTensor<Scalar> snapshot_normalized(int sim, int t) const {
    return normalize(snapshot_raw(sim, t), stats);
  }

  FieldTensor<Scalar> snapshot_normalized(int snap) const {
    return normalize(snapshot_raw(snap), stats);
  }

  static Dataset load(const std::string& path) {
    const Container c = Container::read(path);
    const ArrayEntry& fields = c.at("fields");
    require(fields.shape.size() == 5, "Dataset: 'fields' must be 5-dimensional");
    Dataset d;
    d.problem = parse_problem(c.meta.at("problem").get<std::string>());
    d.n_sims = int(fields.shape[0]);
    d.n_steps = int(fields.shape[1]);
    d.channels = int(fields.shape[2]);
    d.height = int(fields.shape[3]);
    d.width = int(fields.shape[4]);
    d.raw = fields.data;
    d.stats.mean = c.values<Scalar>("norm_mean").matrix();
    d.stats.std = c.values<Scalar>("norm_std").matrix();
    d.stats.validate();
    return d;
  }
};

}  // namespace fieldrecon::datagen
