#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "fieldrecon/common.hpp"

namespace fieldrecon {

/// Dense multi-channel 2D grid, row-major within each channel:
/// values[(c*height + r)*width + col].
template <typename Scalar>
struct FieldTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  ArrayX<Scalar> values;

  FieldTensor() = default;
  FieldTensor(int c, int h, int w, ArrayX<Scalar> v)
      : channels(c), height(h), width(w), values(std::move(v)) {
    require(c > 0 && h > 0 && w > 0, "FieldTensor: dimensions must be positive");
    require(values.size() == Eigen::Index(c) * h * w, "FieldTensor: value count mismatch");
  }

  static FieldTensor zeros(int c, int h, int w) {
    return FieldTensor(c, h, w, ArrayX<Scalar>::Zero(Eigen::Index(c) * h * w));
  }

  static FieldTensor constant(int c, int h, int w, Scalar fill) {
    return FieldTensor(c, h, w, ArrayX<Scalar>::Constant(Eigen::Index(c) * h * w, fill));
  }

  Eigen::Index size() const { return values.size(); }
  Eigen::Index cells() const { return Eigen::Index(height) * width; }

  Scalar& at(int c, int r, int col) { return values[index(c, r, col)]; }
  Scalar at(int c, int r, int col) const { return values[index(c, r, col)]; }

  /// View of one channel as an H×W row-major array.
  auto channel(int c) {
    return Eigen::Map<ArrayXX<Scalar>>(values.data() + Eigen::Index(c) * cells(), height, width);
  }
  auto channel(int c) const {
    return Eigen::Map<const ArrayXX<Scalar>>(values.data() + Eigen::Index(c) * cells(), height,
                                             width);
  }

  /// Flat view of one channel (length H*W).
  auto channel_flat(int c) {
    return Eigen::Map<ArrayX<Scalar>>(values.data() + Eigen::Index(c) * cells(), cells());
  }
  auto channel_flat(int c) const {
    return Eigen::Map<const ArrayX<Scalar>>(values.data() + Eigen::Index(c) * cells(), cells());
  }

  void require_finite(const std::string& what) const {
    require(values.isFinite().all(), what + ": non-finite values");
  }

 private:
  Eigen::Index index(int c, int r, int col) const {
    require(0 <= c && c < channels && 0 <= r && r < height && 0 <= col && col < width,
            "FieldTensor: index out of range");
    return (Eigen::Index(c) * height + r) * width + col;
  }
};

/// Boolean sensor layout on an H×W grid.
struct ObservationMask {
  int height = 0;
  int width = 0;
  std::vector<char> flags;  // row-major, 1 = observed

  ObservationMask() = default;
  ObservationMask(int h, int w) : height(h), width(w), flags(size_t(h) * size_t(w), 0) {
    require(h > 0 && w > 0, "ObservationMask: dimensions must be positive");
  }

  bool at(int r, int c) const { return flags[size_t(r) * size_t(width) + size_t(c)] != 0; }
  void set(int r, int c, bool v) { flags[size_t(r) * size_t(width) + size_t(c)] = v ? 1 : 0; }

  int count() const {
    int n = 0;
    for (char f : flags) n += f != 0;
    return n;
  }

  ObservationMask complement() const {
    ObservationMask m(height, width);
    for (size_t i = 0; i < flags.size(); ++i) m.flags[i] = flags[i] ? 0 : 1;
    return m;
  }

  /// Observed cell positions in row-major order.
  std::vector<std::pair<int, int>> positions() const {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (at(r, c)) out.emplace_back(r, c);
    return out;
  }
};

/// Sparse point observations: shared sensor positions, one value row per
/// channel (values is channels × n_sensors).
template <typename Scalar>
struct ObservationSet {
  std::vector<std::pair<int, int>> positions;  // (row, col)
  MatrixX<Scalar> values;

  int count() const { return int(positions.size()); }
  int channels() const { return int(values.rows()); }
};

inline ObservationMask make_mask(const std::vector<std::pair<int, int>>& positions, int height,
                                 int width) {
  ObservationMask m(height, width);
  for (const auto& [r, c] : positions) {
    const std::string where = "(" + std::to_string(r) + "," + std::to_string(c) + ")";
    require(0 <= r && r < height && 0 <= c && c < width,
            "make_mask: position " + where + " out of bounds");
    require(!m.at(r, c), "make_mask: duplicate sensor position " + where);
    m.set(r, c, true);
  }
  return m;
}

/// Splits a field into (M ⊙ x, M^c ⊙ x). The parts sum back to x exactly:
/// each value is copied into exactly one part, the other holds zero.
template <typename Scalar>
std::pair<FieldTensor<Scalar>, FieldTensor<Scalar>> mask_partition(const FieldTensor<Scalar>& x,
                                                                   const ObservationMask& mask) {
  require(mask.height == x.height && mask.width == x.width,
          "mask_partition: mask/field shape mismatch");
  FieldTensor<Scalar> observed = FieldTensor<Scalar>::zeros(x.channels, x.height, x.width);
  FieldTensor<Scalar> unobserved = observed;
  for (int c = 0; c < x.channels; ++c)
    for (int r = 0; r < x.height; ++r)
      for (int col = 0; col < x.width; ++col)
        (mask.at(r, col) ? observed : unobserved).at(c, r, col) = x.at(c, r, col);
  return {std::move(observed), std::move(unobserved)};
}

/// Reads field values at the masked cells (row-major sensor order).
template <typename Scalar>
ObservationSet<Scalar> observe(const FieldTensor<Scalar>& field, const ObservationMask& mask) {
  require(mask.height == field.height && mask.width == field.width,
          "observe: mask/field shape mismatch");
  ObservationSet<Scalar> obs;
  obs.positions = mask.positions();
  obs.values.resize(field.channels, Eigen::Index(obs.positions.size()));
  for (int c = 0; c < field.channels; ++c)
    for (size_t i = 0; i < obs.positions.size(); ++i)
      obs.values(c, Eigen::Index(i)) = field.at(c, obs.positions[i].first, obs.positions[i].second);
  return obs;
}

/// Writes observation values into an otherwise zero field.
template <typename Scalar>
FieldTensor<Scalar> scatter(const ObservationSet<Scalar>& obs, int height, int width) {
  require(obs.count() > 0, "scatter: empty observation set");
  FieldTensor<Scalar> out = FieldTensor<Scalar>::zeros(obs.channels(), height, width);
  for (int c = 0; c < obs.channels(); ++c)
    for (int i = 0; i < obs.count(); ++i) {
      const auto& [r, col] = obs.positions[size_t(i)];
      require(0 <= r && r < height && 0 <= col && col < width, "scatter: position out of bounds");
      out.at(c, r, col) = obs.values(c, i);
    }
  return out;
}

/// Index of the nearest sensor for every grid cell (squared Euclidean
/// distance on cell indices; ties go to the lowest sensor index).
inline std::vector<int> nearest_sensor(const std::vector<std::pair<int, int>>& positions,
                                       int height, int width) {
  require(!positions.empty(), "nearest_sensor: no sensors");
  const size_t n_cells = size_t(height) * size_t(width);
  std::vector<std::int64_t> best_d2(n_cells, INT64_MAX);
  std::vector<int> best(n_cells, -1);
  for (int s = 0; s < int(positions.size()); ++s) {
    const auto& [sr, sc] = positions[size_t(s)];
    require(0 <= sr && sr < height && 0 <= sc && sc < width,
            "nearest_sensor: position out of bounds");
    for (int r = 0; r < height; ++r) {
      const std::int64_t dr2 = std::int64_t(r - sr) * (r - sr);
      for (int c = 0; c < width; ++c) {
        const std::int64_t d2 = dr2 + std::int64_t(c - sc) * (c - sc);
        const size_t cell = size_t(r) * size_t(width) + size_t(c);
        if (d2 < best_d2[cell]) {  // strict: first (lowest) sensor index wins ties
          best_d2[cell] = d2;
          best[cell] = s;
        }
      }
    }
  }
  return best;
}

/// Piecewise-constant tessellation: every cell takes the value of its nearest
/// sensor, per channel.
template <typename Scalar>
FieldTensor<Scalar> voronoi_tessellate(const ObservationSet<Scalar>& obs, int height, int width) {
  require(obs.count() > 0, "voronoi_tessellate: cannot tessellate zero sensors");
  const std::vector<int> nearest = nearest_sensor(obs.positions, height, width);
  FieldTensor<Scalar> out = FieldTensor<Scalar>::zeros(obs.channels(), height, width);
  const Eigen::Index n_cells = out.cells();
  for (int c = 0; c < obs.channels(); ++c) {
    auto ch = out.channel_flat(c);
    for (Eigen::Index cell = 0; cell < n_cells; ++cell)
      ch[cell] = obs.values(c, nearest[size_t(cell)]);
  }
  return out;
}

/// Binary sensor indicator as a one-channel field (1 at sensor cells).
template <typename Scalar>
FieldTensor<Scalar> sensor_indicator(const ObservationMask& mask) {
  FieldTensor<Scalar> out = FieldTensor<Scalar>::zeros(1, mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(r, c)) out.at(0, r, c) = Scalar(1);
  return out;
}

/// Per-channel affine normalization. normalize maps channel c to
/// (x - mean[c]) / std[c] * target_std, so normalized data has standard
/// deviation target_std (the denoiser's assumed data scale).
template <typename Scalar>
struct NormStats {
  VectorX<Scalar> mean;
  VectorX<Scalar> std;
  Scalar target_std = Scalar(0.5);

  int channels() const { return int(mean.size()); }

  void validate() const {
    require(mean.size() == std.size() && mean.size() > 0, "NormStats: mean/std size mismatch");
    require((std.array() > Scalar(0)).all(), "NormStats: std must be positive");
    require(target_std > Scalar(0), "NormStats: target_std must be positive");
  }
};

template <typename Scalar>
FieldTensor<Scalar> normalize(const FieldTensor<Scalar>& f, const NormStats<Scalar>& stats) {
  stats.validate();
  require(f.channels == stats.channels(), "normalize: channel count mismatch");
  FieldTensor<Scalar> out = f;
  for (int c = 0; c < f.channels; ++c)
    out.channel_flat(c) = (f.channel_flat(c) - stats.mean[c]) / stats.std[c] * stats.target_std;
  return out;
}

template <typename Scalar>
FieldTensor<Scalar> denormalize(const FieldTensor<Scalar>& f, const NormStats<Scalar>& stats) {
  stats.validate();
  require(f.channels == stats.channels(), "denormalize: channel count mismatch");
  FieldTensor<Scalar> out = f;
  for (int c = 0; c < f.channels; ++c)
    out.channel_flat(c) = f.channel_flat(c) / stats.target_std * stats.std[c] + stats.mean[c];
  return out;
}

template <typename Scalar>
ObservationSet<Scalar> normalize(const ObservationSet<Scalar>& obs, const NormStats<Scalar>& stats) {
  stats.validate();
  require(obs.channels() == stats.channels(), "normalize: channel count mismatch");
  ObservationSet<Scalar> out = obs;
  for (int c = 0; c < obs.channels(); ++c)
    out.values.row(c) =
        (obs.values.row(c).array() - stats.mean[c]) / stats.std[c] * stats.target_std;
  return out;
}

/// Streaming per-channel mean/std over many fields (population statistics).
template <typename Scalar>
struct NormAccumulator {
  explicit NormAccumulator(int channels)
      : sum(VectorX<double>::Zero(channels)), sum_sq(VectorX<double>::Zero(channels)) {}

  void add(const FieldTensor<Scalar>& f) {
    require(f.channels == int(sum.size()), "NormAccumulator: channel count mismatch");
    for (int c = 0; c < f.channels; ++c) {
      sum[c] += f.channel_flat(c).template cast<double>().sum();
      sum_sq[c] += f.channel_flat(c).template cast<double>().square().sum();
    }
    count += double(f.cells());
  }

  NormStats<Scalar> stats(Scalar target_std = Scalar(0.5)) const {
    require(count > 0, "NormAccumulator: no data");
    NormStats<Scalar> s;
    s.mean.resize(sum.size());
    s.std.resize(sum.size());
    s.target_std = target_std;
    for (Eigen::Index c = 0; c < sum.size(); ++c) {
      const double mean = sum[c] / count;
      const double var = std::max(0.0, sum_sq[c] / count - mean * mean);
      s.mean[c] = Scalar(mean);
      s.std[c] = Scalar(std::sqrt(var));
    }
    s.validate();
    return s;
  }

  VectorX<double> sum, sum_sq;
  double count = 0;
};

}  // namespace fieldrecon
