#pragma once

/// Benchmark harness: reconstruction metrics over unobserved cells,
/// observation-noise injection, the (ratio × noise × method) evaluation grid
/// with baselines and checkpointed models, and CSV / JSON / SVG emission.

#include <fieldrecon/common.hpp>
#include <fieldrecon/datagen/dataset.hpp>
#include <fieldrecon/edm.hpp>
#include <fieldrecon/fields.hpp>
#include <fieldrecon/sampler.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fieldrecon::bench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

template <typename S>
struct Metrics {
  S rmse = 0;
  S nrmse = 0;
  S crmse = 0;
};

/// Reconstruction error over the unobserved cells only; observed cells never
/// contribute. `channel` restricts scoring to one channel (-1 = all).
/// nrmse divides the RMSE by the truth's root-mean-square over the same
/// cells; crmse is the RMS over channels of the spatial-mean bias.
template <typename S>
Metrics<S> metrics(const FieldTensor<S>& pred, const FieldTensor<S>& truth,
                   const ObservationMask& mask, int channel = -1) {
  require(pred.channels == truth.channels && pred.height == truth.height &&
              pred.width == truth.width,
          "metrics: prediction and truth shapes disagree");
  require(mask.height == truth.height && mask.width == truth.width,
          "metrics: mask shape does not match the fields");
  require(channel < truth.channels, "metrics: channel out of range");
  const int c_begin = channel < 0 ? 0 : channel;
  const int c_end = channel < 0 ? truth.channels : channel + 1;

  S se = 0, t2 = 0, bias_sq = 0;
  long n = 0;
  for (int c = c_begin; c < c_end; ++c) {
    S sum_p = 0, sum_t = 0;
    long n_ch = 0;
    for (int r = 0; r < truth.height; ++r)
      for (int col = 0; col < truth.width; ++col) {
        if (mask.at(r, col)) continue;
        const S p = pred.at(c, r, col), t = truth.at(c, r, col);
        se += (p - t) * (p - t);
        t2 += t * t;
        sum_p += p;
        sum_t += t;
        ++n_ch;
      }
    require(n_ch > 0, "metrics: every cell is observed, nothing to score");
    const S bias = (sum_p - sum_t) / S(n_ch);
    bias_sq += bias * bias;
    n += n_ch;
  }
  Metrics<S> m;
  m.rmse = std::sqrt(se / S(n));
  require(t2 > S(0), "metrics: truth vanishes on the unobserved cells, undefined normalization");
  m.nrmse = m.rmse / std::sqrt(t2 / S(n));
  m.crmse = std::sqrt(bias_sq / S(c_end - c_begin));
  return m;
}

// ---------------------------------------------------------------------------
// Observation noise

/// Perturbs observation values with level·std[c]·N(0,1) per channel, the
/// noise scale being a fraction of each channel's data spread.
template <typename S>
ObservationSet<S> add_obs_noise(const ObservationSet<S>& obs, S level,
                                const VectorX<S>& channel_std, Rng& rng) {
  require(level >= S(0), "add_obs_noise: level must be nonnegative");
  require(channel_std.size() == obs.channels(),
          "add_obs_noise: one std per observation channel required");
  ObservationSet<S> out = obs;
  for (int k = 0; k < out.count(); ++k)
    for (int c = 0; c < out.channels(); ++c)
      out.values(c, k) += level * channel_std[c] * S(rng.normal());
  return out;
}

// ---------------------------------------------------------------------------
// Sensor layouts

/// k×k sensor lattice at cell centers — the evenly spaced layout.
inline ObservationMask lattice_mask(int height, int width, int k) {
  require(k >= 1 && k <= height && k <= width, "lattice_mask: lattice does not fit the grid");
  std::vector<std::pair<int, int>> pos;
  pos.reserve(size_t(k) * size_t(k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      pos.emplace_back(int((2 * i + 1) * height / (2 * k)), int((2 * j + 1) * width / (2 * k)));
  return make_mask(pos, height, width);
}

/// Sensor layout for a target coverage ratio: the evenly spaced lattice
/// whose count is closest to ratio·cells, or uniformly random positions
/// without replacement.
inline ObservationMask sensor_layout(bool evenly_spaced, double ratio, int height, int width,
                                     Rng& rng) {
  require(ratio > 0.0 && ratio < 1.0, "sensor_layout: ratio must lie in (0,1)");
  const long cells = long(height) * long(width);
  if (evenly_spaced) {
    int k = std::max(1, int(std::lround(std::sqrt(ratio * double(cells)))));
    k = std::min({k, height, width});
    return lattice_mask(height, width, k);
  }
  const int n = std::max(1, int(std::lround(ratio * double(cells))));
  std::vector<std::pair<int, int>> pos;
  pos.reserve(size_t(n));
  for (int flat : rng.sample_without_replacement(int(cells), n))
    pos.emplace_back(flat / width, flat % width);
  return make_mask(pos, height, width);
}

/// Per-snapshot sensors for the benchmark: Darcy is observed on the evenly
/// spaced lattice, the time-dependent problems at random positions.
inline ObservationMask sample_sensors(datagen::Problem problem, double ratio, int height,
                                      int width, Rng& rng) {
  return sensor_layout(problem == datagen::Problem::darcy, ratio, height, width, rng);
}

// ---------------------------------------------------------------------------
// Experiment configuration

/// Evaluation grid: every (obs ratio × noise level × method) cell is scored
/// on the held-out tail of the dataset.
struct ExperimentConfig {
  std::vector<double> obs_ratios{0.003, 0.01, 0.03};
  std::vector<double> noise_levels{0.0};
  std::vector<std::string> methods{"voronoi", "train-mean"};
  int eval_samples = 4;     ///< evaluation snapshots per grid cell
  double train_frac = 0.8;  ///< training split; evaluation uses the rest
  std::uint64_t seed = 0;
  sampler::SamplerConfig sampler;  ///< scheme/steps/ensemble for diffusion methods

  void validate() const {
    require(!obs_ratios.empty() && !noise_levels.empty() && !methods.empty(),
            "ExperimentConfig: ratios, noise levels, and methods must be nonempty");
    for (double r : obs_ratios)
      require(r > 0.0 && r < 1.0, "ExperimentConfig: obs ratios must lie in (0,1)");
    for (double l : noise_levels)
      require(l >= 0.0, "ExperimentConfig: noise levels must be nonnegative");
    require(eval_samples >= 1, "ExperimentConfig: need at least one evaluation sample");
    require(train_frac > 0.0 && train_frac < 1.0, "ExperimentConfig: train_frac must lie in (0,1)");
  }
};

/// Reconstruction methods the benchmark knows how to run. "truth" and
/// "train-mean" are sanity anchors, "voronoi" the non-learned baseline;
/// the rest require a checkpoint under the same name.
inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"truth",  "train-mean", "voronoi",        "vtunet",
                                              "guided", "cfg",        "cross-attention"};
  return names;
}

inline bool diffusion_method(const std::string& m) {
  return m == "guided" || m == "cfg" || m == "cross-attention";
}

inline bool checkpoint_method(const std::string& m) {
  return diffusion_method(m) || m == "vtunet";
}

inline ExperimentConfig parse_experiment(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("obs_ratios")) cfg.obs_ratios = j.at("obs_ratios").get<std::vector<double>>();
  if (j.contains("noise_levels"))
    cfg.noise_levels = j.at("noise_levels").get<std::vector<double>>();
  if (j.contains("methods")) cfg.methods = j.at("methods").get<std::vector<std::string>>();
  cfg.eval_samples = j.value("eval_samples", cfg.eval_samples);
  cfg.train_frac = j.value("train_frac", cfg.train_frac);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    cfg.sampler.n_steps = s.value("steps", cfg.sampler.n_steps);
    cfg.sampler.ensemble = s.value("ensemble", cfg.sampler.ensemble);
    cfg.sampler.guidance = s.value("guidance", cfg.sampler.guidance);
    cfg.sampler.sigma_min = s.value("sigma_min", cfg.sampler.sigma_min);
    cfg.sampler.sigma_max = s.value("sigma_max", cfg.sampler.sigma_max);
    cfg.sampler.rho = s.value("rho", cfg.sampler.rho);
    if (s.contains("scheme"))
      cfg.sampler.scheme = sampler::parse_scheme(s.at("scheme").get<std::string>());
  }
  cfg.validate();
  return cfg;
}

inline json experiment_json(const ExperimentConfig& cfg) {
  return json{{"obs_ratios", cfg.obs_ratios},
              {"noise_levels", cfg.noise_levels},
              {"methods", cfg.methods},
              {"eval_samples", cfg.eval_samples},
              {"train_frac", cfg.train_frac},
              {"seed", cfg.seed},
              {"sampler",
               {{"steps", cfg.sampler.n_steps},
                {"scheme", sampler::scheme_name(cfg.sampler.scheme)},
                {"ensemble", cfg.sampler.ensemble},
                {"guidance", cfg.sampler.guidance},
                {"sigma_min", cfg.sampler.sigma_min},
                {"sigma_max", cfg.sampler.sigma_max},
                {"rho", cfg.sampler.rho}}}};
}

// ---------------------------------------------------------------------------
// Report types

struct MetricsRow {
  std::string problem;
  std::string method;
  double obs_ratio = 0;
  double noise_level = 0;
  int samples = 0;
  double rmse = 0;
  double nrmse = 0;
  double crmse = 0;
  double seconds = 0;  ///< wall time for the cell's batch of reconstructions
};

/// One example reconstruction kept for the heatmap plots (a single channel).
template <typename S>
struct Panel {
  std::string problem;
  std::string method;
  std::string channel;
  int height = 0, width = 0;
  ArrayX<S> truth;  ///< row-major height×width
  ArrayX<S> pred;
  std::vector<std::pair<int, int>> sensors;
};

template <typename S>
struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::vector<Panel<S>> panels;
  json meta;
};

// ---------------------------------------------------------------------------
// Benchmark driver

namespace detail {

/// Fresh 64-bit seed for a named substream, so nested generators (ensemble
/// members, trajectories) cannot collide across grid cells.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed, stream).below(std::numeric_limits<std::uint64_t>::max());
}

/// Per-cell mean field over the training split.
template <typename S>
FieldTensor<S> training_mean(const datagen::Dataset<S>& data, double frac) {
  ArrayX<S> acc = ArrayX<S>::Zero(data.snapshot_size());
  const int sims = data.train_sims(frac);
  for (int sim = 0; sim < sims; ++sim)
    for (int t = 0; t < data.n_steps; ++t) acc += data.snapshot_raw(sim, t).values;
  acc /= S(sims * data.n_steps);
  return FieldTensor<S>(data.channels, data.height, data.width, std::move(acc));
}

template <typename S>
FieldTensor<S> reconstruct(const std::string& method, const edm::ModelBundle<S>* bundle,
                           const ObservationSet<S>& obs, const ObservationMask& mask,
                           const FieldTensor<S>& truth, const FieldTensor<S>& train_mean,
                           const sampler::SamplerConfig& scfg) {
  if (method == "truth") return truth;
  if (method == "train-mean") return train_mean;
  if (method == "voronoi") return voronoi_tessellate(obs, truth.height, truth.width);
  if (method == "vtunet") {
    const auto obs_n = normalize(obs, bundle->norm);
    auto y = bundle->vtunet->forward(voronoi_tessellate(obs_n, truth.height, truth.width),
                                     sensor_indicator<S>(mask));
    return denormalize(
        FieldTensor<S>(truth.channels, truth.height, truth.width, std::move(y->value)),
        bundle->norm);
  }
  return sampler::ensemble_sample(*bundle, obs, scfg).mean;
}

}  // namespace detail

/// Scores every (ratio × noise × method) cell on the dataset's held-out
/// tail. Sensor positions and injected noise are drawn per evaluation
/// snapshot from seed-derived substreams shared by all methods, so the
/// method comparison is paired and the report is reproducible. Darcy is
/// scored on the permeability channel only.
template <typename S>
MetricsReport<S> run_benchmark(const ExperimentConfig& config, const datagen::Dataset<S>& data,
                               const std::map<std::string, edm::ModelBundle<S>>& checkpoints) {
  config.validate();
  for (const auto& m : config.methods) {
    require(std::find(method_names().begin(), method_names().end(), m) != method_names().end(),
            "run_benchmark: unknown method '" + m + "'");
    if (!checkpoint_method(m)) continue;
    const auto it = checkpoints.find(m);
    require(it != checkpoints.end(), "run_benchmark: missing checkpoint for method '" + m + "'");
    const auto& b = it->second;
    require(b.config.grid == data.height && b.config.grid == data.width,
            "run_benchmark: checkpoint grid does not match the dataset");
    require(b.config.field_channels == data.channels,
            "run_benchmark: checkpoint channels do not match the dataset");
    const std::string want = m == "guided" ? "unconditional" : m;
    require(b.model == want, "run_benchmark: method '" + m + "' needs a '" + want +
                                 "' checkpoint, got '" + b.model + "'");
  }

  const int first_eval = data.train_sims(config.train_frac);
  const int eval_pool = (data.n_sims - first_eval) * data.n_steps;
  require(eval_pool > 0, "run_benchmark: dataset leaves no evaluation split");
  const FieldTensor<S> train_mean = detail::training_mean(data, config.train_frac);
  const int metric_channel = data.problem == datagen::Problem::darcy ? 0 : -1;

  const int n_ratio = int(config.obs_ratios.size());
  const int n_noise = int(config.noise_levels.size());
  const int n_method = int(config.methods.size());
  const int n_samples = config.eval_samples;

  MetricsReport<S> report;
  report.rows.resize(size_t(n_ratio) * n_noise * n_method);
  report.panels.resize(size_t(n_method));
  report.meta = {
      {"metrics_version", 1},
      {"nrmse", "per-sample RMSE over unobserved cells divided by the truth RMS over the "
                "same cells, averaged over evaluation samples"},
      {"crmse", "RMS over evaluation samples and channels of the spatial-mean bias on "
                "unobserved cells"},
      {"noise", "level times per-channel training std, added to observation values"},
      {"eval_split", "trailing simulations past the training fraction"},
      {"scored_channel",
       metric_channel < 0 ? "all" : datagen::channel_names(data.problem)[size_t(metric_channel)]},
      {"config", experiment_json(config)},
  };

  // Grid cells are independent: every random draw comes from a substream
  // named by (ratio, noise, sample) — shared across methods — or by the
  // full cell coordinate, so scheduling cannot change the report.
  parallel_for(n_ratio * n_noise * n_method, [&](int cell) {
    const int ri = cell / (n_noise * n_method);
    const int ni = (cell / n_method) % n_noise;
    const int mi = cell % n_method;
    const double ratio = config.obs_ratios[size_t(ri)];
    const double noise = config.noise_levels[size_t(ni)];
    const std::string& method = config.methods[size_t(mi)];
    const edm::ModelBundle<S>* bundle =
        checkpoint_method(method) ? &checkpoints.at(method) : nullptr;

    S sum_rmse = 0, sum_nrmse = 0, sum_crmse_sq = 0;
    double seconds = 0;
    for (int s = 0; s < n_samples; ++s) {
      const int snap = first_eval * data.n_steps + int((long(s) * eval_pool) / n_samples);
      const FieldTensor<S> truth = data.snapshot_raw(snap);

      // Sensors and noise are method-independent substreams: every method
      // sees the identical observation set.
      const std::uint64_t obs_stream = (std::uint64_t(ri) * n_noise + ni) * n_samples + s;
      Rng sensor_rng(config.seed, obs_stream * 4 + 0);
      const ObservationMask mask =
          sample_sensors(data.problem, ratio, data.height, data.width, sensor_rng);
      Rng noise_rng(config.seed, obs_stream * 4 + 1);
      const ObservationSet<S> obs =
          add_obs_noise(observe(truth, mask), S(noise), data.stats.std, noise_rng);

      sampler::SamplerConfig scfg = config.sampler;
      scfg.mode = diffusion_method(method) ? method : scfg.mode;
      scfg.seed = detail::derive_seed(
          config.seed, (1ull << 32) + (std::uint64_t(cell) * n_samples + s) * 4 + 2);

      const auto t0 = std::chrono::steady_clock::now();
      const FieldTensor<S> pred =
          detail::reconstruct(method, bundle, obs, mask, truth, train_mean, scfg);
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      const Metrics<S> m = metrics(pred, truth, mask, metric_channel);
      sum_rmse += m.rmse;
      sum_nrmse += m.nrmse;
      sum_crmse_sq += m.crmse * m.crmse;

      if (ri == 0 && ni == 0 && s == 0) {
        Panel<S>& p = report.panels[size_t(mi)];
        p.problem = datagen::problem_name(data.problem);
        p.method = method;
        const int ch = std::max(0, metric_channel);
        p.channel = datagen::channel_names(data.problem)[size_t(ch)];
        p.height = data.height;
        p.width = data.width;
        p.truth = truth.channel_flat(ch);
        p.pred = pred.channel_flat(ch);
        p.sensors = mask.positions();
      }
    }

    MetricsRow& row = report.rows[size_t(cell)];
    row.problem = datagen::problem_name(data.problem);
    row.method = method;
    row.obs_ratio = ratio;
    row.noise_level = noise;
    row.samples = n_samples;
    row.rmse = double(sum_rmse) / n_samples;
    row.nrmse = double(sum_nrmse) / n_samples;
    row.crmse = std::sqrt(double(sum_crmse_sq) / n_samples);
    row.seconds = seconds;
  });
  return report;
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open '" + path + "' for writing");
  out << body;
  require(out.good(), "write to '" + path + "' failed");
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '"')
      out += "&quot;";
    else
      out += c;
  }
  return out;
}

inline std::string slug(std::string s) {
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

/// Five-anchor sequential colormap, t in [0,1] → "#rrggbb".
inline std::string heat_color(double t) {
  static const double anchors[5][3] = {{0.267, 0.005, 0.329},
                                       {0.229, 0.322, 0.545},
                                       {0.128, 0.567, 0.551},
                                       {0.369, 0.789, 0.383},
                                       {0.993, 0.906, 0.144}};
  t = std::min(1.0, std::max(0.0, t));
  const double x = t * 4;
  const int i = std::min(3, int(x));
  const double f = x - i;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                int(std::lround(255 * (anchors[i][0] + f * (anchors[i + 1][0] - anchors[i][0])))),
                int(std::lround(255 * (anchors[i][1] + f * (anchors[i + 1][1] - anchors[i][1])))),
                int(std::lround(255 * (anchors[i][2] + f * (anchors[i + 1][2] - anchors[i][2])))));
  return buf;
}

inline const char* bar_color(size_t i) {
  static const char* palette[8] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                   "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  return palette[i % 8];
}

inline std::string svg_text(double x, double y, const std::string& s, int size,
                            const char* anchor = "middle", const char* fill = "#222222") {
  std::ostringstream o;
  o << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
    << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">"
    << xml_escape(s) << "</text>\n";
  return o.str();
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

/// Grouped bar chart: noise levels on the x-axis, one bar per method, with a
/// dashed marker at nRMSE = 1 (the level of a training-mean predictor).
inline std::string bar_chart_svg(const std::string& title,
                                 const std::vector<double>& noise_levels,
                                 const std::vector<std::string>& methods,
                                 const std::vector<std::vector<double>>& nrmse) {
  const double width = 720, height = 420;
  const double left = 70, right = 24, top = 56, bottom = 64;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double y_max = 0;
  for (const auto& group : nrmse)
    for (double v : group) y_max = std::max(y_max, v);
  y_max = y_max <= 0 ? 1.0 : y_max * 1.12;
  const auto y_of = [&](double v) { return top + plot_h * (1.0 - v / y_max); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
    << "\" fill=\"#ffffff\"/>\n";
  o << svg_text(width / 2, 24, title, 15);

  for (int tick = 0; tick <= 5; ++tick) {
    const double v = y_max * tick / 5;
    o << "<line x1=\"" << left << "\" y1=\"" << y_of(v) << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << y_of(v) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    o << svg_text(left - 8, y_of(v) + 4, format_number(v), 11, "end");
  }
  if (y_max >= 1.0)
    o << "<line x1=\"" << left << "\" y1=\"" << y_of(1.0) << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << y_of(1.0)
      << "\" stroke=\"#888888\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";

  const size_t n_groups = noise_levels.size(), n_methods = methods.size();
  const double group_w = plot_w / double(n_groups);
  const double bar_w = group_w * 0.8 / double(n_methods);
  for (size_t g = 0; g < n_groups; ++g) {
    for (size_t m = 0; m < n_methods; ++m) {
      const double v = nrmse[g][m];
      const double x = left + group_w * (double(g) + 0.1) + bar_w * double(m);
      o << "<rect x=\"" << x << "\" y=\"" << y_of(v) << "\" width=\"" << bar_w * 0.92
        << "\" height=\"" << std::max(0.0, y_of(0) - y_of(v)) << "\" fill=\"" << bar_color(m)
        << "\"/>\n";
    }
    o << svg_text(left + group_w * (double(g) + 0.5), top + plot_h + 20,
                  format_number(noise_levels[g]), 12);
  }

  o << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
    << "\" y2=\"" << top + plot_h << "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
    << top + plot_h << "\" stroke=\"#222222\" stroke-width=\"1\"/>\n";
  o << svg_text(left + plot_w / 2, height - 14, "observation noise level", 13);
  o << "<text x=\"18\" y=\"" << top + plot_h / 2
    << "\" font-size=\"13\" font-family=\"sans-serif\" text-anchor=\"middle\" "
       "fill=\"#222222\" transform=\"rotate(-90 18 "
    << top + plot_h / 2 << ")\">nRMSE</text>\n";

  double lx = left;
  for (size_t m = 0; m < n_methods; ++m) {
    o << "<rect x=\"" << lx << "\" y=\"34\" width=\"12\" height=\"12\" fill=\"" << bar_color(m)
      << "\"/>\n";
    o << svg_text(lx + 16, 44, methods[m], 11, "start");
    lx += 16 + 7.5 * double(methods[m].size()) + 18;
  }
  o << "</svg>\n";
  return o.str();
}

/// Truth/reconstruction heatmap pair with ×-marks at the sensor positions.
template <typename S>
std::string heatmap_svg(const Panel<S>& panel) {
  const int h = panel.height, w = panel.width;
  const double cell = std::min(16.0, std::max(3.0, 320.0 / std::max(h, w)));
  const double pad = 16, title_h = 40, gap = 28, bar_w = 18;
  const double panel_w = cell * w;
  const double width = pad + panel_w + gap + panel_w + gap + bar_w + 48 + pad;
  const double height = title_h + cell * h + pad + 16;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < panel.truth.size(); ++i) {
    lo = std::min({lo, double(panel.truth[i]), double(panel.pred[i])});
    hi = std::max({hi, double(panel.truth[i]), double(panel.pred[i])});
  }
  const double span = hi - lo > 0 ? hi - lo : 1.0;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
    << "\" fill=\"#ffffff\"/>\n";

  const auto draw_grid = [&](double x0, const ArrayX<S>& values, const std::string& label) {
    o << svg_text(x0 + panel_w / 2, title_h - 12, label, 13);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double t = (double(values[Eigen::Index(r) * w + c]) - lo) / span;
        o << "<rect x=\"" << x0 + cell * c << "\" y=\"" << title_h + cell * r << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"" << heat_color(t) << "\"/>\n";
      }
    const double arm = cell * 0.45;
    for (const auto& [r, c] : panel.sensors) {
      const double cx = x0 + cell * (c + 0.5), cy = title_h + cell * (r + 0.5);
      o << "<line x1=\"" << cx - arm << "\" y1=\"" << cy - arm << "\" x2=\"" << cx + arm
        << "\" y2=\"" << cy + arm << "\" stroke=\"#ffffff\" stroke-width=\"1.6\"/>\n";
      o << "<line x1=\"" << cx - arm << "\" y1=\"" << cy + arm << "\" x2=\"" << cx + arm
        << "\" y2=\"" << cy - arm << "\" stroke=\"#ffffff\" stroke-width=\"1.6\"/>\n";
    }
  };
  draw_grid(pad, panel.truth, panel.channel + " (truth)");
  draw_grid(pad + panel_w + gap, panel.pred, panel.method);

  const double bx = pad + 2 * panel_w + 2 * gap, bh = cell * h;
  for (int i = 0; i < 64; ++i) {
    const double t = 1.0 - double(i) / 63.0;
    o << "<rect x=\"" << bx << "\" y=\"" << title_h + bh * i / 64 << "\" width=\"" << bar_w
      << "\" height=\"" << bh / 64 + 0.5 << "\" fill=\"" << heat_color(t) << "\"/>\n";
  }
  o << svg_text(bx + bar_w + 6, title_h + 10, format_number(hi), 11, "start");
  o << svg_text(bx + bar_w + 6, title_h + bh, format_number(lo), 11, "start");
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

/// Writes `report.csv` (one row per grid cell) and `report.json` (rows plus
/// the metric definitions) into `dir`.
template <typename S>
void emit_report(const MetricsReport<S>& report, const std::string& dir) {
  require(!report.rows.empty(), "emit_report: empty report");
  std::filesystem::create_directories(dir);

  std::ostringstream csv;
  csv << "problem,method,obs_ratio,noise_level,samples,rmse,nrmse,crmse,seconds\n";
  for (const auto& r : report.rows)
    csv << r.problem << ',' << r.method << ',' << detail::fmt_double(r.obs_ratio) << ','
        << detail::fmt_double(r.noise_level) << ',' << r.samples << ','
        << detail::fmt_double(r.rmse) << ',' << detail::fmt_double(r.nrmse) << ','
        << detail::fmt_double(r.crmse) << ',' << detail::fmt_double(r.seconds) << '\n';
  detail::write_file(dir + "/report.csv", csv.str());

  json j;
  j["meta"] = report.meta;
  j["rows"] = json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"problem", r.problem},
                         {"method", r.method},
                         {"obs_ratio", r.obs_ratio},
                         {"noise_level", r.noise_level},
                         {"samples", r.samples},
                         {"rmse", r.rmse},
                         {"nrmse", r.nrmse},
                         {"crmse", r.crmse},
                         {"seconds", r.seconds}});
  detail::write_file(dir + "/report.json", j.dump(2) + "\n");
}

/// Writes the SVG plots into `dir`: one nRMSE-vs-noise bar chart per
/// (problem, obs ratio) and one truth/reconstruction heatmap per panel.
template <typename S>
void emit_plots(const MetricsReport<S>& report, const std::string& dir) {
  require(!report.rows.empty(), "emit_plots: empty report");
  std::filesystem::create_directories(dir);

  // Charts follow the row order, which run_benchmark keeps deterministic.
  std::vector<std::pair<std::string, double>> chart_keys;
  for (const auto& r : report.rows) {
    const std::pair<std::string, double> key{r.problem, r.obs_ratio};
    if (std::find(chart_keys.begin(), chart_keys.end(), key) == chart_keys.end())
      chart_keys.push_back(key);
  }
  for (const auto& [problem, ratio] : chart_keys) {
    std::vector<double> noise_levels;
    std::vector<std::string> methods;
    for (const auto& r : report.rows) {
      if (r.problem != problem || r.obs_ratio != ratio) continue;
      if (std::find(noise_levels.begin(), noise_levels.end(), r.noise_level) ==
          noise_levels.end())
        noise_levels.push_back(r.noise_level);
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
        methods.push_back(r.method);
    }
    std::vector<std::vector<double>> nrmse(noise_levels.size(),
                                           std::vector<double>(methods.size(), 0.0));
    for (const auto& r : report.rows) {
      if (r.problem != problem || r.obs_ratio != ratio) continue;
      const auto g = size_t(std::find(noise_levels.begin(), noise_levels.end(), r.noise_level) -
                            noise_levels.begin());
      const auto m = size_t(std::find(methods.begin(), methods.end(), r.method) -
                            methods.begin());
      nrmse[g][m] = r.nrmse;
    }
    const std::string title =
        problem + ", sensor ratio " + detail::format_number(ratio) + " — nRMSE by noise level";
    detail::write_file(dir + "/nrmse_" + problem + "_r" + detail::slug(detail::format_number(ratio)) + ".svg",
                       detail::bar_chart_svg(title, noise_levels, methods, nrmse));
  }

  for (const auto& p : report.panels) {
    if (p.height == 0) continue;  // cell never evaluated
    detail::write_file(dir + "/field_" + p.problem + "_" + p.method + ".svg",
                       detail::heatmap_svg(p));
  }
}

}  // namespace fieldrecon::bench
