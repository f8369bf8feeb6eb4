/// Command-line workbench: dataset generation, denoiser training, ensemble
/// reconstruction from sparse sensors, reduced-order assimilation, and the
/// benchmark evaluation grid. Every artifact is an FRD1 container; fixed
/// seeds make every pipeline bit-reproducible.

#include <CLI11.hpp>

#include <fieldrecon/assim.hpp>
#include <fieldrecon/bench.hpp>
#include <fieldrecon/common.hpp>
#include <fieldrecon/container.hpp>
#include <fieldrecon/datagen/dataset.hpp>
#include <fieldrecon/edm.hpp>
#include <fieldrecon/fields.hpp>
#include <fieldrecon/sampler.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace fieldrecon;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Observation files: "positions" [N,2], "values" [C,N], optional "truth"
// [C,H,W] for later scoring, grid geometry in the metadata.

template <typename S>
struct ObsFile {
  ObservationSet<S> obs;
  std::optional<FieldTensor<S>> truth;
  int height = 0, width = 0;
  json meta;
};

template <typename S>
void write_observations(const std::string& path, const ObservationSet<S>& obs,
                        const FieldTensor<S>& truth, json meta) {
  Container c;
  const int n = obs.count(), ch = obs.channels();
  std::vector<float> pos(size_t(n) * 2);
  for (int k = 0; k < n; ++k) {
    pos[size_t(k) * 2] = float(obs.positions[size_t(k)].first);
    pos[size_t(k) * 2 + 1] = float(obs.positions[size_t(k)].second);
  }
  std::vector<float> values(size_t(ch) * size_t(n));
  for (int c_i = 0; c_i < ch; ++c_i)
    for (int k = 0; k < n; ++k) values[size_t(c_i) * n + k] = float(obs.values(c_i, k));
  c.add("positions", {n, 2}, std::move(pos));
  c.add("values", {ch, n}, std::move(values));
  c.add("truth", {truth.channels, truth.height, truth.width}, truth.values);
  meta["height"] = truth.height;
  meta["width"] = truth.width;
  meta["channels"] = ch;
  c.meta = std::move(meta);
  c.write(path);
}

template <typename S>
ObsFile<S> read_observations(const std::string& path) {
  const Container c = Container::read(path);
  ObsFile<S> f;
  f.meta = c.meta;
  f.height = c.meta.at("height").get<int>();
  f.width = c.meta.at("width").get<int>();
  const auto pos = c.values<double>("positions");
  const auto& shape = c.at("values").shape;
  require(shape.size() == 2, "observations: 'values' must be channels x sensors");
  const int ch = int(shape[0]), n = int(shape[1]);
  require(pos.size() == Eigen::Index(n) * 2, "observations: positions/values disagree");
  const auto vals = c.values<S>("values");
  f.obs.positions.resize(size_t(n));
  f.obs.values.resize(ch, n);
  for (int k = 0; k < n; ++k)
    f.obs.positions[size_t(k)] = {int(pos[Eigen::Index(k) * 2]),
                                  int(pos[Eigen::Index(k) * 2 + 1])};
  for (int c_i = 0; c_i < ch; ++c_i)
    for (int k = 0; k < n; ++k) f.obs.values(c_i, k) = vals[Eigen::Index(c_i) * n + k];
  if (c.has("truth"))
    f.truth = FieldTensor<S>(ch, f.height, f.width, ArrayX<S>(c.values<S>("truth")));
  return f;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOpts {
  std::string problem, out;
  int grid = 0;  // 0 keeps the problem default
  int sims = 16;
  std::uint64_t seed = 0;
  int modes = 0;
  double drag = -1.0;
  double dt = 0.0;
  int steps = 0;
};

void run_generate(const GenerateOpts& o) {
  datagen::DatasetSpec spec;
  spec.problem = datagen::parse_problem(o.problem);
  spec.n_sims = o.sims;
  spec.seed = o.seed;
  if (o.grid > 0) {
    spec.darcy.grid = o.grid;
    spec.shallow_water.grid = o.grid;
    spec.diff_react.grid = o.grid;
  }
  if (o.modes > 0) spec.darcy.n_modes = o.modes;
  if (o.drag >= 0) spec.shallow_water.drag = o.drag;
  if (o.dt > 0) {
    spec.shallow_water.dt = o.dt;
    spec.diff_react.dt = o.dt;
  }
  if (o.steps > 0) {
    spec.shallow_water.n_steps = o.steps;
    spec.diff_react.n_steps = o.steps;
  }
  const Container c = datagen::build_dataset(spec);
  c.write(o.out);
  const auto& shape = c.at("fields").shape;
  std::cerr << "wrote " << o.problem << " dataset: " << shape[0] << " sims x " << shape[1]
            << " steps x " << shape[2] << "x" << shape[3] << "x" << shape[4] << " -> " << o.out
            << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string data, mode, out;
  long steps = 2000;
  int batch = 2;
  std::uint64_t seed = 0;
  double lr = 1e-4, weight_decay = 0.01, ema = 0.999;
  std::vector<int> plan;  // empty keeps the desk-scale default
  int emb_dim = 64, patch = 4, token_dim = 128, attn_layers = 2;
  double ratio_max = 0.1, null_dropout = 0.1, train_frac = 0.8;
  long log_every = 0;  // 0: ~50 lines over the run
};

void run_train(const TrainOpts& o) {
  const auto data = datagen::Dataset<float>::load(o.data);
  require(data.height == data.width, "train: dataset grid must be square");

  net::NetConfig cfg;
  cfg.grid = data.height;
  cfg.field_channels = data.channels;
  cfg.plan = o.plan;
  cfg.emb_dim = o.emb_dim;
  cfg.patch = o.patch;
  cfg.token_dim = o.token_dim;
  cfg.enc_attn_layers = o.attn_layers;
  cfg.mode = o.mode == "cfg"               ? net::CondMode::cfg
             : o.mode == "cross-attention" ? net::CondMode::cross
                                           : net::CondMode::none;

  auto bundle = edm::make_bundle<float>(o.mode, cfg, data.stats, o.seed);
  long n_params = 0;
  for (const auto& [name, p] : bundle.params->items()) n_params += p->size();
  std::cerr << "training " << o.mode << " on " << data.n_snapshots() << " snapshots ("
            << data.train_snapshots(o.train_frac) << " train), " << n_params << " parameters\n";

  edm::TrainConfig tc;
  tc.steps = o.steps;
  tc.batch = o.batch;
  tc.lr = o.lr;
  tc.weight_decay = o.weight_decay;
  tc.ema_cap = o.ema;
  tc.ratio_max = o.ratio_max;
  tc.null_dropout = o.null_dropout;
  tc.train_frac = o.train_frac;
  tc.seed = o.seed;

  edm::Trainer<float> trainer(bundle, data, tc);
  const long every = o.log_every > 0 ? o.log_every : std::max<long>(1, o.steps / 50);
  trainer.run(o.steps, [&](long step, double loss) {
    if ((step + 1) % every == 0 || step + 1 == o.steps)
      std::cerr << "step " << (step + 1) << "/" << o.steps << " loss " << loss << "\n";
  });
  edm::save_checkpoint(bundle, trainer.ema(), o.out);
  std::cerr << "saved checkpoint (step " << bundle.step << ") -> " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// observe

struct ObserveOpts {
  std::string data, out;
  int snapshot = -1;  // -1: first held-out snapshot
  double ratio = 0.01;
  bool lattice = false, random = false;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

void run_observe(const ObserveOpts& o) {
  const auto data = datagen::Dataset<float>::load(o.data);
  const int snap = o.snapshot >= 0 ? o.snapshot : data.train_sims() * data.n_steps;
  require(snap < data.n_snapshots(), "observe: snapshot index past the dataset");
  const FieldTensor<float> truth = data.snapshot_raw(snap);

  require(!(o.lattice && o.random), "observe: --lattice and --random are exclusive");
  const bool evenly = o.lattice || (data.problem == datagen::Problem::darcy && !o.random);
  Rng layout_rng(o.seed, std::uint64_t(snap) * 2);
  const ObservationMask mask =
      bench::sensor_layout(evenly, o.ratio, data.height, data.width, layout_rng);
  Rng noise_rng(o.seed, std::uint64_t(snap) * 2 + 1);
  const ObservationSet<float> obs =
      bench::add_obs_noise(observe(truth, mask), float(o.noise), data.stats.std, noise_rng);

  write_observations(o.out, obs, truth,
                     json{{"problem", datagen::problem_name(data.problem)},
                          {"snapshot", snap},
                          {"ratio", o.ratio},
                          {"noise", o.noise},
                          {"seed", o.seed},
                          {"layout", evenly ? "lattice" : "random"}});
  std::cerr << "wrote " << obs.count() << " sensors (" << (evenly ? "lattice" : "random")
            << ") from snapshot " << snap << " -> " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// fit-basis

struct BasisOpts {
  std::string data, out;
  int q = 8;
  double train_frac = 0.8;
};

void run_fit_basis(const BasisOpts& o) {
  const auto data = datagen::Dataset<double>::load(o.data);
  const int n = data.train_snapshots(o.train_frac);
  MatrixX<double> snaps(data.snapshot_size(), n);
  for (int i = 0; i < n; ++i) snaps.col(i) = data.snapshot_raw(i).values.matrix();
  const auto basis = assim::pca_fit(snaps, o.q);

  Container c;
  const auto dim = basis.dim();
  std::vector<float> comp(size_t(dim) * size_t(o.q));
  for (Eigen::Index i = 0; i < dim; ++i)
    for (int j = 0; j < o.q; ++j) comp[size_t(i) * o.q + j] = float(basis.components(i, j));
  c.add("components", {std::int64_t(dim), o.q}, std::move(comp));
  c.add("eigenvalues", {o.q}, ArrayX<double>(basis.eigenvalues.array()));
  c.add("mean", {std::int64_t(dim)}, ArrayX<double>(basis.mean.array()));
  c.meta = {{"problem", datagen::problem_name(data.problem)},
            {"q", o.q},
            {"height", data.height},
            {"width", data.width},
            {"channels", data.channels},
            {"snapshots", n}};
  c.write(o.out);
  std::cerr << "fit " << o.q << "-mode basis from " << n << " snapshots (dim " << dim << ") -> "
            << o.out << "\n";
}

assim::PcaBasis<double> read_basis(const std::string& path, int q_use) {
  const Container c = Container::read(path);
  const auto& shape = c.at("components").shape;
  require(shape.size() == 2, "basis: 'components' must be dim x q");
  const auto dim = Eigen::Index(shape[0]);
  const int q = int(shape[1]);
  require(q_use <= q, "basis: requested more modes than the file holds");
  const int keep = q_use > 0 ? q_use : q;
  const auto comp = c.values<double>("components");
  assim::PcaBasis<double> basis;
  basis.components.resize(dim, keep);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (int j = 0; j < keep; ++j) basis.components(i, j) = comp[i * q + j];
  basis.eigenvalues = c.values<double>("eigenvalues").head(keep).matrix();
  basis.mean = c.values<double>("mean").matrix();
  basis.validate();
  return basis;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructOpts {
  std::string ckpt, obs, out;
  std::string scheme = "heun-pc";
  int steps = 20, ensemble = 25;
  std::uint64_t seed = 0;
  double guidance = 1.0;
  double sigma_min = 0.002, sigma_max = 80.0, rho = 7.0;
  bool no_ema = false;
};

void run_reconstruct(const ReconstructOpts& o) {
  const auto bundle = edm::load_bundle<float>(o.ckpt, !o.no_ema);
  require(!bundle.is_vtunet(),
          "reconstruct: vtunet checkpoints are deterministic baselines, use evaluate");
  const auto file = read_observations<float>(o.obs);
  require(file.height == bundle.config.grid && file.width == bundle.config.grid,
          "reconstruct: observation grid does not match the checkpoint");

  sampler::SamplerConfig cfg;
  cfg.n_steps = o.steps;
  cfg.scheme = sampler::parse_scheme(o.scheme);
  cfg.mode = bundle.model == "unconditional" ? "guided" : bundle.model;
  cfg.ensemble = o.ensemble;
  cfg.seed = o.seed;
  cfg.guidance = o.guidance;
  cfg.sigma_min = o.sigma_min;
  cfg.sigma_max = o.sigma_max;
  cfg.rho = o.rho;

  const auto ens = sampler::ensemble_sample<float>(bundle, file.obs, cfg);

  Container c;
  const int ch = ens.mean.channels, h = ens.mean.height, w = ens.mean.width;
  std::vector<float> members(size_t(o.ensemble) * size_t(ens.mean.size()));
  for (int m = 0; m < o.ensemble; ++m)
    for (Eigen::Index i = 0; i < ens.mean.size(); ++i)
      members[size_t(m) * size_t(ens.mean.size()) + size_t(i)] =
          float(ens.members[size_t(m)].values[i]);
  c.add("members", {o.ensemble, ch, h, w}, std::move(members));
  c.add("mean", {ch, h, w}, ens.mean.values);
  c.add("variance", {ch, h, w}, ens.variance.values);
  c.meta = {{"model", bundle.model},       {"mode", cfg.mode},
            {"scheme", o.scheme},          {"steps", o.steps},
            {"ensemble", o.ensemble},      {"seed", o.seed},
            {"guidance", o.guidance},      {"height", h},
            {"width", w},                  {"channels", ch},
            {"problem", file.meta.value("problem", std::string("unknown"))}};
  c.write(o.out);
  std::cerr << "reconstructed " << o.ensemble << "-member ensemble (" << cfg.mode << ", "
            << o.scheme << ", " << o.steps << " steps) -> " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// assimilate

struct AssimilateOpts {
  std::string ensemble, obs, basis, out;
  std::string cov = "ensemble";
  int q = 0;  // 0: all stored modes
  double r_sigma = 0.1;
};

void run_assimilate(const AssimilateOpts& o) {
  const Container ens_file = Container::read(o.ensemble);
  const auto& mshape = ens_file.at("members").shape;
  require(mshape.size() == 4, "assimilate: 'members' must be members x channels x H x W");
  const int m_count = int(mshape[0]), ch = int(mshape[1]), h = int(mshape[2]), w = int(mshape[3]);
  const auto raw = ens_file.values<double>("members");
  sampler::Ensemble<double> ens;
  const Eigen::Index sz = Eigen::Index(ch) * h * w;
  for (int m = 0; m < m_count; ++m)
    ens.members.emplace_back(ch, h, w, ArrayX<double>(raw.segment(Eigen::Index(m) * sz, sz)));
  ens.mean = FieldTensor<double>(ch, h, w, ArrayX<double>(ens_file.values<double>("mean")));
  if (ens_file.has("variance"))
    ens.variance = FieldTensor<double>(ch, h, w, ArrayX<double>(ens_file.values<double>("variance")));

  const auto file = read_observations<double>(o.obs);
  require(file.height == h && file.width == w, "assimilate: observation grid mismatch");
  const auto basis = read_basis(o.basis, o.q);
  require(basis.dim() == sz, "assimilate: basis dimension does not match the ensemble fields");

  const auto source = assim::parse_cov_source(o.cov);
  const FieldTensor<double>* truth = file.truth ? &*file.truth : nullptr;
  const auto result = assim::assimilate(ens, file.obs, basis, source, o.r_sigma, truth);

  Container out;
  out.add("x_b", {ch, h, w}, result.x_b.values);
  out.add("x_a", {ch, h, w}, result.x_a.values);
  out.meta = {{"cov", o.cov}, {"r_sigma", o.r_sigma}, {"q", basis.q()},
              {"observations", file.obs.count()}};
  out.write(o.out);

  json sidecar{{"cov", o.cov},
               {"r_sigma", o.r_sigma},
               {"q", basis.q()},
               {"observations", file.obs.count()},
               {"im", std::isfinite(result.im) ? json(result.im) : json(nullptr)}};
  std::ofstream side(o.out + ".json");
  require(side.good(), "assimilate: cannot write sidecar");
  side << sidecar.dump(2) << "\n";
  std::cerr << "analysis written -> " << o.out;
  if (std::isfinite(result.im)) std::cerr << " (Im " << result.im << ")";
  std::cerr << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string config, out;
};

void run_evaluate(const EvaluateOpts& o) {
  std::ifstream in(o.config);
  require(in.good(), "evaluate: cannot open config '" + o.config + "'");
  const json j = json::parse(in);
  const auto cfg = bench::parse_experiment(j);
  require(j.contains("data"), "evaluate: config needs a 'data' path");
  const auto data = datagen::Dataset<float>::load(j.at("data").get<std::string>());

  std::map<std::string, edm::ModelBundle<float>> checkpoints;
  if (j.contains("checkpoints"))
    for (const auto& [method, path] : j.at("checkpoints").items())
      checkpoints.emplace(method, edm::load_bundle<float>(path.get<std::string>()));

  const auto report = bench::run_benchmark(cfg, data, checkpoints);
  bench::emit_report(report, o.out);
  bench::emit_plots(report, o.out + "/plots");

  std::cout << "problem          method            ratio   noise   nrmse     crmse\n";
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %-16s %7.4f %7.3f %9.4f %9.4f\n", r.problem.c_str(),
                  r.method.c_str(), r.obs_ratio, r.noise_level, r.nrmse, r.crmse);
    std::cout << line;
  }
  std::cerr << "report -> " << o.out << "/report.{csv,json}, plots -> " << o.out << "/plots\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-sensor field reconstruction workbench"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* cmd_gen = app.add_subcommand("generate", "simulate a PDE dataset");
  cmd_gen->add_option("--problem", gen.problem, "darcy | shallow-water | diff-react")
      ->required()
      ->check(CLI::IsMember({"darcy", "shallow-water", "diff-react"}));
  cmd_gen->add_option("--grid", gen.grid, "grid side length (problem default if omitted)");
  cmd_gen->add_option("--sims", gen.sims, "number of simulations");
  cmd_gen->add_option("--seed", gen.seed, "random seed");
  cmd_gen->add_option("--modes", gen.modes, "darcy: random-field modes");
  cmd_gen->add_option("--drag", gen.drag, "shallow-water: linear drag");
  cmd_gen->add_option("--dt", gen.dt, "time step (stability default if omitted)");
  cmd_gen->add_option("--steps", gen.steps, "time snapshots per simulation");
  cmd_gen->add_option("--out", gen.out, "output dataset path")->required();

  TrainOpts tr;
  auto* cmd_train = app.add_subcommand("train", "train a denoiser or baseline");
  cmd_train->add_option("--data", tr.data, "dataset path")->required();
  cmd_train->add_option("--mode", tr.mode, "conditioning mode")
      ->required()
      ->check(CLI::IsMember({"unconditional", "cfg", "cross-attention", "vtunet"}));
  cmd_train->add_option("--steps", tr.steps, "optimizer steps");
  cmd_train->add_option("--batch", tr.batch, "batch size");
  cmd_train->add_option("--seed", tr.seed, "random seed");
  cmd_train->add_option("--lr", tr.lr, "learning rate");
  cmd_train->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay");
  cmd_train->add_option("--ema", tr.ema, "EMA decay cap");
  cmd_train->add_option("--plan", tr.plan, "channels per level, e.g. 16,32")->delimiter(',');
  cmd_train->add_option("--emb-dim", tr.emb_dim, "noise embedding width");
  cmd_train->add_option("--patch", tr.patch, "condition-encoder patch size");
  cmd_train->add_option("--token-dim", tr.token_dim, "condition-encoder token width");
  cmd_train->add_option("--attn-layers", tr.attn_layers, "condition-encoder attention layers");
  cmd_train->add_option("--ratio-max", tr.ratio_max, "training sensor-ratio upper bound");
  cmd_train->add_option("--null-dropout", tr.null_dropout, "cfg null-condition probability");
  cmd_train->add_option("--train-frac", tr.train_frac, "leading training fraction");
  cmd_train->add_option("--log-every", tr.log_every, "progress line interval");
  cmd_train->add_option("--out", tr.out, "checkpoint path")->required();

  ObserveOpts ob;
  auto* cmd_obs = app.add_subcommand("observe", "sample sensors from a dataset snapshot");
  cmd_obs->add_option("--data", ob.data, "dataset path")->required();
  cmd_obs->add_option("--snapshot", ob.snapshot, "flat snapshot index (default: first held-out)");
  cmd_obs->add_option("--ratio", ob.ratio, "observed-cell ratio");
  cmd_obs->add_flag("--lattice", ob.lattice, "force the evenly spaced lattice");
  cmd_obs->add_flag("--random", ob.random, "force random positions");
  cmd_obs->add_option("--noise", ob.noise, "noise level (fraction of channel std)");
  cmd_obs->add_option("--seed", ob.seed, "random seed");
  cmd_obs->add_option("--out", ob.out, "observation file path")->required();

  BasisOpts ba;
  auto* cmd_basis = app.add_subcommand("fit-basis", "fit a PCA basis from the training split");
  cmd_basis->add_option("--data", ba.data, "dataset path")->required();
  cmd_basis->add_option("--q", ba.q, "number of modes");
  cmd_basis->add_option("--train-frac", ba.train_frac, "leading training fraction");
  cmd_basis->add_option("--out", ba.out, "basis file path")->required();

  ReconstructOpts re;
  auto* cmd_rec = app.add_subcommand("reconstruct", "sample an ensemble from observations");
  cmd_rec->add_option("--ckpt", re.ckpt, "checkpoint path")->required();
  cmd_rec->add_option("--obs", re.obs, "observation file path")->required();
  cmd_rec->add_option("--scheme", re.scheme, "euler | heun-pc | multistep2")
      ->check(CLI::IsMember({"euler", "heun-pc", "multistep2"}));
  cmd_rec->add_option("--steps", re.steps, "sigma-grid steps");
  cmd_rec->add_option("--ensemble", re.ensemble, "ensemble members");
  cmd_rec->add_option("--seed", re.seed, "random seed");
  cmd_rec->add_option("--guidance", re.guidance, "cfg guidance weight");
  cmd_rec->add_option("--sigma-min", re.sigma_min, "smallest positive sigma");
  cmd_rec->add_option("--sigma-max", re.sigma_max, "largest sigma");
  cmd_rec->add_option("--rho", re.rho, "sigma-grid warp exponent");
  cmd_rec->add_flag("--no-ema", re.no_ema, "sample with raw instead of EMA weights");
  cmd_rec->add_option("--out", re.out, "ensemble output path")->required();

  AssimilateOpts as;
  auto* cmd_assim = app.add_subcommand("assimilate", "reduced-order analysis update");
  cmd_assim->add_option("--ensemble", as.ensemble, "ensemble file path")->required();
  cmd_assim->add_option("--obs", as.obs, "observation file path")->required();
  cmd_assim->add_option("--basis", as.basis, "basis file path")->required();
  cmd_assim->add_option("--cov", as.cov, "background covariance source")
      ->check(CLI::IsMember({"ensemble", "identity"}));
  cmd_assim->add_option("--q", as.q, "modes to use (default: all stored)");
  cmd_assim->add_option("--r-sigma", as.r_sigma, "observation noise std");
  cmd_assim->add_option("--out", as.out, "analysis output path")->required();

  EvaluateOpts ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "run the benchmark grid");
  cmd_eval->add_option("--config", ev.config, "experiment config JSON")->required();
  cmd_eval->add_option("--out", ev.out, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) run_generate(gen);
    if (cmd_train->parsed()) run_train(tr);
    if (cmd_obs->parsed()) run_observe(ob);
    if (cmd_basis->parsed()) run_fit_basis(ba);
    if (cmd_rec->parsed()) run_reconstruct(re);
    if (cmd_assim->parsed()) run_assimilate(as);
    if (cmd_eval->parsed()) run_evaluate(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
