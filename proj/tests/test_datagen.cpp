#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fieldrecon/datagen/dataset.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace fieldrecon;
using namespace fieldrecon::datagen;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST_CASE("darcy source bands") {
  CHECK(darcy_source(0.3, 0.5) == 1000.0);
  CHECK(darcy_source(0.3, 0.7) == 2000.0);
  CHECK(darcy_source(0.3, 0.9) == 3000.0);
}

TEST_CASE("kle eigenvalues match direct evaluation") {
  CHECK(kle_lambda(0, 0, 1.0, 1.2) == doctest::Approx(1.0));
  CHECK(kle_lambda(1, 0, 1.0, 1.2) == doctest::Approx(std::pow(kPi * kPi + 1.0, -1.2)));
  CHECK(kle_lambda(1, 0, 1.0, 1.2) == doctest::Approx(0.0571).epsilon(1e-2));
}

TEST_CASE("kle basis functions take the three-case cosine form") {
  CHECK(kle_psi(1, 0, 0.0, 0.77) == doctest::Approx(std::numbers::sqrt2));
  CHECK(kle_psi(0, 2, 0.3, 0.25) == doctest::Approx(std::numbers::sqrt2 * std::cos(kPi * 0.5)));
  CHECK(kle_psi(2, 3, 0.1, 0.2) ==
        doctest::Approx(2.0 * std::cos(kPi * 0.2) * std::cos(kPi * 0.6)));
  CHECK_THROWS_AS(kle_psi(-1, 0, 0.0, 0.0), std::runtime_error);
}

TEST_CASE("kle mode list is sorted by descending eigenvalue and starts at (0,0)") {
  const auto modes = kle_modes(128, 1.0, 1.2);
  REQUIRE(modes.size() == 128);
  CHECK(modes[0].l1 == 0);
  CHECK(modes[0].l2 == 0);
  CHECK(modes[0].lambda == doctest::Approx(1.0));
  for (size_t i = 1; i < modes.size(); ++i) CHECK(modes[i - 1].lambda >= modes[i].lambda);
  // ties between swapped index pairs resolve lexicographically
  for (size_t i = 1; i < modes.size(); ++i)
    if (modes[i - 1].lambda == modes[i].lambda) CHECK(modes[i - 1].l1 < modes[i].l1);
}

TEST_CASE("kle sample with zero coefficients is identically zero") {
  DarcyConfig cfg;
  cfg.grid = 16;
  cfg.n_modes = 32;
  const auto f = kle_sample<double>(ArrayX<double>::Zero(32), cfg);
  CHECK((f.values == 0.0).all());
  CHECK((f.values.exp() == 1.0).all());
}

TEST_CASE("kle sample matches pointwise formula evaluation") {
  DarcyConfig cfg;
  cfg.grid = 8;
  cfg.n_modes = 24;
  Rng rng(5);
  const ArrayX<double> theta = rng.normal_array<double>(24);
  const auto f = kle_sample<double>(theta, cfg);
  const auto modes = kle_modes(24, cfg.tau, cfg.d);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const double x1 = (c + 0.5) / 8.0, x2 = (r + 0.5) / 8.0;
      double want = 0.0;
      for (int m = 0; m < 24; ++m)
        want += theta[m] * std::sqrt(modes[size_t(m)].lambda) *
                kle_psi(modes[size_t(m)].l1, modes[size_t(m)].l2, x1, x2);
      CHECK(f.at(0, r, c) == doctest::Approx(want).epsilon(1e-12));
    }
  CHECK_THROWS_AS(kle_sample<double>(ArrayX<double>::Zero(5), cfg), std::runtime_error);
}

TEST_CASE("kle first-mode sample is the constant sqrt(2) field") {
  DarcyConfig cfg;
  cfg.grid = 8;
  cfg.n_modes = 16;
  ArrayX<double> theta = ArrayX<double>::Zero(16);
  theta[0] = 1.0;  // top mode is (0,0): lambda 1, psi = sqrt(2)
  const auto f = kle_sample<double>(theta, cfg);
  for (Eigen::Index i = 0; i < f.size(); ++i)
    CHECK(f.values[i] == doctest::Approx(std::numbers::sqrt2));
}

TEST_CASE("kle Monte-Carlo moments match the truncated analytic covariance") {
  DarcyConfig cfg;
  cfg.grid = 8;
  cfg.n_modes = 64;
  const auto modes = kle_modes(64, cfg.tau, cfg.d);
  const std::pair<int, int> pa{4, 4}, pb{1, 6};  // cell indices (r, c)
  auto analytic_cov = [&](std::pair<int, int> u, std::pair<int, int> v) {
    double acc = 0.0;
    for (const auto& m : modes)
      acc += m.lambda * kle_psi(m.l1, m.l2, (u.second + 0.5) / 8.0, (u.first + 0.5) / 8.0) *
             kle_psi(m.l1, m.l2, (v.second + 0.5) / 8.0, (v.first + 0.5) / 8.0);
    return acc;
  };
  const int n_samples = 10000;
  double sum_a = 0, sum_b = 0, sum_aa = 0, sum_ab = 0;
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(99, std::uint64_t(s));
    const auto f = kle_sample<double>(rng.normal_array<double>(64), cfg);
    const double a = f.at(0, pa.first, pa.second);
    const double b = f.at(0, pb.first, pb.second);
    sum_a += a;
    sum_b += b;
    sum_aa += a * a;
    sum_ab += a * b;
  }
  const double var_a = sum_aa / n_samples - (sum_a / n_samples) * (sum_a / n_samples);
  const double cov_ab = sum_ab / n_samples - (sum_a / n_samples) * (sum_b / n_samples);
  CHECK(var_a == doctest::Approx(analytic_cov(pa, pa)).epsilon(0.05));
  CHECK(cov_ab == doctest::Approx(analytic_cov(pa, pb)).epsilon(0.05));
}

TEST_CASE("darcy solve converges at second order on a manufactured solution") {
  auto exact = [](double x1, double x2) { return std::sin(kPi * x1) * std::sin(kPi * x2); };
  auto forcing = [&](double x1, double x2) { return 2.0 * kPi * kPi * exact(x1, x2); };
  std::vector<double> errors;
  for (int n : {16, 32, 64}) {
    DarcyConfig cfg;
    cfg.grid = n;
    const auto alpha = FieldTensor<double>::constant(1, n, n, 1.0);
    const auto p = darcy_solve(alpha, cfg, forcing);
    double sq = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const double e = p.at(0, r, c) - exact((c + 0.5) / n, (r + 0.5) / n);
        sq += e * e;
      }
    errors.push_back(std::sqrt(sq / (double(n) * n)));
  }
  const double order_coarse = std::log2(errors[0] / errors[1]);
  const double order_fine = std::log2(errors[1] / errors[2]);
  INFO("orders ", order_coarse, " ", order_fine);
  CHECK(order_coarse >= 1.8);
  CHECK(order_fine >= 1.8);
}

TEST_CASE("darcy solve of the homogeneous problem is zero") {
  DarcyConfig cfg;
  cfg.grid = 16;
  const auto alpha = FieldTensor<double>::constant(1, 16, 16, 2.5);
  const auto p = darcy_solve(alpha, cfg, [](double, double) { return 0.0; });
  CHECK((p.values == 0.0).all());
}

TEST_CASE("darcy solution inherits x1 symmetry from the source") {
  DarcyConfig cfg;
  cfg.grid = 16;
  const auto alpha = FieldTensor<double>::constant(1, 16, 16, 1.0);
  const auto p = darcy_solve(alpha, cfg);  // banded source depends on x2 only
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(p.at(0, r, c) == doctest::Approx(p.at(0, r, 15 - c)).epsilon(1e-9));
}

TEST_CASE("darcy solve validates alpha and reports CG non-convergence") {
  DarcyConfig cfg;
  cfg.grid = 8;
  auto alpha = FieldTensor<double>::constant(1, 8, 8, 1.0);
  alpha.at(0, 3, 3) = -1.0;
  CHECK_THROWS_WITH_AS(darcy_solve(alpha, cfg), doctest::Contains("alpha must be positive"),
                       std::runtime_error);
  DarcyConfig tight = cfg;
  tight.cg_max_iters = 1;
  const auto ok = FieldTensor<double>::constant(1, 8, 8, 1.0);
  CHECK_THROWS_WITH_AS(darcy_solve(ok, tight), doctest::Contains("residual"), std::runtime_error);
}

TEST_CASE("darcy simulate returns positive permeability and is deterministic") {
  DarcyConfig cfg;
  cfg.grid = 16;
  cfg.n_modes = 32;
  Rng r1(42, 0), r2(42, 0);
  const auto s1 = darcy_simulate<double>(cfg, r1);
  const auto s2 = darcy_simulate<double>(cfg, r2);
  CHECK(s1.channels == 2);
  CHECK((s1.channel_flat(0) > 0.0).all());
  CHECK((s1.values == s2.values).all());
}

TEST_CASE("shallow water init puts a column on the torus disk") {
  ShallowWaterConfig cfg;
  const auto s = sw_init<double>({32, 32}, cfg);
  CHECK(s.at(0, 32, 32) == doctest::Approx(cfg.background_height + cfg.column_height));
  CHECK(s.at(0, 0, 0) == doctest::Approx(cfg.background_height));
  CHECK((s.channel_flat(1) == 0.0).all());
  CHECK((s.channel_flat(2) == 0.0).all());

  int on_disk = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (s.at(0, r, c) > cfg.background_height + cfg.column_height / 2) ++on_disk;
  const double expected = kPi * cfg.column_radius * cfg.column_radius / (cfg.dx() * cfg.dx());
  CHECK(on_disk == doctest::Approx(expected).epsilon(0.1));

  const auto s2 = sw_init<double>({32, 32}, cfg);
  CHECK((s.values == s2.values).all());
}

TEST_CASE("shallow water column wraps around the periodic boundary") {
  ShallowWaterConfig cfg;
  const auto s = sw_init<double>({0, 0}, cfg);
  CHECK(s.at(0, 63, 63) == doctest::Approx(cfg.background_height + cfg.column_height));
}

TEST_CASE("flat resting shallow water state is a fixed point") {
  ShallowWaterConfig cfg;
  const auto flat = SwState<double>::constant(3, 64, 64, 0.0);
  SwState<double> s = flat;
  s.channel_flat(0) = ArrayX<double>::Constant(64 * 64, 1.0);
  const auto next = sw_step_ftcs(s, cfg.step_dt(), cfg);
  CHECK((next.values == s.values).all());
}

TEST_CASE("shallow water conserves total height without drag") {
  ShallowWaterConfig cfg;
  Rng rng(3, 0);
  auto frames = sw_simulate<double>(cfg, rng);
  REQUIRE(int(frames.size()) == cfg.n_steps);
  const double mass0 = frames.front().channel_flat(0).sum();
  double prev = mass0;
  for (const auto& f : frames) {
    const double mass = f.channel_flat(0).sum();
    CHECK(std::abs(mass - prev) <= 1e-10 * std::abs(mass0));  // per-step drift
    prev = mass;
  }
  CHECK(std::abs(prev - mass0) <= 1e-8 * std::abs(mass0));  // cumulative
}

TEST_CASE("shallow water step matches a hand-rolled 4x4 stencil") {
  ShallowWaterConfig cfg;
  cfg.grid = 4;
  cfg.column_radius = 4.0;
  cfg.domain_side = 50.0;
  Rng rng(9);
  SwState<double> s(3, 4, 4, rng.normal_array<double>(48) * 0.05 + 1.0);
  const double dt = 1e-3;
  const auto next = sw_step_ftcs(s, dt, cfg);

  const double dx = cfg.dx();
  auto w = [](int i) { return (i + 4) % 4; };
  auto h = [&](int r, int c) { return s.at(0, w(r), w(c)); };
  auto u = [&](int r, int c) { return s.at(1, w(r), w(c)); };
  auto v = [&](int r, int c) { return s.at(2, w(r), w(c)); };
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double hn = h(r, c) - dt *
          ((h(r, c + 1) * u(r, c + 1) - h(r, c - 1) * u(r, c - 1)) / (2 * dx) +
           (h(r + 1, c) * v(r + 1, c) - h(r - 1, c) * v(r - 1, c)) / (2 * dx));
      const double un = u(r, c) - dt * ((h(r, c + 1) - h(r, c - 1)) / (2 * dx));
      const double vn = v(r, c) - dt * ((h(r + 1, c) - h(r - 1, c)) / (2 * dx));
      CHECK(next.at(0, r, c) == hn);
      CHECK(next.at(1, r, c) == un);
      CHECK(next.at(2, r, c) == vn);
    }
}

TEST_CASE("shallow water rejects dt above the CFL bound") {
  ShallowWaterConfig cfg;
  const auto s = sw_init<double>({32, 32}, cfg);
  CHECK_THROWS_WITH_AS(sw_step_ftcs(s, cfg.cfl_bound() * 2.0, cfg), doctest::Contains("CFL"),
                       std::runtime_error);
  ShallowWaterConfig bad = cfg;
  bad.dt = bad.cfl_bound() * 2.0;
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
}

TEST_CASE("drag damps velocities") {
  ShallowWaterConfig cfg;
  cfg.drag = 0.5;
  cfg.init_speed = 1.0;
  auto s = SwState<double>::constant(3, 64, 64, 0.0);
  s.channel_flat(0) = ArrayX<double>::Constant(64 * 64, 1.0);
  s.channel_flat(1) = ArrayX<double>::Constant(64 * 64, 1.0);
  const double dt = cfg.step_dt();
  const auto next = sw_step_ftcs(s, dt, cfg);
  CHECK(next.at(1, 5, 5) == doctest::Approx(1.0 - dt * 0.5));
}

TEST_CASE("reaction terms") {
  CHECK(dr_reaction_u(0.0, 0.0, 5e-3) == doctest::Approx(-5e-3));
  CHECK(dr_reaction_v(0.7, 0.7) == 0.0);
  CHECK(dr_reaction_v(1.0, 0.25) == doctest::Approx(0.75));
}

TEST_CASE("uniform diffusion-reaction state follows the scalar ODE Euler rule") {
  DiffReactConfig cfg;
  cfg.grid = 8;
  cfg.dt = 0.01;  // reaction-scale step; the diffusion bound alone is too loose here
  double u = 0.4, v = -0.2;
  auto s = DrState<double>::zeros(2, 8, 8);
  s.channel_flat(0) = ArrayX<double>::Constant(64, u);
  s.channel_flat(1) = ArrayX<double>::Constant(64, v);
  const double dt = cfg.step_dt();
  for (int k = 0; k < 25; ++k) {
    s = dr_step(s, dt, cfg);
    const double un = u + dt * (u - u * u * u - cfg.k - v);
    const double vn = v + dt * (u - v);
    u = un;
    v = vn;
    for (int i : {0, 17, 63}) {
      CHECK(s.channel_flat(0)[i] == doctest::Approx(u).epsilon(1e-14));
      CHECK(s.channel_flat(1)[i] == doctest::Approx(v).epsilon(1e-14));
    }
  }
}

TEST_CASE("diffusion-reaction init is standard normal per cell") {
  DiffReactConfig cfg;
  cfg.grid = 32;
  Rng rng(12, 0);
  const auto s = dr_init<double>(cfg, rng);
  const double mean = s.values.mean();
  const double var = (s.values - mean).square().mean();
  CHECK(std::abs(mean) < 0.1);
  CHECK(var == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("diffusion-reaction respects the stability bound") {
  DiffReactConfig cfg;
  cfg.grid = 16;
  CHECK(cfg.step_dt() == doctest::Approx(0.5 * cfg.dx() * cfg.dx() / (4.0 * cfg.d_v)));
  auto s = DrState<double>::zeros(2, 16, 16);
  CHECK_THROWS_WITH_AS(dr_step(s, cfg.stability_bound() * 3.0, cfg),
                       doctest::Contains("stability"), std::runtime_error);
}

TEST_CASE("diffusion smooths a hot spot under Neumann walls") {
  DiffReactConfig cfg;
  cfg.grid = 8;
  cfg.k = 0.0;
  auto s = DrState<double>::zeros(2, 8, 8);
  s.at(0, 0, 0) = 1.0;  // corner: both neighbors are mirrored ghosts
  const double dt = cfg.step_dt();
  const auto next = dr_step(s, dt, cfg);
  const double inv_dx2 = 1.0 / (cfg.dx() * cfg.dx());
  // corner Laplacian: (u(0,1) + u(1,0) + 2*u(0,0) - 4*u(0,0)) with mirrored ghosts
  const double lap = (0.0 + 0.0 + 2.0 * 1.0 - 4.0 * 1.0) * inv_dx2;
  CHECK(next.at(0, 0, 0) == doctest::Approx(1.0 + dt * (cfg.d_u * lap + 1.0 - 1.0 - 0.0)));
  CHECK(next.at(0, 4, 4) == doctest::Approx(0.0));
}

TEST_CASE("diffusion-reaction reports blow-up with the step index") {
  DiffReactConfig cfg;
  cfg.grid = 8;
  cfg.dt = 10.0;
  cfg.d_u = 0.0;
  cfg.d_v = 0.0;
  cfg.n_steps = 60;
  Rng rng(1, 0);
  CHECK_THROWS_WITH_AS(dr_simulate<double>(cfg, rng), doctest::Contains("blow-up at step"),
                       std::runtime_error);
}

TEST_CASE("dataset shapes follow the (sims, time, channels, H, W) contract") {
  DatasetSpec spec;
  spec.problem = Problem::darcy;
  spec.n_sims = 4;
  spec.darcy.grid = 32;
  spec.darcy.n_modes = 32;
  const Container c = build_dataset(spec);
  CHECK(c.at("fields").shape == std::vector<std::int64_t>{4, 1, 2, 32, 32});
  CHECK(c.at("norm_mean").shape == std::vector<std::int64_t>{2});
  CHECK(c.meta.at("problem") == "darcy");

  DatasetSpec sw;
  sw.problem = Problem::shallow_water;
  sw.n_sims = 2;
  const Container csw = build_dataset(sw);
  CHECK(csw.at("fields").shape == std::vector<std::int64_t>{2, 50, 3, 64, 64});
}

TEST_CASE("dataset generation is deterministic in bytes") {
  DatasetSpec spec;
  spec.problem = Problem::diff_react;
  spec.n_sims = 2;
  spec.seed = 77;
  spec.diff_react.grid = 16;
  spec.diff_react.n_steps = 5;
  const std::string p1 = temp_path("ds_a.frd"), p2 = temp_path("ds_b.frd");
  generate_dataset(spec, p1);
  generate_dataset(spec, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("dataset loader round-trips snapshots and normalization") {
  DatasetSpec spec;
  spec.problem = Problem::diff_react;
  spec.n_sims = 3;
  spec.seed = 5;
  spec.diff_react.grid = 16;
  spec.diff_react.n_steps = 4;
  const std::string path = temp_path("ds_load.frd");
  generate_dataset(spec, path);
  const auto ds = Dataset<double>::load(path);
  CHECK(ds.n_sims == 3);
  CHECK(ds.n_steps == 4);
  CHECK(ds.channels == 2);
  CHECK(ds.n_snapshots() == 12);
  CHECK(ds.train_sims() == 2);  // floor(0.8*3), leaves one sim for eval

  // normalized: pooled mean 0, std = target 0.5 across the whole set
  double sum = 0, sum_sq = 0, count = 0;
  for (int s = 0; s < ds.n_snapshots(); ++s) {
    const auto f = ds.snapshot_normalized(s);
    const auto ch = f.channel_flat(0);
    sum += ch.sum();
    sum_sq += ch.square().sum();
    count += double(ch.size());
  }
  const double mean = sum / count;
  const double sd = std::sqrt(sum_sq / count - mean * mean);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(sd == doctest::Approx(0.5).epsilon(1e-3));
  std::remove(path.c_str());
}
