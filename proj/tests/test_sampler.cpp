#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fieldrecon/sampler.hpp>

#include <cmath>
#include <vector>

using namespace fieldrecon;
using namespace fieldrecon::sampler;

namespace {

net::NetConfig tiny_config(net::CondMode mode) {
  net::NetConfig cfg;
  cfg.grid = 16;
  cfg.field_channels = 2;
  cfg.plan = {8};
  cfg.emb_dim = 8;
  cfg.mode = mode;
  cfg.patch = 8;
  cfg.token_dim = 12;
  cfg.enc_attn_layers = 1;
  return cfg;
}

template <typename S>
NormStats<S> toy_stats() {
  NormStats<S> s;
  s.mean = VectorX<S>(2);
  s.mean << S(1.5), S(-0.25);
  s.std = VectorX<S>(2);
  s.std << S(2.0), S(0.75);
  return s;
}

edm::ModelBundle<double> tiny_bundle(const std::string& model) {
  const auto mode = model == "cfg"               ? net::CondMode::cfg
                    : model == "cross-attention" ? net::CondMode::cross
                                                 : net::CondMode::none;
  return edm::make_bundle<double>(model, tiny_config(mode), toy_stats<double>(), 7);
}

/// Smooth ground-truth field in physical units.
FieldTensor<double> toy_truth(int grid) {
  auto x0 = FieldTensor<double>::zeros(2, grid, grid);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      x0.at(0, r, c) = 1.5 + 2.0 * std::sin(0.3 * r) * std::cos(0.5 * c);
      x0.at(1, r, c) = -0.25 + 0.75 * std::cos(0.2 * r + 0.7 * c);
    }
  return x0;
}

ObservationMask toy_mask(int grid) {
  return make_mask({{1, 2}, {3, 11}, {8, 8}, {12, 4}, {14, 14}, {6, 0}}, grid, grid);
}

SamplerConfig fast_config(Scheme scheme, const std::string& mode) {
  SamplerConfig cfg;
  cfg.n_steps = 3;
  cfg.scheme = scheme;
  cfg.mode = mode;
  cfg.ensemble = 1;
  return cfg;
}

/// Denoiser oracle returning the normalized ground truth regardless of input.
DenoiseFn<double> oracle_fn(const FieldTensor<double>& x0_norm) {
  return [x0_norm](const FieldTensor<double>&, double) { return x0_norm; };
}

}  // namespace

// ---------------------------------------------------------------------------
// Sigma grid

TEST_CASE("two-step grid interpolates exactly between the endpoints") {
  SamplerConfig cfg;
  cfg.n_steps = 2;
  const auto s = sigma_steps<double>(cfg);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(s[2] == 0.0);
}

TEST_CASE("grids of any length decrease strictly and end at zero") {
  for (int n : {1, 2, 5, 20, 50}) {
    SamplerConfig cfg;
    cfg.n_steps = n;
    const auto s = sigma_steps<double>(cfg);
    REQUIRE(int(s.size()) == n + 1);
    for (size_t i = 0; i + 1 < s.size(); ++i) CHECK(s[i] > s[i + 1]);
    CHECK(s.back() == 0.0);
    CHECK(s.front() == doctest::Approx(80.0).epsilon(1e-12));
  }
}

TEST_CASE("four-step grid matches the closed form element by element") {
  SamplerConfig cfg;
  cfg.n_steps = 4;
  const auto s = sigma_steps<double>(cfg);
  const double hi = std::pow(80.0, 1.0 / 7.0), lo = std::pow(0.002, 1.0 / 7.0);
  for (int i = 0; i < 4; ++i) {
    const double expected = std::pow(hi + (double(i) / 3.0) * (lo - hi), 7.0);
    CHECK(s[size_t(i)] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("single-step grid is sigma_max then zero") {
  SamplerConfig cfg;
  cfg.n_steps = 1;
  const auto s = sigma_steps<double>(cfg);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(s[1] == 0.0);
}

TEST_CASE("config validation rejects bad settings") {
  auto bad = [](auto mutate) {
    SamplerConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
  };
  bad([](SamplerConfig& c) { c.n_steps = 0; });
  bad([](SamplerConfig& c) { c.sigma_min = 0; });
  bad([](SamplerConfig& c) { c.sigma_max = c.sigma_min; });
  bad([](SamplerConfig& c) { c.rho = 0; });
  bad([](SamplerConfig& c) { c.ensemble = 0; });
  bad([](SamplerConfig& c) { c.mode = "telepathy"; });
}

TEST_CASE("scheme names round-trip") {
  for (Scheme s : {Scheme::euler, Scheme::heun_pc, Scheme::multistep2})
    CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK_THROWS_AS(parse_scheme("rk4"), std::runtime_error);
}

// ---------------------------------------------------------------------------
// ODE right-hand side and steppers

TEST_CASE("rhs vanishes at a denoiser fixed point") {
  Rng rng(1, 0);
  const FieldTensor<double> x(1, 4, 4, rng.normal_array<double>(16));
  const DenoiseFn<double> identity = [](const FieldTensor<double>& y, double) { return y; };
  CHECK(ode_rhs(x, 2.0, identity).values.abs().maxCoeff() == 0.0);
}

TEST_CASE("rhs with constant oracle is the scaled displacement") {
  Rng rng(2, 0);
  const FieldTensor<double> x0(1, 4, 4, rng.normal_array<double>(16));
  const FieldTensor<double> x(1, 4, 4, rng.normal_array<double>(16));
  const double sigma = 1.6;
  const auto rhs = ode_rhs(x, sigma, oracle_fn(x0));
  CHECK(rhs.channels == 1);
  CHECK(rhs.height == 4);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(rhs.values[i] == doctest::Approx((x.values[i] - x0.values[i]) / sigma).epsilon(1e-14));
}

TEST_CASE("rhs rejects sigma zero") {
  const auto x = FieldTensor<double>::zeros(1, 2, 2);
  const DenoiseFn<double> identity = [](const FieldTensor<double>& y, double) { return y; };
  CHECK_THROWS_AS(ode_rhs(x, 0.0, identity), std::runtime_error);
}

TEST_CASE("euler step contracts a ray toward the oracle") {
  Rng rng(3, 0);
  const FieldTensor<double> x0(1, 4, 4, rng.normal_array<double>(16));
  const ArrayX<double> c = rng.normal_array<double>(16);
  const double sigma = 2.4;
  const FieldTensor<double> x(1, 4, 4, x0.values + sigma * c);
  const auto next = step_euler(x, sigma, sigma / 2, oracle_fn(x0));
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(next.values[i] == doctest::Approx(x0.values[i] + (sigma / 2) * c[i]).epsilon(1e-13));
}

TEST_CASE("heun step is the hand trapezoid on a sigma-affine rhs") {
  // D(x;σ) = x − σ·(a + bσ) makes the rhs g(σ) = a + bσ, independent of x.
  const double a = 0.7, b = -0.3;
  const DenoiseFn<double> toy = [&](const FieldTensor<double>& y, double sigma) {
    return FieldTensor<double>(y.channels, y.height, y.width,
                               ArrayX<double>(y.values - sigma * (a + b * sigma)));
  };
  const auto x = FieldTensor<double>::constant(1, 1, 1, 5.0);
  const double sigma = 2.0, sigma_next = 0.5, h = sigma_next - sigma;

  const auto stepped = step_heun_pc(x, sigma, sigma_next, toy);
  const double trapezoid = 5.0 + (h / 2) * ((a + b * sigma) + (a + b * sigma_next));
  CHECK(stepped.values[0] == doctest::Approx(trapezoid).epsilon(1e-14));

  // The trapezoid is exact for an affine integrand.
  const double exact = 5.0 + a * h + b * (sigma_next * sigma_next - sigma * sigma) / 2;
  CHECK(stepped.values[0] == doctest::Approx(exact).epsilon(1e-14));
}

TEST_CASE("heun final step to sigma zero is predictor-only") {
  Rng rng(4, 0);
  const FieldTensor<double> x0(1, 4, 4, rng.normal_array<double>(16));
  const FieldTensor<double> x(1, 4, 4, rng.normal_array<double>(16));
  const double sigma = 0.9;
  const auto stepped = step_heun_pc(x, sigma, 0.0, oracle_fn(x0));
  // Euler to zero lands exactly on the oracle; a corrector would divide by 0.
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(stepped.values[i] == doctest::Approx(x0.values[i]).epsilon(1e-13));
}

TEST_CASE("first multistep step equals euler") {
  Rng rng(5, 0);
  const FieldTensor<double> x0(1, 4, 4, rng.normal_array<double>(16));
  const FieldTensor<double> x(1, 4, 4, rng.normal_array<double>(16));
  const double sigma = 3.0, sigma_next = 1.0;
  const auto d = ode_rhs(x, sigma, oracle_fn(x0));
  const auto ms = step_multistep2(x, sigma, sigma_next, d, nullptr, 0.0);
  const auto eu = step_euler(x, sigma, sigma_next, oracle_fn(x0));
  CHECK((ms.values == eu.values).all());
}

TEST_CASE("constant rhs makes the multistep trajectory match euler") {
  const double k = 1.3;
  const DenoiseFn<double> toy = [&](const FieldTensor<double>& y, double sigma) {
    return FieldTensor<double>(y.channels, y.height, y.width, ArrayX<double>(y.values - sigma * k));
  };
  SamplerConfig cfg;
  cfg.n_steps = 12;
  const auto sigmas = sigma_steps<double>(cfg);
  const auto x = FieldTensor<double>::constant(1, 2, 2, -4.0);
  const auto via_euler = integrate(x, sigmas, Scheme::euler, toy);
  const auto via_ms = integrate(x, sigmas, Scheme::multistep2, toy);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(via_ms.values[i] == doctest::Approx(via_euler.values[i]).epsilon(1e-12));
  // Both equal the exact integral x - k·σ_max.
  CHECK(via_euler.values[0] == doctest::Approx(-4.0 - k * 80.0).epsilon(1e-10));
}

TEST_CASE("multistep beats euler on a quadratic-in-sigma rhs") {
  // rhs g(σ) = 3σ², exact transport x(0) = x(σ_max) − σ_max³.
  const DenoiseFn<double> toy = [](const FieldTensor<double>& y, double sigma) {
    return FieldTensor<double>(y.channels, y.height, y.width,
                               ArrayX<double>(y.values - sigma * (3 * sigma * sigma)));
  };
  SamplerConfig cfg;
  cfg.n_steps = 20;
  cfg.rho = 1.0;  // near-uniform grid: isolates the schemes' order difference
  const auto sigmas = sigma_steps<double>(cfg);
  const auto x = FieldTensor<double>::constant(1, 1, 1, 0.0);
  const double exact = 0.0 - std::pow(80.0, 3);
  const double err_euler = std::abs(integrate(x, sigmas, Scheme::euler, toy).values[0] - exact);
  const double err_ms = std::abs(integrate(x, sigmas, Scheme::multistep2, toy).values[0] - exact);
  INFO("euler error " << err_euler << ", multistep error " << err_ms);
  CHECK(err_ms < err_euler);
  CHECK(err_ms < 0.5 * err_euler);
}

TEST_CASE("integrate needs at least one step") {
  const auto x = FieldTensor<double>::zeros(1, 2, 2);
  const DenoiseFn<double> identity = [](const FieldTensor<double>& y, double) { return y; };
  CHECK_THROWS_AS(integrate(x, std::vector<double>{80.0}, Scheme::euler, identity),
                  std::runtime_error);
}

// ---------------------------------------------------------------------------
// Guidance combination

TEST_CASE("guidance weight one returns the conditional output bitwise") {
  Rng rng(6, 0);
  const FieldTensor<double> c(1, 3, 3, rng.normal_array<double>(9));
  const FieldTensor<double> u(1, 3, 3, rng.normal_array<double>(9));
  CHECK((cfg_combine(c, u, 1.0).values == c.values).all());
  CHECK((cfg_combine(c, u, 0.0).values == u.values).all());
}

TEST_CASE("guidance weight two extrapolates past the conditional output") {
  Rng rng(7, 0);
  const FieldTensor<double> c(1, 3, 3, rng.normal_array<double>(9));
  const FieldTensor<double> u(1, 3, 3, rng.normal_array<double>(9));
  const auto g = cfg_combine(c, u, 2.0);
  for (Eigen::Index i = 0; i < 9; ++i)
    CHECK(g.values[i] == doctest::Approx(2 * c.values[i] - u.values[i]).epsilon(1e-14));
}

TEST_CASE("guidance combination rejects mismatched shapes") {
  const auto a = FieldTensor<double>::zeros(1, 3, 3);
  const auto b = FieldTensor<double>::zeros(1, 3, 4);
  CHECK_THROWS_AS(cfg_combine(a, b, 1.5), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Oracle-denoiser recovery through the full sampling paths

TEST_CASE("every scheme and mode recovers the truth from the oracle denoiser") {
  const int grid = 16;
  const auto x0 = toy_truth(grid);
  const auto mask = toy_mask(grid);
  const auto obs = observe(x0, mask);
  const auto stats = toy_stats<double>();
  const auto fn = oracle_fn(normalize(x0, stats));

  for (const std::string& mode : {"guided", "cfg", "cross-attention"}) {
    const std::string model = mode == "guided" ? "unconditional" : mode;
    const auto bundle = tiny_bundle(model);
    for (Scheme scheme : {Scheme::euler, Scheme::heun_pc, Scheme::multistep2}) {
      SamplerConfig cfg;
      cfg.n_steps = 20;
      cfg.scheme = scheme;
      cfg.mode = mode;
      Rng rng(9, 0);
      const auto out = sample(bundle, obs, cfg, rng, &fn);
      double max_err = 0;
      for (int c = 0; c < 2; ++c)
        for (int r = 0; r < grid; ++r)
          for (int col = 0; col < grid; ++col)
            max_err = std::max(max_err, std::abs(out.at(c, r, col) - x0.at(c, r, col)));
      INFO("mode " << mode << ", scheme " << scheme_name(scheme) << ", max error " << max_err);
      CHECK(max_err < 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// Conditional sampling contracts (real untrained network)

TEST_CASE("conditional output pins the observations bit-for-bit") {
  const auto bundle = tiny_bundle("cross-attention");
  const auto x0 = toy_truth(16);
  const auto obs = observe(x0, toy_mask(16));
  Rng rng(10, 0);
  const auto out = sample_conditional(bundle, obs, fast_config(Scheme::heun_pc, "cross-attention"),
                                      rng);
  out.require_finite("reconstruction");
  for (int i = 0; i < obs.count(); ++i)
    for (int c = 0; c < 2; ++c)
      CHECK(out.at(c, obs.positions[size_t(i)].first, obs.positions[size_t(i)].second) ==
            obs.values(c, i));
}

TEST_CASE("different seeds explore different unobserved fields") {
  const auto bundle = tiny_bundle("cfg");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  const auto cfg = fast_config(Scheme::euler, "cfg");
  Rng ra(11, 0), rb(12, 0);
  const auto a = sample_conditional(bundle, obs, cfg, ra);
  const auto b = sample_conditional(bundle, obs, cfg, rb);
  CHECK((a.values - b.values).matrix().norm() > 0.0);
}

TEST_CASE("equal seeds reproduce the reconstruction bitwise") {
  const auto bundle = tiny_bundle("cfg");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  const auto cfg = fast_config(Scheme::multistep2, "cfg");
  Rng ra(13, 2), rb(13, 2);
  const auto a = sample_conditional(bundle, obs, cfg, ra);
  const auto b = sample_conditional(bundle, obs, cfg, rb);
  CHECK((a.values == b.values).all());
}

TEST_CASE("mode and checkpoint must agree") {
  const auto cond = tiny_bundle("cross-attention");
  const auto uncond = tiny_bundle("unconditional");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  Rng rng(14, 0);
  CHECK_THROWS_AS(sample_conditional(cond, obs, fast_config(Scheme::euler, "cfg"), rng),
                  std::runtime_error);
  CHECK_THROWS_AS(sample_conditional(uncond, obs, fast_config(Scheme::euler, "cfg"), rng),
                  std::runtime_error);
  CHECK_THROWS_AS(sample_guided(cond, obs, fast_config(Scheme::euler, "guided"), rng),
                  std::runtime_error);
  CHECK_THROWS_AS(sample_guided(uncond, obs, fast_config(Scheme::euler, "cfg"), rng),
                  std::runtime_error);
}

TEST_CASE("empty observation sets are rejected") {
  const auto bundle = tiny_bundle("cfg");
  ObservationSet<double> empty;
  empty.values.resize(2, 0);
  Rng rng(15, 0);
  CHECK_THROWS_AS(sample_conditional(bundle, empty, fast_config(Scheme::euler, "cfg"), rng),
                  std::runtime_error);
}

// ---------------------------------------------------------------------------
// Guided sampling contracts

TEST_CASE("guided output carries the observations exactly") {
  const auto bundle = tiny_bundle("unconditional");
  const auto x0 = toy_truth(16);
  const auto obs = observe(x0, toy_mask(16));
  Rng rng(16, 0);
  const auto out = sample_guided(bundle, obs, fast_config(Scheme::heun_pc, "guided"), rng);
  out.require_finite("guided reconstruction");
  for (int i = 0; i < obs.count(); ++i)
    for (int c = 0; c < 2; ++c)
      CHECK(out.at(c, obs.positions[size_t(i)].first, obs.positions[size_t(i)].second) ==
            obs.values(c, i));
}

TEST_CASE("refresh at sigma zero restores observations and touches nothing else") {
  Rng rng(17, 0);
  const int grid = 8;
  const auto mask = make_mask({{0, 0}, {3, 5}, {7, 7}}, grid, grid);
  const FieldTensor<double> clean(1, grid, grid, rng.normal_array<double>(64));
  const FieldTensor<double> x(1, grid, grid, rng.normal_array<double>(64));
  const auto r0 = refresh_observed(x, clean, mask, 0.0, rng);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      if (mask.at(r, c))
        CHECK(r0.at(0, r, c) == clean.at(0, r, c));
      else
        CHECK(r0.at(0, r, c) == x.at(0, r, c));
    }
}

TEST_CASE("refresh at positive sigma perturbs observed cells around the clean values") {
  Rng rng(18, 0);
  const int grid = 8;
  const auto mask = make_mask({{2, 2}, {5, 1}}, grid, grid);
  const FieldTensor<double> clean(1, grid, grid, rng.normal_array<double>(64));
  const FieldTensor<double> x = FieldTensor<double>::zeros(1, grid, grid);
  const double sigma = 0.5;
  double sum = 0, sum_sq = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const auto r = refresh_observed(x, clean, mask, sigma, rng);
    const double d = r.at(0, 2, 2) - clean.at(0, 2, 2);
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / trials;
  const double sd = std::sqrt(sum_sq / trials - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(sd == doctest::Approx(sigma).epsilon(0.03));
}

// ---------------------------------------------------------------------------
// Ensembles

TEST_CASE("a single-member ensemble degenerates to that member") {
  const auto bundle = tiny_bundle("cfg");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  auto cfg = fast_config(Scheme::euler, "cfg");
  cfg.ensemble = 1;
  cfg.seed = 77;
  const auto e = ensemble_sample(bundle, obs, cfg);
  REQUIRE(e.members.size() == 1);
  CHECK((e.mean.values == e.members[0].values).all());
  CHECK(e.variance.values.maxCoeff() == 0.0);
  CHECK(e.variance.values.minCoeff() == 0.0);
}

TEST_CASE("ensemble statistics match a two-pass recomputation") {
  const auto bundle = tiny_bundle("cross-attention");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  auto cfg = fast_config(Scheme::euler, "cross-attention");
  cfg.ensemble = 4;
  cfg.seed = 78;
  const auto e = ensemble_sample(bundle, obs, cfg);
  REQUIRE(e.members.size() == 4);

  ArrayX<double> mean = ArrayX<double>::Zero(e.mean.size());
  for (const auto& m : e.members) mean += m.values;
  mean /= 4.0;
  ArrayX<double> var = ArrayX<double>::Zero(e.mean.size());
  for (const auto& m : e.members) var += (m.values - mean).square();
  var /= 3.0;

  CHECK((e.mean.values - mean).abs().maxCoeff() < 1e-10);
  CHECK((e.variance.values - var).abs().maxCoeff() < 1e-10);

  // Distinct member seeds actually explore: members differ somewhere.
  CHECK((e.members[0].values - e.members[1].values).abs().maxCoeff() > 0.0);
}

TEST_CASE("ensemble variance is exactly zero on observed cells") {
  const auto bundle = tiny_bundle("cfg");
  const auto x0 = toy_truth(16);
  const auto obs = observe(x0, toy_mask(16));
  auto cfg = fast_config(Scheme::euler, "cfg");
  cfg.ensemble = 3;
  const auto e = ensemble_sample(bundle, obs, cfg);
  for (int i = 0; i < obs.count(); ++i)
    for (int c = 0; c < 2; ++c) {
      const auto [r, col] = obs.positions[size_t(i)];
      CHECK(e.variance.at(c, r, col) == 0.0);
      CHECK(e.mean.at(c, r, col) == obs.values(c, i));
    }
}

TEST_CASE("oracle ensemble collapses onto the truth everywhere") {
  const auto bundle = tiny_bundle("cross-attention");
  const auto x0 = toy_truth(16);
  const auto obs = observe(x0, toy_mask(16));
  const auto fn = oracle_fn(normalize(x0, toy_stats<double>()));
  SamplerConfig cfg;
  cfg.n_steps = 20;
  cfg.scheme = Scheme::heun_pc;
  cfg.mode = "cross-attention";
  cfg.ensemble = 3;
  const auto e = ensemble_sample(bundle, obs, cfg, &fn);
  CHECK((e.mean.values - x0.values).abs().maxCoeff() < 1e-6);
  CHECK(e.variance.values.maxCoeff() < 1e-12);
}

TEST_CASE("equal ensemble configs reproduce the mean bitwise") {
  const auto bundle = tiny_bundle("cfg");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  auto cfg = fast_config(Scheme::euler, "cfg");
  cfg.ensemble = 2;
  cfg.seed = 79;
  const auto a = ensemble_sample(bundle, obs, cfg);
  const auto b = ensemble_sample(bundle, obs, cfg);
  CHECK((a.mean.values == b.mean.values).all());
  CHECK((a.variance.values == b.variance.values).all());
}

// ---------------------------------------------------------------------------
// Model-backed denoise functions

TEST_CASE("cfg guidance paths agree for an untrained network") {
  // Zero-initialized heads make D independent of the condition, so every
  // guidance weight must give the same output.
  const auto bundle = tiny_bundle("cfg");
  const auto obs = observe(toy_truth(16), toy_mask(16));
  const auto obs_norm = normalize(obs, bundle.norm);
  Rng rng(19, 0);
  const FieldTensor<double> x(2, 16, 16, rng.normal_array<double>(512));
  const auto at1 = make_denoise_fn(bundle, obs_norm, 1.0)(x, 0.7);
  const auto at0 = make_denoise_fn(bundle, obs_norm, 0.0)(x, 0.7);
  const auto at3 = make_denoise_fn(bundle, obs_norm, 3.0)(x, 0.7);
  CHECK((at1.values - at0.values).abs().maxCoeff() < 1e-12);
  CHECK((at1.values - at3.values).abs().maxCoeff() < 1e-12);
}

TEST_CASE("unconditional denoise function matches the direct wrapper") {
  const auto bundle = tiny_bundle("unconditional");
  ObservationSet<double> unused;
  unused.values.resize(2, 0);
  Rng rng(20, 0);
  const FieldTensor<double> x(2, 16, 16, rng.normal_array<double>(512));
  const auto via_fn = make_denoise_fn(bundle, unused, 1.0)(x, 1.1);
  const auto direct = edm::denoise_field(*bundle.denoiser, x, 1.1, nullptr,
                                         bundle.schedule.sigma_data);
  CHECK((via_fn.values == direct.values).all());
}
