#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fieldrecon/common.hpp"
#include "fieldrecon/fields.hpp"

namespace fieldrecon::datagen {

/// Porous-flow problem on the unit square, cell-centered N×N grid.
/// Convention everywhere in this header: x1 runs along columns, x2 along
/// rows; cell (r,c) has center ((c+0.5)/N, (r+0.5)/N).
struct DarcyConfig {
  int grid = 32;
  int n_modes = 128;
  double d = 1.2;    // eigenvalue decay exponent
  double tau = 1.0;  // inverse length scale
  std::uint64_t seed = 0;
  double cg_rel_tol = 1e-8;
  int cg_max_iters = 10000;

  void validate() const {
    require(grid >= 8, "DarcyConfig: grid must be >= 8");
    require(n_modes >= 1, "DarcyConfig: n_modes must be >= 1");
    require(d > 1.0, "DarcyConfig: d must exceed 1 (summable eigenvalues)");
  }
};

/// Piecewise-constant forcing, banded in x2.
inline double darcy_source(double /*x1*/, double x2) {
  if (x2 <= 4.0 / 6.0) return 1000.0;
  if (x2 <= 5.0 / 6.0) return 2000.0;
  return 3000.0;
}

inline double kle_lambda(int l1, int l2, double tau, double d) {
  require(l1 >= 0 && l2 >= 0, "kle_lambda: mode indices must be nonnegative");
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return std::pow(pi2 * (double(l1) * l1 + double(l2) * l2) + tau * tau, -d);
}

inline double kle_psi(int l1, int l2, double x1, double x2) {
  require(l1 >= 0 && l2 >= 0, "kle_psi: mode indices must be nonnegative");
  constexpr double sqrt2 = std::numbers::sqrt2;
  const double pi = std::numbers::pi;
  if (l2 == 0) return sqrt2 * std::cos(pi * l1 * x1);  // includes (0,0) -> sqrt(2)
  if (l1 == 0) return sqrt2 * std::cos(pi * l2 * x2);
  return 2.0 * std::cos(pi * l1 * x1) * std::cos(pi * l2 * x2);
}

struct KleMode {
  int l1 = 0, l2 = 0;
  double lambda = 0.0;
};

/// Top n_modes eigenpairs by descending eigenvalue, the constant mode (0,0)
/// included. Equal eigenvalues (index-swapped pairs) are ordered
/// lexicographically on (l1,l2) so the basis is deterministic.
inline std::vector<KleMode> kle_modes(int n_modes, double tau, double d) {
  require(n_modes >= 1, "kle_modes: n_modes must be >= 1");
  int box = std::max(2, int(std::ceil(std::sqrt(double(n_modes)))) + 2);
  for (;;) {
    std::vector<KleMode> all;
    all.reserve(size_t(box) * size_t(box));
    for (int l1 = 0; l1 < box; ++l1)
      for (int l2 = 0; l2 < box; ++l2) all.push_back({l1, l2, kle_lambda(l1, l2, tau, d)});
    std::sort(all.begin(), all.end(), [](const KleMode& a, const KleMode& b) {
      if (a.lambda != b.lambda) return a.lambda > b.lambda;
      if (a.l1 != b.l1) return a.l1 < b.l1;
      return a.l2 < b.l2;
    });
    // The box is large enough once every kept mode beats the best candidate
    // just outside it, which lies on the axis at |l| = box.
    const double outside_best = kle_lambda(box, 0, tau, d);
    if (int(all.size()) >= n_modes && all[size_t(n_modes) - 1].lambda > outside_best) {
      all.resize(size_t(n_modes));
      return all;
    }
    box *= 2;
  }
}

/// Truncated KLE of the log-permeability field, evaluated at cell centers.
template <typename Scalar>
FieldTensor<Scalar> kle_sample(const ArrayX<double>& theta, const DarcyConfig& config) {
  config.validate();
  require(int(theta.size()) == config.n_modes, "kle_sample: theta length != n_modes");
  const int n = config.grid;
  const std::vector<KleMode> modes = kle_modes(config.n_modes, config.tau, config.d);
  FieldTensor<Scalar> out = FieldTensor<Scalar>::zeros(1, n, n);
  for (int r = 0; r < n; ++r) {
    const double x2 = (r + 0.5) / n;
    for (int c = 0; c < n; ++c) {
      const double x1 = (c + 0.5) / n;
      double acc = 0.0;
      for (int m = 0; m < config.n_modes; ++m)
        acc += theta[m] * std::sqrt(modes[size_t(m)].lambda) *
               kle_psi(modes[size_t(m)].l1, modes[size_t(m)].l2, x1, x2);
      out.at(0, r, c) = Scalar(acc);
    }
  }
  return out;
}

/// Pressure solve for -div(alpha grad p) = f with p = 0 on the boundary.
/// Cell-centered finite volumes: harmonic-mean face permeability, boundary
/// faces see a half-cell to the Dirichlet value. Jacobi-preconditioned CG,
/// converged when the residual 2-norm falls below cg_rel_tol * ||f||.
template <typename Scalar>
FieldTensor<Scalar> darcy_solve(const FieldTensor<Scalar>& alpha, const DarcyConfig& config,
                                const std::function<double(double, double)>& source = darcy_source) {
  config.validate();
  const int n = config.grid;
  require(alpha.channels == 1 && alpha.height == n && alpha.width == n,
          "darcy_solve: alpha must be a 1-channel grid x grid field");
  require((alpha.values > Scalar(0)).all(), "darcy_solve: alpha must be positive");

  const Eigen::Index n_cells = Eigen::Index(n) * n;
  const double h = 1.0 / n;
  ArrayX<double> a = alpha.values.template cast<double>();

  // Face transmissibilities. tx(r,c) couples (r,c-1)-(r,c) for c in [1,n);
  // boundary faces use 2*alpha (half-cell to the Dirichlet wall).
  auto cell = [n](int r, int c) { return Eigen::Index(r) * n + c; };
  auto harmonic = [](double p, double q) { return 2.0 * p * q / (p + q); };

  ArrayX<double> diag = ArrayX<double>::Zero(n_cells);
  ArrayX<double> tx = ArrayX<double>::Zero(n_cells);  // coupling to the left neighbor
  ArrayX<double> ty = ArrayX<double>::Zero(n_cells);  // coupling to the upper neighbor
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double ac = a[cell(r, c)];
      if (c > 0) {
        tx[cell(r, c)] = harmonic(a[cell(r, c - 1)], ac);
        diag[cell(r, c)] += tx[cell(r, c)];
        diag[cell(r, c - 1)] += tx[cell(r, c)];
      } else {
        diag[cell(r, c)] += 2.0 * ac;
      }
      if (c == n - 1) diag[cell(r, c)] += 2.0 * ac;
      if (r > 0) {
        ty[cell(r, c)] = harmonic(a[cell(r - 1, c)], ac);
        diag[cell(r, c)] += ty[cell(r, c)];
        diag[cell(r - 1, c)] += ty[cell(r, c)];
      } else {
        diag[cell(r, c)] += 2.0 * ac;
      }
      if (r == n - 1) diag[cell(r, c)] += 2.0 * ac;
    }

  auto apply = [&](const ArrayX<double>& p, ArrayX<double>& q) {
    q = diag * p;
    for (int r = 0; r < n; ++r)
      for (int c = 1; c < n; ++c) {
        const double t = tx[cell(r, c)];
        q[cell(r, c)] -= t * p[cell(r, c - 1)];
        q[cell(r, c - 1)] -= t * p[cell(r, c)];
      }
    for (int r = 1; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const double t = ty[cell(r, c)];
        q[cell(r, c)] -= t * p[cell(r - 1, c)];
        q[cell(r - 1, c)] -= t * p[cell(r, c)];
      }
  };

  ArrayX<double> b(n_cells);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      b[cell(r, c)] = source((c + 0.5) * h, (r + 0.5) * h) * h * h;

  const double b_norm = std::sqrt(b.square().sum());
  ArrayX<double> p = ArrayX<double>::Zero(n_cells);
  if (b_norm == 0.0) return FieldTensor<Scalar>(1, n, n, p.template cast<Scalar>());

  ArrayX<double> res = b, q(n_cells);
  ArrayX<double> z = res / diag;
  ArrayX<double> dir = z;
  double rz = (res * z).sum();
  const double tol = config.cg_rel_tol * b_norm;
  for (int it = 0; it < config.cg_max_iters; ++it) {
    if (std::sqrt(res.square().sum()) <= tol)
      return FieldTensor<Scalar>(1, n, n, p.template cast<Scalar>());
    apply(dir, q);
    const double alpha_step = rz / (dir * q).sum();
    p += alpha_step * dir;
    res -= alpha_step * q;
    z = res / diag;
    const double rz_next = (res * z).sum();
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
  }
  if (std::sqrt(res.square().sum()) <= tol)
    return FieldTensor<Scalar>(1, n, n, p.template cast<Scalar>());
  fail("darcy_solve: CG did not converge in " + std::to_string(config.cg_max_iters) +
       " iterations, residual " + std::to_string(std::sqrt(res.square().sum())));
}

/// One complete sample: channel 0 permeability (exp of the KLE draw),
/// channel 1 pressure.
template <typename Scalar>
FieldTensor<Scalar> darcy_simulate(const DarcyConfig& config, Rng& rng) {
  ArrayX<double> theta = rng.normal_array<double>(config.n_modes);
  FieldTensor<Scalar> log_alpha = kle_sample<Scalar>(theta, config);
  FieldTensor<Scalar> alpha(1, config.grid, config.grid, log_alpha.values.exp());
  FieldTensor<Scalar> pressure = darcy_solve(alpha, config);
  FieldTensor<Scalar> out = FieldTensor<Scalar>::zeros(2, config.grid, config.grid);
  out.channel_flat(0) = alpha.values;
  out.channel_flat(1) = pressure.values;
  return out;
}

}  // namespace fieldrecon::datagen
