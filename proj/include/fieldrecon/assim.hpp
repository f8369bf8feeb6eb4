#pragma once

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fieldrecon/fields.hpp"
#include "fieldrecon/sampler.hpp"

namespace fieldrecon::assim {

/// Truncated principal-component basis of a snapshot set: orthonormal
/// components (one column per mode), eigenvalues of the snapshot covariance
/// in descending order, and the snapshot mean removed before projection.
template <typename S>
struct PcaBasis {
  MatrixX<S> components;   // state_dim × q, orthonormal columns
  VectorX<S> eigenvalues;  // length q, nonincreasing
  VectorX<S> mean;         // zero vector when fitted uncentered

  int dim() const { return int(components.rows()); }
  int q() const { return int(components.cols()); }

  void validate() const {
    require(components.cols() > 0 && components.rows() >= components.cols(),
            "PcaBasis: invalid component shape");
    require(eigenvalues.size() == components.cols(), "PcaBasis: eigenvalue count mismatch");
    require(mean.size() == components.rows(), "PcaBasis: mean length mismatch");
    const MatrixX<S> gram = components.transpose() * components;
    const S defect = (gram - MatrixX<S>::Identity(q(), q())).cwiseAbs().maxCoeff();
    require(defect < S(1e-6), "PcaBasis: columns not orthonormal");
    for (Eigen::Index i = 0; i + 1 < eigenvalues.size(); ++i)
      require(eigenvalues[i] >= eigenvalues[i + 1], "PcaBasis: eigenvalues not descending");
  }
};

/// Fits the q leading principal components of `snapshots` (one column per
/// snapshot) via thin SVD of the centered matrix. Eigenvalues are the
/// covariance spectrum s_i²/(n−1); columns past the snapshot rank come out
/// with (numerically) zero eigenvalues but stay orthonormal.
template <typename S>
PcaBasis<S> pca_fit(const MatrixX<S>& snapshots, int q, bool center = true) {
  const Eigen::Index dim = snapshots.rows(), n = snapshots.cols();
  require(n >= 2, "pca_fit: need at least two snapshots");
  require(q >= 1 && Eigen::Index(q) <= std::min(dim, n),
          "pca_fit: q must lie in [1, min(dim, n)]");

  PcaBasis<S> basis;
  basis.mean = center ? VectorX<S>(snapshots.rowwise().mean()) : VectorX<S>(VectorX<S>::Zero(dim));
  const MatrixX<S> centered = snapshots.colwise() - basis.mean;
  Eigen::BDCSVD<MatrixX<S>> svd(centered, Eigen::ComputeThinU);
  basis.components = svd.matrixU().leftCols(q);
  basis.eigenvalues = VectorX<S>::Zero(q);
  const auto& sv = svd.singularValues();
  for (int i = 0; i < q && Eigen::Index(i) < sv.size(); ++i)
    basis.eigenvalues[i] = sv[i] * sv[i] / S(n - 1);
  return basis;
}

/// x̂ = Lᵀ(x − mean).
template <typename S>
VectorX<S> reduce(const VectorX<S>& x, const PcaBasis<S>& basis) {
  require(x.size() == basis.components.rows(), "reduce: state length mismatch");
  return basis.components.transpose() * (x - basis.mean);
}

/// x = L·x̂ + mean.
template <typename S>
VectorX<S> expand(const VectorX<S>& latent, const PcaBasis<S>& basis) {
  require(latent.size() == basis.components.cols(), "expand: latent length mismatch");
  return basis.components * latent + basis.mean;
}

/// Unbiased sample covariance of column vectors.
template <typename S>
MatrixX<S> ensemble_cov(const MatrixX<S>& members) {
  const Eigen::Index m = members.cols();
  require(m >= 2, "ensemble_cov: need at least two members");
  const MatrixX<S> centered = members.colwise() - VectorX<S>(members.rowwise().mean());
  MatrixX<S> cov = (centered * centered.transpose()) / S(m - 1);
  return MatrixX<S>((cov + cov.transpose()) / S(2));  // exact symmetry for downstream solvers
}

/// BLUE/3D-Var increment K·d with K = BHᵀ(HBHᵀ + R)⁻¹, R = diag(r_diag).
/// The innovation system is solved by root-free Cholesky (LDLT) so systems
/// with dyadic-rational entries stay exact (scalar B=R=1 gives gain 1/2
/// bit-for-bit); a singular system falls back to a 1e-10 ridge.
template <typename S>
VectorX<S> blue_increment(const VectorX<S>& innovation, const MatrixX<S>& H, const MatrixX<S>& B,
                          const VectorX<S>& r_diag) {
  const Eigen::Index n_obs = H.rows(), n_state = H.cols();
  require(B.rows() == n_state && B.cols() == n_state, "blue_increment: B shape mismatch");
  require(innovation.size() == n_obs, "blue_increment: innovation length mismatch");
  require(r_diag.size() == n_obs, "blue_increment: R diagonal length mismatch");
  require((r_diag.array() > S(0)).all(), "blue_increment: R diagonal must be positive");

  MatrixX<S> innov_cov = H * B * H.transpose();
  innov_cov.diagonal() += r_diag;
  Eigen::LDLT<MatrixX<S>> ldlt(innov_cov);
  if (ldlt.info() != Eigen::Success) {
    innov_cov.diagonal().array() += S(1e-10);
    ldlt.compute(innov_cov);
    require(ldlt.info() == Eigen::Success, "blue_increment: innovation covariance not SPD");
  }
  return B * H.transpose() * ldlt.solve(innovation);
}

/// Analysis state x_a = x_b + K(y − Hx_b): the minimizer of the 3D-Var
/// quadratic ½‖x−x_b‖²_{B⁻¹} + ½‖y−Hx‖²_{R⁻¹} for linear H.
template <typename S>
VectorX<S> blue_analysis(const VectorX<S>& x_b, const VectorX<S>& y, const MatrixX<S>& H,
                         const MatrixX<S>& B, const VectorX<S>& r_diag) {
  require(x_b.size() == H.cols(), "blue_analysis: state length mismatch");
  require(y.size() == H.rows(), "blue_analysis: observation length mismatch");
  return x_b + blue_increment<S>(y - H * x_b, H, B, r_diag);
}

/// Relative error improvement (‖x_b − x_t‖ − ‖x_a − x_t‖)/‖x_b − x_t‖:
/// 1 when the analysis is exact, 0 when it matches the background, negative
/// when assimilation made things worse.
template <typename S>
S improvement(const ArrayX<S>& x_b, const ArrayX<S>& x_a, const ArrayX<S>& x_true) {
  require(x_b.size() == x_true.size() && x_a.size() == x_true.size(),
          "improvement: length mismatch");
  const S err_b = std::sqrt((x_b - x_true).square().sum());
  require(err_b > S(0), "improvement: background already exact");
  const S err_a = std::sqrt((x_a - x_true).square().sum());
  return (err_b - err_a) / err_b;
}

enum class CovSource { diffusion_ensemble, identity };

inline CovSource parse_cov_source(const std::string& name) {
  if (name == "ensemble") return CovSource::diffusion_ensemble;
  if (name == "identity") return CovSource::identity;
  fail("parse_cov_source: unknown source '" + name + "'");
}

/// Reduced background/observation covariances used by one analysis.
template <typename S>
struct CovModel {
  MatrixX<S> B;       // latent × latent, symmetric PSD
  VectorX<S> r_diag;  // observation variance per component
  CovSource source = CovSource::diffusion_ensemble;

  void validate() const {
    require(B.rows() == B.cols(), "CovModel: B must be square");
    require((B - B.transpose()).cwiseAbs().maxCoeff() <= S(1e-8) * (S(1) + B.cwiseAbs().maxCoeff()),
            "CovModel: B must be symmetric");
    require((r_diag.array() > S(0)).all(), "CovModel: R diagonal must be positive");
  }
};

template <typename S>
struct AnalysisResult {
  FieldTensor<S> x_b;  // background: the ensemble mean
  FieldTensor<S> x_a;  // analysis
  S im = std::numeric_limits<S>::quiet_NaN();  // improvement vs. truth, when given
};

namespace detail {

/// Flat state indices of the observed (channel, row, col) entries, channel-major,
/// matching the layout of ObservationSet::values.
template <typename S>
std::vector<Eigen::Index> observed_indices(const ObservationSet<S>& obs, int channels, int height,
                                           int width) {
  std::vector<Eigen::Index> idx;
  idx.reserve(size_t(channels) * size_t(obs.count()));
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < obs.count(); ++i) {
      const auto [r, col] = obs.positions[size_t(i)];
      require(0 <= r && r < height && 0 <= col && col < width,
              "assimilate: observation outside the field");
      idx.push_back((Eigen::Index(c) * height + r) * width + col);
    }
  return idx;
}

}  // namespace detail

/// Posterior fine-tuning of a reconstruction ensemble: the ensemble mean is
/// the background, B̂ comes from the reduced ensemble spread (or identity),
/// and the BLUE increment — computed in the PCA latent space against the
/// background's own observed values — is expanded and added to the full
/// background. Zero innovation or a collapsed ensemble leaves the background
/// untouched. `truth` fills in the improvement metric.
template <typename S>
AnalysisResult<S> assimilate(const sampler::Ensemble<S>& ensemble, const ObservationSet<S>& obs,
                             const PcaBasis<S>& basis, CovSource source, S r_sigma,
                             const FieldTensor<S>* truth = nullptr) {
  require(!ensemble.members.empty(), "assimilate: empty ensemble");
  require(obs.count() > 0, "assimilate: empty observation set");
  require(r_sigma > S(0), "assimilate: observation noise level must be positive");
  const FieldTensor<S>& x_b = ensemble.mean;
  require(Eigen::Index(basis.dim()) == x_b.size(),
          "assimilate: basis dimension does not match the field");
  require(obs.channels() == x_b.channels, "assimilate: observation channel mismatch");

  const auto idx = detail::observed_indices(obs, x_b.channels, x_b.height, x_b.width);
  const Eigen::Index n_obs = Eigen::Index(idx.size());
  MatrixX<S> H_hat(n_obs, basis.q());
  VectorX<S> innovation(n_obs);
  for (Eigen::Index k = 0; k < n_obs; ++k) {
    H_hat.row(k) = basis.components.row(idx[size_t(k)]);
    const int c = int(k) / obs.count(), i = int(k) % obs.count();
    innovation[k] = obs.values(c, i) - x_b.values[idx[size_t(k)]];
  }

  CovModel<S> cov;
  cov.source = source;
  cov.r_diag = VectorX<S>::Constant(n_obs, r_sigma * r_sigma);
  if (source == CovSource::identity) {
    cov.B = MatrixX<S>::Identity(basis.q(), basis.q());
  } else {
    require(ensemble.members.size() >= 2,
            "assimilate: ensemble covariance needs at least two members");
    MatrixX<S> reduced(basis.q(), Eigen::Index(ensemble.members.size()));
    for (size_t m = 0; m < ensemble.members.size(); ++m)
      reduced.col(Eigen::Index(m)) = reduce<S>(ensemble.members[m].values.matrix(), basis);
    cov.B = ensemble_cov<S>(reduced);
  }
  cov.validate();

  const VectorX<S> delta = blue_increment<S>(innovation, H_hat, cov.B, cov.r_diag);
  AnalysisResult<S> result;
  result.x_b = x_b;
  result.x_a = FieldTensor<S>(x_b.channels, x_b.height, x_b.width,
                              ArrayX<S>(x_b.values + (basis.components * delta).array()));
  if (truth) {
    require(truth->size() == x_b.size(), "assimilate: truth shape mismatch");
    result.im = improvement<S>(result.x_b.values, result.x_a.values, truth->values);
  }
  return result;
}

}  // namespace fieldrecon::assim
