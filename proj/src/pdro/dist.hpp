#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "pdro/rng.hpp"

namespace pdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Distribution representations
// ---------------------------------------------------------------------------

/// Multivariate normal N(mean, cov). The covariance is validated to be
/// symmetric (1e-10) and PSD; slightly negative eigenvalues are clamped to 0.
struct GaussianSpec {
    Vector mean;
    Matrix cov;

    GaussianSpec(Vector mean_, Matrix cov_);
    Eigen::Index dim() const { return mean.size(); }
};

/// Product distribution with coordinates 2r * Beta(eta_i, 2) - r on [-r, r].
/// The family box keeps every eta_i in [1.5, 3].
struct ScaledBetaProductSpec {
    static constexpr double kEtaLo = 1.5;
    static constexpr double kEtaHi = 3.0;
    static constexpr double kBetaSecond = 2.0;

    Vector eta;
    double r = 1.0;

    ScaledBetaProductSpec(Vector eta_, double r_);
    Eigen::Index dim() const { return eta.size(); }
    /// E[xi_i] = 2r * eta_i/(eta_i+2) - r.
    double coordinate_mean(Eigen::Index i) const;
    /// Var[xi_i] = 4r^2 * 2 eta_i / ((eta_i+2)^2 (eta_i+3)).
    double coordinate_var(Eigen::Index i) const;
};

struct GaussianMixtureSpec {
    Vector weights; // simplex over components
    std::vector<GaussianSpec> components;
    /// Groups too small to estimate a covariance; sampling replicates their
    /// raw atoms instead of drawing from the fitted component.
    std::vector<Matrix> raw_fallback; // empty matrix when unused

    GaussianMixtureSpec(Vector weights_, std::vector<GaussianSpec> components_,
                        std::vector<Matrix> raw_fallback_ = {});
    Eigen::Index dim() const { return components.front().dim(); }
};

/// Conditional law xi | y = N(B y, cov).
struct LinearGaussianConditional {
    Matrix B;   // D_xi x D_y
    Matrix cov; // D_xi x D_xi
    bool rank_deficient = false; // covariate Gram matrix needed a pseudo-inverse

    LinearGaussianConditional(Matrix B_, Matrix cov_, bool rank_deficient_ = false);
    Eigen::Index dim() const { return B.rows(); }
    Eigen::Index covariate_dim() const { return B.cols(); }
    GaussianSpec at(const Vector& y) const;
};

struct EmpiricalDist {
    Matrix atoms;   // m x D
    Vector weights; // simplex of length m

    explicit EmpiricalDist(Matrix atoms_);            // uniform weights
    EmpiricalDist(Matrix atoms_, Vector weights_);
    Eigen::Index size() const { return atoms.rows(); }
    Eigen::Index dim() const { return atoms.cols(); }
    Vector mean() const;
};

enum class DivergenceKind { Chi2, KL, TV, W1, W2 };

const char* to_string(DivergenceKind kind);

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// Gaussian fit with known covariance: only the mean is estimated.
GaussianSpec fit_gaussian_mean(const EmpiricalDist& samples, const Matrix& known_cov);

/// Gaussian fit of both moments; the covariance uses divisor m.
GaussianSpec fit_gaussian_full(const EmpiricalDist& samples);

struct BetaFitDiagnostics {
    int clipped_samples = 0;    // coordinates clipped into [-r, r]
    int degenerate_coords = 0;  // moment equation degenerate, eta forced to the box top
};

/// Moment estimator eta_i = 2 E[g_i]/(1 - E[g_i]) with g_i = (xi_i + r)/(2r),
/// clamped into the family box [1.5, 3].
ScaledBetaProductSpec fit_beta_moment(const EmpiricalDist& samples, double r,
                                      BetaFitDiagnostics* diag = nullptr);

/// Group-labeled mixture fit: component weights are label frequencies and the
/// per-group Gaussian moments use divisor n_k. Groups smaller than
/// min_group_size keep their raw atoms for sampling.
GaussianMixtureSpec fit_gmm_labeled(const EmpiricalDist& samples,
                                    const std::vector<int>& labels,
                                    int min_group_size = 10);

/// Least-squares conditional mean xi ~ B y plus residual covariance.
LinearGaussianConditional fit_contextual_ols(const Matrix& covariates,
                                             const Matrix& responses);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

EmpiricalDist sample(const GaussianSpec& dist, Eigen::Index m, uint64_t seed);
EmpiricalDist sample(const ScaledBetaProductSpec& dist, Eigen::Index m, uint64_t seed);
EmpiricalDist sample(const GaussianMixtureSpec& dist, Eigen::Index m, uint64_t seed);
EmpiricalDist sample(const LinearGaussianConditional& dist, Eigen::Index m, uint64_t seed,
                     const Vector& context);

// ---------------------------------------------------------------------------
// Divergences and bounds
// ---------------------------------------------------------------------------

/// Discrete f-divergence / distance between two weight vectors on a shared
/// support. Chi2 uses f(t) = (t-1)^2/2 (so chi2 here is half the classical
/// chi-square), KL uses f(t) = t log t - (t-1), TV is half the L1 distance.
/// Chi2 and KL return +inf when support(p) is not contained in support(q).
double discrete_divergence(const Vector& p, const Vector& q, DivergenceKind kind);

/// Squared Hellinger distance sum (sqrt(p_i) - sqrt(q_i))^2; used by the
/// divergence-inequality checks only.
double discrete_hellinger_sq(const Vector& p, const Vector& q);

/// Closed-form chi-square divergence between two scaled-Beta product
/// distributions with second parameter 2: the first argument is the true
/// eta, the second the fitted center eta-hat. Returns +inf when any
/// 2*eta_hat_i - eta_i <= 0 (the defining integral diverges).
double chi2_beta_product(const Vector& eta_true, const Vector& eta_center);

/// 2-Wasserstein distance between Gaussians (Frechet/Dowson-Landau formula).
/// Also an upper bound on W1 between the same pair.
double w2_gaussian(const GaussianSpec& P, const GaussianSpec& Q);

/// High-probability estimation radius E_apx + (Comp/n)^alpha * log(1/delta).
struct EpsilonRule {
    double comp_theta = 0.0;
    double alpha = 0.5;
    double e_apx = 0.0;
    double delta = 0.1;
    double c_mult = 1.0;
};

double delta_bound(const EpsilonRule& rule, Eigen::Index n, double delta);

// PSD helpers shared by the fits and samplers.
Matrix symmetrize(const Matrix& a);
Matrix psd_sqrt(const Matrix& a); // symmetric eigendecomposition, eigenvalues clamped at 0

} // namespace pdro
