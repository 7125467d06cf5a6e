#include "pdro/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_simplex(const Vector& w, const char* what) {
    if (w.size() == 0)
        throw std::invalid_argument(std::string(what) + ": empty weight vector");
    if (w.minCoeff() < -1e-12)
        throw std::invalid_argument(std::string(what) + ": negative weight");
    if (std::abs(w.sum() - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(what) + ": weights do not sum to 1");
}

} // namespace

Matrix symmetrize(const Matrix& a) {
    return 0.5 * (a + a.transpose());
}

Matrix psd_sqrt(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
    Vector ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

GaussianSpec::GaussianSpec(Vector mean_, Matrix cov_)
    : mean(std::move(mean_)), cov(std::move(cov_)) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw std::invalid_argument("GaussianSpec: covariance shape does not match mean");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("GaussianSpec: covariance not symmetric");
    cov = symmetrize(cov);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("GaussianSpec: covariance not positive semidefinite");
}

ScaledBetaProductSpec::ScaledBetaProductSpec(Vector eta_, double r_)
    : eta(std::move(eta_)), r(r_) {
    if (eta.size() == 0)
        throw std::invalid_argument("ScaledBetaProductSpec: empty eta");
    if (r <= 0.0)
        throw std::invalid_argument("ScaledBetaProductSpec: r must be positive");
    if (eta.minCoeff() < kEtaLo - 1e-9 || eta.maxCoeff() > kEtaHi + 1e-9)
        throw std::invalid_argument("ScaledBetaProductSpec: eta outside [1.5, 3]");
}

double ScaledBetaProductSpec::coordinate_mean(Eigen::Index i) const {
    return 2.0 * r * eta[i] / (eta[i] + kBetaSecond) - r;
}

double ScaledBetaProductSpec::coordinate_var(Eigen::Index i) const {
    const double a = eta[i], b = kBetaSecond;
    const double v = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    return 4.0 * r * r * v;
}

GaussianMixtureSpec::GaussianMixtureSpec(Vector weights_, std::vector<GaussianSpec> components_,
                                         std::vector<Matrix> raw_fallback_)
    : weights(std::move(weights_)), components(std::move(components_)),
      raw_fallback(std::move(raw_fallback_)) {
    if (components.empty())
        throw std::invalid_argument("GaussianMixtureSpec: no components");
    if (weights.size() != static_cast<Eigen::Index>(components.size()))
        throw std::invalid_argument("GaussianMixtureSpec: weight/component count mismatch");
    if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("GaussianMixtureSpec: weights not a simplex");
    for (const auto& c : components)
        if (c.dim() != components.front().dim())
            throw std::invalid_argument("GaussianMixtureSpec: mixed component dimensions");
    if (raw_fallback.empty())
        raw_fallback.resize(components.size());
    if (raw_fallback.size() != components.size())
        throw std::invalid_argument("GaussianMixtureSpec: fallback/component count mismatch");
}

LinearGaussianConditional::LinearGaussianConditional(Matrix B_, Matrix cov_, bool rank_deficient_)
    : B(std::move(B_)), cov(symmetrize(cov_)), rank_deficient(rank_deficient_) {
    if (cov.rows() != B.rows() || cov.cols() != B.rows())
        throw std::invalid_argument("LinearGaussianConditional: covariance shape mismatch");
}

GaussianSpec LinearGaussianConditional::at(const Vector& y) const {
    if (y.size() != B.cols())
        throw std::invalid_argument("LinearGaussianConditional: covariate dimension mismatch");
    return GaussianSpec(B * y, cov);
}

EmpiricalDist::EmpiricalDist(Matrix atoms_)
    : atoms(std::move(atoms_)), weights(Vector::Constant(atoms.rows(), 1.0 / double(atoms.rows()))) {
    if (atoms.rows() < 1)
        throw std::invalid_argument("EmpiricalDist: needs at least one atom");
}

EmpiricalDist::EmpiricalDist(Matrix atoms_, Vector weights_)
    : atoms(std::move(atoms_)), weights(std::move(weights_)) {
    if (atoms.rows() < 1)
        throw std::invalid_argument("EmpiricalDist: needs at least one atom");
    if (weights.size() != atoms.rows())
        throw std::invalid_argument("EmpiricalDist: weight/atom count mismatch");
    check_simplex(weights, "EmpiricalDist");
}

Vector EmpiricalDist::mean() const {
    return atoms.transpose() * weights;
}

const char* to_string(DivergenceKind kind) {
    switch (kind) {
    case DivergenceKind::Chi2: return "chi2";
    case DivergenceKind::KL: return "kl";
    case DivergenceKind::TV: return "tv";
    case DivergenceKind::W1: return "w1";
    case DivergenceKind::W2: return "w2";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

GaussianSpec fit_gaussian_mean(const EmpiricalDist& samples, const Matrix& known_cov) {
    if (known_cov.rows() != samples.dim() || known_cov.cols() != samples.dim())
        throw std::invalid_argument("fit_gaussian_mean: covariance dimension mismatch");
    return GaussianSpec(samples.mean(), known_cov);
}

GaussianSpec fit_gaussian_full(const EmpiricalDist& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("fit_gaussian_full: needs at least two atoms");
    const Vector mu = samples.mean();
    Matrix centered = samples.atoms.rowwise() - mu.transpose();
    Matrix cov = Matrix::Zero(samples.dim(), samples.dim());
    for (Eigen::Index i = 0; i < samples.size(); ++i)
        cov += samples.weights[i] * centered.row(i).transpose() * centered.row(i);
    return GaussianSpec(mu, symmetrize(cov));
}

ScaledBetaProductSpec fit_beta_moment(const EmpiricalDist& samples, double r,
                                      BetaFitDiagnostics* diag) {
    if (r <= 0.0)
        throw std::invalid_argument("fit_beta_moment: r must be positive");
    const Eigen::Index d = samples.dim();
    Vector eta(d);
    BetaFitDiagnostics local;
    for (Eigen::Index j = 0; j < d; ++j) {
        double g = 0.0;
        for (Eigen::Index i = 0; i < samples.size(); ++i) {
            double x = samples.atoms(i, j);
            if (x < -r || x > r) {
                x = std::clamp(x, -r, r);
                ++local.clipped_samples;
            }
            g += samples.weights[i] * (x + r) / (2.0 * r);
        }
        double e;
        if (g >= 1.0 - 1e-9) {
            e = ScaledBetaProductSpec::kEtaHi;
            ++local.degenerate_coords;
        } else {
            e = 2.0 * g / (1.0 - g);
        }
        eta[j] = std::clamp(e, ScaledBetaProductSpec::kEtaLo, ScaledBetaProductSpec::kEtaHi);
    }
    if (diag)
        *diag = local;
    return ScaledBetaProductSpec(eta, r);
}

GaussianMixtureSpec fit_gmm_labeled(const EmpiricalDist& samples, const std::vector<int>& labels,
                                    int min_group_size) {
    if (labels.size() != static_cast<size_t>(samples.size()))
        throw std::invalid_argument("fit_gmm_labeled: label/atom count mismatch");
    int k_max = -1;
    for (int g : labels) {
        if (g < 0)
            throw std::invalid_argument("fit_gmm_labeled: negative label");
        k_max = std::max(k_max, g);
    }
    const int K = k_max + 1;
    const Eigen::Index d = samples.dim();

    std::vector<std::vector<Eigen::Index>> groups(K);
    for (Eigen::Index i = 0; i < samples.size(); ++i)
        groups[labels[i]].push_back(i);

    Vector weights(K);
    std::vector<GaussianSpec> comps;
    std::vector<Matrix> fallback;
    std::vector<double> kept_w;
    for (int k = 0; k < K; ++k) {
        const auto& idx = groups[k];
        if (idx.empty())
            continue; // zero-weight component dropped
        const double nk = double(idx.size());
        Vector mu = Vector::Zero(d);
        for (auto i : idx)
            mu += samples.atoms.row(i).transpose();
        mu /= nk;
        Matrix cov = Matrix::Zero(d, d);
        for (auto i : idx) {
            Vector c = samples.atoms.row(i).transpose() - mu;
            cov += c * c.transpose();
        }
        cov = symmetrize(cov / nk);
        kept_w.push_back(nk / double(samples.size()));
        comps.emplace_back(mu, cov);
        if (idx.size() < static_cast<size_t>(min_group_size)) {
            Matrix raw(idx.size(), d);
            for (size_t t = 0; t < idx.size(); ++t)
                raw.row(t) = samples.atoms.row(idx[t]);
            fallback.push_back(std::move(raw));
        } else {
            fallback.emplace_back();
        }
    }
    Vector w = Eigen::Map<Vector>(kept_w.data(), kept_w.size());
    w /= w.sum();
    return GaussianMixtureSpec(w, std::move(comps), std::move(fallback));
}

LinearGaussianConditional fit_contextual_ols(const Matrix& covariates, const Matrix& responses) {
    const Eigen::Index n = covariates.rows();
    const Eigen::Index dy = covariates.cols();
    if (responses.rows() != n)
        throw std::invalid_argument("fit_contextual_ols: row count mismatch");
    if (n < dy)
        throw std::invalid_argument("fit_contextual_ols: fewer samples than covariate dimension");

    const Matrix gram = covariates.transpose() * covariates;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    const Vector ev = es.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    bool deficient = !(lo > 0.0) || hi / lo >= 1e12;

    Matrix Bt; // dy x dxi
    if (!deficient) {
        Bt = gram.ldlt().solve(covariates.transpose() * responses);
    } else {
        // Pseudo-inverse through the eigendecomposition, small modes dropped.
        Vector inv(ev.size());
        const double cut = hi * 1e-12;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            inv[i] = ev[i] > cut ? 1.0 / ev[i] : 0.0;
        Matrix pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
        Bt = pinv * (covariates.transpose() * responses);
    }
    Matrix B = Bt.transpose();
    Matrix resid = responses - covariates * Bt;
    Matrix cov = symmetrize(resid.transpose() * resid / double(n));
    return LinearGaussianConditional(std::move(B), std::move(cov), deficient);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

Matrix gaussian_draws(const GaussianSpec& dist, Eigen::Index m, Rng& rng) {
    const Eigen::Index d = dist.dim();
    const Matrix root = psd_sqrt(dist.cov);
    Matrix z(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            z(i, j) = rng.normal();
    Matrix out = z * root.transpose();
    out.rowwise() += dist.mean.transpose();
    return out;
}

void check_count(Eigen::Index m) {
    if (m <= 0)
        throw std::invalid_argument("sample: m must be positive");
}

} // namespace

EmpiricalDist sample(const GaussianSpec& dist, Eigen::Index m, uint64_t seed) {
    check_count(m);
    Rng rng(seed);
    return EmpiricalDist(gaussian_draws(dist, m, rng));
}

EmpiricalDist sample(const ScaledBetaProductSpec& dist, Eigen::Index m, uint64_t seed) {
    check_count(m);
    Rng rng(seed);
    Matrix atoms(m, dist.dim());
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < dist.dim(); ++j)
            atoms(i, j) = 2.0 * dist.r * rng.beta(dist.eta[j], ScaledBetaProductSpec::kBetaSecond) - dist.r;
    return EmpiricalDist(std::move(atoms));
}

EmpiricalDist sample(const GaussianMixtureSpec& dist, Eigen::Index m, uint64_t seed) {
    check_count(m);
    Rng rng(seed);
    const Eigen::Index d = dist.dim();
    Matrix atoms(m, d);
    // Component draw by inverse CDF over the weight vector.
    Vector cum(dist.weights.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < dist.weights.size(); ++k)
        cum[k] = (acc += dist.weights[k]);
    std::vector<Eigen::Index> replica_next(dist.components.size(), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double u = rng.uniform() * acc;
        Eigen::Index k = 0;
        while (k + 1 < cum.size() && u > cum[k])
            ++k;
        const Matrix& raw = dist.raw_fallback[k];
        if (raw.rows() > 0) {
            // Small group: cycle through its raw atoms instead of sampling.
            atoms.row(i) = raw.row(replica_next[k] % raw.rows());
            ++replica_next[k];
        } else {
            const GaussianSpec& c = dist.components[k];
            Matrix root = psd_sqrt(c.cov);
            Vector z(d);
            for (Eigen::Index j = 0; j < d; ++j)
                z[j] = rng.normal();
            atoms.row(i) = (c.mean + root * z).transpose();
        }
    }
    return EmpiricalDist(std::move(atoms));
}

EmpiricalDist sample(const LinearGaussianConditional& dist, Eigen::Index m, uint64_t seed,
                     const Vector& context) {
    check_count(m);
    Rng rng(seed);
    return EmpiricalDist(gaussian_draws(dist.at(context), m, rng));
}

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

double discrete_divergence(const Vector& p, const Vector& q, DivergenceKind kind) {
    if (p.size() != q.size())
        throw std::invalid_argument("discrete_divergence: length mismatch");
    check_simplex(p, "discrete_divergence p");
    check_simplex(q, "discrete_divergence q");

    switch (kind) {
    case DivergenceKind::TV:
        return 0.5 * (p - q).cwiseAbs().sum();
    case DivergenceKind::Chi2: {
        double s = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (q[i] <= 0.0) {
                if (p[i] > 0.0)
                    return kInf;
                continue;
            }
            const double d = p[i] - q[i];
            s += d * d / q[i];
        }
        return 0.5 * s;
    }
    case DivergenceKind::KL: {
        double s = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (p[i] <= 0.0)
                continue;
            if (q[i] <= 0.0)
                return kInf;
            s += p[i] * std::log(p[i] / q[i]);
        }
        return std::max(s, 0.0);
    }
    default:
        throw std::invalid_argument("discrete_divergence: kind must be Chi2, KL or TV");
    }
}

double discrete_hellinger_sq(const Vector& p, const Vector& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("discrete_hellinger_sq: length mismatch");
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double d = std::sqrt(std::max(p[i], 0.0)) - std::sqrt(std::max(q[i], 0.0));
        s += d * d;
    }
    return s;
}

double chi2_beta_product(const Vector& eta_true, const Vector& eta_center) {
    if (eta_true.size() != eta_center.size())
        throw std::invalid_argument("chi2_beta_product: length mismatch");
    if (eta_true.size() == 0 || eta_true.minCoeff() <= 0.0 || eta_center.minCoeff() <= 0.0)
        throw std::invalid_argument("chi2_beta_product: eta entries must be positive");
    double prod = 1.0;
    for (Eigen::Index i = 0; i < eta_true.size(); ++i) {
        const double e = eta_true[i], c = eta_center[i];
        const double tail = 2.0 * c - e;
        if (tail <= 0.0)
            return kInf;
        prod *= (c / e) * ((c + 1.0) / (e + 1.0)) * (c / tail) * ((c + 1.0) / (tail + 1.0));
    }
    return std::max(prod - 1.0, 0.0);
}

double w2_gaussian(const GaussianSpec& P, const GaussianSpec& Q) {
    if (P.dim() != Q.dim())
        throw std::invalid_argument("w2_gaussian: dimension mismatch");
    const double mean_sq = (P.mean - Q.mean).squaredNorm();
    const Matrix rq = psd_sqrt(Q.cov);
    const Matrix cross = psd_sqrt(rq * P.cov * rq);
    const double bures = (P.cov + Q.cov).trace() - 2.0 * cross.trace();
    return std::sqrt(std::max(mean_sq + bures, 0.0));
}

double delta_bound(const EpsilonRule& rule, Eigen::Index n, double delta) {
    if (n < 1)
        throw std::invalid_argument("delta_bound: n must be at least 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("delta_bound: delta must lie in (0,1)");
    if (rule.comp_theta < 0.0 || rule.alpha <= 0.0 || rule.e_apx < 0.0)
        throw std::invalid_argument("delta_bound: invalid rule parameters");
    return rule.e_apx + std::pow(rule.comp_theta / double(n), rule.alpha) * std::log(1.0 / delta);
}

} // namespace pdro
