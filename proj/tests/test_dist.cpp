#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdro/dist.hpp"

using namespace pdro;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> data) {
    const auto r = data.size();
    const auto c = data.begin()->size();
    Matrix m(r, c);
    Eigen::Index i = 0;
    for (const auto& row : data) {
        Eigen::Index j = 0;
        for (double v : row)
            m(i, j++) = v;
        ++i;
    }
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        out[i++] = x;
    return out;
}

// Random point on the simplex (normalized exponentials), full support.
Vector random_simplex(Rng& rng, Eigen::Index d) {
    Vector p(d);
    for (Eigen::Index i = 0; i < d; ++i)
        p[i] = rng.exponential(1.0) + 1e-6;
    return p / p.sum();
}

// Integrates f over (0,1) after the substitution x = t^p that removes the
// power singularity at zero; composite Simpson on the transformed axis.
double quadrature01(const std::function<double(double)>& f, double power, int panels) {
    const auto g = [&](double t) {
        const double x = std::pow(t, power);
        return f(x) * power * std::pow(t, power - 1.0);
    };
    const int n = 2 * panels;
    const double h = 1.0 / n;
    double acc = 0.0; // endpoints vanish for our integrands
    for (int i = 1; i < n; ++i)
        acc += (i % 2 ? 4.0 : 2.0) * g(i * h);
    return acc * h / 3.0;
}

double beta_fn(double a, double b) {
    return std::tgamma(a) * std::tgamma(b) / std::tgamma(a + b);
}

} // namespace

TEST_CASE("gaussian spec validation") {
    CHECK_NOTHROW(GaussianSpec(vec({0, 0}), Matrix::Identity(2, 2)));
    Matrix bad = rows({{1.0, 0.5}, {0.2, 1.0}});
    CHECK_THROWS_AS(GaussianSpec(vec({0, 0}), bad), std::invalid_argument);
    Matrix neg = rows({{-1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(GaussianSpec(vec({0, 0}), neg), std::invalid_argument);
    // tiny negative eigenvalues are tolerated (clamped at sampling time)
    Matrix tiny = -5e-11 * Matrix::Identity(2, 2);
    CHECK_NOTHROW(GaussianSpec(vec({0, 0}), tiny));
}

TEST_CASE("fit_gaussian_mean keeps the supplied covariance") {
    EmpiricalDist d(rows({{0, 0}, {2, 2}}));
    const auto g = fit_gaussian_mean(d, Matrix::Identity(2, 2));
    CHECK(g.mean[0] == doctest::Approx(1.0));
    CHECK(g.mean[1] == doctest::Approx(1.0));
    CHECK(g.cov.isApprox(Matrix::Identity(2, 2)));

    EmpiricalDist single(rows({{5}}));
    Matrix c(1, 1);
    c(0, 0) = 4.0;
    const auto g1 = fit_gaussian_mean(single, c);
    CHECK(g1.mean[0] == doctest::Approx(5.0));
    CHECK(g1.cov(0, 0) == doctest::Approx(4.0));

    CHECK_THROWS_AS(fit_gaussian_mean(d, Matrix::Identity(3, 3)), std::invalid_argument);
}

TEST_CASE("fit_gaussian_mean concentrates at rate n^{-1/2}") {
    const GaussianSpec truth(Vector::Zero(10), Matrix::Identity(10, 10));
    const auto draw = sample(truth, 1000, 99);
    const auto fit = fit_gaussian_mean(draw, Matrix::Identity(10, 10));
    CHECK(fit.mean.norm() < 0.5);
}

TEST_CASE("fit_gaussian_full sample moments") {
    EmpiricalDist d1(rows({{-1}, {1}}));
    const auto g1 = fit_gaussian_full(d1);
    CHECK(g1.mean[0] == doctest::Approx(0.0));
    CHECK(g1.cov(0, 0) == doctest::Approx(1.0)); // divisor m

    EmpiricalDist d2(rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
    const auto g2 = fit_gaussian_full(d2);
    CHECK(g2.mean.isApprox(vec({0.5, 0.5})));
    CHECK(g2.cov.isApprox(0.25 * Matrix::Identity(2, 2), 1e-12));

    EmpiricalDist same(rows({{2, 3}, {2, 3}, {2, 3}}));
    const auto g3 = fit_gaussian_full(same);
    CHECK(g3.cov.norm() == doctest::Approx(0.0));

    CHECK_THROWS_AS(fit_gaussian_full(EmpiricalDist(rows({{1}}))), std::invalid_argument);
}

TEST_CASE("fit_beta_moment follows the first-moment equation") {
    // all atoms at zero: E[gamma] = 1/2 -> eta = 2
    Matrix zeros = Matrix::Zero(8, 1);
    const auto f = fit_beta_moment(EmpiricalDist(zeros), 1.0);
    CHECK(f.eta[0] == doctest::Approx(2.0));

    // E[gamma] = 0.6 -> raw eta = 3 stays at the box top
    Matrix a(2, 1);
    a(0, 0) = 0.1;
    a(1, 0) = 0.3; // mean 0.2 -> gamma mean 0.6
    const auto f2 = fit_beta_moment(EmpiricalDist(a), 1.0);
    CHECK(f2.eta[0] == doctest::Approx(3.0));

    // E[gamma] = 0.3 -> raw eta = 6/7, clamped to 1.5
    Matrix b(1, 1);
    b(0, 0) = -0.4;
    const auto f3 = fit_beta_moment(EmpiricalDist(b), 1.0);
    CHECK(f3.eta[0] == doctest::Approx(1.5));

    // degenerate: all mass at the top -> eta forced to 3 with a diagnostic
    Matrix top(3, 1);
    top.setConstant(1.0);
    BetaFitDiagnostics diag;
    const auto f4 = fit_beta_moment(EmpiricalDist(top), 1.0, &diag);
    CHECK(f4.eta[0] == doctest::Approx(3.0));
    CHECK(diag.degenerate_coords == 1);

    // out-of-support atoms are clipped and counted
    Matrix wide(2, 1);
    wide(0, 0) = 1.7;
    wide(1, 0) = -0.2;
    BetaFitDiagnostics diag2;
    fit_beta_moment(EmpiricalDist(wide), 1.0, &diag2);
    CHECK(diag2.clipped_samples == 1);
}

TEST_CASE("fit_gmm_labeled group moments") {
    EmpiricalDist two(rows({{0, 0}, {4, 4}}));
    const auto g = fit_gmm_labeled(two, {0, 1});
    CHECK(g.weights.isApprox(vec({0.5, 0.5})));
    CHECK(g.components[0].cov.norm() == doctest::Approx(0.0));
    CHECK(g.components[1].mean.isApprox(vec({4, 4})));

    // labels all zero reduce to the plain Gaussian fit
    EmpiricalDist d(rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
    const auto g1 = fit_gmm_labeled(d, {0, 0, 0, 0});
    const auto full = fit_gaussian_full(d);
    CHECK(g1.weights.size() == 1);
    CHECK(g1.components[0].mean.isApprox(full.mean));
    CHECK(g1.components[0].cov.isApprox(full.cov));

    const auto g2 = fit_gmm_labeled(d, {0, 0, 1, 1});
    CHECK(g2.weights.isApprox(vec({0.5, 0.5})));
    CHECK(g2.components[0].mean.isApprox(vec({0.5, 0.0})));
    CHECK(g2.components[1].mean.isApprox(vec({0.5, 1.0})));

    // empty middle group is dropped, weights renormalized
    const auto g3 = fit_gmm_labeled(two, {0, 2});
    CHECK(g3.weights.size() == 2);
    CHECK(g3.weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("small gmm groups replicate raw atoms at sampling time") {
    Rng rng(3);
    Matrix atoms(30, 2);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) {
        const bool big = i < 27;
        labels[i] = big ? 0 : 1;
        atoms(i, 0) = big ? rng.normal() : 100.0 + i;
        atoms(i, 1) = big ? rng.normal() : -50.0;
    }
    const auto g = fit_gmm_labeled(EmpiricalDist(atoms), labels, 10);
    const auto draw = sample(g, 2000, 17);
    // every draw attributed to the small component must be one of its raws
    int small_hits = 0;
    for (Eigen::Index i = 0; i < draw.size(); ++i) {
        if (draw.atoms(i, 1) == -50.0) {
            ++small_hits;
            CHECK(draw.atoms(i, 0) >= 100.0);
        }
    }
    CHECK(small_hits > 100); // weight 0.1 of 2000
}

TEST_CASE("fit_contextual_ols") {
    // exact linear data: interpolation
    Rng rng(8);
    Matrix B0 = rows({{1.0, -2.0}, {0.5, 0.25}, {3.0, 1.0}});
    Matrix ys(40, 2), xis(40, 3);
    for (int i = 0; i < 40; ++i) {
        Vector y(2);
        y << rng.normal(), rng.normal();
        ys.row(i) = y.transpose();
        xis.row(i) = (B0 * y).transpose();
    }
    const auto fit = fit_contextual_ols(ys, xis);
    CHECK((fit.B - B0).norm() < 1e-8);
    CHECK(fit.cov.norm() < 1e-12);
    CHECK_FALSE(fit.rank_deficient);

    // scalar least squares by hand
    Matrix y1(2, 1), x1(2, 1);
    y1 << 1, 2;
    x1 << 2, 4;
    const auto f1 = fit_contextual_ols(y1, x1);
    CHECK(f1.B(0, 0) == doctest::Approx(2.0));

    // rank-deficient Gram matrix flagged, solved by pseudo-inverse
    Matrix y2(4, 2), x2(4, 1);
    y2 << 1, 1, 2, 2, 3, 3, 4, 4;
    x2 << 2, 4, 6, 8;
    const auto f2 = fit_contextual_ols(y2, x2);
    CHECK(f2.rank_deficient);
    CHECK(std::isfinite(f2.B.norm()));
}

TEST_CASE("fit_contextual_ols error shrinks like n^{-1/2}") {
    Matrix B0 = rows({{0.4, -0.2, 0.1}, {-0.3, 0.5, 0.2}});
    std::vector<int> ns = {125, 500, 2000};
    std::vector<double> err;
    for (int n : ns) {
        double acc = 0.0;
        const int reps = 20;
        for (int rep = 0; rep < reps; ++rep) {
            Rng rng(hash_seed(1234, uint64_t(n), uint64_t(rep)));
            Matrix ys(n, 3), xis(n, 2);
            for (int i = 0; i < n; ++i) {
                Vector y(3);
                y << rng.normal(), rng.normal(), rng.normal();
                Vector noise(2);
                noise << rng.normal(0.0, 0.5), rng.normal(0.0, 0.5);
                ys.row(i) = y.transpose();
                xis.row(i) = (B0 * y + noise).transpose();
            }
            acc += (fit_contextual_ols(ys, xis).B - B0).norm();
        }
        err.push_back(acc / reps);
    }
    // slope of log err vs log n should sit near -1/2
    const double slope =
        (std::log(err[2]) - std::log(err[0])) / (std::log(2000.0) - std::log(125.0));
    CHECK(slope < -0.3);
    CHECK(slope > -0.7);
}

TEST_CASE("sampling contracts") {
    // zero covariance collapses to the mean
    const GaussianSpec point(vec({1.5, -2.0}), Matrix::Zero(2, 2));
    const auto d = sample(point, 3, 7);
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(d.atoms(i, 0) == doctest::Approx(1.5));
        CHECK(d.atoms(i, 1) == doctest::Approx(-2.0));
    }

    // beta support containment
    const ScaledBetaProductSpec beta(vec({1.7, 2.9, 2.0}), 1.0);
    const auto bd = sample(beta, 500, 21);
    CHECK(bd.atoms.minCoeff() >= -1.0);
    CHECK(bd.atoms.maxCoeff() <= 1.0);

    // determinism: identical inputs give bit-identical atoms
    const auto b1 = sample(beta, 100, 5);
    const auto b2 = sample(beta, 100, 5);
    CHECK(b1.atoms == b2.atoms);

    CHECK_THROWS_AS(sample(beta, 0, 1), std::invalid_argument);

    // conditional law requires the covariate
    const LinearGaussianConditional cond(rows({{1.0}, {2.0}}), Matrix::Identity(2, 2) * 0.0);
    const auto cd = sample(cond, 2, 3, vec({2.0}));
    CHECK(cd.atoms(0, 0) == doctest::Approx(2.0));
    CHECK(cd.atoms(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("beta sample mean matches the analytic identity") {
    const ScaledBetaProductSpec beta(vec({1.6, 2.1, 2.8}), 1.0);
    const auto d = sample(beta, 100000, 31);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const double expect = beta.coordinate_mean(j);
        const double got = d.atoms.col(j).mean();
        CHECK(std::abs(got - expect) < 0.02);
    }
}

TEST_CASE("discrete divergences") {
    const Vector p = vec({1.0, 0.0});
    const Vector q = vec({0.5, 0.5});
    CHECK(discrete_divergence(p, p, DivergenceKind::TV) == doctest::Approx(0.0));
    CHECK(discrete_divergence(q, q, DivergenceKind::Chi2) == doctest::Approx(0.0));
    CHECK(discrete_divergence(q, q, DivergenceKind::KL) == doctest::Approx(0.0));

    CHECK(discrete_divergence(p, q, DivergenceKind::TV) == doctest::Approx(0.5));
    // chi2 with f(t) = (t-1)^2/2: 0.5 * [(0.5)^2/0.5 + (0.5)^2/0.5] = 0.5
    CHECK(discrete_divergence(p, q, DivergenceKind::Chi2) == doctest::Approx(0.5));
    CHECK(discrete_divergence(p, q, DivergenceKind::KL) == doctest::Approx(std::log(2.0)));

    // support violation
    CHECK(std::isinf(discrete_divergence(q, p, DivergenceKind::Chi2)));
    CHECK(std::isinf(discrete_divergence(q, p, DivergenceKind::KL)));

    CHECK_THROWS_AS(discrete_divergence(p, vec({0.5, 0.4}), DivergenceKind::TV),
                    std::invalid_argument);
    CHECK_THROWS_AS(discrete_divergence(p, q, DivergenceKind::W1), std::invalid_argument);
}

TEST_CASE("divergence inequality chain on random discrete pairs") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index d = 2 + Eigen::Index(rng.next_u64() % 7);
        const Vector p = random_simplex(rng, d);
        const Vector q = random_simplex(rng, d);
        const double tv = discrete_divergence(p, q, DivergenceKind::TV);
        const double h2 = discrete_hellinger_sq(p, q);
        const double kl = discrete_divergence(p, q, DivergenceKind::KL);
        const double chi_pq = discrete_divergence(p, q, DivergenceKind::Chi2);
        const double chi_qp = discrete_divergence(q, p, DivergenceKind::Chi2);
        CHECK(tv <= std::sqrt(h2) + 1e-12);              // Le Cam
        CHECK(h2 <= kl + 1e-12);                          // Hellinger vs KL
        CHECK(kl <= 2.0 * chi_pq + 1e-12);                // KL vs chi2 (our half convention)
        CHECK(tv <= std::sqrt(kl / 2.0) + 1e-12);         // Pinsker
        CHECK(tv <= std::sqrt(chi_pq / 2.0) + 1e-12);     // Cauchy-Schwarz
        CHECK(tv <= std::sqrt(chi_qp / 2.0) + 1e-12);     // reversed arguments
    }
}

TEST_CASE("chi2 pseudo-IPM bound on random pairs") {
    Rng rng(555);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index d = 2 + Eigen::Index(rng.next_u64() % 7);
        const Vector p = random_simplex(rng, d);
        const Vector q = random_simplex(rng, d);
        Vector g(d);
        for (Eigen::Index i = 0; i < d; ++i)
            g[i] = rng.normal(0.0, 3.0);
        const double diff = std::abs(p.dot(g) - q.dot(g));
        const double mean_p = p.dot(g), mean_q = q.dot(g);
        double var_p = 0.0, var_q = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            var_p += p[i] * (g[i] - mean_p) * (g[i] - mean_p);
            var_q += q[i] * (g[i] - mean_q) * (g[i] - mean_q);
        }
        const double chi_pq = discrete_divergence(p, q, DivergenceKind::Chi2);
        const double chi_qp = discrete_divergence(q, p, DivergenceKind::Chi2);
        const double bound =
            std::sqrt(2.0 * std::min(chi_pq * var_q, chi_qp * var_p));
        CHECK(diff <= bound + 1e-12);
    }
}

TEST_CASE("chi2_beta_product closed form") {
    CHECK(chi2_beta_product(vec({2.0, 2.5}), vec({2.0, 2.5})) == doctest::Approx(0.0));
    CHECK(std::isinf(chi2_beta_product(vec({3.0}), vec({1.4}))));
    CHECK_THROWS_AS(chi2_beta_product(vec({-1.0}), vec({2.0})), std::invalid_argument);
    CHECK_THROWS_AS(chi2_beta_product(vec({2.0}), vec({2.0, 2.0})), std::invalid_argument);
}

TEST_CASE("chi2_beta_product agrees with the quadrature oracle") {
    // oracle: second moment of the density ratio center/truth under the truth
    const auto oracle = [](double eta, double center) {
        const double scale =
            beta_fn(eta, 2.0) / (beta_fn(center, 2.0) * beta_fn(center, 2.0));
        const auto f = [&](double x) {
            return scale * std::pow(x, 2.0 * center - eta - 1.0) * (1.0 - x);
        };
        return quadrature01(f, 24.0, 20000) - 1.0;
    };
    CHECK(oracle(2.0, 2.2) == doctest::Approx(chi2_beta_product(vec({2.0}), vec({2.2}))).epsilon(1e-3));

    Rng rng(808);
    for (int t = 0; t < 50; ++t) {
        const double eta = rng.uniform(1.5, 3.0);
        double center = rng.uniform(1.5, 3.0);
        if (2.0 * center - eta <= 0.05)
            center = (eta + 0.05) / 2.0 + 0.05;
        const double closed = chi2_beta_product(vec({eta}), vec({center}));
        const double quad = oracle(eta, center);
        CHECK(std::abs(closed - quad) < 1e-3);
    }
}

TEST_CASE("w2 between gaussians") {
    const GaussianSpec a(vec({0.0}), Matrix::Identity(1, 1));
    const GaussianSpec b(vec({3.0}), Matrix::Identity(1, 1));
    CHECK(w2_gaussian(a, a) == doctest::Approx(0.0));
    CHECK(w2_gaussian(a, b) == doctest::Approx(3.0));

    Matrix c4(1, 1);
    c4 << 4.0;
    const GaussianSpec wide(vec({0.0}), c4);
    CHECK(w2_gaussian(a, wide) == doctest::Approx(1.0)); // |sigma1 - sigma2|

    const GaussianSpec d2(vec({0.0, 0.0}), Matrix::Identity(2, 2));
    CHECK_THROWS_AS(w2_gaussian(a, d2), std::invalid_argument);
}

TEST_CASE("delta_bound") {
    EpsilonRule rule;
    rule.comp_theta = 4.0;
    rule.alpha = 0.5;
    rule.e_apx = 0.0;
    CHECK(delta_bound(rule, 100, std::exp(-1.0)) == doctest::Approx(0.2));
    CHECK(delta_bound(rule, 400, std::exp(-1.0)) == doctest::Approx(0.1)); // halves at 4n

    EpsilonRule flat;
    flat.comp_theta = 0.0;
    flat.e_apx = 0.3;
    CHECK(delta_bound(flat, 5, 0.5) == doctest::Approx(0.3));
    CHECK(delta_bound(flat, 5000, 0.01) == doctest::Approx(0.3));

    CHECK_THROWS_AS(delta_bound(rule, 100, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(delta_bound(rule, 100, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(delta_bound(rule, 0, 0.5), std::invalid_argument);
}
