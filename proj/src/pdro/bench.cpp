#include "pdro/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace pdro {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Instance generators
// ---------------------------------------------------------------------------

ScaledBetaProductSpec gen_beta_market(Eigen::Index D, uint64_t seed, double r) {
    if (D < 1)
        throw std::invalid_argument("gen_beta_market: D must be >= 1");
    Rng rng(seed);
    Vector eta(D);
    for (Eigen::Index i = 0; i < D; ++i)
        eta[i] = rng.uniform(ScaledBetaProductSpec::kEtaLo, ScaledBetaProductSpec::kEtaHi);
    return ScaledBetaProductSpec(eta, r);
}

ScaledBetaProductSpec apply_eta_shift(const ScaledBetaProductSpec& spec, const ShiftSpec& shift) {
    if (shift.C < -1.0 || shift.C > 1.0)
        throw std::invalid_argument("apply_eta_shift: C must lie in [-1, 1]");
    Vector eta = spec.eta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double headroom = std::min(ScaledBetaProductSpec::kEtaHi - eta[i],
                                         eta[i] - ScaledBetaProductSpec::kEtaLo);
        eta[i] = std::clamp(eta[i] + shift.C * headroom, ScaledBetaProductSpec::kEtaLo,
                            ScaledBetaProductSpec::kEtaHi);
    }
    return ScaledBetaProductSpec(eta, spec.r);
}

double QuadraticInstance::analytic_objective(const Vector& x) const {
    return 0.5 * (x - cost.v).squaredNorm();
}

QuadraticInstance gen_quadratic_instance(Eigen::Index D, double lambda, double ball_radius,
                                         uint64_t seed) {
    if (D < 1 || lambda <= 0.0 || ball_radius <= 0.0)
        throw std::invalid_argument("gen_quadratic_instance: invalid parameters");
    (void)seed; // the instance itself is deterministic; randomness sits in the sampler
    Vector v = Vector::Constant(D, ball_radius / (2.0 * std::sqrt(double(D))));
    QuadraticLinearCost cost(std::move(v));
    L2BallSet set(ball_radius, D);
    Sampler sampler = [D, lambda](Eigen::Index m, uint64_t s) {
        Rng rng(s);
        Matrix atoms(m, D);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < D; ++j)
                atoms(i, j) = rng.normal() + rng.exponential(lambda) - 1.0 / lambda;
        return EmpiricalDist(std::move(atoms));
    };
    return QuadraticInstance{std::move(cost), set, std::move(sampler)};
}

Vector ContextualInstance::sample_covariate(Rng& rng) const {
    static const double base_sd[3] = {0.2, 0.15, 0.1};
    Vector y(spec.d_y);
    for (Eigen::Index j = 0; j < spec.d_y; ++j)
        y[j] = rng.normal(0.0, base_sd[j % 3]);
    return y;
}

Vector ContextualInstance::conditional_mean(const Vector& y) const {
    Vector mu = B * y;
    if (spec.mis)
        mu.array() += 2.0 * std::sin(y.norm());
    return mu;
}

std::pair<Matrix, Matrix> ContextualInstance::sample_pairs(Eigen::Index n, uint64_t seed) const {
    Rng rng(seed);
    Matrix ys(n, spec.d_y), xis(n, spec.d_xi);
    const Matrix root = psd_sqrt(noise_cov);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector y = sample_covariate(rng);
        Vector z(spec.d_xi);
        for (Eigen::Index j = 0; j < spec.d_xi; ++j)
            z[j] = rng.normal();
        ys.row(i) = y.transpose();
        xis.row(i) = (conditional_mean(y) + root * z).transpose();
    }
    return {std::move(ys), std::move(xis)};
}

GaussianSpec ContextualInstance::conditional(const Vector& y) const {
    return GaussianSpec(conditional_mean(y), noise_cov);
}

ContextualInstance gen_contextual_instance(const ContextualSpec& spec, uint64_t seed) {
    if (spec.d_xi < 1 || spec.d_y < 1 || spec.noise_sigma < 0.0)
        throw std::invalid_argument("gen_contextual_instance: invalid parameters");
    Rng rng(seed);
    const double box = spec.high_snr ? 0.5 : 0.1;
    Matrix B(spec.d_xi, spec.d_y);
    for (Eigen::Index i = 0; i < spec.d_xi; ++i)
        for (Eigen::Index j = 0; j < spec.d_y; ++j)
            B(i, j) = rng.uniform(-box, box);
    Matrix noise = spec.noise_sigma * spec.noise_sigma *
                   Matrix::Identity(spec.d_xi, spec.d_xi);
    return ContextualInstance{spec, std::move(B), std::move(noise)};
}

// ---------------------------------------------------------------------------
// Oracle and evaluation
// ---------------------------------------------------------------------------

OracleSolution oracle_solution(const CostFunction& cost, const FeasibleSet& set,
                               const Sampler& sampler, Eigen::Index n_oracle, int restarts,
                               uint64_t seed, const SolverConfig& solver,
                               const std::function<double(const Vector&)>* analytic) {
    if (restarts < 1)
        throw std::invalid_argument("oracle_solution: restarts must be >= 1");
    const EmpiricalDist atoms = sampler(n_oracle, hash_seed(seed, "oracle-draw"));
    OracleSolution best;
    double best_score = std::numeric_limits<double>::infinity();
    for (int t = 0; t < restarts; ++t) {
        SolverConfig cfg = solver;
        // The oracle anchors every gen-error in the batch; give it a deeper
        // run than the per-trial solves.
        cfg.max_iter = std::max(cfg.max_iter, 2000);
        cfg.tol = std::min(cfg.tol, 1e-9);
        cfg.seed = hash_seed(seed, "oracle-start", uint64_t(t));
        Solution sol = solve_outer(cost, set, ObjectiveKind::erm(), atoms, cfg);
        const double score = analytic ? (*analytic)(sol.x) : sol.objective;
        if (score < best_score) {
            best_score = score;
            best.x_star = sol.x;
            best.z_star = score;
        }
    }
    return best;
}

std::optional<double> gaussian_downside_objective(const DownsideRiskCost& cost,
                                                  const GaussianSpec& law, const Vector& x) {
    const double m = law.mean.dot(x);
    const double var = std::max(x.dot(law.cov * x), 0.0);
    const double sd = std::sqrt(var);
    const double a = cost.mu - m; // (mu - xi'x) ~ N(a, sd^2)
    const auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
    const auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    if (sd == 0.0) {
        const double t = std::max(a, 0.0);
        return std::pow(t, cost.gamma);
    }
    const double z = a / sd;
    if (cost.gamma == 1.0)
        return a * Phi(z) + sd * phi(z);
    if (cost.gamma == 2.0)
        return (a * a + var) * Phi(z) + a * sd * phi(z);
    return std::nullopt;
}

double estimate_gen_error(const Vector& x_hat, const CostFunction& cost, const Sampler& sampler,
                          Eigen::Index n_eval, uint64_t eval_seed, const OracleSolution& oracle) {
    const EmpiricalDist atoms = sampler(n_eval, eval_seed);
    return erm_objective(x_hat, cost, atoms) - erm_objective(oracle.x_star, cost, atoms);
}

// ---------------------------------------------------------------------------
// Method specs
// ---------------------------------------------------------------------------

const char* to_string(Scenario s) {
    switch (s) {
    case Scenario::BetaPortfolio: return "beta-portfolio";
    case Scenario::Quadratic: return "quadratic";
    case Scenario::Shifted: return "shifted";
    case Scenario::Contextual: return "contextual";
    }
    return "?";
}

const char* to_string(Estimator e) {
    switch (e) {
    case Estimator::Empirical: return "emp";
    case Estimator::BetaMoment: return "beta";
    case Estimator::GaussianFull: return "gauss";
    case Estimator::GaussianMean: return "gauss-mean";
    case Estimator::ContextOLS: return "ols";
    }
    return "?";
}

std::string MethodSpec::name() const {
    std::string s = to_string(estimator);
    s += '-';
    if (!dro_kind) {
        s += "erm";
        return s;
    }
    s += to_string(*dro_kind);
    switch (eps_mode) {
    case EpsMode::CrossValidated: s += "@cv"; break;
    case EpsMode::Theory: s += "@theory"; break;
    case EpsMode::Fixed: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "@%.6g", fixed_eps);
        s += buf;
        break;
    }
    }
    return s;
}

MethodSpec MethodSpec::parse(const std::string& token) {
    MethodSpec m;
    std::string rest;
    const auto try_prefix = [&](const char* p, Estimator e) {
        const std::string pref = std::string(p) + "-";
        if (token.rfind(pref, 0) == 0) {
            m.estimator = e;
            rest = token.substr(pref.size());
            return true;
        }
        return false;
    };
    if (!try_prefix("gauss-mean", Estimator::GaussianMean) &&
        !try_prefix("gauss", Estimator::GaussianFull) && !try_prefix("emp", Estimator::Empirical) &&
        !try_prefix("beta", Estimator::BetaMoment) && !try_prefix("ols", Estimator::ContextOLS))
        throw std::invalid_argument("unknown estimator in method token '" + token + "'");

    std::string obj = rest, tag;
    if (const auto at = rest.find('@'); at != std::string::npos) {
        obj = rest.substr(0, at);
        tag = rest.substr(at + 1);
    }
    if (obj == "erm") {
        if (!tag.empty())
            throw std::invalid_argument("ERM method '" + token + "' takes no radius tag");
        return m;
    }
    if (obj == "chi2")
        m.dro_kind = DivergenceKind::Chi2;
    else if (obj == "kl")
        m.dro_kind = DivergenceKind::KL;
    else if (obj == "w1")
        m.dro_kind = DivergenceKind::W1;
    else
        throw std::invalid_argument("unknown objective in method token '" + token + "'");

    if (tag.empty() || tag == "cv") {
        m.eps_mode = EpsMode::CrossValidated;
    } else if (tag == "theory") {
        m.eps_mode = EpsMode::Theory;
    } else {
        char* end = nullptr;
        const double eps = std::strtod(tag.c_str(), &end);
        if (end == tag.c_str() || *end != '\0' || !(eps >= 0.0))
            throw std::invalid_argument("bad radius tag in method token '" + token + "'");
        m.eps_mode = EpsMode::Fixed;
        m.fixed_eps = eps;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Experiment spec
// ---------------------------------------------------------------------------

void ExperimentSpec::validate() const {
    std::vector<std::string> bad;
    if (methods.empty())
        bad.push_back("methods must be nonempty");
    if (n_grid.empty())
        bad.push_back("n_grid must be nonempty");
    for (int n : n_grid)
        if (n < 2)
            bad.push_back("n_grid entries must be >= 2");
    if (seeds < 1)
        bad.push_back("seeds must be >= 1");
    if (mc_ratio < 1.0)
        bad.push_back("monte_carlo_ratio must be >= 1");
    if (eps_grid.empty())
        bad.push_back("eps_grid must be nonempty");
    for (double e : eps_grid)
        if (!(e >= 0.0))
            bad.push_back("eps_grid entries must be >= 0");
    if (!(cv_split > 0.0 && cv_split < 1.0))
        bad.push_back("cv_split must lie in (0,1)");
    if (gamma < 1.0)
        bad.push_back("gamma must be >= 1");
    if (tau < 0.0)
        bad.push_back("tau must be >= 0");
    if (r <= 0.0)
        bad.push_back("r must be positive");
    if (dim < 1)
        bad.push_back("dim must be >= 1");
    if (ball_radius <= 0.0)
        bad.push_back("ball_radius must be positive");
    if (exp_rate <= 0.0)
        bad.push_back("exp_rate must be positive");
    if (test_noise < 0.0)
        bad.push_back("test_noise must be >= 0");
    if (dy < 1)
        bad.push_back("dy must be >= 1");
    if (noise_sigma <= 0.0)
        bad.push_back("noise_sigma must be positive");
    if (n_eval < 1)
        bad.push_back("n_eval must be >= 1");
    if (n_oracle < 10)
        bad.push_back("n_oracle must be >= 10");
    if (oracle_restarts < 1)
        bad.push_back("oracle_restarts must be >= 1");
    if (solver.max_iter < 1)
        bad.push_back("max_iter must be >= 1");
    if (!(solver.tol > 0.0))
        bad.push_back("tol must be positive");
    if (!(rule.delta > 0.0 && rule.delta < 1.0))
        bad.push_back("rule_delta must lie in (0,1)");
    if (rule.c_mult < 1.0)
        bad.push_back("rule_c must be >= 1");
    if (workers < 0)
        bad.push_back("workers must be >= 0");

    const bool portfolio_like =
        scenario == Scenario::BetaPortfolio || scenario == Scenario::Shifted;
    for (const auto& m : methods) {
        if (m.estimator == Estimator::ContextOLS && scenario != Scenario::Contextual)
            bad.push_back("method " + m.name() + " needs the contextual scenario");
        if (m.estimator == Estimator::BetaMoment && !portfolio_like)
            bad.push_back("method " + m.name() + " needs a portfolio scenario");
        if (m.estimator == Estimator::GaussianMean && !portfolio_like)
            bad.push_back("method " + m.name() + " needs a portfolio scenario (known covariance)");
        if (m.dro_kind && *m.dro_kind == DivergenceKind::W1 &&
            scenario != Scenario::Quadratic && gamma != 1.0)
            bad.push_back("method " + m.name() + " needs gamma = 1 (W1 Lipschitz path)");
    }
    if (!bad.empty()) {
        std::string msg = "invalid experiment configuration: ";
        for (size_t i = 0; i < bad.size(); ++i) {
            if (i)
                msg += "; ";
            msg += bad[i];
        }
        throw std::invalid_argument(msg);
    }
}

double theoretical_epsilon(const EpsilonRule& rule, Eigen::Index n) {
    return rule.c_mult * delta_bound(rule, n, rule.delta);
}

// ---------------------------------------------------------------------------
// Trial machinery
// ---------------------------------------------------------------------------

namespace {

// Validation blocks pooled by select_epsilon (the contextual variant keeps a
// single block; each of its held-out pairs already needs its own solve).
constexpr int kCvFolds = 5;

struct CenterContext {
    const ExperimentSpec& spec;
    std::optional<Matrix> known_cov;       // GaussianMean
    std::optional<Vector> context_y;       // ContextOLS decision covariate
    const Matrix* pair_covariates = nullptr; // ContextOLS training pairs
};

// Fitted center discretized to the Monte Carlo support the solvers run on.
EmpiricalDist make_center(const MethodSpec& method, const EmpiricalDist& train,
                          const CenterContext& ctx, uint64_t mc_seed) {
    const auto m = static_cast<Eigen::Index>(std::llround(ctx.spec.mc_ratio * double(train.size())));
    switch (method.estimator) {
    case Estimator::Empirical:
        return train; // nonparametric methods reuse the raw atoms
    case Estimator::BetaMoment: {
        const auto fit = fit_beta_moment(train, ctx.spec.r);
        return sample(fit, m, mc_seed);
    }
    case Estimator::GaussianFull: {
        const auto fit = fit_gaussian_full(train);
        return sample(fit, m, mc_seed);
    }
    case Estimator::GaussianMean: {
        if (!ctx.known_cov)
            throw std::invalid_argument("gauss-mean estimator needs a known covariance");
        const auto fit = fit_gaussian_mean(train, *ctx.known_cov);
        return sample(fit, m, mc_seed);
    }
    case Estimator::ContextOLS: {
        if (!ctx.pair_covariates || !ctx.context_y)
            throw std::invalid_argument("ols estimator needs covariate pairs and a decision covariate");
        const auto fit = fit_contextual_ols(*ctx.pair_covariates, train.atoms);
        return sample(fit, m, mc_seed, *ctx.context_y);
    }
    }
    throw std::logic_error("make_center: unhandled estimator");
}

Solution solve_method(const MethodSpec& method, double eps, const CostFunction& cost,
                      const FeasibleSet& set, const EmpiricalDist& center,
                      const SolverConfig& solver, uint64_t solve_seed) {
    SolverConfig cfg = solver;
    cfg.seed = solve_seed;
    const ObjectiveKind obj = method.dro_kind
                                  ? ObjectiveKind::dro(AmbiguitySpec(*method.dro_kind, eps))
                                  : ObjectiveKind::erm();
    return solve_outer(cost, set, obj, center, cfg);
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, uint64_t seed) {
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.next_u64() % uint64_t(i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

EmpiricalDist take_rows(const EmpiricalDist& d, const std::vector<Eigen::Index>& rows,
                        size_t begin, size_t end) {
    Matrix atoms(end - begin, d.dim());
    for (size_t t = begin; t < end; ++t)
        atoms.row(t - begin) = d.atoms.row(rows[t]);
    return EmpiricalDist(std::move(atoms));
}

} // namespace

double select_epsilon(const std::vector<double>& grid, const MethodSpec& method,
                      const EmpiricalDist& train, double split_fraction, uint64_t seed,
                      const ExperimentSpec& spec) {
    if (grid.empty())
        throw std::invalid_argument("select_epsilon: empty grid");
    if (method.estimator == Estimator::ContextOLS)
        throw std::invalid_argument("select_epsilon: contextual methods tune inside run_trials");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    if (train.size() < 10)
        return sorted.front(); // too little data to hold out; smallest radius

    const auto idx = shuffled_indices(train.size(), hash_seed(seed, "cv-split"));
    const auto n = static_cast<size_t>(train.size());
    const auto n_fit = static_cast<size_t>(std::clamp<Eigen::Index>(
        Eigen::Index(std::llround(split_fraction * double(train.size()))), 1, train.size() - 1));

    const CostFunction cost = spec.scenario == Scenario::Quadratic
                                  ? CostFunction(QuadraticLinearCost(Vector::Constant(
                                        spec.dim, spec.ball_radius / (2.0 * std::sqrt(double(spec.dim))))))
                                  : CostFunction(DownsideRiskCost(spec.mu, spec.gamma));
    const FeasibleSet set = spec.scenario == Scenario::Quadratic
                                ? FeasibleSet(L2BallSet(spec.ball_radius, spec.dim))
                                : FeasibleSet(SimplexFloorSet(spec.tau, spec.dim));

    // A single holdout block is too noisy to rank the radii at bench sample
    // sizes, so the same 80/20 split is rotated into disjoint validation
    // blocks and the held-out costs are pooled.
    std::vector<double> total(sorted.size(), 0.0);
    for (int fold = 0; fold < kCvFolds; ++fold) {
        std::vector<Eigen::Index> rotated(idx.size());
        const size_t shift = fold * (n - n_fit);
        for (size_t t = 0; t < n; ++t)
            rotated[t] = idx[(t + shift) % n];
        const EmpiricalDist fit_part = take_rows(train, rotated, 0, n_fit);
        const EmpiricalDist val_part = take_rows(train, rotated, n_fit, n);

        CenterContext ctx{spec, std::nullopt, std::nullopt, nullptr};
        if (method.estimator == Estimator::GaussianMean) {
            // Hold-out fits reuse the sample covariance as the fixed matrix.
            ctx.known_cov = fit_gaussian_full(fit_part).cov;
        }
        const EmpiricalDist center =
            make_center(method, fit_part, ctx, hash_seed(seed, "cv-mc", uint64_t(fold)));
        for (size_t e = 0; e < sorted.size(); ++e) {
            const Solution sol = solve_method(method, sorted[e], cost, set, center, spec.solver,
                                              hash_seed(seed, "cv-solve", uint64_t(fold)));
            total[e] += erm_objective(sol.x, cost, val_part);
        }
    }
    size_t best = 0;
    for (size_t e = 1; e < sorted.size(); ++e)
        if (total[e] < total[best]) // ties keep the earlier, i.e. smaller, radius
            best = e;
    return sorted[best];
}

namespace {

// Contextual hold-out: validation pairs are priced at their own covariate.
double select_epsilon_contextual(const std::vector<double>& grid, const MethodSpec& method,
                                 const Matrix& ys, const Matrix& xis, double split_fraction,
                                 uint64_t seed, const ExperimentSpec& spec,
                                 const CostFunction& cost, const FeasibleSet& set) {
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    const Eigen::Index n = ys.rows();
    if (n < 10)
        return sorted.front();
    const auto idx = shuffled_indices(n, hash_seed(seed, "cv-split"));
    const auto n_fit = static_cast<size_t>(std::clamp<Eigen::Index>(
        Eigen::Index(std::llround(split_fraction * double(n))), 1, n - 1));

    Matrix fit_y(n_fit, ys.cols()), fit_xi(n_fit, xis.cols());
    for (size_t t = 0; t < n_fit; ++t) {
        fit_y.row(t) = ys.row(idx[t]);
        fit_xi.row(t) = xis.row(idx[t]);
    }
    const auto fit = fit_contextual_ols(fit_y, fit_xi);
    const auto m = static_cast<Eigen::Index>(std::llround(spec.mc_ratio * double(n_fit)));

    double best_eps = sorted.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (const double eps : sorted) {
        double acc = 0.0;
        for (size_t t = n_fit; t < size_t(n); ++t) {
            const Vector y_v = ys.row(idx[t]).transpose();
            const EmpiricalDist center =
                sample(fit, m, hash_seed(seed, "cv-mc", uint64_t(t)), y_v);
            const Solution sol = solve_method(method, eps, cost, set, center, spec.solver,
                                              hash_seed(seed, "cv-solve", uint64_t(t)));
            acc += eval_cost_at(cost, sol.x, xis.row(idx[t]).transpose());
        }
        const double val_cost = acc / double(n - Eigen::Index(n_fit));
        if (val_cost < best_cost) {
            best_cost = val_cost;
            best_eps = eps;
        }
    }
    return best_eps;
}

struct ScenarioRuntime {
    CostFunction cost;
    FeasibleSet set;
    std::optional<QuadraticInstance> quad;
    std::optional<ContextualInstance> contextual;
    std::optional<OracleSolution> shared_oracle; // quadratic: analytic optimum
};

Sampler market_sampler(const ScaledBetaProductSpec& market) {
    return [market](Eigen::Index m, uint64_t s) { return sample(market, m, s); };
}

Sampler noisy_market_sampler(const ScaledBetaProductSpec& market, double half_width) {
    return [market, half_width](Eigen::Index m, uint64_t s) {
        EmpiricalDist d = sample(market, m, s);
        if (half_width > 0.0) {
            Rng rng(hash_seed(s, "test-noise"));
            for (Eigen::Index i = 0; i < d.atoms.rows(); ++i)
                for (Eigen::Index j = 0; j < d.atoms.cols(); ++j)
                    d.atoms(i, j) += rng.uniform(-half_width, half_width);
        }
        return d;
    };
}

ScenarioRuntime build_runtime(const ExperimentSpec& spec) {
    ScenarioRuntime rt{CostFunction(DownsideRiskCost(spec.mu, spec.gamma)),
                       FeasibleSet(SimplexFloorSet(spec.tau, spec.dim))};
    const uint64_t instance_seed = hash_seed(spec.master_seed, "instance");
    switch (spec.scenario) {
    case Scenario::BetaPortfolio:
    case Scenario::Shifted:
        // One market per seed index; drawn inside the trial contexts.
        break;
    case Scenario::Quadratic: {
        rt.quad = gen_quadratic_instance(spec.dim, spec.exp_rate, spec.ball_radius, instance_seed);
        rt.cost = rt.quad->cost;
        rt.set = rt.quad->set;
        rt.shared_oracle = OracleSolution{rt.quad->optimum(), 0.0};
        break;
    }
    case Scenario::Contextual: {
        ContextualSpec cs;
        cs.d_xi = spec.dim;
        cs.d_y = spec.dy;
        cs.high_snr = spec.high_snr;
        cs.mis = spec.mis;
        cs.noise_sigma = spec.noise_sigma;
        rt.contextual = gen_contextual_instance(cs, instance_seed);
        break;
    }
    }
    return rt;
}

// Markets (and their shift parameters) are drawn per seed index and shared
// across the n grid, so sample-size comparisons are paired.
ScaledBetaProductSpec seed_market(const ExperimentSpec& spec, int k) {
    return gen_beta_market(spec.dim, hash_seed(spec.master_seed, "market", uint64_t(k)), spec.r);
}

Matrix market_diag_cov(const ScaledBetaProductSpec& market) {
    Matrix cov = Matrix::Zero(market.dim(), market.dim());
    for (Eigen::Index i = 0; i < market.dim(); ++i)
        cov(i, i) = market.coordinate_var(i);
    return cov;
}

int resolve_workers(int requested) {
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("PDRO_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0)
            return w;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

} // namespace

std::vector<TrialResult> run_trials(const ExperimentSpec& spec) {
    spec.validate();
    const ScenarioRuntime rt = build_runtime(spec);
    const std::string scenario_name = to_string(spec.scenario);

    struct TrialCtx {
        int n;
        int seed_index;
    };
    std::vector<TrialCtx> contexts;
    for (int n : spec.n_grid)
        for (int k = 0; k < spec.seeds; ++k)
            contexts.push_back({n, k});

    const size_t n_methods = spec.methods.size();
    std::vector<TrialResult> results(contexts.size() * n_methods);

    // Per-seed oracles are shared across the n grid.
    std::map<int, OracleSolution> oracle_cache;
    std::mutex oracle_mutex;
    const auto seed_oracle = [&](int k, const Sampler& sampler) {
        {
            std::lock_guard<std::mutex> lock(oracle_mutex);
            if (const auto it = oracle_cache.find(k); it != oracle_cache.end())
                return it->second;
        }
        OracleSolution oracle = oracle_solution(rt.cost, rt.set, sampler, spec.n_oracle,
                                                spec.oracle_restarts,
                                                hash_seed(spec.master_seed, "oracle", uint64_t(k)),
                                                spec.solver);
        std::lock_guard<std::mutex> lock(oracle_mutex);
        return oracle_cache.emplace(k, std::move(oracle)).first->second;
    };

    const auto run_context = [&](const TrialCtx& tc, size_t ctx_index) {
        const int n = tc.n;
        const int k = tc.seed_index;
        const uint64_t train_seed = hash_seed(spec.master_seed, "train", uint64_t(n), uint64_t(k));
        const uint64_t eval_seed = hash_seed(spec.master_seed, "eval", uint64_t(n), uint64_t(k));
        const uint64_t solve_seed = hash_seed(spec.master_seed, "solve", uint64_t(n), uint64_t(k));

        // Scenario-specific training data, evaluator and oracle.
        std::optional<EmpiricalDist> train;
        Matrix pair_y, pair_xi;
        Vector y0;
        Sampler eval_sampler;
        std::function<double(const Vector&)> analytic;
        OracleSolution oracle;
        std::optional<Matrix> known_cov;

        switch (spec.scenario) {
        case Scenario::BetaPortfolio: {
            const auto market = seed_market(spec, k);
            known_cov = market_diag_cov(market);
            train = sample(market, n, train_seed);
            eval_sampler = market_sampler(market);
            oracle = seed_oracle(k, eval_sampler);
            break;
        }
        case Scenario::Shifted: {
            const auto market = seed_market(spec, k);
            known_cov = market_diag_cov(market);
            train = sample(market, n, train_seed);
            Rng shift_rng(hash_seed(spec.master_seed, "shift", uint64_t(k)));
            const ShiftSpec shift{shift_rng.uniform(-1.0, 1.0), spec.test_noise};
            const auto test_market = apply_eta_shift(market, shift);
            eval_sampler = noisy_market_sampler(test_market, spec.test_noise);
            oracle = seed_oracle(k, eval_sampler);
            break;
        }
        case Scenario::Quadratic: {
            train = rt.quad->sampler(n, train_seed);
            analytic = [&rt](const Vector& x) { return rt.quad->analytic_objective(x); };
            oracle = *rt.shared_oracle;
            break;
        }
        case Scenario::Contextual: {
            std::tie(pair_y, pair_xi) = rt.contextual->sample_pairs(n, train_seed);
            train = EmpiricalDist(pair_xi);
            Rng y_rng(hash_seed(spec.master_seed, "context", uint64_t(n), uint64_t(k)));
            y0 = rt.contextual->sample_covariate(y_rng);
            const GaussianSpec truth = rt.contextual->conditional(y0);
            const auto* down = std::get_if<DownsideRiskCost>(&rt.cost);
            if (down && gaussian_downside_objective(*down, truth, Vector::Zero(spec.dim))) {
                analytic = [cost = *down, truth](const Vector& x) {
                    return *gaussian_downside_objective(cost, truth, x);
                };
            } else {
                eval_sampler = [truth](Eigen::Index m, uint64_t s) { return sample(truth, m, s); };
            }
            Sampler truth_sampler = [truth](Eigen::Index m, uint64_t s) {
                return sample(truth, m, s);
            };
            const auto* an = analytic ? &analytic : nullptr;
            oracle = oracle_solution(rt.cost, rt.set, truth_sampler, spec.n_oracle,
                                     spec.oracle_restarts,
                                     hash_seed(spec.master_seed, "oracle", uint64_t(n), uint64_t(k)),
                                     spec.solver, an);
            break;
        }
        }

        std::optional<EmpiricalDist> eval_atoms;
        if (!analytic) {
            eval_atoms = eval_sampler(spec.n_eval, eval_seed);
            oracle.z_star = erm_objective(oracle.x_star, rt.cost, *eval_atoms);
        }

        for (size_t mi = 0; mi < n_methods; ++mi) {
            const MethodSpec& method = spec.methods[mi];
            TrialResult rec;
            rec.scenario = scenario_name;
            rec.method = method.name();
            rec.n = n;
            rec.seed = k;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                CenterContext cctx{spec, known_cov, std::nullopt, nullptr};
                if (method.estimator == Estimator::ContextOLS) {
                    cctx.context_y = y0;
                    cctx.pair_covariates = &pair_y;
                }
                double eps = 0.0;
                if (method.dro_kind) {
                    switch (method.eps_mode) {
                    case EpsMode::Fixed:
                        eps = method.fixed_eps;
                        break;
                    case EpsMode::Theory:
                        eps = theoretical_epsilon(spec.rule, n);
                        break;
                    case EpsMode::CrossValidated: {
                        const uint64_t cv_seed = hash_seed(spec.master_seed, "cv",
                                                           std::string_view(to_string(method.estimator)),
                                                           uint64_t(n), uint64_t(k));
                        eps = method.estimator == Estimator::ContextOLS
                                  ? select_epsilon_contextual(spec.eps_grid, method, pair_y,
                                                              pair_xi, spec.cv_split, cv_seed,
                                                              spec, rt.cost, rt.set)
                                  : select_epsilon(spec.eps_grid, method, *train, spec.cv_split,
                                                   cv_seed, spec);
                        break;
                    }
                    }
                }
                const uint64_t mc_seed = hash_seed(spec.master_seed, "mc",
                                                   std::string_view(to_string(method.estimator)),
                                                   uint64_t(n), uint64_t(k));
                const EmpiricalDist center = make_center(method, *train, cctx, mc_seed);
                const Solution sol =
                    solve_method(method, eps, rt.cost, rt.set, center, spec.solver, solve_seed);

                rec.eps_used = method.dro_kind ? eps : 0.0;
                if (analytic) {
                    rec.objective = analytic(sol.x);
                    rec.gen_error = rec.objective - (rt.quad ? 0.0 : analytic(oracle.x_star));
                } else {
                    rec.objective = erm_objective(sol.x, rt.cost, *eval_atoms);
                    rec.gen_error = rec.objective - oracle.z_star;
                }
            } catch (const std::exception& e) {
                rec.status = e.what();
                rec.eps_used = kNan;
                rec.objective = kNan;
                rec.gen_error = kNan;
            }
            const auto t1 = std::chrono::steady_clock::now();
            rec.wallclock_ms =
                spec.record_wallclock
                    ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                    : 0.0;
            results[ctx_index * n_methods + mi] = std::move(rec);
        }
    };

    const int workers = std::min<int>(resolve_workers(spec.workers), int(contexts.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < contexts.size(); ++i)
            run_context(contexts[i], i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= contexts.size())
                        return;
                    run_context(contexts[i], i);
                }
            });
        for (auto& t : pool)
            t.join();
    }

    std::sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.method != b.method)
            return a.method < b.method;
        if (a.n != b.n)
            return a.n < b.n;
        return a.seed < b.seed;
    });
    return results;
}

CoverageReport check_bound_coverage(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.scenario == Scenario::Contextual)
        throw std::invalid_argument("check_bound_coverage: unsupported scenario");
    const MethodSpec method = spec.methods.front();
    if (!method.dro_kind)
        throw std::invalid_argument("check_bound_coverage: the probe method must be a DRO method");

    const ScenarioRuntime rt = build_runtime(spec);
    const int n = spec.n_grid.front();
    const double eps = theoretical_epsilon(spec.rule, n);

    CoverageReport report;
    report.epsilon = eps;
    int covered = 0;
    double v_star_acc = 0.0;
    for (int k = 0; k < spec.seeds; ++k) {
        const uint64_t train_seed = hash_seed(spec.master_seed, "train", uint64_t(n), uint64_t(k));
        const uint64_t eval_seed = hash_seed(spec.master_seed, "eval", uint64_t(n), uint64_t(k));
        const uint64_t mc_seed = hash_seed(spec.master_seed, "mc",
                                           std::string_view(to_string(method.estimator)),
                                           uint64_t(n), uint64_t(k));
        std::optional<EmpiricalDist> train;
        std::optional<Matrix> known_cov;
        OracleSolution oracle;
        Sampler eval_sampler;
        std::function<double(const Vector&)> analytic;
        if (rt.quad) {
            train = rt.quad->sampler(n, train_seed);
            oracle = *rt.shared_oracle;
            analytic = [&rt](const Vector& x) { return rt.quad->analytic_objective(x); };
        } else {
            const auto market = seed_market(spec, k);
            known_cov = market_diag_cov(market);
            train = sample(market, n, train_seed);
            eval_sampler = market_sampler(market);
            oracle = oracle_solution(rt.cost, rt.set, eval_sampler, spec.n_oracle,
                                     spec.oracle_restarts,
                                     hash_seed(spec.master_seed, "oracle", uint64_t(k)),
                                     spec.solver);
        }
        const double v_star = lipschitz_norm(rt.cost, oracle.x_star);
        v_star_acc += v_star;
        CenterContext cctx{spec, known_cov, std::nullopt, nullptr};
        const EmpiricalDist center = make_center(method, *train, cctx, mc_seed);
        const Solution sol =
            solve_method(method, eps, rt.cost, rt.set, center, spec.solver,
                         hash_seed(spec.master_seed, "solve", uint64_t(n), uint64_t(k)));
        double excess;
        if (analytic)
            excess = analytic(sol.x) - analytic(oracle.x_star);
        else
            excess = estimate_gen_error(sol.x, rt.cost, eval_sampler, spec.n_eval, eval_seed, oracle);
        report.excess.push_back(excess);
        const double slack = v_star == 0.0 ? 1e-3 : 0.0;
        if (excess <= 2.0 * v_star * eps + slack)
            ++covered;
    }
    report.v_star = v_star_acc / double(spec.seeds);
    report.coverage = double(covered) / double(spec.seeds);
    return report;
}

} // namespace pdro
