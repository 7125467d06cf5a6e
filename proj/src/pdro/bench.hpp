#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdro/dro.hpp"

namespace pdro {

using Sampler = std::function<EmpiricalDist(Eigen::Index m, uint64_t seed)>;

// ---------------------------------------------------------------------------
// Instance generators
// ---------------------------------------------------------------------------

/// Random market on [-r, r]^D: eta_i ~ U[1.5, 3].
ScaledBetaProductSpec gen_beta_market(Eigen::Index D, uint64_t seed, double r = 1.0);

/// eta_2 = eta_1 + C min{3 - eta_1, eta_1 - 1.5}; C in [-1, 1] keeps the
/// shifted parameter inside the family box. perturb_noise is the half-width
/// of the uniform test-time noise recorded for the evaluator.
struct ShiftSpec {
    double C = 0.0;
    double perturb_noise = 0.0;
};

ScaledBetaProductSpec apply_eta_shift(const ScaledBetaProductSpec& spec, const ShiftSpec& shift);

/// Quadratic-linear cost on an l2 ball with zero-mean noise
/// xi = N(0, I) + (Exp(lambda) - 1/lambda) per coordinate; the true objective
/// is 0.5 ||x - v||^2 with v = B/(2 sqrt(D)) * 1, so x* = v and Z(x*) = 0.
struct QuadraticInstance {
    QuadraticLinearCost cost;
    L2BallSet set;
    Sampler sampler;

    double analytic_objective(const Vector& x) const;
    const Vector& optimum() const { return cost.v; }
};

QuadraticInstance gen_quadratic_instance(Eigen::Index D, double lambda, double ball_radius,
                                         uint64_t seed);

struct ContextualSpec {
    Eigen::Index d_xi = 10;
    Eigen::Index d_y = 3;
    bool high_snr = true; // B entries U(-0.5, 0.5); low SNR uses U(-0.1, 0.1)
    bool mis = true;      // add 2 sin(||y||) to every response coordinate
    double noise_sigma = 0.3;
};

/// Synthetic contextual generator xi | y = B y + mis * 2 sin(||y||) * 1 + u.
/// Covariates mimic monthly three-factor magnitudes:
/// y ~ N(0, diag(0.2^2, 0.15^2, 0.1^2)) (cycled for d_y > 3).
struct ContextualInstance {
    ContextualSpec spec;
    Matrix B;
    Matrix noise_cov;

    Vector sample_covariate(Rng& rng) const;
    Vector conditional_mean(const Vector& y) const;
    /// Training pairs (covariates, responses).
    std::pair<Matrix, Matrix> sample_pairs(Eigen::Index n, uint64_t seed) const;
    /// True conditional law at y (Gaussian).
    GaussianSpec conditional(const Vector& y) const;
};

ContextualInstance gen_contextual_instance(const ContextualSpec& spec, uint64_t seed);

// ---------------------------------------------------------------------------
// Oracles and evaluation
// ---------------------------------------------------------------------------

struct OracleSolution {
    Vector x_star;
    double z_star = 0.0;
};

/// Empirical-risk oracle: ERM on n_oracle fresh draws, best of `restarts`
/// random starts. `analytic` short-circuits sampling when the true objective
/// has a closed form.
OracleSolution oracle_solution(const CostFunction& cost, const FeasibleSet& set,
                               const Sampler& sampler, Eigen::Index n_oracle, int restarts,
                               uint64_t seed, const SolverConfig& solver,
                               const std::function<double(const Vector&)>* analytic = nullptr);

/// Closed-form E[(mu - xi'x)_+^gamma] for Gaussian xi and gamma in {1, 2}.
std::optional<double> gaussian_downside_objective(const DownsideRiskCost& cost,
                                                  const GaussianSpec& law, const Vector& x);

/// Z(x_hat) - Z(x*) with both decisions priced on the same n_eval draws
/// (common random numbers), so the oracle gap cancels to first order.
double estimate_gen_error(const Vector& x_hat, const CostFunction& cost, const Sampler& sampler,
                          Eigen::Index n_eval, uint64_t eval_seed, const OracleSolution& oracle);

// ---------------------------------------------------------------------------
// Benchmark pipelines
// ---------------------------------------------------------------------------

enum class Scenario { BetaPortfolio, Quadratic, Shifted, Contextual };
enum class Estimator { Empirical, BetaMoment, GaussianFull, GaussianMean, ContextOLS };
enum class EpsMode { Fixed, CrossValidated, Theory };

const char* to_string(Scenario s);
const char* to_string(Estimator e);

struct MethodSpec {
    Estimator estimator = Estimator::Empirical;
    std::optional<DivergenceKind> dro_kind; // absent -> ERM
    EpsMode eps_mode = EpsMode::Fixed;
    double fixed_eps = 0.0;

    std::string name() const;
    static MethodSpec parse(const std::string& token);
};

struct ExperimentSpec {
    Scenario scenario = Scenario::BetaPortfolio;
    std::vector<MethodSpec> methods;
    std::vector<int> n_grid;
    int seeds = 50;
    uint64_t master_seed = 20240801;
    double mc_ratio = 50.0;
    std::vector<double> eps_grid = {0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0};
    double cv_split = 0.8;

    // cost / set parameters
    double gamma = 2.0;
    double tau = 2.0;
    double mu = 1.0;
    double r = 1.0;
    int dim = 10;

    // quadratic scenario
    double ball_radius = 10.0;
    double exp_rate = 0.2;

    // shifted scenario
    double test_noise = 2.0; // uniform half-width added to test draws

    // contextual scenario
    int dy = 3;
    bool high_snr = true;
    bool mis = true;
    double noise_sigma = 0.3;

    // evaluation budgets
    long n_eval = 200000;
    long n_oracle = 500000;
    int oracle_restarts = 5;

    SolverConfig solver;
    EpsilonRule rule; // theory-mode epsilon and bound checks
    int workers = 0;  // 0 -> hardware concurrency
    bool record_wallclock = false;

    void validate() const; // throws listing every violation
};

struct TrialResult {
    std::string scenario;
    std::string method;
    int n = 0;
    int seed = 0;
    double eps_used = 0.0;
    double objective = 0.0;   // Z(x_hat) estimate
    double gen_error = 0.0;   // Z(x_hat) - Z(x*)
    double wallclock_ms = 0.0;
    std::string status = "ok";
};

/// Hold-out choice of the ambiguity radius: fit and solve on the front
/// cv_split share of `train` for every candidate, keep the radius with the
/// lowest cost on the held-out atoms; ties resolve to the smallest radius.
/// Falls back to the smallest candidate when train is too small to split.
double select_epsilon(const std::vector<double>& grid, const MethodSpec& method,
                      const EmpiricalDist& train, double split_fraction, uint64_t seed,
                      const ExperimentSpec& spec);

double theoretical_epsilon(const EpsilonRule& rule, Eigen::Index n);

/// Runs every (method, n, seed) trial; output is canonically ordered and a
/// pure function of the spec (worker count does not change it).
std::vector<TrialResult> run_trials(const ExperimentSpec& spec);

struct CoverageReport {
    double coverage = 0.0;          // fraction of seeds with E(x_hat) <= bound
    double epsilon = 0.0;           // radius used
    double v_star = 0.0;            // variability measure at x*
    std::vector<double> excess;     // per-seed realized excess risk
};

/// Theorem-style bound check on the W1 path: gamma = 1 downside risk, a
/// Gaussian center fitted with the market's true covariance, and
/// eps = C * Delta(delta, Theta). Counts seeds with
/// excess risk <= 2 ||x*|| eps (plus 1e-3 slack when ||x*|| = 0).
CoverageReport check_bound_coverage(const ExperimentSpec& spec);

} // namespace pdro
