#pragma once

#include <optional>
#include <string>

#include "pdro/cost.hpp"
#include "pdro/dist.hpp"

namespace pdro {

/// Divergence ball { P : d(P, center) <= epsilon }.
struct AmbiguitySpec {
    DivergenceKind kind = DivergenceKind::Chi2;
    double epsilon = 0.0;

    AmbiguitySpec() = default;
    AmbiguitySpec(DivergenceKind kind_, double epsilon_);
};

struct WorstCaseResult {
    double value = 0.0;
    std::optional<Vector> weights;   // absent for the W1 closed form
    std::optional<double> dual;      // lambda for KL, tilt scale for chi2
    bool closed_form_used = false;
};

/**
 * Exact maximizer of sum_i p_i v_i over
 *     { p in simplex : chi2(p, base) <= eps },  chi2(p,q) = 0.5 sum (p-q)^2/q.
 *
 * When the tilt p_i = q_i (1 + lambda (v_i - mean)) stays nonnegative the
 * optimum is mean + sqrt(2 eps Var_q[v]) (Cauchy-Schwarz is tight). Otherwise
 * the optimal zero set is a prefix of the atoms sorted by ascending value;
 * each prefix admits a closed-form tilt on its complement, and the scan
 * keeps the best feasible candidate.
 */
WorstCaseResult chi2_worst_case(const Vector& values, const Vector& base, double eps);

/**
 * sup { sum p_i v_i : KL(p, base) <= eps } through the dual
 *     min_{lambda > 0} lambda eps + lambda log sum_i q_i exp(v_i / lambda),
 * solved by bisection on the dual derivative. The maximizing weights are the
 * Gibbs tilt q_i exp(v_i/lambda*) / Z. When eps already exceeds the cost of
 * collapsing onto the argmax atoms the sup equals max v over support(base).
 */
WorstCaseResult kl_worst_case(const Vector& values, const Vector& base, double eps);

/// Exact W1 regularization for Lipschitz convex costs:
/// sup = mean + eps * lip. No worst-case weights exist on the atoms (mass
/// escapes along the steepest ray).
WorstCaseResult w1_worst_case_lipschitz(double mean_value, double lip, double eps);

/// Worst case of the cost over the ambiguity ball centered at q_m.
WorstCaseResult dro_objective(const Vector& x, const CostFunction& cost,
                              const EmpiricalDist& q_m, const AmbiguitySpec& amb);

double erm_objective(const Vector& x, const CostFunction& cost, const EmpiricalDist& q);

struct SolverConfig {
    int max_iter = 600;
    double step_c = 0.0;   // 0 -> diameter(set)/sqrt(max_iter)
    double tol = 1e-7;     // stall tolerance over a 50-iteration window
    uint64_t seed = 0;     // initial point when x0 is not given
    bool averaging = true; // return the tail-averaged iterate instead of the best one
};

enum class SolveStatus { Converged, MaxIter };

struct Solution {
    Vector x;
    double objective = 0.0;
    std::vector<double> trace; // per-iteration objective values
    SolveStatus status = SolveStatus::MaxIter;
};

/// ERM when amb is absent, DRO otherwise.
struct ObjectiveKind {
    std::optional<AmbiguitySpec> amb;

    static ObjectiveKind erm() { return {}; }
    static ObjectiveKind dro(AmbiguitySpec a) { return {a}; }
};

/**
 * Projected subgradient with step c/sqrt(k) on
 *     min_{x in set}  [worst-case or empirical] cost over q_m.
 * DRO subgradients are assembled by Danskin's rule from the inner maximizer,
 * plus eps * d(lip)/dx on the W1 path.
 */
Solution solve_outer(const CostFunction& cost, const FeasibleSet& set,
                     const ObjectiveKind& objective, const EmpiricalDist& q_m,
                     const SolverConfig& cfg, const Vector* x0 = nullptr);

} // namespace pdro
