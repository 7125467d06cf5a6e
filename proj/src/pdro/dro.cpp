#include "pdro/dro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_base(const Vector& values, const Vector& base) {
    if (values.size() != base.size())
        throw std::invalid_argument("worst_case: value/weight length mismatch");
    if (values.size() == 0)
        throw std::invalid_argument("worst_case: empty instance");
    if (!values.allFinite())
        throw std::invalid_argument("worst_case: non-finite values");
    if (base.minCoeff() < -1e-12 || std::abs(base.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("worst_case: base is not a probability vector");
}

} // namespace

AmbiguitySpec::AmbiguitySpec(DivergenceKind kind_, double epsilon_)
    : kind(kind_), epsilon(epsilon_) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("AmbiguitySpec: epsilon must be finite and >= 0");
}

WorstCaseResult chi2_worst_case(const Vector& values, const Vector& base, double eps) {
    check_base(values, base);
    if (eps < 0.0)
        throw std::invalid_argument("chi2_worst_case: eps must be >= 0");

    const Eigen::Index m = values.size();
    const double mean = base.dot(values);

    WorstCaseResult out;
    out.weights = base;
    out.value = mean;
    out.closed_form_used = true;
    if (eps == 0.0)
        return out;

    // Atoms outside the base support are forced to zero weight.
    std::vector<Eigen::Index> order;
    order.reserve(m);
    for (Eigen::Index i = 0; i < m; ++i)
        if (base[i] > 0.0)
            order.push_back(i);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return values[a] != values[b] ? values[a] < values[b] : a < b;
    });
    const Eigen::Index ms = static_cast<Eigen::Index>(order.size());

    // Suffix sums over the ascending order: free set = order[k..ms).
    std::vector<double> sq(ms + 1, 0.0), s1(ms + 1, 0.0), s2(ms + 1, 0.0);
    for (Eigen::Index t = ms - 1; t >= 0; --t) {
        const double q = base[order[t]];
        const double v = values[order[t]];
        sq[t] = sq[t + 1] + q;
        s1[t] = s1[t + 1] + q * v;
        s2[t] = s2[t + 1] + q * v * v;
    }

    double best_value = -kInf;
    Eigen::Index best_k = -1;
    double best_lambda = 0.0, best_u = 0.0, best_mean_f = 0.0;
    for (Eigen::Index k = 0; k < ms; ++k) {
        const double qf = sq[k];
        if (qf <= 0.0)
            break;
        const double u = (1.0 - qf) / qf;
        const double budget = 2.0 * eps - u; // radius left after zeroing the prefix
        if (budget < 0.0)
            break; // shrinking the support further only raises the cost
        const double mean_f = s1[k] / qf;
        const double var_f = std::max(s2[k] / qf - mean_f * mean_f, 0.0);
        double lambda = 0.0;
        if (var_f * qf > 0.0)
            lambda = std::sqrt(budget / (qf * var_f));
        // All free weights share the sign of 1 + u + lambda (v - mean_f),
        // minimized at the smallest free value.
        const double lowest = 1.0 + u + lambda * (values[order[k]] - mean_f);
        if (lowest < -1e-12)
            continue;
        const double value = mean_f + std::sqrt(std::max(budget * qf * var_f, 0.0));
        if (value > best_value) {
            best_value = value;
            best_k = k;
            best_lambda = lambda;
            best_u = u;
            best_mean_f = mean_f;
        }
    }
    if (best_k < 0)
        return out; // degenerate base; the center itself is the only candidate

    Vector p = Vector::Zero(m);
    for (Eigen::Index t = best_k; t < ms; ++t) {
        const Eigen::Index i = order[t];
        p[i] = std::max(base[i] * (1.0 + best_u + best_lambda * (values[i] - best_mean_f)), 0.0);
    }
    p /= p.sum(); // large tilts accumulate 1e-9-scale drift
    out.value = p.dot(values);
    out.weights = std::move(p);
    out.dual = best_lambda;
    out.closed_form_used = (best_k == 0);
    if (out.value < mean)
        out.value = mean; // guard against roundoff below the feasible center
    return out;
}

WorstCaseResult kl_worst_case(const Vector& values, const Vector& base, double eps) {
    check_base(values, base);
    if (eps < 0.0)
        throw std::invalid_argument("kl_worst_case: eps must be >= 0");

    const Eigen::Index m = values.size();
    const double mean = base.dot(values);

    WorstCaseResult out;
    out.weights = base;
    out.value = mean;
    out.closed_form_used = true;
    if (eps == 0.0)
        return out;

    double vmax = -kInf;
    for (Eigen::Index i = 0; i < m; ++i)
        if (base[i] > 0.0)
            vmax = std::max(vmax, values[i]);
    const double range = vmax - [&] {
        double lo = kInf;
        for (Eigen::Index i = 0; i < m; ++i)
            if (base[i] > 0.0)
                lo = std::min(lo, values[i]);
        return lo;
    }();
    if (range <= 0.0)
        return out; // constant values: every feasible p gives the same mean

    // Collapse threshold: KL of the base conditioned on the argmax atoms.
    double q_top = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        if (base[i] > 0.0 && values[i] >= vmax - 1e-15 * std::max(1.0, std::abs(vmax)))
            q_top += base[i];
    const double kl_collapse = std::log(1.0 / q_top);
    if (eps >= kl_collapse) {
        Vector p = Vector::Zero(m);
        for (Eigen::Index i = 0; i < m; ++i)
            if (base[i] > 0.0 && values[i] >= vmax - 1e-15 * std::max(1.0, std::abs(vmax)))
                p[i] = base[i] / q_top;
        out.value = vmax;
        out.weights = std::move(p);
        out.closed_form_used = true;
        return out;
    }

    // Gibbs tilt at temperature lambda, exponentials normalized by vmax.
    const auto tilt = [&](double lambda, Vector& p) {
        double z = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            p[i] = base[i] > 0.0 ? base[i] * std::exp((values[i] - vmax) / lambda) : 0.0;
            z += p[i];
        }
        p /= z;
    };
    const auto kl_of = [&](double lambda, Vector& p) {
        tilt(lambda, p);
        double kl = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            if (p[i] > 0.0)
                kl += p[i] * std::log(p[i] / base[i]);
        return kl;
    };

    // KL(tilt(lambda), base) decreases in lambda; bisect it onto eps.
    Vector p(m);
    double lo = 1e-8 * range, hi = 1e4 * range;
    for (int guard = 0; guard < 60 && kl_of(hi, p) > eps; ++guard)
        hi *= 4.0;
    for (int guard = 0; guard < 60 && kl_of(lo, p) < eps; ++guard)
        lo *= 0.25;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (kl_of(mid, p) > eps)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-15 * hi)
            break;
    }
    kl_of(hi, p); // final weights from the feasible side
    out.value = p.dot(values);
    out.weights = std::move(p);
    out.dual = hi;
    out.closed_form_used = false;
    if (out.value < mean)
        out.value = mean;
    return out;
}

WorstCaseResult w1_worst_case_lipschitz(double mean_value, double lip, double eps) {
    if (!(lip >= 0.0) || !std::isfinite(lip))
        throw std::invalid_argument("w1_worst_case_lipschitz: invalid Lipschitz constant");
    if (eps < 0.0)
        throw std::invalid_argument("w1_worst_case_lipschitz: eps must be >= 0");
    WorstCaseResult out;
    out.value = mean_value + eps * lip;
    out.closed_form_used = true;
    return out;
}

WorstCaseResult dro_objective(const Vector& x, const CostFunction& cost,
                              const EmpiricalDist& q_m, const AmbiguitySpec& amb) {
    const Vector values = eval_cost(cost, x, q_m.atoms);
    switch (amb.kind) {
    case DivergenceKind::Chi2:
        return chi2_worst_case(values, q_m.weights, amb.epsilon);
    case DivergenceKind::KL:
        return kl_worst_case(values, q_m.weights, amb.epsilon);
    case DivergenceKind::W1: {
        WorstCaseResult r =
            w1_worst_case_lipschitz(q_m.weights.dot(values), lipschitz_norm(cost, x), amb.epsilon);
        return r;
    }
    default:
        throw std::invalid_argument("dro_objective: only Chi2, KL and W1 balls are solvable");
    }
}

double erm_objective(const Vector& x, const CostFunction& cost, const EmpiricalDist& q) {
    return q.weights.dot(eval_cost(cost, x, q.atoms));
}

namespace {

// sum_i p_i * d/dx h(x; xi_i), vectorized over the atom matrix.
Vector weighted_subgradient(const CostFunction& cost, const Vector& x, const Matrix& atoms,
                            const Vector& p) {
    if (const auto* d = std::get_if<DownsideRiskCost>(&cost)) {
        const Vector s = atoms * x;
        Vector coef(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            const double gap = d->mu - s[i];
            coef[i] = gap > 0.0 ? -d->gamma * std::pow(gap, d->gamma - 1.0) * p[i] : 0.0;
        }
        return atoms.transpose() * coef;
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    return (x - q.v) * p.sum() + atoms.transpose() * p;
}

} // namespace

Solution solve_outer(const CostFunction& cost, const FeasibleSet& set,
                     const ObjectiveKind& objective, const EmpiricalDist& q_m,
                     const SolverConfig& cfg, const Vector* x0) {
    if (cfg.max_iter < 1 || cfg.tol <= 0.0 || cfg.step_c < 0.0)
        throw std::invalid_argument("solve_outer: invalid solver configuration");
    const Eigen::Index d = set_dim(set);
    if (q_m.dim() != d)
        throw std::invalid_argument("solve_outer: atom/set dimension mismatch");

    Vector x;
    if (x0) {
        x = project(set, *x0);
    } else {
        Rng rng(cfg.seed);
        Vector z(d);
        for (Eigen::Index j = 0; j < d; ++j)
            z[j] = rng.normal();
        x = project(set, z);
    }

    const bool is_w1 = objective.amb && objective.amb->kind == DivergenceKind::W1;
    const double step0 =
        cfg.step_c > 0.0 ? cfg.step_c : set_diameter(set) / std::sqrt(double(cfg.max_iter));

    Solution sol;
    sol.trace.reserve(cfg.max_iter);
    double best_obj = kInf;
    Vector best_x = x;
    std::vector<double> best_history;
    best_history.reserve(cfg.max_iter);

    Vector tail_sum = Vector::Zero(d);
    int tail_count = 0;
    const int tail_start = cfg.max_iter / 2;

    SolveStatus status = SolveStatus::MaxIter;
    for (int k = 1; k <= cfg.max_iter; ++k) {
        double obj;
        Vector grad;
        if (!objective.amb) {
            obj = erm_objective(x, cost, q_m);
            grad = weighted_subgradient(cost, x, q_m.atoms, q_m.weights);
        } else {
            WorstCaseResult wc = dro_objective(x, cost, q_m, *objective.amb);
            obj = wc.value;
            const Vector& p = wc.weights ? *wc.weights : q_m.weights;
            grad = weighted_subgradient(cost, x, q_m.atoms, p);
            if (is_w1)
                grad += objective.amb->epsilon * lipschitz_norm_subgradient(cost, x);
        }
        if (!std::isfinite(obj))
            throw std::runtime_error("solve_outer: objective became non-finite at iteration " +
                                     std::to_string(k));
        sol.trace.push_back(obj);
        if (obj < best_obj) {
            best_obj = obj;
            best_x = x;
        }
        best_history.push_back(best_obj);
        if (k > 50 && best_history[k - 51] - best_obj < cfg.tol) {
            status = SolveStatus::Converged;
            break;
        }
        const double gnorm = grad.norm();
        if (gnorm == 0.0) { // stationary: nothing left to move
            status = SolveStatus::Converged;
            break;
        }
        // Normalized direction keeps the terminal oscillation radius at
        // step_c/sqrt(max_iter) regardless of the worst-case gradient scale.
        x = project(set, x - (step0 / std::sqrt(double(k)) / gnorm) * grad);
        if (k > tail_start) {
            tail_sum += x;
            ++tail_count;
        }
    }

    sol.status = status;
    if (cfg.averaging && tail_count > 0) {
        sol.x = tail_sum / double(tail_count); // convex combination stays feasible
        if (!objective.amb)
            sol.objective = erm_objective(sol.x, cost, q_m);
        else
            sol.objective = dro_objective(sol.x, cost, q_m, *objective.amb).value;
        if (best_obj < sol.objective) {
            sol.x = best_x;
            sol.objective = best_obj;
        }
    } else {
        sol.x = best_x;
        sol.objective = best_obj;
    }
    return sol;
}

} // namespace pdro
