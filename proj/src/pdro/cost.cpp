#include "pdro/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pdro {

DownsideRiskCost::DownsideRiskCost(double mu_, double gamma_) : mu(mu_), gamma(gamma_) {
    if (gamma < 1.0)
        throw std::invalid_argument("DownsideRiskCost: gamma must be >= 1");
}

QuadraticLinearCost::QuadraticLinearCost(Vector v_) : v(std::move(v_)) {
    if (v.size() == 0)
        throw std::invalid_argument("QuadraticLinearCost: empty anchor");
}

SimplexFloorSet::SimplexFloorSet(double tau_, Eigen::Index dim_) : tau(tau_), dim(dim_) {
    if (tau < 0.0)
        throw std::invalid_argument("SimplexFloorSet: tau must be >= 0");
    if (dim < 1)
        throw std::invalid_argument("SimplexFloorSet: dim must be >= 1");
}

L2BallSet::L2BallSet(double radius_, Eigen::Index dim_) : radius(radius_), dim(dim_) {
    if (radius <= 0.0)
        throw std::invalid_argument("L2BallSet: radius must be positive");
    if (dim < 1)
        throw std::invalid_argument("L2BallSet: dim must be >= 1");
}

Eigen::Index set_dim(const FeasibleSet& set) {
    return std::visit([](const auto& s) { return s.dim; }, set);
}

double set_diameter(const FeasibleSet& set) {
    if (const auto* b = std::get_if<L2BallSet>(&set))
        return 2.0 * b->radius;
    const auto& s = std::get<SimplexFloorSet>(set);
    // Extreme points put 1 + (D-1)tau on one coordinate and -tau elsewhere.
    const double top = 1.0 + (double(s.dim) - 1.0) * s.tau;
    return std::sqrt(2.0) * (top + s.tau);
}

bool contains(const FeasibleSet& set, const Vector& x, double tol) {
    if (x.size() != set_dim(set))
        return false;
    if (const auto* b = std::get_if<L2BallSet>(&set))
        return x.norm() <= b->radius + tol;
    const auto& s = std::get<SimplexFloorSet>(set);
    return std::abs(x.sum() - 1.0) <= tol && x.minCoeff() >= -s.tau - tol;
}

double eval_cost_at(const CostFunction& cost, const Vector& x, const Vector& atom) {
    if (const auto* d = std::get_if<DownsideRiskCost>(&cost)) {
        const double gap = d->mu - atom.dot(x);
        return gap > 0.0 ? std::pow(gap, d->gamma) : 0.0;
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    const Vector u = x - q.v;
    return 0.5 * u.squaredNorm() + atom.dot(u);
}

Vector eval_cost(const CostFunction& cost, const Vector& x, const Matrix& atoms) {
    if (atoms.cols() != x.size())
        throw std::invalid_argument("eval_cost: atom dimension mismatch");
    Vector out(atoms.rows());
    if (const auto* d = std::get_if<DownsideRiskCost>(&cost)) {
        const Vector s = atoms * x;
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            const double gap = d->mu - s[i];
            out[i] = gap > 0.0 ? std::pow(gap, d->gamma) : 0.0;
        }
        return out;
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    const Vector u = x - q.v;
    const double base = 0.5 * u.squaredNorm();
    out = (atoms * u).array() + base;
    return out;
}

Vector subgradient_at_atom(const CostFunction& cost, const Vector& x, const Vector& atom) {
    if (const auto* d = std::get_if<DownsideRiskCost>(&cost)) {
        const double gap = d->mu - atom.dot(x);
        if (gap <= 0.0)
            return Vector::Zero(x.size());
        return (-d->gamma * std::pow(gap, d->gamma - 1.0)) * atom;
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    return (x - q.v) + atom;
}

double lipschitz_norm(const CostFunction& cost, const Vector& x) {
    if (const auto* d = std::get_if<DownsideRiskCost>(&cost)) {
        if (d->gamma != 1.0)
            throw std::invalid_argument(
                "lipschitz_norm: downside risk with gamma > 1 has no global Lipschitz constant");
        return x.norm();
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    return (x - q.v).norm();
}

Vector lipschitz_norm_subgradient(const CostFunction& cost, const Vector& x) {
    if (std::holds_alternative<DownsideRiskCost>(cost)) {
        const double n = x.norm();
        return n > 0.0 ? Vector(x / n) : Vector(Vector::Zero(x.size()));
    }
    const auto& q = std::get<QuadraticLinearCost>(cost);
    const Vector u = x - q.v;
    const double n = u.norm();
    return n > 0.0 ? Vector(u / n) : Vector(Vector::Zero(x.size()));
}

double sup_bound(const DownsideRiskCost& cost, const SimplexFloorSet& set, double r) {
    if (r <= 0.0)
        throw std::invalid_argument("sup_bound: r must be positive");
    return std::pow(double(set.dim) * set.tau * r + cost.mu, cost.gamma);
}

namespace {

// Projection onto { y : sum y = s, y >= 0 } (Held et al. / Michelot).
Vector project_scaled_simplex(const Vector& y, double s) {
    const Eigen::Index n = y.size();
    std::vector<double> u(y.data(), y.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cssv = 0.0, theta = 0.0;
    Eigen::Index rho = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cssv += u[i];
        const double t = (cssv - s) / double(i + 1);
        if (u[i] - t > 0.0) {
            rho = i;
            theta = t;
        }
    }
    (void)rho;
    return (y.array() - theta).cwiseMax(0.0);
}

} // namespace

Vector project(const FeasibleSet& set, const Vector& x) {
    if (x.size() != set_dim(set))
        throw std::invalid_argument("project: dimension mismatch");
    if (const auto* b = std::get_if<L2BallSet>(&set)) {
        const double n = x.norm();
        return n <= b->radius ? x : Vector(x * (b->radius / n));
    }
    const auto& s = std::get<SimplexFloorSet>(set);
    // Shift by tau, project onto the simplex scaled to 1 + D*tau, shift back.
    const Vector shifted = x.array() + s.tau;
    const Vector p = project_scaled_simplex(shifted, 1.0 + double(s.dim) * s.tau);
    return p.array() - s.tau;
}

uint64_t comp_hypothesis_bound(int D, int gamma) {
    if (D < 1 || gamma < 0)
        throw std::invalid_argument("comp_hypothesis_bound: need D >= 1 and gamma >= 0");
    const uint64_t kMax = std::numeric_limits<uint64_t>::max();
    // binom(D + gamma, gamma) with overflow saturation.
    const int k = std::min(gamma, D);
    uint64_t result = 1;
    for (int i = 1; i <= k; ++i) {
        const uint64_t num = uint64_t(D + gamma - k + i);
        if (result > kMax / num)
            return kMax;
        result = result * num / uint64_t(i);
    }
    return result;
}

} // namespace pdro
