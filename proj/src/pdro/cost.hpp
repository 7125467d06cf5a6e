#pragma once

#include <cstdint>
#include <variant>

#include "pdro/dist.hpp"

namespace pdro {

/// Portfolio downside risk h(x;xi) = (mu - xi'x)_+^gamma.
struct DownsideRiskCost {
    double mu;
    double gamma; // >= 1; the benchmarks use {1, 2, 4}

    DownsideRiskCost(double mu_, double gamma_);
};

/// h(x;xi) = 0.5 ||x - v||^2 + xi'(x - v); zero at the anchor for every xi.
struct QuadraticLinearCost {
    Vector v;

    explicit QuadraticLinearCost(Vector v_);
};

using CostFunction = std::variant<DownsideRiskCost, QuadraticLinearCost>;

/// X = { x : sum x_i = 1, x_i >= -tau }.
struct SimplexFloorSet {
    double tau;
    Eigen::Index dim;

    SimplexFloorSet(double tau_, Eigen::Index dim_);
};

/// X = { x : ||x||_2 <= radius }.
struct L2BallSet {
    double radius;
    Eigen::Index dim;

    L2BallSet(double radius_, Eigen::Index dim_);
};

using FeasibleSet = std::variant<SimplexFloorSet, L2BallSet>;

Eigen::Index set_dim(const FeasibleSet& set);
double set_diameter(const FeasibleSet& set);
bool contains(const FeasibleSet& set, const Vector& x, double tol = 1e-8);

/// h(x; xi_i) for every atom row.
Vector eval_cost(const CostFunction& cost, const Vector& x, const Matrix& atoms);
double eval_cost_at(const CostFunction& cost, const Vector& x, const Vector& atom);

/// One element of the subdifferential in x. The kink of (.)_+^gamma at zero
/// activity is resolved to the zero vector.
Vector subgradient_at_atom(const CostFunction& cost, const Vector& x, const Vector& atom);

/// Global Lipschitz constant of xi -> h(x;xi) in the l2 norm. Only downside
/// risk with gamma = 1 (constant ||x||) and the quadratic-linear cost
/// (constant ||x - v||) admit one; any other gamma throws.
double lipschitz_norm(const CostFunction& cost, const Vector& x);

/// Subgradient in x of the map x -> lipschitz_norm(cost, x); 0 at the norm's
/// kink. Used by the W1-regularized outer objective.
Vector lipschitz_norm_subgradient(const CostFunction& cost, const Vector& x);

/// (D tau r + mu)^gamma, the closed-form upper bound on
/// sup_{x in X} ||h(x;.)||_inf over the floor simplex with support radius r.
double sup_bound(const DownsideRiskCost& cost, const SimplexFloorSet& set, double r);

/// Euclidean projection onto the set (exact: sort-based for the floor
/// simplex, radial scaling for the ball).
Vector project(const FeasibleSet& set, const Vector& x);

/// Polynomial-class VC-style count binom(D + gamma, gamma), saturating at
/// the largest uint64 on overflow.
uint64_t comp_hypothesis_bound(int D, int gamma);

} // namespace pdro
