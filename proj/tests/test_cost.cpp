#include <doctest.h>

#include <cmath>
#include <limits>

#include "pdro/cost.hpp"

using namespace pdro;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        out[i++] = x;
    return out;
}

Vector random_vec(Rng& rng, Eigen::Index d, double scale) {
    Vector x(d);
    for (Eigen::Index i = 0; i < d; ++i)
        x[i] = rng.normal(0.0, scale);
    return x;
}

} // namespace

TEST_CASE("downside risk evaluation") {
    const CostFunction c2 = DownsideRiskCost(1.0, 2.0);
    // xi'x = 3 > mu: cost vanishes
    Matrix atoms(1, 2);
    atoms << 3.0, 0.0;
    CHECK(eval_cost(c2, vec({1.0, 0.0}), atoms)[0] == doctest::Approx(0.0));

    // xi'x = 0: (mu)^gamma
    Matrix zero = Matrix::Zero(1, 2);
    CHECK(eval_cost(c2, vec({1.0, 0.0}), zero)[0] == doctest::Approx(1.0));
    const CostFunction c4 = DownsideRiskCost(1.0, 4.0);
    CHECK(eval_cost(c4, vec({1.0, 0.0}), zero)[0] == doctest::Approx(1.0));
    const CostFunction cmu2 = DownsideRiskCost(2.0, 2.0);
    CHECK(eval_cost(cmu2, vec({1.0, 0.0}), zero)[0] == doctest::Approx(4.0));

    CHECK_THROWS_AS(DownsideRiskCost(1.0, 0.5), std::invalid_argument);
}

TEST_CASE("quadratic-linear evaluation vanishes at the anchor") {
    const Vector v = vec({0.3, -0.7, 1.1});
    const CostFunction q = QuadraticLinearCost(v);
    Rng rng(4);
    Matrix atoms(5, 3);
    for (int i = 0; i < 5; ++i)
        atoms.row(i) = random_vec(rng, 3, 2.0).transpose();
    const Vector vals = eval_cost(q, v, atoms);
    CHECK(vals.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("subgradients at atoms") {
    const CostFunction c1 = DownsideRiskCost(1.0, 1.0);
    // flat region
    CHECK(subgradient_at_atom(c1, vec({1.0, 0.0}), vec({3.0, 0.0})).norm() ==
          doctest::Approx(0.0));
    // active branch, gamma = 1: -xi
    const Vector g = subgradient_at_atom(c1, vec({0.0, 1.0}), vec({1.0, 0.0}));
    CHECK(g[0] == doctest::Approx(-1.0));
    CHECK(g[1] == doctest::Approx(0.0));
    // quadratic at the anchor: subgradient equals the atom
    const CostFunction q = QuadraticLinearCost(vec({1.0, 2.0}));
    const Vector gq = subgradient_at_atom(q, vec({1.0, 2.0}), vec({2.0, 2.0}));
    CHECK(gq.isApprox(vec({2.0, 2.0})));
}

TEST_CASE("subgradient inequality on random convex instances") {
    Rng rng(99);
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index d = 2 + Eigen::Index(rng.next_u64() % 4);
        const bool quad = (rng.next_u64() & 1) != 0;
        const CostFunction cost =
            quad ? CostFunction(QuadraticLinearCost(random_vec(rng, d, 1.0)))
                 : CostFunction(DownsideRiskCost(1.0, 1.0 + double(rng.next_u64() % 3)));
        const Vector x = random_vec(rng, d, 1.0);
        const Vector dir = random_vec(rng, d, 1.0);
        const Vector atom = random_vec(rng, d, 1.0);
        const Vector g = subgradient_at_atom(cost, x, atom);
        const double f0 = eval_cost_at(cost, x, atom);
        for (double tt : {1e-4, -1e-4}) {
            const double ft = eval_cost_at(cost, x + tt * dir, atom);
            CHECK(ft >= f0 + tt * g.dot(dir) - 1e-8);
        }
    }
}

TEST_CASE("finite differences away from the kink") {
    Rng rng(123);
    int checked = 0;
    while (checked < 100) {
        const Eigen::Index d = 3;
        const CostFunction cost = DownsideRiskCost(1.0, 2.0);
        const Vector x = random_vec(rng, d, 1.0);
        const Vector atom = random_vec(rng, d, 1.0);
        if (std::abs(1.0 - atom.dot(x)) < 1e-3)
            continue;
        const Vector g = subgradient_at_atom(cost, x, atom);
        const Vector dir = random_vec(rng, d, 1.0);
        const double h = 1e-6;
        const double fd = (eval_cost_at(cost, x + h * dir, atom) -
                           eval_cost_at(cost, x - h * dir, atom)) /
                          (2.0 * h);
        const double gd = g.dot(dir);
        const double scale = std::max({1.0, std::abs(fd), std::abs(gd)});
        CHECK(std::abs(fd - gd) / scale < 1e-5);
        ++checked;
    }
}

TEST_CASE("lipschitz norms") {
    const CostFunction c1 = DownsideRiskCost(1.0, 1.0);
    CHECK(lipschitz_norm(c1, vec({1.0, 0.0})) == doctest::Approx(1.0));
    CHECK(lipschitz_norm(c1, vec({2.0, 0.0})) == doctest::Approx(2.0)); // homogeneity

    const CostFunction q = QuadraticLinearCost(vec({1.0, 1.0}));
    CHECK(lipschitz_norm(q, vec({1.0, 1.0})) == doctest::Approx(0.0));

    const CostFunction c2 = DownsideRiskCost(1.0, 2.0);
    CHECK_THROWS_AS(lipschitz_norm(c2, vec({1.0, 0.0})), std::invalid_argument);
}

TEST_CASE("sup_bound closed form") {
    CHECK(sup_bound(DownsideRiskCost(1.0, 2.0), SimplexFloorSet(2.0, 2), 1.0) ==
          doctest::Approx(25.0));
    CHECK(sup_bound(DownsideRiskCost(1.0, 1.0), SimplexFloorSet(0.0, 4), 1.0) ==
          doctest::Approx(1.0));
    // exponent identity: gamma = 2 bound is the square of the gamma = 1 bound
    const double b1 = sup_bound(DownsideRiskCost(1.0, 1.0), SimplexFloorSet(2.0, 3), 1.0);
    const double b2 = sup_bound(DownsideRiskCost(1.0, 2.0), SimplexFloorSet(2.0, 3), 1.0);
    CHECK(b2 == doctest::Approx(b1 * b1));
    CHECK_THROWS_AS(sup_bound(DownsideRiskCost(1.0, 1.0), SimplexFloorSet(1.0, 2), 0.0),
                    std::invalid_argument);
}

TEST_CASE("projection closed-form cases") {
    const FeasibleSet ball = L2BallSet(1.0, 2);
    CHECK(project(ball, vec({3.0, 4.0})).isApprox(vec({0.6, 0.8})));
    CHECK(project(ball, vec({0.1, 0.2})).isApprox(vec({0.1, 0.2}))); // idempotent inside

    const FeasibleSet simplex = SimplexFloorSet(0.0, 2);
    CHECK(project(simplex, vec({2.0, 0.0})).isApprox(vec({1.0, 0.0})));
    const Vector feas = vec({0.25, 0.75});
    CHECK(project(simplex, feas).isApprox(feas));

    const FeasibleSet floor = SimplexFloorSet(2.0, 2);
    const Vector inside = vec({2.5, -1.5});
    CHECK(project(floor, inside).isApprox(inside, 1e-9));
}

TEST_CASE("projection satisfies the variational inequality") {
    Rng rng(2718);
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index d = 2 + Eigen::Index(rng.next_u64() % 5);
        const bool use_ball = (rng.next_u64() & 1) != 0;
        const FeasibleSet set = use_ball
                                    ? FeasibleSet(L2BallSet(0.5 + rng.uniform(), d))
                                    : FeasibleSet(SimplexFloorSet(rng.uniform() * 2.0, d));
        const Vector x = random_vec(rng, d, 3.0);
        const Vector p = project(set, x);
        REQUIRE(contains(set, p, 1e-8));
        for (int z_trial = 0; z_trial < 100; ++z_trial) {
            const Vector z = project(set, random_vec(rng, d, 3.0));
            CHECK((x - p).dot(z - p) <= 1e-9);
        }
    }
}

TEST_CASE("projection matches a dense grid in dimension 2") {
    Rng rng(31415);
    for (int t = 0; t < 5; ++t) {
        const FeasibleSet set = SimplexFloorSet(1.0, 2);
        const Vector x = random_vec(rng, 2, 2.0);
        const Vector p = project(set, x);
        // the feasible set is the segment x0 in [-1, 2], x1 = 1 - x0
        double best = std::numeric_limits<double>::infinity();
        Vector bestz(2);
        for (double a = -1.0; a <= 2.0 + 1e-12; a += 1e-5) {
            Vector z = vec({a, 1.0 - a});
            const double dist = (z - x).norm();
            if (dist < best) {
                best = dist;
                bestz = z;
            }
        }
        CHECK((p - bestz).norm() < 1e-4);
    }
}

TEST_CASE("comp_hypothesis_bound") {
    CHECK(comp_hypothesis_bound(1, 1) == 2);
    CHECK(comp_hypothesis_bound(2, 2) == 6);
    CHECK(comp_hypothesis_bound(5, 0) == 1);
    CHECK(comp_hypothesis_bound(10, 4) == 1001);
    // overflow saturates
    CHECK(comp_hypothesis_bound(500, 300) == std::numeric_limits<uint64_t>::max());
    CHECK_THROWS_AS(comp_hypothesis_bound(0, 1), std::invalid_argument);
}

TEST_CASE("set diameters and membership") {
    CHECK(set_diameter(FeasibleSet(L2BallSet(3.0, 4))) == doctest::Approx(6.0));
    CHECK(contains(FeasibleSet(SimplexFloorSet(0.0, 2)), vec({0.5, 0.5})));
    CHECK_FALSE(contains(FeasibleSet(SimplexFloorSet(0.0, 2)), vec({0.7, 0.5})));
}
