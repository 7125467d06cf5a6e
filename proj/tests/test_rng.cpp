#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdro/rng.hpp"

using namespace pdro;

TEST_CASE("identical seeds reproduce identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i)
        CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("hash_seed separates substreams and is order sensitive") {
    CHECK(hash_seed(7, "train", uint64_t(50), uint64_t(3)) !=
          hash_seed(7, "eval", uint64_t(50), uint64_t(3)));
    CHECK(hash_seed(7, uint64_t(1), uint64_t(2)) != hash_seed(7, uint64_t(2), uint64_t(1)));
    CHECK(hash_seed(7, "a") == hash_seed(7, "a"));
}

TEST_CASE("uniform stays inside the open unit interval") {
    Rng rng(9);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal moments") {
    Rng rng(123);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("gamma moments match shape") {
    Rng rng(77);
    const double shape = 2.3;
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gamma(shape);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean - shape) < 0.02);
    CHECK(std::abs(var - shape) < 0.05);
}

TEST_CASE("beta moments match the (a, 2) family") {
    Rng rng(5);
    const double a = 2.0, b = 2.0;
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.beta(a, b);
        REQUIRE(x > 0.0);
        REQUIRE(x < 1.0);
        s += x;
    }
    CHECK(std::abs(s / n - a / (a + b)) < 0.005);
}

TEST_CASE("exponential mean") {
    Rng rng(11);
    const double lambda = 0.2;
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        s += rng.exponential(lambda);
    CHECK(std::abs(s / n - 1.0 / lambda) < 0.1);
}
