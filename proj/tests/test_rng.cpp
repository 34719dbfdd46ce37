#include <doctest.h>

#include <promises/rng.hpp>
#include <promises/threads.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

using namespace promises;

TEST_CASE("seed derivation is deterministic and stream-separated") {
    CHECK(derive_seed(42, 1, 0) == derive_seed(42, 1, 0));
    CHECK(derive_seed(42, 1, 0) != derive_seed(42, 2, 0));
    CHECK(derive_seed(42, 1, 0) != derive_seed(42, 1, 1));
    CHECK(derive_seed(42, 1, 0) != derive_seed(43, 1, 0));
}

TEST_CASE("identical seeds reproduce identical draws") {
    Rng a(derive_seed(7, 0));
    Rng b(derive_seed(7, 0));
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
        CHECK(a.gauss() == b.gauss());
    }
}

TEST_CASE("uniform stays in the half-open unit interval") {
    Rng rng(123);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("gauss has roughly standard moments") {
    Rng rng(99);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gauss();
        sum += g;
        sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    // 3 sigma bands: sd(mean) = 1/sqrt(n), sd(var) ~ sqrt(2/n).
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("below is bounded and covers all residues") {
    Rng rng(55);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const std::uint64_t x = rng.below(7);
        REQUIRE(x < 7);
        hits[static_cast<std::size_t>(x)]++;
    }
    for (int h : hits) CHECK(h > 0);
}

TEST_CASE("permutation returns a valid permutation and varies with seed") {
    Rng rng(1000);
    const std::vector<std::size_t> p = rng.permutation(20);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 20; ++i) CHECK(sorted[i] == i);

    Rng other(1001);
    CHECK(other.permutation(20) != p);
}

TEST_CASE("parallel_for visits each index exactly once at any thread count") {
    for (int threads : {1, 2, 4}) {
        std::vector<int> visits(257, 0);
        parallel_for(visits.size(), threads, [&](std::size_t i) { visits[i] += 1; });
        CHECK(std::accumulate(visits.begin(), visits.end(), 0) == 257);
        CHECK(*std::min_element(visits.begin(), visits.end()) == 1);
        CHECK(*std::max_element(visits.begin(), visits.end()) == 1);
    }
}

TEST_CASE("parallel_for propagates worker exceptions") {
    CHECK_THROWS_AS(parallel_for(8, 2,
                                 [](std::size_t i) {
                                     if (i == 5) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("resolve_threads prefers the request, then the environment") {
    CHECK(resolve_threads(3) == 3);
    setenv("PROMISES_THREADS", "2", 1);
    CHECK(resolve_threads(0) == 2);
    unsetenv("PROMISES_THREADS");
    CHECK(resolve_threads(0) >= 1);
}
