#include <doctest.h>

#include <promises/align.hpp>
#include <promises/simulate.hpp>

#include <cmath>
#include <vector>

using namespace promises;

TEST_CASE("haar draws are orthogonal with unit determinant magnitude") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Eigen::Index v = 2 + static_cast<Eigen::Index>(seed % 6);
        const Matrix g = haar_orthogonal(v, 8000 + seed);
        CHECK((g.transpose() * g - Matrix::Identity(v, v)).norm() < 1e-10);
        CHECK(std::abs(std::abs(g.determinant()) - 1.0) < 1e-8);
    }
}

TEST_CASE("haar first moment vanishes over many draws") {
    const Eigen::Index v = 4;
    const int n = 10000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += haar_orthogonal(v, 10000 + static_cast<std::uint64_t>(i))(0, 0);
    }
    const double mean = sum / n;
    // Haar entries have mean 0 and variance 1/v; the Monte-Carlo mean has
    // sd = v^{-1/2}/sqrt(n) = v^{-1/2}/100 here.
    const double sigma = 1.0 / (std::sqrt(static_cast<double>(v)) * 100.0);
    CHECK(std::abs(mean) < 3.0 * sigma);
}

TEST_CASE("haar draws are seed-deterministic") {
    const Matrix a = haar_orthogonal(5, 31337);
    const Matrix b = haar_orthogonal(5, 31337);
    CHECK((a.array() == b.array()).all());
    const Matrix c = haar_orthogonal(5, 31338);
    CHECK((a - c).norm() > 1e-6);
}

TEST_CASE("grid coords enumerate lattice points lexicographically") {
    const VoxelCoordinates one = grid_coords({1, 1, 1});
    REQUIRE(one.size() == 1);
    CHECK(one.entries[0] == std::array<double, 3>{0, 0, 0});

    const VoxelCoordinates two = grid_coords({2, 1, 1});
    REQUIRE(two.size() == 2);
    CHECK(two.entries[0] == std::array<double, 3>{0, 0, 0});
    CHECK(two.entries[1] == std::array<double, 3>{1, 0, 0});

    const VoxelCoordinates four = grid_coords({2, 2, 1});
    REQUIRE(four.size() == 4);
    double max_d = 0.0;
    for (const auto& a : four.entries) {
        for (const auto& b : four.entries) {
            const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
            max_d = std::max(max_d, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
    }
    CHECK(max_d == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("zero locality and zero noise give identical subjects") {
    SynthSpec spec;
    spec.m = 3;
    spec.t = 6;
    spec.v = 5;
    spec.rotation_locality = 0.0;
    spec.noise_sigma = 0.0;
    spec.seed = 11;
    const SynthCohort synth = synth_cohort(spec);
    for (const auto& scan : synth.cohort.scans) {
        CHECK((scan.data.array() == synth.true_reference.array()).all());
    }
    for (const auto& t : synth.true_transforms) {
        CHECK((t.values - Matrix::Identity(5, 5)).norm() == 0.0);
    }
}

TEST_CASE("noise-free cohorts satisfy the generative identity") {
    SynthSpec spec;
    spec.m = 4;
    spec.t = 7;
    spec.v = 6;
    spec.noise_sigma = 0.0;
    spec.seed = 12;
    const SynthCohort synth = synth_cohort(spec);

    std::vector<Matrix> realigned;
    for (std::size_t i = 0; i < spec.m; ++i) {
        // X_i = M R_i^T exactly, so X_i R_i returns M up to roundoff.
        CHECK((synth.cohort.scans[i].data -
               synth.true_reference * synth.true_transforms[i].values.transpose())
                  .norm() == 0.0);
        realigned.push_back(synth.cohort.scans[i].data * synth.true_transforms[i].values);
    }
    // Numerically zero: the only error is the float product round trip.
    CHECK(objective(realigned, synth.true_reference) < 1e-18);
}

TEST_CASE("noise variance matches the requested sigma") {
    SynthSpec spec;
    spec.m = 4;
    spec.t = 50;
    spec.v = 40;
    spec.noise_sigma = 0.7;
    spec.seed = 13;
    const SynthCohort synth = synth_cohort(spec);

    double sumsq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < spec.m; ++i) {
        const Matrix noise =
            synth.cohort.scans[i].data -
            synth.true_reference * synth.true_transforms[i].values.transpose();
        sumsq += noise.squaredNorm();
        n += static_cast<std::size_t>(noise.size());
    }
    const double var = sumsq / static_cast<double>(n);
    const double expected = spec.noise_sigma * spec.noise_sigma;
    // Var of the sample variance of n Gaussians is 2 sigma^4 / n.
    const double band = 3.0 * expected * std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(var - expected) < band);
}

TEST_CASE("cohorts are bitwise reproducible per seed") {
    SynthSpec spec;
    spec.m = 3;
    spec.t = 8;
    spec.v = 9;
    spec.noise_sigma = 0.5;
    spec.grid_dims = {3, 3, 1};
    spec.n_classes = 3;
    spec.seed = 14;
    const SynthCohort a = synth_cohort(spec);
    const SynthCohort b = synth_cohort(spec);
    for (std::size_t i = 0; i < spec.m; ++i) {
        CHECK((a.cohort.scans[i].data.array() == b.cohort.scans[i].data.array()).all());
    }
    CHECK(a.labels == b.labels);
    REQUIRE(a.cohort.coords.has_value());
    CHECK(a.cohort.coords->entries == b.cohort.coords->entries);

    spec.seed = 15;
    const SynthCohort c = synth_cohort(spec);
    CHECK((a.cohort.scans[0].data - c.cohort.scans[0].data).norm() > 1e-6);
}

TEST_CASE("true transforms are orthogonal at intermediate locality") {
    SynthSpec spec;
    spec.m = 3;
    spec.t = 6;
    spec.v = 8;
    spec.rotation_locality = 0.35;
    spec.seed = 16;
    const SynthCohort synth = synth_cohort(spec);
    for (const auto& t : synth.true_transforms) {
        CHECK((t.values.transpose() * t.values - Matrix::Identity(8, 8)).norm() < 1e-10);
        // The blend leans toward the identity: diagonal dominance on average.
        CHECK(t.values.trace() > 0.0);
    }
}

TEST_CASE("class labels cycle through classes and feasible alignment holds") {
    SynthSpec spec;
    spec.m = 3;
    spec.t = 12;
    spec.v = 8;
    spec.n_classes = 3;
    spec.noise_sigma = 0.0;
    spec.seed = 17;
    const SynthCohort synth = synth_cohort(spec);
    REQUIRE(synth.labels.size() == 12);
    for (int label : synth.labels) {
        CHECK(label >= 0);
        CHECK(label < 3);
    }

    AlignmentConfig config;
    config.tol = 1e-28;
    config.max_iter = 400;
    const AlignmentResult result = gpa_align(synth.cohort, config);
    CHECK(result.trace.back().objective < 1e-12 * synth.true_reference.squaredNorm());
}

TEST_CASE("spec validation") {
    SynthSpec bad_grid;
    bad_grid.m = 2;
    bad_grid.t = 4;
    bad_grid.v = 5;
    bad_grid.grid_dims = {2, 2, 1};  // product 4 != 5
    CHECK_THROWS_AS(synth_cohort(bad_grid), ValidationError);

    SynthSpec bad_m;
    bad_m.m = 1;
    CHECK_THROWS_AS(synth_cohort(bad_m), ValidationError);

    SynthSpec bad_locality;
    bad_locality.rotation_locality = 1.5;
    CHECK_THROWS_AS(synth_cohort(bad_locality), ValidationError);

    SynthSpec bad_sigma;
    bad_sigma.noise_sigma = -0.1;
    CHECK_THROWS_AS(synth_cohort(bad_sigma), ValidationError);
}
