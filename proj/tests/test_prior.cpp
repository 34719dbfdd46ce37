#include <doctest.h>

#include "oracles.hpp"

#include <promises/prior.hpp>
#include <promises/rng.hpp>
#include <promises/simulate.hpp>

#include <cmath>
#include <string>
#include <vector>

using namespace promises;

namespace {

VoxelCoordinates coords_of(std::vector<std::array<double, 3>> entries) {
    VoxelCoordinates coords;
    coords.entries = std::move(entries);
    return coords;
}

}  // namespace

TEST_CASE("pairwise distances: unit offset pair") {
    const Matrix d = pairwise_distances(coords_of({{0, 0, 0}, {1, 0, 0}}));
    REQUIRE(d.rows() == 2);
    CHECK(d(0, 0) == 0.0);
    CHECK(d(1, 1) == 0.0);
    CHECK(d(0, 1) == 1.0);
    CHECK(d(1, 0) == 1.0);
}

TEST_CASE("pairwise distances: single voxel") {
    const Matrix d = pairwise_distances(coords_of({{5, -2, 7}}));
    REQUIRE(d.rows() == 1);
    CHECK(d(0, 0) == 0.0);
}

TEST_CASE("pairwise distances: 3-4-5 triangle") {
    const Matrix d = pairwise_distances(coords_of({{0, 0, 0}, {3, 4, 0}}));
    CHECK(d(0, 1) == 5.0);
    CHECK(d(1, 0) == 5.0);
}

TEST_CASE("location matrix at distance one has exp(-1) off-diagonal") {
    const LocationMatrix f =
        build_location_matrix(coords_of({{0, 0, 0}, {1, 0, 0}}), PriorKind::EuclideanSimilarity);
    CHECK(f.values(0, 0) == 1.0);
    CHECK(f.values(1, 1) == 1.0);
    CHECK(f.values(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(f.values(0, 1) == doctest::Approx(0.367879).epsilon(1e-5));
    CHECK(f.values(0, 1) == f.values(1, 0));
}

TEST_CASE("location matrix for a single voxel is [[1]]") {
    const LocationMatrix f =
        build_location_matrix(coords_of({{9, 9, 9}}), PriorKind::EuclideanSimilarity);
    REQUIRE(f.values.rows() == 1);
    CHECK(f.values(0, 0) == 1.0);
}

TEST_CASE("location matrix diagonal is exactly one for random coordinate sets") {
    Rng rng(4100);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::array<double, 3>> entries;
        for (int i = 0; i < 12; ++i) {
            entries.push_back({10.0 * rng.gauss(), 10.0 * rng.gauss(), 10.0 * rng.gauss()});
        }
        const LocationMatrix f =
            build_location_matrix(coords_of(entries), PriorKind::EuclideanSimilarity);
        for (Eigen::Index i = 0; i < f.values.rows(); ++i) CHECK(f.values(i, i) == 1.0);
    }
}

TEST_CASE("duplicate coordinates are rejected naming the pair") {
    try {
        build_location_matrix(coords_of({{1, 2, 3}, {0, 0, 0}, {1, 2, 3}}),
                              PriorKind::EuclideanSimilarity);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("0") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);
    }
}

TEST_CASE("check_full_rank basics") {
    CHECK(check_full_rank(Matrix::Identity(3, 3), 1e-10));
    CHECK_FALSE(check_full_rank(Matrix::Ones(2, 2), 1e-10));
}

TEST_CASE("location matrix on 3 grid points is full rank per an independent eigensolver") {
    const LocationMatrix f = build_location_matrix(
        coords_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), PriorKind::EuclideanSimilarity);
    CHECK(check_full_rank(f.values, 1e-10));

    // Cross-check against hand-rolled Jacobi singular values.
    const std::vector<double> sv = oracle::jacobi_singular_values(f.values);
    REQUIRE(sv.size() == 3);
    CHECK(sv.back() > 1e-10 * sv.front());
}

TEST_CASE("identity prior") {
    const LocationMatrix f = identity_location_matrix(4);
    CHECK(f.kind == PriorKind::Identity);
    CHECK((f.values - Matrix::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("custom prior validation") {
    Matrix good(2, 2);
    good << 1.0, 0.2, 0.2, 1.0;
    const LocationMatrix f = custom_location_matrix(good);
    CHECK(f.kind == PriorKind::Custom);

    Matrix asym(2, 2);
    asym << 1.0, 0.2, 0.3, 1.0;
    CHECK_THROWS_AS(custom_location_matrix(asym), ValidationError);

    CHECK_THROWS_AS(custom_location_matrix(Matrix::Ones(3, 3)), NumericError);

    Matrix rect(2, 3);
    rect.setZero();
    CHECK_THROWS_AS(custom_location_matrix(rect), ValidationError);
}

TEST_CASE("projection with identity prior and shared basis gives identity") {
    // Orthonormal columns from the thin factor of a QR on a seeded matrix.
    const Matrix g = haar_orthogonal(6, 777);
    const Matrix q = g.leftCols(3);
    const LocationMatrix f = identity_location_matrix(6);
    const Matrix reduced = project_location_matrix(f.values, q, q);
    CHECK((reduced - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("projection with canonical basis selects the leading block") {
    const LocationMatrix f = build_location_matrix(
        coords_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 2, 0}}), PriorKind::EuclideanSimilarity);
    const Matrix q = Matrix::Identity(4, 2);
    const Matrix reduced = project_location_matrix(f.values, q, q);
    CHECK((reduced - f.values.topLeftCorner(2, 2)).norm() == 0.0);
}

TEST_CASE("projection matches the naive triple-product oracle") {
    Rng rng(4200);
    std::vector<std::array<double, 3>> entries;
    for (int i = 0; i < 7; ++i) {
        entries.push_back({3.0 * rng.gauss(), 3.0 * rng.gauss(), 3.0 * rng.gauss()});
    }
    const LocationMatrix f =
        build_location_matrix(coords_of(entries), PriorKind::EuclideanSimilarity);
    const Matrix qi = haar_orthogonal(7, 4201).leftCols(4);
    const Matrix qm = haar_orthogonal(7, 4202).leftCols(4);
    const Matrix reduced = project_location_matrix(f.values, qi, qm);

    const Matrix expected =
        oracle::naive_matmul(oracle::naive_matmul(Matrix(qi.transpose()), f.values), qm);
    CHECK((reduced - expected).norm() < 1e-12);
}

TEST_CASE("projection rejects non-orthonormal columns") {
    const LocationMatrix f = identity_location_matrix(4);
    const Matrix bad = Matrix::Ones(4, 2);
    CHECK_THROWS_AS(project_location_matrix(f.values, bad, bad), ValidationError);
}

TEST_CASE("entries lie in (0,1] and decrease with distance") {
    Rng rng(4300);
    std::vector<std::array<double, 3>> entries;
    for (int i = 0; i < 10; ++i) {
        entries.push_back({5.0 * rng.gauss(), 5.0 * rng.gauss(), 5.0 * rng.gauss()});
    }
    const VoxelCoordinates coords = coords_of(entries);
    const Matrix d = pairwise_distances(coords);
    const LocationMatrix f = build_location_matrix(coords, PriorKind::EuclideanSimilarity);
    for (Eigen::Index i = 0; i < 10; ++i) {
        for (Eigen::Index j = 0; j < 10; ++j) {
            CHECK(f.values(i, j) > 0.0);
            CHECK(f.values(i, j) <= 1.0);
        }
    }
    // d_ij < d_kl implies F_ij > F_kl.
    for (int probe = 0; probe < 200; ++probe) {
        const Eigen::Index i = static_cast<Eigen::Index>(rng.below(10));
        const Eigen::Index j = static_cast<Eigen::Index>(rng.below(10));
        const Eigen::Index k = static_cast<Eigen::Index>(rng.below(10));
        const Eigen::Index l = static_cast<Eigen::Index>(rng.below(10));
        if (d(i, j) < d(k, l)) CHECK(f.values(i, j) > f.values(k, l));
    }
}

TEST_CASE("random distinct coordinate sets give full-rank priors") {
    Rng rng(4400);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::array<double, 3>> entries;
        for (int i = 0; i < 15; ++i) {
            entries.push_back({4.0 * rng.gauss(), 4.0 * rng.gauss(), 4.0 * rng.gauss()});
        }
        const LocationMatrix f =
            build_location_matrix(coords_of(entries), PriorKind::EuclideanSimilarity);
        CHECK(check_full_rank(f.values, kDefaultRankTol));
    }
}
