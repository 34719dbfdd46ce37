#pragma once

#include "promises/matrix.hpp"

namespace promises {

enum class PriorKind { EuclideanSimilarity, Identity, Custom };

// Prior location parameter F: v x v, symmetric, full rank; unit diagonal for
// the Euclidean-similarity kind.
struct LocationMatrix {
    Matrix values;
    PriorKind kind = PriorKind::Identity;

    Eigen::Index v() const { return values.rows(); }
};

inline constexpr double kDefaultRankTol = 1e-10;

// v x v symmetric matrix of Euclidean distances, zero diagonal.
Matrix pairwise_distances(const VoxelCoordinates& coords);

// Euclidean similarity: F_ij = exp(-d_ij).  Duplicate coordinates are a
// rank-deficiency error naming the offending pair; every build is followed by
// a full-rank check.  Identity kind ignores distances.
LocationMatrix build_location_matrix(const VoxelCoordinates& coords, PriorKind kind);
LocationMatrix identity_location_matrix(Eigen::Index v);

// Wraps a user-supplied matrix, validating squareness, symmetry (1e-12
// elementwise) and full rank.
LocationMatrix custom_location_matrix(Matrix values, double rank_tol = kDefaultRankTol);

// True iff the smallest singular value exceeds tol times the largest.
bool check_full_rank(const Matrix& m, double tol);

// Reduced prior Q_i^T F Q_M for the efficient model; Q factors must have
// orthonormal columns within 1e-10.
Matrix project_location_matrix(const Matrix& F, const Matrix& Q_i, const Matrix& Q_M);

}  // namespace promises
