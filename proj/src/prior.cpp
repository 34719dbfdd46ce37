#include "promises/prior.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace promises {

Matrix pairwise_distances(const VoxelCoordinates& coords) {
    const Eigen::Index v = static_cast<Eigen::Index>(coords.size());
    if (v < 1) throw ValidationError("pairwise_distances: need at least one coordinate");
    Matrix d = Matrix::Zero(v, v);
    for (Eigen::Index i = 0; i < v; ++i) {
        const auto& a = coords.entries[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i + 1; j < v; ++j) {
            const auto& b = coords.entries[static_cast<std::size_t>(j)];
            double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
            double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

bool check_full_rank(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) throw ValidationError("check_full_rank: matrix must be square");
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > tol * s(0);
}

LocationMatrix build_location_matrix(const VoxelCoordinates& coords, PriorKind kind) {
    const Eigen::Index v = static_cast<Eigen::Index>(coords.size());
    if (v < 1) throw ValidationError("build_location_matrix: need at least one coordinate");
    if (kind == PriorKind::Identity) return identity_location_matrix(v);
    if (kind != PriorKind::EuclideanSimilarity) {
        throw ValidationError("build_location_matrix handles euclidean-similarity and identity; "
                              "supply custom matrices through custom_location_matrix");
    }
    Matrix d = pairwise_distances(coords);
    for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = i + 1; j < v; ++j) {
            if (d(i, j) == 0.0) {
                throw ValidationError("duplicate coordinates at voxels " + std::to_string(i) +
                                      " and " + std::to_string(j) +
                                      " make the location matrix rank deficient");
            }
        }
    }
    LocationMatrix F;
    F.kind = PriorKind::EuclideanSimilarity;
    F.values = (-d).array().exp().matrix();
    for (Eigen::Index i = 0; i < v; ++i) F.values(i, i) = 1.0;
    if (!check_full_rank(F.values, kDefaultRankTol)) {
        throw NumericError("location matrix is numerically rank deficient");
    }
    return F;
}

LocationMatrix identity_location_matrix(Eigen::Index v) {
    if (v < 1) throw ValidationError("identity_location_matrix: v must be positive");
    LocationMatrix F;
    F.kind = PriorKind::Identity;
    F.values = Matrix::Identity(v, v);
    return F;
}

LocationMatrix custom_location_matrix(Matrix values, double rank_tol) {
    if (values.rows() != values.cols()) {
        throw ValidationError("custom location matrix must be square");
    }
    if (!values.allFinite()) throw ValidationError("custom location matrix has non-finite values");
    const double asym = (values - values.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12) {
        throw ValidationError("custom location matrix is asymmetric (max deviation " +
                              std::to_string(asym) + ")");
    }
    if (!check_full_rank(values, rank_tol)) {
        throw NumericError("custom location matrix is numerically rank deficient");
    }
    LocationMatrix F;
    F.kind = PriorKind::Custom;
    F.values = std::move(values);
    return F;
}

Matrix project_location_matrix(const Matrix& F, const Matrix& Q_i, const Matrix& Q_M) {
    if (F.rows() != F.cols()) throw ValidationError("project_location_matrix: F must be square");
    if (Q_i.rows() != F.rows() || Q_M.rows() != F.rows() || Q_i.cols() != Q_M.cols()) {
        throw ValidationError("project_location_matrix: dimension mismatch");
    }
    const Eigen::Index t = Q_i.cols();
    const double err_i = (Q_i.transpose() * Q_i - Matrix::Identity(t, t)).norm();
    const double err_m = (Q_M.transpose() * Q_M - Matrix::Identity(t, t)).norm();
    if (err_i > 1e-10 || err_m > 1e-10) {
        throw ValidationError("project_location_matrix: Q factors must have orthonormal columns");
    }
    return Q_i.transpose() * F * Q_M;
}

}  // namespace promises
