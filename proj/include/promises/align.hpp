#pragma once

#include "promises/matrix.hpp"
#include "promises/prior.hpp"

#include <optional>
#include <string>
#include <vector>

namespace promises {

struct OrthogonalTransform {
    std::string subject_id;
    Matrix values;  // v x v, or t x t in the reduced model
};

struct AlignmentConfig {
    double k = 0.0;           // concentration; 0 means unregularized
    int max_iter = 30;
    double tol = 1e-6;        // threshold on ||M - M_old||_F^2 / ||M_old||_F^2
    bool center_columns = false;
    bool scale_unit_frobenius = false;
    int threads = 1;          // worker count for per-subject sweeps; 0 = auto
};

struct TraceRow {
    int iteration;         // 1-based
    double objective;      // penalized objective after the reference update
    double reference_delta;
};

// Thin SVD X = L * diag(S) * Q^T with the deterministic sign convention
// (largest-magnitude entry of each left singular vector made positive, ties
// to the lowest index).
struct ThinSvd {
    Matrix L;   // t x t
    Vector S;   // length t, non-increasing
    Matrix Q;   // v x t, orthonormal columns
};

// Present on reduced-model results: everything needed to interpret the t x t
// transforms in voxel space.
struct ReducedInfo {
    std::vector<ThinSvd> factors;      // per subject
    Matrix Q_M;                        // v x t, from the initial reference
    Matrix reduced_reference;          // t x t final reference in reduced space
};

struct AlignmentResult {
    std::vector<OrthogonalTransform> transforms;
    std::vector<Matrix> aligned;       // t x v, back-projected when reduced
    Matrix reference;                  // t x v
    std::vector<TraceRow> trace;
    int iterations_run = 0;
    bool reduced = false;
    std::optional<ReducedInfo> projections;
    // True when the solution is not certified unique: always for k = 0, or
    // when some posterior parameter was numerically rank deficient.
    bool nonunique_warning = false;
    std::vector<std::string> notices;
};

// U V^T from the SVD of A, sign convention applied (a no-op for the product
// itself).  Sets *rank_deficient when the smallest singular value falls at or
// below kDefaultRankTol times the largest.
Matrix svd_polar(const Matrix& A, bool* rank_deficient = nullptr);

ThinSvd thin_svd(const Matrix& X);  // requires rows <= cols

// Regularized orthogonal Procrustes: R = U V^T from SVD(X^T M + k F).
// k = 0 gives the classic minimizer of ||X R - M||_F^2; F is required when
// k > 0.  A rank-deficient posterior parameter is reported through
// *rank_deficient, never an error.
OrthogonalTransform opp_solve(const Matrix& X, const Matrix& M, double k,
                              const Matrix* F = nullptr, bool* rank_deficient = nullptr);

// Sum of squared Frobenius distances to the reference.
double objective(const std::vector<Matrix>& aligned, const Matrix& M);

// sum_i [ ||X_i R_i - M||_F^2 - 2 k tr(F^T R_i) ]; the quantity the
// alternating sweep decreases.  k = 0 reduces to objective().
double penalized_objective(const Cohort& cohort,
                           const std::vector<OrthogonalTransform>& transforms,
                           const Matrix& M, double k, const Matrix* F);

// Alternating alignment with k = 0.  Identical code path (and hence bitwise
// identical output) to promises_align with k = 0.
AlignmentResult gpa_align(const Cohort& cohort, const AlignmentConfig& config,
                          const Matrix* initial_reference = nullptr);

// MAP alignment: per-subject SVD of X_i^T M + k F each sweep, reference
// updated to the mean of aligned data in ascending subject-index order.
// F may be null when k = 0.
AlignmentResult promises_align(const Cohort& cohort, const LocationMatrix* F,
                               const AlignmentConfig& config,
                               const Matrix* initial_reference = nullptr);

// Reduced model: per-subject thin SVD, sweep over the t x t matrices X_i Q_i
// with prior Q_i^T F Q_M (Q_M fixed from the initial reference), aligned data
// back-projected as X_i Q_i R_i Q_M^T.  Falls back to promises_align with a
// notice unless t < v.
AlignmentResult efficient_promises_align(const Cohort& cohort, const LocationMatrix* F,
                                         const AlignmentConfig& config);

// Sequential two-level alignment: subjects enter in `order` (empty = input
// order), each aligned to the running mean of those already aligned; a second
// pass re-aligns everyone to the first-pass mean.  Order-dependent by design.
AlignmentResult hyperalign(const Cohort& cohort, const std::vector<std::size_t>& order = {});

// One sweep against the mean of the (preprocessed) inputs, no iteration.
AlignmentResult single_pass_align(const Cohort& cohort, const LocationMatrix* F,
                                  const AlignmentConfig& config);

// Column centering / unit-Frobenius scaling as configured; both default off.
Matrix preprocess_scan(const Matrix& X, const AlignmentConfig& config);

}  // namespace promises
