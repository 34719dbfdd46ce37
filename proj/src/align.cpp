#include "promises/align.hpp"

#include "promises/threads.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>
#include <vector>

namespace promises {

namespace {

// Sign convention shared by every SVD in the library: the largest-magnitude
// entry of each left singular vector is made positive (ties to the lowest
// index), with the matching right vector flipped in tandem.  The product
// U V^T is unchanged; the individual factors become reproducible.
void apply_sign_convention(Matrix& U, Matrix& V) {
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
        Eigen::Index imax = 0;
        double best = std::abs(U(0, j));
        for (Eigen::Index i = 1; i < U.rows(); ++i) {
            double a = std::abs(U(i, j));
            if (a > best) {
                best = a;
                imax = i;
            }
        }
        if (U(imax, j) < 0) {
            U.col(j) = -U.col(j);
            V.col(j) = -V.col(j);
        }
    }
}

// Mean accumulated in ascending index order; floating-point addition is not
// associative, so the fixed order is what makes results schedule-independent.
Matrix ascending_mean(const std::vector<Matrix>& items) {
    Matrix sum = items.front();
    for (std::size_t i = 1; i < items.size(); ++i) sum += items[i];
    return sum / static_cast<double>(items.size());
}

struct EngineOutput {
    std::vector<Matrix> transforms;
    std::vector<Matrix> aligned;
    Matrix reference;
    std::vector<TraceRow> trace;
    bool rank_deficient = false;
};

// Alternating sweep shared by the full and reduced models.  `priors[i]` is
// the (possibly per-subject) prior location parameter, ignored when k = 0;
// the k = 0 path performs exactly the same arithmetic as an unregularized
// run, which is what makes gpa_align bitwise identical to promises_align
// with k = 0.
EngineOutput run_sweeps(const std::vector<Matrix>& X, const std::vector<const Matrix*>& priors,
                        const AlignmentConfig& config, const Matrix* initial_reference) {
    const std::size_t m = X.size();
    EngineOutput out;
    out.transforms.resize(m);
    out.aligned.resize(m);
    std::vector<char> rank_flags(m, 0);

    Matrix M = initial_reference ? *initial_reference : ascending_mean(X);
    for (int iter = 1; iter <= config.max_iter; ++iter) {
        parallel_for(m, config.threads, [&](std::size_t i) {
            Matrix A = X[i].transpose() * M;
            if (config.k != 0.0) A += config.k * (*priors[i]);
            bool deficient = false;
            out.transforms[i] = svd_polar(A, &deficient);
            rank_flags[i] = deficient ? 1 : 0;
            out.aligned[i] = X[i] * out.transforms[i];
        });

        Matrix M_old = std::move(M);
        M = ascending_mean(out.aligned);

        const double denom = M_old.squaredNorm();
        const double delta = (M - M_old).squaredNorm() / (denom > 0.0 ? denom : 1.0);

        double fit = 0.0;
        for (std::size_t i = 0; i < m; ++i) fit += (out.aligned[i] - M).squaredNorm();
        if (config.k != 0.0) {
            double penalty = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                penalty += priors[i]->cwiseProduct(out.transforms[i]).sum();
            }
            fit -= 2.0 * config.k * penalty;
        }
        out.trace.push_back({iter, fit, delta});
        if (delta < config.tol) break;
    }
    out.reference = std::move(M);
    for (char flag : rank_flags) out.rank_deficient |= (flag != 0);
    return out;
}

void validate_alignment_inputs(const Cohort& cohort, const LocationMatrix* F,
                               const AlignmentConfig& config, bool reduced_prior_allowed) {
    cohort.validate();
    if (config.k < 0.0) throw ValidationError("concentration k must be nonnegative");
    if (config.max_iter < 1) throw ValidationError("max_iter must be at least 1");
    if (!(config.tol > 0.0)) throw ValidationError("tol must be positive");
    if (config.k > 0.0) {
        if (F == nullptr) {
            throw ValidationError("k > 0 requires a location matrix");
        }
        if (F->values.rows() != cohort.v()) {
            throw ValidationError("location matrix is " + std::to_string(F->values.rows()) +
                                  "x" + std::to_string(F->values.cols()) +
                                  " but cohort has v = " + std::to_string(cohort.v()));
        }
    }
    (void)reduced_prior_allowed;
}

std::vector<Matrix> preprocess_all(const Cohort& cohort, const AlignmentConfig& config) {
    std::vector<Matrix> X;
    X.reserve(cohort.m());
    for (const auto& scan : cohort.scans) {
        try {
            X.push_back(preprocess_scan(scan.data, config));
        } catch (const NumericError& e) {
            throw NumericError("subject '" + scan.subject_id + "': " + e.what());
        }
    }
    return X;
}

void attach_common_fields(AlignmentResult& result, const Cohort& cohort,
                          const AlignmentConfig& config, EngineOutput&& out) {
    result.transforms.resize(cohort.m());
    for (std::size_t i = 0; i < cohort.m(); ++i) {
        result.transforms[i] = {cohort.scans[i].subject_id, std::move(out.transforms[i])};
    }
    result.aligned = std::move(out.aligned);
    result.reference = std::move(out.reference);
    result.trace = std::move(out.trace);
    result.iterations_run = static_cast<int>(result.trace.size());
    result.nonunique_warning = (config.k == 0.0) || out.rank_deficient;
    if (config.k == 0.0) {
        result.notices.push_back("k = 0: solution set is rotation-invariant, result not unique");
    } else if (out.rank_deficient) {
        result.notices.push_back(
            "posterior parameter numerically rank deficient for at least one subject; "
            "solution returned but not certified unique");
    }
}

}  // namespace

Matrix svd_polar(const Matrix& A, bool* rank_deficient) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix U = svd.matrixU();
    Matrix V = svd.matrixV();
    apply_sign_convention(U, V);
    if (rank_deficient != nullptr) {
        const auto& s = svd.singularValues();
        *rank_deficient = !(s(s.size() - 1) > kDefaultRankTol * s(0));
    }
    return U * V.transpose();
}

ThinSvd thin_svd(const Matrix& X) {
    if (X.rows() > X.cols()) {
        throw ValidationError("thin_svd expects rows <= cols, got " + std::to_string(X.rows()) +
                              "x" + std::to_string(X.cols()));
    }
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThinSvd result;
    result.L = svd.matrixU();
    result.Q = svd.matrixV();
    result.S = svd.singularValues();
    apply_sign_convention(result.L, result.Q);
    return result;
}

OrthogonalTransform opp_solve(const Matrix& X, const Matrix& M, double k, const Matrix* F,
                              bool* rank_deficient) {
    if (X.rows() != M.rows() || X.cols() != M.cols()) {
        throw ValidationError("opp_solve: X and M must share dimensions");
    }
    if (k < 0.0) throw ValidationError("opp_solve: k must be nonnegative");
    Matrix A = X.transpose() * M;
    if (k > 0.0) {
        if (F == nullptr) throw ValidationError("opp_solve: k > 0 requires a location matrix");
        if (F->rows() != A.rows() || F->cols() != A.cols()) {
            throw ValidationError("opp_solve: location matrix dimension mismatch");
        }
        A += k * (*F);
    }
    OrthogonalTransform result;
    result.values = svd_polar(A, rank_deficient);
    return result;
}

double objective(const std::vector<Matrix>& aligned, const Matrix& M) {
    double total = 0.0;
    for (const auto& a : aligned) {
        if (a.rows() != M.rows() || a.cols() != M.cols()) {
            throw ValidationError("objective: shape mismatch against the reference");
        }
        total += (a - M).squaredNorm();
    }
    return total;
}

double penalized_objective(const Cohort& cohort, const std::vector<OrthogonalTransform>& transforms,
                           const Matrix& M, double k, const Matrix* F) {
    if (transforms.size() != cohort.m()) {
        throw ValidationError("penalized_objective: one transform per subject required");
    }
    if (k > 0.0 && F == nullptr) {
        throw ValidationError("penalized_objective: k > 0 requires a location matrix");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < cohort.m(); ++i) {
        total += (cohort.scans[i].data * transforms[i].values - M).squaredNorm();
        if (k != 0.0) total -= 2.0 * k * F->cwiseProduct(transforms[i].values).sum();
    }
    return total;
}

Matrix preprocess_scan(const Matrix& X, const AlignmentConfig& config) {
    Matrix out = X;
    if (config.center_columns) {
        out.rowwise() -= out.colwise().mean();
    }
    if (config.scale_unit_frobenius) {
        const double norm = out.norm();
        if (norm == 0.0) throw NumericError("zero Frobenius norm, cannot scale");
        out /= norm;
    }
    return out;
}

AlignmentResult promises_align(const Cohort& cohort, const LocationMatrix* F,
                               const AlignmentConfig& config, const Matrix* initial_reference) {
    validate_alignment_inputs(cohort, F, config, false);
    std::vector<Matrix> X = preprocess_all(cohort, config);
    std::vector<const Matrix*> priors(cohort.m(),
                                      config.k > 0.0 ? &F->values : nullptr);
    EngineOutput out = run_sweeps(X, priors, config, initial_reference);
    AlignmentResult result;
    attach_common_fields(result, cohort, config, std::move(out));
    return result;
}

AlignmentResult gpa_align(const Cohort& cohort, const AlignmentConfig& config,
                          const Matrix* initial_reference) {
    if (config.k != 0.0) {
        throw ValidationError("gpa_align ignores k; set k = 0 or use promises_align");
    }
    return promises_align(cohort, nullptr, config, initial_reference);
}

AlignmentResult efficient_promises_align(const Cohort& cohort, const LocationMatrix* F,
                                         const AlignmentConfig& config) {
    validate_alignment_inputs(cohort, F, config, true);
    if (cohort.t() >= cohort.v()) {
        AlignmentResult result = promises_align(cohort, F, config);
        result.notices.push_back("t >= v: reduced model falls back to the full path");
        return result;
    }
    std::vector<Matrix> X = preprocess_all(cohort, config);
    const std::size_t m = cohort.m();

    ReducedInfo info;
    info.factors.resize(m);
    std::vector<Matrix> X_red(m);
    parallel_for(m, config.threads, [&](std::size_t i) {
        info.factors[i] = thin_svd(X[i]);
        X_red[i] = X[i] * info.factors[i].Q;  // t x t
    });

    const Matrix M0_full = ascending_mean(X);
    info.Q_M = thin_svd(M0_full).Q;
    // M0_full has rank <= t, so M0_red * Q_M^T reproduces it exactly and the
    // reduced sweep starts where the full sweep starts.
    const Matrix M0_red = M0_full * info.Q_M;

    std::vector<Matrix> reduced_priors(m);
    std::vector<const Matrix*> priors(m, nullptr);
    if (config.k > 0.0) {
        parallel_for(m, config.threads, [&](std::size_t i) {
            reduced_priors[i] = info.factors[i].Q.transpose() * F->values * info.Q_M;
        });
        for (std::size_t i = 0; i < m; ++i) priors[i] = &reduced_priors[i];
    }

    EngineOutput out = run_sweeps(X_red, priors, config, &M0_red);
    info.reduced_reference = out.reference;

    // Back-projection: aligned_i = X_i Q_i R_i Q_M^T, always t x v.  The
    // shared right factor keeps every subject in the reference frame.
    std::vector<Matrix> aligned(m);
    parallel_for(m, config.threads, [&](std::size_t i) {
        aligned[i] = out.aligned[i] * info.Q_M.transpose();
    });
    Matrix reference = ascending_mean(aligned);

    AlignmentResult result;
    attach_common_fields(result, cohort, config, std::move(out));
    result.aligned = std::move(aligned);
    result.reference = std::move(reference);
    result.reduced = true;
    result.projections = std::move(info);
    return result;
}

AlignmentResult hyperalign(const Cohort& cohort, const std::vector<std::size_t>& order) {
    cohort.validate();
    const std::size_t m = cohort.m();
    std::vector<std::size_t> seq = order;
    if (seq.empty()) {
        seq.resize(m);
        for (std::size_t i = 0; i < m; ++i) seq[i] = i;
    }
    if (seq.size() != m) throw ValidationError("hyperalign: order must list every subject once");
    std::vector<char> seen(m, 0);
    for (std::size_t idx : seq) {
        if (idx >= m || seen[idx]) {
            throw ValidationError("hyperalign: order must be a permutation of subject indices");
        }
        seen[idx] = 1;
    }

    std::vector<Matrix> X(m);
    for (std::size_t i = 0; i < m; ++i) X[i] = cohort.scans[i].data;
    const Matrix M0 = ascending_mean(X);
    const Eigen::Index v = cohort.v();

    // Level 1: the first subject anchors the space; each next subject is
    // aligned to the running mean of those already placed.
    std::vector<Matrix> aligned(m);
    std::vector<Matrix> R(m);
    aligned[seq[0]] = X[seq[0]];
    R[seq[0]] = Matrix::Identity(v, v);
    Matrix running = X[seq[0]];
    for (std::size_t step = 1; step < m; ++step) {
        const std::size_t idx = seq[step];
        R[idx] = opp_solve(X[idx], running, 0.0).values;
        aligned[idx] = X[idx] * R[idx];
        running = (running * static_cast<double>(step) + aligned[idx]) /
                  static_cast<double>(step + 1);
    }
    const Matrix level1_mean = ascending_mean(aligned);
    const double denom0 = M0.squaredNorm();
    std::vector<TraceRow> trace;
    trace.push_back({1, objective(aligned, level1_mean),
                     (level1_mean - M0).squaredNorm() / (denom0 > 0.0 ? denom0 : 1.0)});

    // Level 2: everyone re-aligned to the level-1 mean.
    for (std::size_t i = 0; i < m; ++i) {
        R[i] = opp_solve(X[i], level1_mean, 0.0).values;
        aligned[i] = X[i] * R[i];
    }
    const Matrix reference = ascending_mean(aligned);
    const double denom1 = level1_mean.squaredNorm();
    trace.push_back({2, objective(aligned, reference),
                     (reference - level1_mean).squaredNorm() / (denom1 > 0.0 ? denom1 : 1.0)});

    AlignmentResult result;
    result.transforms.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        result.transforms[i] = {cohort.scans[i].subject_id, std::move(R[i])};
    }
    result.aligned = std::move(aligned);
    result.reference = reference;
    result.trace = std::move(trace);
    result.iterations_run = 2;
    result.nonunique_warning = true;
    result.notices.push_back("sequential alignment is order-dependent; every subject order "
                             "yields a different but equally valid solution");
    return result;
}

AlignmentResult single_pass_align(const Cohort& cohort, const LocationMatrix* F,
                                  const AlignmentConfig& config) {
    AlignmentConfig cfg = config;
    cfg.max_iter = 1;
    return promises_align(cohort, F, cfg);
}

}  // namespace promises
