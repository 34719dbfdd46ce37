#include "promises/diagnostics.hpp"

#include "promises/prior.hpp"
#include "promises/rng.hpp"
#include "promises/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace promises {

namespace {

// Seed streams for diagnostics trials.
constexpr std::uint64_t kStreamOrder = 300;
constexpr std::uint64_t kStreamRotation = 400;
constexpr std::uint64_t kStreamVoxelSample = 500;

AlignmentResult run_method(const Cohort& cohort, EngineId engine, const AlignmentConfig& config,
                           const LocationMatrix* F) {
    switch (engine) {
        case EngineId::Gpa: return gpa_align(cohort, config);
        case EngineId::Hyper: return hyperalign(cohort);
        case EngineId::Promises: return promises_align(cohort, F, config);
        case EngineId::PromisesEfficient: return efficient_promises_align(cohort, F, config);
        case EngineId::Opp: return single_pass_align(cohort, F, config);
        default:
            throw ValidationError("sensitivity experiments need an alignment engine");
    }
}

double population_variance(const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double x : values) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : values) var += (x - mean) * (x - mean);
    return var / n;
}

// Stacked Frobenius distance between two runs' aligned outputs, matched by
// subject_id so storage order never matters.
double aligned_distance(const AlignmentResult& a, const AlignmentResult& b) {
    std::map<std::string, const Matrix*> lookup;
    for (std::size_t i = 0; i < b.transforms.size(); ++i) {
        lookup[b.transforms[i].subject_id] = &b.aligned[i];
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.transforms.size(); ++i) {
        auto it = lookup.find(a.transforms[i].subject_id);
        if (it == lookup.end()) {
            throw ValidationError("aligned_distance: subject sets differ");
        }
        sum += (a.aligned[i] - *it->second).squaredNorm();
    }
    return std::sqrt(sum);
}

// Mean of the preprocessed inputs in ascending subject order: the reference
// the iterative engines would start from.
Matrix initial_reference(const Cohort& cohort, const AlignmentConfig& config) {
    Matrix sum = preprocess_scan(cohort.scans.front().data, config);
    for (std::size_t i = 1; i < cohort.m(); ++i) {
        sum += preprocess_scan(cohort.scans[i].data, config);
    }
    return sum / static_cast<double>(cohort.m());
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double h = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

SensitivityReport order_sensitivity(const Cohort& cohort, int n_perm, EngineId engine,
                                    const AlignmentConfig& config, const LocationMatrix* F,
                                    SensitivityMetric metric, std::uint64_t seed) {
    cohort.validate();
    if (n_perm < 2) throw ValidationError("order sensitivity needs at least 2 trials");

    SensitivityReport report;
    report.method = engine_to_string(engine);
    report.n_trials = n_perm;

    AlignmentResult baseline;
    for (int trial = 0; trial < n_perm; ++trial) {
        Cohort permuted;
        permuted.coords = cohort.coords;
        if (trial == 0) {
            permuted.scans = cohort.scans;
        } else {
            Rng rng(derive_seed(seed, kStreamOrder, static_cast<std::uint64_t>(trial)));
            for (std::size_t idx : rng.permutation(cohort.m())) {
                permuted.scans.push_back(cohort.scans[idx]);
            }
        }
        AlignmentResult result = run_method(permuted, engine, config, F);
        report.per_trial_objective.push_back(result.trace.back().objective);
        if (trial == 0) {
            report.per_trial_metric.push_back(0.0);
            baseline = std::move(result);
        } else if (metric == SensitivityMetric::ReferenceDistance) {
            report.per_trial_metric.push_back((result.reference - baseline.reference).norm());
        } else {
            report.per_trial_metric.push_back(aligned_distance(result, baseline));
        }
    }
    report.variance = population_variance(report.per_trial_metric);
    return report;
}

SensitivityReport reference_rotation_sensitivity(const Cohort& cohort, int n_rot,
                                                 std::uint64_t seed, EngineId engine,
                                                 const AlignmentConfig& config,
                                                 const LocationMatrix* F) {
    cohort.validate();
    if (n_rot < 2) throw ValidationError("rotation sensitivity needs at least 2 trials");
    if (engine != EngineId::Gpa && engine != EngineId::Promises) {
        throw ValidationError("rotation sensitivity applies to the iterative engines "
                              "(gpa, promises)");
    }

    SensitivityReport report;
    report.method = engine_to_string(engine);
    report.n_trials = n_rot;

    const Matrix M0 = initial_reference(cohort, config);
    AlignmentResult baseline;
    for (int trial = 0; trial < n_rot; ++trial) {
        Matrix init = M0;
        if (trial > 0) {
            init = M0 * haar_orthogonal(cohort.v(),
                                        derive_seed(seed, kStreamRotation,
                                                    static_cast<std::uint64_t>(trial)));
        }
        AlignmentResult result =
            engine == EngineId::Gpa ? gpa_align(cohort, config, &init)
                                    : promises_align(cohort, F, config, &init);
        report.per_trial_objective.push_back(result.trace.back().objective);
        if (trial == 0) {
            report.per_trial_metric.push_back(0.0);
            baseline = std::move(result);
        } else {
            report.per_trial_metric.push_back(aligned_distance(result, baseline));
        }
    }
    report.variance = population_variance(report.per_trial_metric);
    return report;
}

LocalityReport loading_locality(const AlignmentResult& result, const VoxelCoordinates& coords,
                                double bin_width, std::size_t voxel_sample, std::uint64_t seed) {
    if (result.transforms.empty()) throw ValidationError("loading_locality: empty result");
    if (!(bin_width > 0.0)) throw ValidationError("loading_locality: bin width must be positive");
    const Eigen::Index v = static_cast<Eigen::Index>(coords.size());
    if (result.reduced) {
        if (!result.projections) {
            throw ValidationError("loading_locality: reduced result lacks projections");
        }
    } else if (result.transforms.front().values.rows() != v) {
        throw ValidationError("loading_locality: transforms are " +
                              std::to_string(result.transforms.front().values.rows()) +
                              "-dimensional but coordinates describe " + std::to_string(v) +
                              " voxels");
    }

    const Matrix D = pairwise_distances(coords);
    const double max_dist = D.maxCoeff();
    const std::size_t n_bins = static_cast<std::size_t>(std::floor(max_dist / bin_width)) + 1;

    LocalityReport report;
    report.bin_edges.resize(n_bins + 1);
    for (std::size_t b = 0; b <= n_bins; ++b) {
        report.bin_edges[b] = static_cast<double>(b) * bin_width;
    }

    // Seeded sample of target voxels, reported in ascending order.
    std::vector<std::size_t> sample;
    if (voxel_sample >= static_cast<std::size_t>(v)) {
        sample.resize(static_cast<std::size_t>(v));
        for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = i;
    } else {
        if (voxel_sample == 0) throw ValidationError("loading_locality: empty voxel sample");
        Rng rng(derive_seed(seed, kStreamVoxelSample));
        auto perm = rng.permutation(static_cast<std::size_t>(v));
        sample.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(voxel_sample));
        std::sort(sample.begin(), sample.end());
    }
    report.sampled_voxels = sample;

    std::vector<std::vector<double>> bin_values(n_bins);
    std::vector<std::vector<double>> curves;  // one cumulative curve per (subject, target)
    std::size_t skipped_columns = 0;

    for (std::size_t i = 0; i < result.transforms.size(); ++i) {
        Matrix T;
        if (result.reduced) {
            const auto& Q = result.projections->factors[i].Q;
            T = Q * result.transforms[i].values * result.projections->Q_M.transpose();
        } else {
            T = result.transforms[i].values;
        }
        for (std::size_t c : sample) {
            const auto col = T.col(static_cast<Eigen::Index>(c));
            std::vector<double> mass(n_bins, 0.0);
            double total = 0.0;
            for (Eigen::Index s = 0; s < v; ++s) {
                const double r = col(s);
                const double dist = D(s, static_cast<Eigen::Index>(c));
                std::size_t b = static_cast<std::size_t>(std::floor(dist / bin_width));
                if (b >= n_bins) b = n_bins - 1;
                bin_values[b].push_back(std::abs(r));
                mass[b] += r * r;
                total += r * r;
            }
            if (total == 0.0) {
                ++skipped_columns;
                continue;
            }
            std::vector<double> curve(n_bins);
            double acc = 0.0;
            for (std::size_t b = 0; b < n_bins; ++b) {
                acc += mass[b];
                curve[b] = acc / total;
            }
            curves.push_back(std::move(curve));
        }
    }
    if (curves.empty()) throw NumericError("loading_locality: all sampled columns are zero");
    if (skipped_columns > 0) {
        report.notices.push_back(std::to_string(skipped_columns) +
                                 " zero column(s) skipped in the cumulative statistics");
    }

    report.per_bin.resize(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        auto& values = bin_values[b];
        report.per_bin[b].count = values.size();
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        report.per_bin[b].q1 = quantile_sorted(values, 0.25);
        report.per_bin[b].median = quantile_sorted(values, 0.5);
        report.per_bin[b].q3 = quantile_sorted(values, 0.75);
    }

    report.cumulative_sq_loading.resize(n_bins);
    std::vector<double> column(curves.size());
    for (std::size_t b = 0; b < n_bins; ++b) {
        for (std::size_t i = 0; i < curves.size(); ++i) column[i] = curves[i][b];
        std::sort(column.begin(), column.end());
        report.cumulative_sq_loading[b] = quantile_sorted(column, 0.5);
    }
    return report;
}

double locality_crossing(const LocalityReport& report, double frac) {
    for (std::size_t b = 0; b < report.cumulative_sq_loading.size(); ++b) {
        if (report.cumulative_sq_loading[b] >= frac) return report.bin_edges[b + 1];
    }
    return report.bin_edges.back();
}

}  // namespace promises
