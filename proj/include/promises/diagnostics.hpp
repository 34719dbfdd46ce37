#pragma once

#include "promises/align.hpp"
#include "promises/eval.hpp"
#include "promises/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace promises {

enum class SensitivityMetric { ReferenceDistance, AlignedOutputDistance };

struct SensitivityReport {
    std::string method;
    int n_trials = 0;
    std::vector<double> per_trial_metric;     // distance to trial 0
    std::vector<double> per_trial_objective;  // final trace objective per trial
    double variance = 0.0;                    // population variance of the metric
};

// Runs the engine under n_perm subject orders (trial 0 = input order, the
// rest seeded random permutations), records the chosen distance metric
// against trial 0 with outputs matched by subject_id.
SensitivityReport order_sensitivity(const Cohort& cohort, int n_perm, EngineId engine,
                                    const AlignmentConfig& config, const LocationMatrix* F,
                                    SensitivityMetric metric, std::uint64_t seed);

// Runs the engine n_rot times, trial g initialized with reference M0 * G_g
// for Haar G (trial 0: G = I); records aligned-output distance to trial 0 and
// the final objective per trial.  Engine is gpa by default; promises shows
// the same experiment collapsing to one solution when k > 0.
SensitivityReport reference_rotation_sensitivity(const Cohort& cohort, int n_rot,
                                                 std::uint64_t seed,
                                                 EngineId engine = EngineId::Gpa,
                                                 const AlignmentConfig& config = {},
                                                 const LocationMatrix* F = nullptr);

struct LocalityReport {
    std::vector<double> bin_edges;  // unit-width bins [e_b, e_{b+1})
    struct BinStat {
        std::size_t count = 0;
        double q1 = 0.0, median = 0.0, q3 = 0.0;  // of |loading|
    };
    std::vector<BinStat> per_bin;
    // Median over (subject, sampled voxel) of the cumulative proportion of
    // squared loadings within distance < bin_edges[b+1].  Non-decreasing,
    // 1.0 in the last bin.
    std::vector<double> cumulative_sq_loading;
    std::vector<std::size_t> sampled_voxels;
    std::vector<std::string> notices;
};

// Voxel-space loading locality: for a seeded sample of target voxels, the
// column of the (back-projected, for reduced results) transform gives the
// source-voxel loadings; magnitudes are binned by Euclidean source-target
// distance.
LocalityReport loading_locality(const AlignmentResult& result, const VoxelCoordinates& coords,
                                double bin_width, std::size_t voxel_sample, std::uint64_t seed);

// Upper edge of the first bin whose cumulative squared loading reaches frac
// (the last edge when none does).
double locality_crossing(const LocalityReport& report, double frac);

}  // namespace promises
