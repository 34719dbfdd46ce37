#pragma once

#include "promises/align.hpp"
#include "promises/matrix.hpp"
#include "promises/prior.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace promises {

enum class EngineId { None, Opp, Gpa, Hyper, Promises, PromisesEfficient };

EngineId engine_from_string(const std::string& name);
std::string engine_to_string(EngineId id);

struct LabeledCohort {
    Cohort cohort;
    std::vector<int> labels;  // one class id per time point
};

struct SegmentSpec {
    int segment_length = 6;
    int stride = 6;
};

// Time ranges [begin, end) used by the segment protocol; alignment is fitted
// on the train range only.
struct SplitSpec {
    Eigen::Index train_begin = 0;
    Eigen::Index train_end = 0;
    Eigen::Index test_begin = 0;
    Eigen::Index test_end = 0;
};

SplitSpec half_split(Eigen::Index t);

// Alignment choice for an evaluation run.  The prior is stored by value so
// reports stay self-contained.
struct EvalConfig {
    EngineId engine = EngineId::Promises;
    AlignmentConfig align;
    std::optional<LocationMatrix> prior;
    double ridge = 1.0;
};

struct ClassificationReport {
    double mean_accuracy = 0.0;
    std::vector<std::string> subject_ids;
    std::vector<double> per_subject_accuracy;
    // Mean over folds of the fitted weight vector per class pair (a < b),
    // in the space the classifier saw (voxel space for full-space engines).
    std::map<std::pair<int, int>, Vector> coefficient_maps;
    std::vector<std::string> notices;
};

// Leave-one-subject-out protocol: alignment fitted on the m-1 training
// subjects, the held-out subject mapped by one opp_solve against the trained
// reference (same k and F), one-versus-one ridge classifiers trained on the
// aligned training rows, held-out rows classified by vote.
ClassificationReport loso_linear_classify(const LabeledCohort& data, const EvalConfig& config);

// Correlation-segment 1-NN: alignment fitted on the train half; each aligned
// held-out test segment is matched against the training subjects' mean test
// segments by Pearson correlation, correct only on a strict maximum at the
// true position.
ClassificationReport segment_correlation_classify(const Cohort& cohort, const SegmentSpec& spec,
                                                  const EvalConfig& config, const SplitSpec& split);

}  // namespace promises
