#pragma once

#include "promises/eval.hpp"
#include "promises/matrix.hpp"
#include "promises/prior.hpp"

#include <vector>

namespace promises {

struct KGrid {
    std::vector<double> candidates;  // non-empty, strictly increasing
};

KGrid default_k_grid();  // {1, 2, ..., 100}

struct SelectionReport {
    struct PerK {
        double k;
        double mean_accuracy;
        std::vector<double> fold_accuracies;
    };
    double chosen_k = 0.0;
    std::vector<PerK> per_k;  // sorted by k
};

enum class EvaluatorId { LosoLinear, SegmentCorr };

// Scores every k on the given (outer-training) cohort with inner
// leave-one-subject-out folds and picks the argmax of mean inner accuracy,
// ties broken toward smaller k.  The evaluator decides which extras are
// needed: labels for LosoLinear, segment spec + split for SegmentCorr.
SelectionReport select_k(const Cohort& cohort, const std::vector<int>& labels,
                         const SegmentSpec* segment_spec, const SplitSpec* split,
                         const LocationMatrix& F, const KGrid& grid, EvaluatorId evaluator,
                         const EvalConfig& base);

}  // namespace promises
