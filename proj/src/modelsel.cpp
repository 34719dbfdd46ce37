#include "promises/modelsel.hpp"

#include <string>

namespace promises {

KGrid default_k_grid() {
    KGrid grid;
    grid.candidates.reserve(100);
    for (int k = 1; k <= 100; ++k) grid.candidates.push_back(static_cast<double>(k));
    return grid;
}

SelectionReport select_k(const Cohort& cohort, const std::vector<int>& labels,
                         const SegmentSpec* segment_spec, const SplitSpec* split,
                         const LocationMatrix& F, const KGrid& grid, EvaluatorId evaluator,
                         const EvalConfig& base) {
    if (grid.candidates.empty()) throw ValidationError("k grid must be non-empty");
    for (std::size_t i = 0; i < grid.candidates.size(); ++i) {
        if (grid.candidates[i] < 0.0) throw ValidationError("k candidates must be nonnegative");
        if (i > 0 && grid.candidates[i] <= grid.candidates[i - 1]) {
            throw ValidationError("k grid must be strictly increasing");
        }
    }
    if (base.engine != EngineId::Opp && base.engine != EngineId::Promises &&
        base.engine != EngineId::PromisesEfficient) {
        throw ValidationError("select_k needs an engine that uses k (opp, promises, "
                              "promises-efficient)");
    }
    if (evaluator == EvaluatorId::LosoLinear && labels.empty()) {
        throw ValidationError("the loso-linear evaluator needs labels");
    }
    if (evaluator == EvaluatorId::SegmentCorr && (segment_spec == nullptr || split == nullptr)) {
        throw ValidationError("the segment-corr evaluator needs a segment spec and split");
    }

    SelectionReport report;
    bool have_best = false;
    double best_mean = 0.0;

    // Ascending scan with strict improvement keeps ties on the smaller k.
    for (double k : grid.candidates) {
        EvalConfig config = base;
        config.align.k = k;
        config.prior = F;

        ClassificationReport inner;
        if (evaluator == EvaluatorId::LosoLinear) {
            inner = loso_linear_classify({cohort, labels}, config);
        } else {
            inner = segment_correlation_classify(cohort, *segment_spec, config, *split);
        }

        report.per_k.push_back({k, inner.mean_accuracy, inner.per_subject_accuracy});
        if (!have_best || inner.mean_accuracy > best_mean) {
            have_best = true;
            best_mean = inner.mean_accuracy;
            report.chosen_k = k;
        }
    }
    return report;
}

}  // namespace promises
