#include "promises/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

namespace promises {

namespace {

// v x v voxel-space action of subject i's transform; reduced transforms are
// expanded through their projections.
Matrix full_space_action(const AlignmentResult& result, std::size_t i) {
    if (!result.reduced) return result.transforms[i].values;
    const auto& Q = result.projections->factors[i].Q;
    return Q * result.transforms[i].values * Q.transpose();
}

struct FittedAlignment {
    AlignmentResult result;
    bool identity = false;  // engine None: no transforms at all
};

FittedAlignment fit_engine(const Cohort& cohort, const EvalConfig& config) {
    FittedAlignment fit;
    const LocationMatrix* F = config.prior ? &*config.prior : nullptr;
    switch (config.engine) {
        case EngineId::None: {
            fit.identity = true;
            fit.result.aligned.reserve(cohort.m());
            for (const auto& scan : cohort.scans) fit.result.aligned.push_back(scan.data);
            Matrix sum = cohort.scans.front().data;
            for (std::size_t i = 1; i < cohort.m(); ++i) sum += cohort.scans[i].data;
            fit.result.reference = sum / static_cast<double>(cohort.m());
            for (const auto& scan : cohort.scans) {
                fit.result.transforms.push_back(
                    {scan.subject_id, Matrix::Identity(cohort.v(), cohort.v())});
            }
            break;
        }
        case EngineId::Opp:
            fit.result = single_pass_align(cohort, F, config.align);
            break;
        case EngineId::Gpa:
            fit.result = gpa_align(cohort, config.align);
            break;
        case EngineId::Hyper:
            fit.result = hyperalign(cohort);
            break;
        case EngineId::Promises:
            fit.result = promises_align(cohort, F, config.align);
            break;
        case EngineId::PromisesEfficient:
            fit.result = efficient_promises_align(cohort, F, config.align);
            break;
    }
    return fit;
}

// Maps the held-out subject onto the trained reference: one regularized OPP
// solve with the same k and F the engine used (k = 0 for gpa/hyper), identity
// for engine None.  The held-out subject never touches the reference.
Matrix map_held_out(const Matrix& X_held, const FittedAlignment& fit, const EvalConfig& config) {
    if (fit.identity) return X_held;
    Matrix X = preprocess_scan(X_held, config.align);
    double k = 0.0;
    const Matrix* F = nullptr;
    if (config.engine == EngineId::Opp || config.engine == EngineId::Promises ||
        config.engine == EngineId::PromisesEfficient) {
        k = config.align.k;
        if (k > 0.0) F = &config.prior->values;
    }
    return X * opp_solve(X, fit.result.reference, k, F).values;
}

std::vector<int> sorted_classes(const std::vector<int>& labels) {
    std::set<int> s(labels.begin(), labels.end());
    return std::vector<int>(s.begin(), s.end());
}

struct PairClassifier {
    int a, b;
    Vector w;
    double bias;
};

// Closed-form ridge fit on the rows of the two classes, y = +1 for a and -1
// for b, features and targets centered so the intercept stays unpenalized.
PairClassifier fit_pair(const Matrix& Z, const std::vector<int>& labels, int a, int b,
                        double ridge) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
        if (labels[static_cast<std::size_t>(r)] == a || labels[static_cast<std::size_t>(r)] == b) {
            rows.push_back(r);
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index v = Z.cols();
    Matrix Za(n, v);
    Vector y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        Za.row(r) = Z.row(rows[static_cast<std::size_t>(r)]);
        y(r) = labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])] == a ? 1.0
                                                                                       : -1.0;
    }
    const Eigen::RowVectorXd mu = Za.colwise().mean();
    const double y_mean = y.mean();
    Za.rowwise() -= mu;
    y.array() -= y_mean;
    Matrix gram = Za.transpose() * Za;
    gram.diagonal().array() += ridge;
    PairClassifier cls;
    cls.a = a;
    cls.b = b;
    cls.w = gram.ldlt().solve(Za.transpose() * y);
    cls.bias = y_mean - mu.dot(cls.w);
    return cls;
}

int predict_vote(const std::vector<PairClassifier>& classifiers, const std::vector<int>& classes,
                 const Eigen::RowVectorXd& x) {
    std::map<int, int> votes;
    for (int c : classes) votes[c] = 0;
    for (const auto& cls : classifiers) {
        const double score = cls.w.dot(x) + cls.bias;
        votes[score > 0.0 ? cls.a : cls.b] += 1;
    }
    int best_class = classes.front();
    int best_votes = -1;
    for (int c : classes) {  // ascending: ties go to the smallest class id
        if (votes[c] > best_votes) {
            best_votes = votes[c];
            best_class = c;
        }
    }
    return best_class;
}

Vector flatten_segment(const Matrix& data, Eigen::Index row_begin, Eigen::Index rows) {
    Vector out(rows * data.cols());
    Eigen::Index pos = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < data.cols(); ++c) out(pos++) = data(row_begin + r, c);
    }
    return out;
}

// Pearson correlation; NaN signals a zero-variance input.
double pearson(const Vector& x, const Vector& y) {
    const double mx = x.mean(), my = y.mean();
    const Vector xc = x.array() - mx;
    const Vector yc = y.array() - my;
    const double sx = xc.squaredNorm(), sy = yc.squaredNorm();
    if (sx == 0.0 || sy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return xc.dot(yc) / std::sqrt(sx * sy);
}

void validate_eval_config(const Cohort& cohort, const EvalConfig& config) {
    cohort.validate();
    if (config.align.k < 0.0) throw ValidationError("concentration k must be nonnegative");
    if (config.align.k > 0.0 &&
        (config.engine == EngineId::Gpa || config.engine == EngineId::Hyper ||
         config.engine == EngineId::None)) {
        throw ValidationError("k > 0 only applies to the opp/promises engines");
    }
    if (config.align.k > 0.0 && !config.prior) {
        throw ValidationError("k > 0 requires a location matrix");
    }
    if (config.engine != EngineId::None && cohort.m() < 3) {
        throw ValidationError("leave-one-subject-out with an alignment engine needs at least "
                              "3 subjects (training folds must keep 2)");
    }
    if (config.ridge <= 0.0) throw ValidationError("ridge penalty must be positive");
}

Cohort drop_subject(const Cohort& cohort, std::size_t h) {
    Cohort out;
    out.coords = cohort.coords;
    for (std::size_t i = 0; i < cohort.m(); ++i) {
        if (i != h) out.scans.push_back(cohort.scans[i]);
    }
    return out;
}

}  // namespace

EngineId engine_from_string(const std::string& name) {
    if (name == "none") return EngineId::None;
    if (name == "opp") return EngineId::Opp;
    if (name == "gpa") return EngineId::Gpa;
    if (name == "hyper") return EngineId::Hyper;
    if (name == "promises") return EngineId::Promises;
    if (name == "promises-efficient") return EngineId::PromisesEfficient;
    throw ValidationError("unknown engine '" + name +
                          "' (expected none, opp, gpa, hyper, promises, promises-efficient)");
}

std::string engine_to_string(EngineId id) {
    switch (id) {
        case EngineId::None: return "none";
        case EngineId::Opp: return "opp";
        case EngineId::Gpa: return "gpa";
        case EngineId::Hyper: return "hyper";
        case EngineId::Promises: return "promises";
        case EngineId::PromisesEfficient: return "promises-efficient";
    }
    return "unknown";
}

SplitSpec half_split(Eigen::Index t) {
    SplitSpec split;
    split.train_begin = 0;
    split.train_end = t / 2;
    split.test_begin = t / 2;
    split.test_end = t;
    return split;
}

ClassificationReport loso_linear_classify(const LabeledCohort& data, const EvalConfig& config) {
    const Cohort& cohort = data.cohort;
    validate_eval_config(cohort, config);
    if (static_cast<Eigen::Index>(data.labels.size()) != cohort.t()) {
        throw ValidationError("labels must list one class per time point (" +
                              std::to_string(data.labels.size()) + " labels, t = " +
                              std::to_string(cohort.t()) + ")");
    }
    const std::vector<int> classes = sorted_classes(data.labels);
    if (classes.size() < 2) throw ValidationError("classification needs at least 2 classes");
    for (int c : classes) {
        const auto count = std::count(data.labels.begin(), data.labels.end(), c);
        if (count < 2) {
            throw ValidationError("class " + std::to_string(c) + " has a single sample");
        }
    }

    const std::size_t m = cohort.m();
    const Eigen::Index t = cohort.t();
    const Eigen::Index v = cohort.v();

    ClassificationReport report;
    std::map<std::pair<int, int>, Vector> map_sums;

    for (std::size_t h = 0; h < m; ++h) {
        Cohort train = drop_subject(cohort, h);
        FittedAlignment fit = fit_engine(train, config);
        Matrix held = map_held_out(cohort.scans[h].data, fit, config);

        // Stacked aligned training rows; labels repeat per subject because
        // rows are time-synchronized across the cohort.
        const std::size_t n_train = train.m();
        Matrix Z(static_cast<Eigen::Index>(n_train) * t, v);
        std::vector<int> z_labels(static_cast<std::size_t>(Z.rows()));
        for (std::size_t i = 0; i < n_train; ++i) {
            Z.middleRows(static_cast<Eigen::Index>(i) * t, t) = fit.result.aligned[i];
            for (Eigen::Index r = 0; r < t; ++r) {
                z_labels[i * static_cast<std::size_t>(t) + static_cast<std::size_t>(r)] =
                    data.labels[static_cast<std::size_t>(r)];
            }
        }

        std::vector<PairClassifier> classifiers;
        for (std::size_t ai = 0; ai < classes.size(); ++ai) {
            for (std::size_t bi = ai + 1; bi < classes.size(); ++bi) {
                classifiers.push_back(
                    fit_pair(Z, z_labels, classes[ai], classes[bi], config.ridge));
            }
        }

        Eigen::Index correct = 0;
        for (Eigen::Index r = 0; r < t; ++r) {
            const int predicted = predict_vote(classifiers, classes, held.row(r));
            if (predicted == data.labels[static_cast<std::size_t>(r)]) ++correct;
        }
        report.subject_ids.push_back(cohort.scans[h].subject_id);
        report.per_subject_accuracy.push_back(static_cast<double>(correct) /
                                              static_cast<double>(t));

        for (const auto& cls : classifiers) {
            auto key = std::make_pair(cls.a, cls.b);
            auto it = map_sums.find(key);
            if (it == map_sums.end()) {
                map_sums.emplace(key, cls.w);
            } else {
                it->second += cls.w;
            }
        }
    }

    double total = 0.0;
    for (double a : report.per_subject_accuracy) total += a;
    report.mean_accuracy = total / static_cast<double>(m);
    for (auto& [key, sum] : map_sums) {
        report.coefficient_maps.emplace(key, sum / static_cast<double>(m));
    }
    return report;
}

ClassificationReport segment_correlation_classify(const Cohort& cohort, const SegmentSpec& spec,
                                                  const EvalConfig& config,
                                                  const SplitSpec& split) {
    validate_eval_config(cohort, config);
    if (spec.segment_length < 1 || spec.stride < 1) {
        throw ValidationError("segment length and stride must be positive");
    }
    const Eigen::Index t = cohort.t();
    if (split.train_begin < 0 || split.train_begin >= split.train_end || split.train_end > t ||
        split.test_begin < 0 || split.test_begin >= split.test_end || split.test_end > t) {
        throw ValidationError("split ranges must be non-empty and lie within [0, t)");
    }
    const Eigen::Index test_len = split.test_end - split.test_begin;
    Eigen::Index n_seg = 0;
    while (n_seg * spec.stride + spec.segment_length <= test_len) ++n_seg;
    if (n_seg < 2) {
        throw ValidationError("test range holds " + std::to_string(n_seg) +
                              " segments; at least 2 are required");
    }

    const std::size_t m = cohort.m();
    ClassificationReport report;
    std::size_t zero_variance_skips = 0;
    std::size_t zero_variance_candidates = 0;

    for (std::size_t h = 0; h < m; ++h) {
        // Alignment sees only the training half of the training subjects.
        Cohort train;
        train.coords = cohort.coords;
        std::vector<std::size_t> train_idx;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == h) continue;
            train_idx.push_back(i);
            train.scans.push_back(
                {cohort.scans[i].subject_id,
                 cohort.scans[i].data.middleRows(split.train_begin,
                                                 split.train_end - split.train_begin)});
        }
        FittedAlignment fit = fit_engine(train, config);

        // Transforms learned on the train half act on the test half.
        std::vector<Matrix> aligned_test(train_idx.size());
        for (std::size_t j = 0; j < train_idx.size(); ++j) {
            const Matrix test_rows = preprocess_scan(
                cohort.scans[train_idx[j]].data.middleRows(split.test_begin, test_len),
                fit.identity ? AlignmentConfig{} : config.align);
            aligned_test[j] =
                fit.identity ? test_rows : Matrix(test_rows * full_space_action(fit.result, j));
        }
        Matrix group_sum = aligned_test.front();
        for (std::size_t j = 1; j < aligned_test.size(); ++j) group_sum += aligned_test[j];
        const Matrix group_mean = group_sum / static_cast<double>(aligned_test.size());

        const Matrix held_train =
            cohort.scans[h].data.middleRows(split.train_begin, split.train_end - split.train_begin);
        Matrix held_test =
            cohort.scans[h].data.middleRows(split.test_begin, test_len);
        if (!fit.identity) {
            Matrix held_train_pre = preprocess_scan(held_train, config.align);
            double k = 0.0;
            const Matrix* F = nullptr;
            if (config.engine == EngineId::Opp || config.engine == EngineId::Promises ||
                config.engine == EngineId::PromisesEfficient) {
                k = config.align.k;
                if (k > 0.0) F = &config.prior->values;
            }
            const Matrix R_h = opp_solve(held_train_pre, fit.result.reference, k, F).values;
            held_test = preprocess_scan(held_test, config.align) * R_h;
        }

        Eigen::Index correct = 0;
        Eigen::Index counted = 0;
        for (Eigen::Index p = 0; p < n_seg; ++p) {
            const Vector x = flatten_segment(held_test, p * spec.stride, spec.segment_length);
            const Vector x_centered = x.array() - x.mean();
            if (x_centered.squaredNorm() == 0.0) {
                ++zero_variance_skips;  // correlation undefined for the query segment
                continue;
            }
            double best = -2.0;
            Eigen::Index best_q = -1;
            bool strict = true;
            for (Eigen::Index q = 0; q < n_seg; ++q) {
                const Vector g =
                    flatten_segment(group_mean, q * spec.stride, spec.segment_length);
                const double r = pearson(x, g);
                if (std::isnan(r)) {
                    ++zero_variance_candidates;  // candidate undefined: never a match
                    continue;
                }
                if (r > best) {
                    best = r;
                    best_q = q;
                    strict = true;
                } else if (r == best) {
                    strict = false;
                }
            }
            ++counted;
            if (best_q == p && strict) ++correct;
        }
        report.subject_ids.push_back(cohort.scans[h].subject_id);
        report.per_subject_accuracy.push_back(
            counted > 0 ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0);
        if (counted == 0) {
            report.notices.push_back("subject '" + cohort.scans[h].subject_id +
                                     "': every segment skipped (zero variance)");
        }
    }

    if (zero_variance_skips > 0) {
        report.notices.push_back(std::to_string(zero_variance_skips) +
                                 " segment(s) skipped: zero variance makes the correlation "
                                 "undefined");
    }
    if (zero_variance_candidates > 0) {
        report.notices.push_back(std::to_string(zero_variance_candidates) +
                                 " candidate correlation(s) undefined (zero variance) and "
                                 "treated as no match");
    }
    double total = 0.0;
    for (double a : report.per_subject_accuracy) total += a;
    report.mean_accuracy = total / static_cast<double>(m);
    return report;
}

}  // namespace promises
