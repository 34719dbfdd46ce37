// Python bindings for the alignment library.  Cohorts enter as lists of
// (t, v) arrays, priors as plain (v, v) matrices (validated on the way in),
// and results come back as thin read-only views of the C++ structs.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <promises/align.hpp>
#include <promises/eval.hpp>
#include <promises/modelsel.hpp>
#include <promises/prior.hpp>
#include <promises/simulate.hpp>

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace promises;

namespace {

Cohort cohort_from(const std::vector<Matrix>& data,
                   const std::optional<std::vector<std::string>>& subject_ids) {
    if (subject_ids && subject_ids->size() != data.size()) {
        throw ValidationError("subject_ids must have one entry per data matrix");
    }
    Cohort cohort;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::string id;
        if (subject_ids) {
            id = (*subject_ids)[i];
        } else {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "s%03zu", i);
            id = buf;
        }
        cohort.scans.push_back({std::move(id), data[i]});
    }
    cohort.validate();
    return cohort;
}

VoxelCoordinates coords_from(const Matrix& coords) {
    if (coords.cols() != 3) throw ValidationError("coords must have shape (v, 3)");
    VoxelCoordinates out;
    out.entries.reserve(static_cast<std::size_t>(coords.rows()));
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        out.entries.push_back({coords(i, 0), coords(i, 1), coords(i, 2)});
    }
    return out;
}

std::optional<LocationMatrix> prior_from(const std::optional<Matrix>& prior) {
    if (!prior) return std::nullopt;
    return custom_location_matrix(*prior);
}

AlignmentConfig config_from(double k, double tol, int max_iter, bool center_columns,
                            bool scale_unit_frobenius, int threads) {
    AlignmentConfig config;
    config.k = k;
    config.tol = tol;
    config.max_iter = max_iter;
    config.center_columns = center_columns;
    config.scale_unit_frobenius = scale_unit_frobenius;
    config.threads = threads;
    return config;
}

EvalConfig eval_config_from(const std::string& engine, double k,
                            const std::optional<Matrix>& prior, double ridge, double tol,
                            int max_iter, int threads) {
    EvalConfig config;
    config.engine = engine_from_string(engine);
    config.align = config_from(k, tol, max_iter, false, false, threads);
    config.prior = prior_from(prior);
    config.ridge = ridge;
    return config;
}

SplitSpec split_from(const std::optional<std::array<Eigen::Index, 4>>& split, Eigen::Index t) {
    if (!split) return half_split(t);
    return {(*split)[0], (*split)[1], (*split)[2], (*split)[3]};
}

std::vector<Matrix> transform_values(const std::vector<OrthogonalTransform>& transforms) {
    std::vector<Matrix> out;
    out.reserve(transforms.size());
    for (const auto& tr : transforms) out.push_back(tr.values);
    return out;
}

std::vector<std::string> transform_ids(const std::vector<OrthogonalTransform>& transforms) {
    std::vector<std::string> out;
    out.reserve(transforms.size());
    for (const auto& tr : transforms) out.push_back(tr.subject_id);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Functional alignment: regularized Procrustes engines, priors, "
              "synthetic cohorts, and evaluation protocols";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<TraceRow>(m, "TracePoint")
        .def_readonly("iteration", &TraceRow::iteration)
        .def_readonly("objective", &TraceRow::objective)
        .def_readonly("reference_delta", &TraceRow::reference_delta)
        .def("__repr__", [](const TraceRow& row) {
            char buf[96];
            std::snprintf(buf, sizeof(buf),
                          "TracePoint(iteration=%d, objective=%.6g, reference_delta=%.3g)",
                          row.iteration, row.objective, row.reference_delta);
            return std::string(buf);
        });

    py::class_<AlignmentResult>(m, "Alignment")
        .def_property_readonly("subject_ids",
                               [](const AlignmentResult& r) { return transform_ids(r.transforms); })
        .def_property_readonly(
            "transforms", [](const AlignmentResult& r) { return transform_values(r.transforms); })
        .def_readonly("aligned", &AlignmentResult::aligned)
        .def_readonly("reference", &AlignmentResult::reference)
        .def_readonly("trace", &AlignmentResult::trace)
        .def_readonly("iterations_run", &AlignmentResult::iterations_run)
        .def_readonly("reduced", &AlignmentResult::reduced)
        .def_readonly("nonunique_warning", &AlignmentResult::nonunique_warning)
        .def_readonly("notices", &AlignmentResult::notices)
        .def("__repr__", [](const AlignmentResult& r) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "Alignment(m=%zu, iterations_run=%d, reduced=%s)",
                          r.transforms.size(), r.iterations_run, r.reduced ? "True" : "False");
            return std::string(buf);
        });

    py::class_<ClassificationReport>(m, "Classification")
        .def_readonly("mean_accuracy", &ClassificationReport::mean_accuracy)
        .def_readonly("subject_ids", &ClassificationReport::subject_ids)
        .def_readonly("per_subject_accuracy", &ClassificationReport::per_subject_accuracy)
        .def_readonly("coefficient_maps", &ClassificationReport::coefficient_maps)
        .def_readonly("notices", &ClassificationReport::notices)
        .def("__repr__", [](const ClassificationReport& r) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "Classification(mean_accuracy=%.4f)",
                          r.mean_accuracy);
            return std::string(buf);
        });

    py::class_<SelectionReport::PerK>(m, "KScore")
        .def_readonly("k", &SelectionReport::PerK::k)
        .def_readonly("mean_accuracy", &SelectionReport::PerK::mean_accuracy)
        .def_readonly("fold_accuracies", &SelectionReport::PerK::fold_accuracies);

    py::class_<SelectionReport>(m, "Selection")
        .def_readonly("chosen_k", &SelectionReport::chosen_k)
        .def_readonly("per_k", &SelectionReport::per_k)
        .def("__repr__", [](const SelectionReport& r) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "Selection(chosen_k=%g)", r.chosen_k);
            return std::string(buf);
        });

    py::class_<SynthCohort>(m, "Synth")
        .def_property_readonly("data",
                               [](const SynthCohort& s) {
                                   std::vector<Matrix> out;
                                   for (const auto& scan : s.cohort.scans)
                                       out.push_back(scan.data);
                                   return out;
                               })
        .def_property_readonly("subject_ids",
                               [](const SynthCohort& s) {
                                   std::vector<std::string> out;
                                   for (const auto& scan : s.cohort.scans)
                                       out.push_back(scan.subject_id);
                                   return out;
                               })
        .def_property_readonly("reference",
                               [](const SynthCohort& s) { return s.true_reference; })
        .def_property_readonly(
            "transforms", [](const SynthCohort& s) { return transform_values(s.true_transforms); })
        .def_property_readonly("labels", [](const SynthCohort& s) { return s.labels; })
        .def_property_readonly("coords", [](const SynthCohort& s) -> py::object {
            if (!s.cohort.coords) return py::none();
            const auto& entries = s.cohort.coords->entries;
            Matrix out(static_cast<Eigen::Index>(entries.size()), 3);
            for (std::size_t i = 0; i < entries.size(); ++i) {
                out(static_cast<Eigen::Index>(i), 0) = entries[i][0];
                out(static_cast<Eigen::Index>(i), 1) = entries[i][1];
                out(static_cast<Eigen::Index>(i), 2) = entries[i][2];
            }
            return py::cast(out);
        });

    m.def(
        "euclidean_prior",
        [](const Matrix& coords) {
            return build_location_matrix(coords_from(coords), PriorKind::EuclideanSimilarity)
                .values;
        },
        py::arg("coords"),
        "Similarity matrix exp(-d_ij) from (v, 3) coordinates; unit diagonal, full rank");

    m.def(
        "opp",
        [](const Matrix& x, const Matrix& target, double k, const std::optional<Matrix>& prior) {
            const std::optional<LocationMatrix> F = prior_from(prior);
            return opp_solve(x, target, k, F ? &F->values : nullptr).values;
        },
        py::arg("x"), py::arg("target"), py::arg("k") = 0.0, py::arg("prior") = py::none(),
        "Orthogonal transform maximizing tr(R^T (X^T M + k F))");

    m.def(
        "gpa",
        [](const std::vector<Matrix>& data, double tol, int max_iter, bool center_columns,
           bool scale_unit_frobenius, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            return gpa_align(cohort_from(data, subject_ids),
                             config_from(0.0, tol, max_iter, center_columns,
                                         scale_unit_frobenius, threads));
        },
        py::arg("data"), py::arg("tol") = 1e-6, py::arg("max_iter") = 30,
        py::arg("center_columns") = false, py::arg("scale_unit_frobenius") = false,
        py::arg("threads") = 1, py::arg("subject_ids") = py::none(),
        "Generalized Procrustes alignment (alternating, unregularized)");

    m.def(
        "promises",
        [](const std::vector<Matrix>& data, double k, const std::optional<Matrix>& prior,
           double tol, int max_iter, bool center_columns, bool scale_unit_frobenius, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            const std::optional<LocationMatrix> F = prior_from(prior);
            return promises_align(cohort_from(data, subject_ids), F ? &*F : nullptr,
                                  config_from(k, tol, max_iter, center_columns,
                                              scale_unit_frobenius, threads));
        },
        py::arg("data"), py::arg("k") = 0.0, py::arg("prior") = py::none(),
        py::arg("tol") = 1e-6, py::arg("max_iter") = 30, py::arg("center_columns") = false,
        py::arg("scale_unit_frobenius") = false, py::arg("threads") = 1,
        py::arg("subject_ids") = py::none(),
        "MAP alignment with concentration k and location prior (k = 0: plain GPA)");

    m.def(
        "promises_efficient",
        [](const std::vector<Matrix>& data, double k, const std::optional<Matrix>& prior,
           double tol, int max_iter, bool center_columns, bool scale_unit_frobenius, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            const std::optional<LocationMatrix> F = prior_from(prior);
            return efficient_promises_align(cohort_from(data, subject_ids), F ? &*F : nullptr,
                                            config_from(k, tol, max_iter, center_columns,
                                                        scale_unit_frobenius, threads));
        },
        py::arg("data"), py::arg("k") = 0.0, py::arg("prior") = py::none(),
        py::arg("tol") = 1e-6, py::arg("max_iter") = 30, py::arg("center_columns") = false,
        py::arg("scale_unit_frobenius") = false, py::arg("threads") = 1,
        py::arg("subject_ids") = py::none(),
        "Reduced-space MAP alignment over t x t transforms (requires t < v to reduce)");

    m.def(
        "hyperalign",
        [](const std::vector<Matrix>& data, const std::vector<std::size_t>& order,
           const std::optional<std::vector<std::string>>& subject_ids) {
            return hyperalign(cohort_from(data, subject_ids), order);
        },
        py::arg("data"), py::arg("order") = std::vector<std::size_t>{},
        py::arg("subject_ids") = py::none(),
        "Sequential two-level alignment; order-dependent by design");

    m.def(
        "simulate",
        [](std::size_t m_subjects, Eigen::Index t, Eigen::Index v, double noise_sigma,
           const std::optional<std::array<Eigen::Index, 3>>& grid, int n_classes,
           double rotation_locality, std::uint64_t seed) {
            SynthSpec spec;
            spec.m = m_subjects;
            spec.t = t;
            spec.v = v;
            spec.noise_sigma = noise_sigma;
            if (grid) spec.grid_dims = *grid;
            spec.n_classes = n_classes;
            spec.rotation_locality = rotation_locality;
            spec.seed = seed;
            return synth_cohort(spec);
        },
        py::arg("m") = 4, py::arg("t") = 8, py::arg("v") = 8, py::arg("noise_sigma") = 0.0,
        py::arg("grid") = py::none(), py::arg("n_classes") = 0,
        py::arg("rotation_locality") = 1.0, py::arg("seed") = 0,
        "Synthetic cohort: shared reference, per-subject rotations, optional grid coords "
        "and class labels");

    m.def(
        "loso_linear_classify",
        [](const std::vector<Matrix>& data, const std::vector<int>& labels,
           const std::string& engine, double k, const std::optional<Matrix>& prior, double ridge,
           double tol, int max_iter, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            const LabeledCohort labeled{cohort_from(data, subject_ids), labels};
            return loso_linear_classify(
                labeled, eval_config_from(engine, k, prior, ridge, tol, max_iter, threads));
        },
        py::arg("data"), py::arg("labels"), py::arg("engine") = "promises", py::arg("k") = 0.0,
        py::arg("prior") = py::none(), py::arg("ridge") = 1.0, py::arg("tol") = 1e-6,
        py::arg("max_iter") = 30, py::arg("threads") = 1, py::arg("subject_ids") = py::none(),
        "Leave-one-subject-out one-versus-one ridge classification accuracy");

    m.def(
        "segment_correlation_classify",
        [](const std::vector<Matrix>& data, int segment_length, int stride,
           const std::optional<std::array<Eigen::Index, 4>>& split, const std::string& engine,
           double k, const std::optional<Matrix>& prior, double tol, int max_iter, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            const Cohort cohort = cohort_from(data, subject_ids);
            const SplitSpec resolved = split_from(split, cohort.t());
            return segment_correlation_classify(
                cohort, SegmentSpec{segment_length, stride},
                eval_config_from(engine, k, prior, 1.0, tol, max_iter, threads), resolved);
        },
        py::arg("data"), py::arg("segment_length") = 6, py::arg("stride") = 6,
        py::arg("split") = py::none(), py::arg("engine") = "gpa", py::arg("k") = 0.0,
        py::arg("prior") = py::none(), py::arg("tol") = 1e-6, py::arg("max_iter") = 30,
        py::arg("threads") = 1, py::arg("subject_ids") = py::none(),
        "Correlation 1-NN over time segments; split defaults to the half split");

    m.def(
        "default_k_grid", []() { return default_k_grid().candidates; },
        "Concentration grid {1, 2, ..., 100}");

    m.def(
        "select_k",
        [](const std::vector<Matrix>& data, const Matrix& prior,
           const std::optional<std::vector<double>>& grid, const std::string& evaluator,
           const std::optional<std::vector<int>>& labels, int segment_length, int stride,
           const std::optional<std::array<Eigen::Index, 4>>& split, const std::string& engine,
           double ridge, double tol, int max_iter, int threads,
           const std::optional<std::vector<std::string>>& subject_ids) {
            const Cohort cohort = cohort_from(data, subject_ids);
            const LocationMatrix F = custom_location_matrix(prior);
            const KGrid resolved_grid = grid ? KGrid{*grid} : default_k_grid();
            EvaluatorId id;
            if (evaluator == "loso-linear") {
                id = EvaluatorId::LosoLinear;
            } else if (evaluator == "segment-corr") {
                id = EvaluatorId::SegmentCorr;
            } else {
                throw ValidationError("evaluator must be loso-linear or segment-corr");
            }
            const EvalConfig base =
                eval_config_from(engine, 0.0, std::nullopt, ridge, tol, max_iter, threads);
            const SegmentSpec spec{segment_length, stride};
            const SplitSpec resolved_split = split_from(split, cohort.t());
            const std::vector<int> resolved_labels = labels ? *labels : std::vector<int>{};
            return select_k(cohort, resolved_labels,
                            id == EvaluatorId::SegmentCorr ? &spec : nullptr,
                            id == EvaluatorId::SegmentCorr ? &resolved_split : nullptr, F,
                            resolved_grid, id, base);
        },
        py::arg("data"), py::arg("prior"), py::arg("grid") = py::none(),
        py::arg("evaluator") = "loso-linear", py::arg("labels") = py::none(),
        py::arg("segment_length") = 6, py::arg("stride") = 6, py::arg("split") = py::none(),
        py::arg("engine") = "promises", py::arg("ridge") = 1.0, py::arg("tol") = 1e-6,
        py::arg("max_iter") = 30, py::arg("threads") = 1, py::arg("subject_ids") = py::none(),
        "Pick the concentration maximizing inner leave-one-subject-out accuracy; "
        "ties go to the smaller k");
}
