#include "promises/cli.hpp"

#include "promises/align.hpp"
#include "promises/diagnostics.hpp"
#include "promises/eval.hpp"
#include "promises/io.hpp"
#include "promises/modelsel.hpp"
#include "promises/prior.hpp"
#include "promises/simulate.hpp"
#include "promises/threads.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace promises {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration plumbing.  Precedence: command-line flags > JSON config file
// > built-in defaults.  The resolved configuration is written next to every
// run's outputs so it can be replayed exactly; execution-environment settings
// (output directory, thread count) are deliberately excluded because they
// never influence numeric results.
// ---------------------------------------------------------------------------

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open config file");
    try {
        json doc;
        in >> doc;
        if (!doc.is_object()) throw ValidationError(path + ": config must be a JSON object");
        return doc;
    } catch (const json::exception& e) {
        throw ValidationError(path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
}

template <class T>
T pick(const CLI::Option* opt, T cli_value, const json& cfg, const std::string& key) {
    if (opt != nullptr && opt->count() > 0) return cli_value;
    if (cfg.contains(key)) {
        try {
            return cfg.at(key).get<T>();
        } catch (const json::exception&) {
            throw ValidationError("config key '" + key + "' has the wrong type");
        }
    }
    return cli_value;
}

void ensure_out_dir(const std::string& out) {
    if (out.empty()) throw ValidationError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ValidationError(out + ": cannot create output directory");
}

void write_json(const json& doc, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(path + ": cannot open for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw ValidationError(path + ": write failure");
}

std::string fmt17(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared option bundles.
// ---------------------------------------------------------------------------

struct EngineOpts {
    std::string engine = "promises";
    double k = 0.0;
    std::string prior = "euclidean";
    std::string prior_file;
    double tol = 1e-6;
    int max_iter = 30;
    bool center_columns = false;
    bool scale_unit_frobenius = false;

    CLI::Option* engine_opt = nullptr;
    CLI::Option* k_opt = nullptr;
    CLI::Option* prior_opt = nullptr;
    CLI::Option* prior_file_opt = nullptr;
    CLI::Option* tol_opt = nullptr;
    CLI::Option* max_iter_opt = nullptr;
    CLI::Option* center_opt = nullptr;
    CLI::Option* scale_opt = nullptr;

    void attach(CLI::App* cmd, bool allow_none) {
        const std::string engines = allow_none
            ? "none, opp, gpa, hyper, promises, promises-efficient"
            : "opp, gpa, hyper, promises, promises-efficient";
        engine_opt = cmd->add_option("--engine", engine, "Alignment engine (" + engines + ")");
        k_opt = cmd->add_option("--k", k, "Concentration parameter (default 0)");
        prior_opt = cmd->add_option("--prior", prior,
                                    "Prior location matrix: euclidean, identity, file");
        prior_file_opt = cmd->add_option("--prior-file", prior_file,
                                         "Matrix file for --prior file");
        tol_opt = cmd->add_option("--tol", tol,
                                  "Relative squared reference-delta threshold (default 1e-6)");
        max_iter_opt = cmd->add_option("--max-iter", max_iter, "Iteration cap (default 30)");
        center_opt = cmd->add_flag("--center-columns", center_columns,
                                   "Subtract per-column means before alignment");
        scale_opt = cmd->add_flag("--scale-unit-frobenius", scale_unit_frobenius,
                                  "Scale each subject to unit Frobenius norm");
    }

    void resolve(const json& cfg) {
        engine = pick(engine_opt, engine, cfg, "engine");
        k = pick(k_opt, k, cfg, "k");
        prior = pick(prior_opt, prior, cfg, "prior");
        prior_file = pick(prior_file_opt, prior_file, cfg, "prior_file");
        tol = pick(tol_opt, tol, cfg, "tol");
        max_iter = pick(max_iter_opt, max_iter, cfg, "max_iter");
        center_columns = pick(center_opt, center_columns, cfg, "center_columns");
        scale_unit_frobenius = pick(scale_opt, scale_unit_frobenius, cfg, "scale_unit_frobenius");
    }

    AlignmentConfig alignment_config(int threads) const {
        AlignmentConfig config;
        config.k = k;
        config.tol = tol;
        config.max_iter = max_iter;
        config.center_columns = center_columns;
        config.scale_unit_frobenius = scale_unit_frobenius;
        config.threads = threads;
        return config;
    }

    json resolved() const {
        return json{{"engine", engine},
                    {"k", k},
                    {"prior", prior},
                    {"prior_file", prior_file},
                    {"tol", tol},
                    {"max_iter", max_iter},
                    {"center_columns", center_columns},
                    {"scale_unit_frobenius", scale_unit_frobenius}};
    }
};

bool engine_uses_k(EngineId id) {
    return id == EngineId::Opp || id == EngineId::Promises || id == EngineId::PromisesEfficient;
}

void validate_engine_options(EngineId id, const EngineOpts& opts) {
    if (opts.k < 0.0) throw ValidationError("--k must be nonnegative");
    if (opts.k > 0.0 && !engine_uses_k(id)) {
        throw ValidationError("--k > 0 only applies to engines opp, promises, "
                              "promises-efficient");
    }
    if (id == EngineId::Hyper && (opts.center_columns || opts.scale_unit_frobenius)) {
        throw ValidationError("engine hyper takes raw inputs; preprocessing flags do not apply");
    }
    if (opts.prior == "file" && opts.prior_file.empty()) {
        throw ValidationError("--prior file requires --prior-file");
    }
    if (opts.prior != "euclidean" && opts.prior != "identity" && opts.prior != "file") {
        throw ValidationError("--prior must be euclidean, identity, or file");
    }
}

// Builds the location matrix when the run needs one (k > 0 on a k-using
// engine); the euclidean kind requires cohort coordinates.
std::optional<LocationMatrix> build_prior_for_run(EngineId id, const EngineOpts& opts,
                                                  const Cohort& cohort) {
    if (!(opts.k > 0.0) || !engine_uses_k(id)) return std::nullopt;
    if (opts.prior == "identity") return identity_location_matrix(cohort.v());
    if (opts.prior == "file") {
        return custom_location_matrix(load_matrix(opts.prior_file));
    }
    if (!cohort.coords) {
        throw ValidationError("prior 'euclidean' requires coordinates in the manifest");
    }
    return build_location_matrix(*cohort.coords, PriorKind::EuclideanSimilarity);
}

void write_convergence_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(path + ": cannot open for writing");
    out << "iteration,objective,reference_delta\n";
    for (const auto& row : trace) {
        out << row.iteration << ',' << fmt17(row.objective) << ','
            << fmt17(row.reference_delta) << '\n';
    }
    if (!out) throw ValidationError(path + ": write failure");
}

std::vector<std::size_t> parse_order(const std::string& text, std::size_t m) {
    if (text.empty()) return {};
    std::vector<std::size_t> order;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        try {
            order.push_back(static_cast<std::size_t>(std::stoul(token)));
        } catch (...) {
            throw ValidationError("--order must be a comma-separated list of subject indices");
        }
    }
    if (order.size() != m) {
        throw ValidationError("--order must list all " + std::to_string(m) + " subjects");
    }
    return order;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        try {
            const long lo = std::stol(text.substr(0, colon));
            const long hi = std::stol(text.substr(colon + 1));
            if (lo > hi) throw ValidationError("--grid range must be ascending");
            for (long k = lo; k <= hi; ++k) grid.push_back(static_cast<double>(k));
        } catch (const ValidationError&) {
            throw;
        } catch (...) {
            throw ValidationError("--grid range must look like 'lo:hi'");
        }
        return grid;
    }
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        try {
            grid.push_back(std::stod(token));
        } catch (...) {
            throw ValidationError("--grid must be 'lo:hi' or a comma-separated list");
        }
    }
    return grid;
}

SplitSpec parse_split(const std::string& text, Eigen::Index t) {
    if (text == "half") return half_split(t);
    std::vector<Eigen::Index> parts;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ':')) {
        try {
            parts.push_back(static_cast<Eigen::Index>(std::stol(token)));
        } catch (...) {
            throw ValidationError("--split must be 'half' or 'tb:te:sb:se'");
        }
    }
    if (parts.size() != 4) throw ValidationError("--split must be 'half' or 'tb:te:sb:se'");
    return SplitSpec{parts[0], parts[1], parts[2], parts[3]};
}

// ---------------------------------------------------------------------------
// align
// ---------------------------------------------------------------------------

struct AlignArgs {
    std::string manifest, out, config_path, order;
    EngineOpts engine;
    std::uint64_t seed = 0;
    int threads = 0;
    CLI::Option* manifest_opt = nullptr;
    CLI::Option* order_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

int run_align(AlignArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.manifest = pick(args.manifest_opt, args.manifest, cfg, "manifest");
    args.order = pick(args.order_opt, args.order, cfg, "order");
    args.seed = pick(args.seed_opt, args.seed, cfg, "seed");
    args.engine.resolve(cfg);
    if (args.manifest.empty()) throw ValidationError("--manifest is required");
    ensure_out_dir(args.out);

    const EngineId id = engine_from_string(args.engine.engine);
    if (id == EngineId::None) throw ValidationError("align requires an alignment engine");
    validate_engine_options(id, args.engine);

    LoadedCohort loaded = load_cohort(args.manifest);
    const Cohort& cohort = loaded.cohort;
    std::optional<LocationMatrix> prior = build_prior_for_run(id, args.engine, cohort);
    const LocationMatrix* F = prior ? &*prior : nullptr;
    const AlignmentConfig config = args.engine.alignment_config(args.threads);

    AlignmentResult result;
    switch (id) {
        case EngineId::Opp: result = single_pass_align(cohort, F, config); break;
        case EngineId::Gpa: result = gpa_align(cohort, config); break;
        case EngineId::Hyper:
            result = hyperalign(cohort, parse_order(args.order, cohort.m()));
            break;
        case EngineId::Promises: result = promises_align(cohort, F, config); break;
        case EngineId::PromisesEfficient:
            result = efficient_promises_align(cohort, F, config);
            break;
        default: throw ValidationError("unreachable engine");
    }

    const fs::path out(args.out);
    for (std::size_t i = 0; i < cohort.m(); ++i) {
        const std::string& sid = result.transforms[i].subject_id;
        save_matrix(result.transforms[i].values, (out / ("transform_" + sid + ".dmat")).string(),
                    MatrixFormat::Dmat);
        save_matrix(result.aligned[i], (out / ("aligned_" + sid + ".dmat")).string(),
                    MatrixFormat::Dmat);
    }
    save_matrix(result.reference, (out / "reference.dmat").string(), MatrixFormat::Dmat);
    write_convergence_csv(result.trace, (out / "convergence.csv").string());

    json resolved = args.engine.resolved();
    resolved["command"] = "align";
    resolved["manifest"] = args.manifest;
    resolved["order"] = args.order;
    resolved["seed"] = args.seed;
    write_json(resolved, (out / "resolved-config.json").string());

    json report;
    report["command"] = "align";
    report["engine"] = args.engine.engine;
    report["reduced"] = result.reduced;
    report["iterations_run"] = result.iterations_run;
    report["final_objective"] = result.trace.back().objective;
    report["final_reference_delta"] = result.trace.back().reference_delta;
    if (id == EngineId::Gpa || id == EngineId::Promises || id == EngineId::PromisesEfficient) {
        report["converged"] = result.trace.back().reference_delta < config.tol;
    } else {
        report["converged"] = nullptr;
    }
    report["nonunique_warning"] = result.nonunique_warning;
    report["notices"] = result.notices;
    json subjects = json::array();
    for (const auto& tr : result.transforms) subjects.push_back(tr.subject_id);
    report["subjects"] = subjects;
    write_json(report, (out / "report.json").string());
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string out, config_path, grid_text;
    std::uint64_t m = 4;
    std::uint64_t t = 8;
    std::uint64_t v = 8;
    double noise_sigma = 0.0;
    std::uint64_t n_classes = 0;
    double rotation_locality = 1.0;
    std::uint64_t seed = 0;
    CLI::Option* m_opt = nullptr;
    CLI::Option* t_opt = nullptr;
    CLI::Option* v_opt = nullptr;
    CLI::Option* noise_opt = nullptr;
    CLI::Option* grid_opt = nullptr;
    CLI::Option* classes_opt = nullptr;
    CLI::Option* locality_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

int run_simulate(SimulateArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.m = pick(args.m_opt, args.m, cfg, "m");
    args.t = pick(args.t_opt, args.t, cfg, "t");
    args.v = pick(args.v_opt, args.v, cfg, "v");
    args.noise_sigma = pick(args.noise_opt, args.noise_sigma, cfg, "noise_sigma");
    args.grid_text = pick(args.grid_opt, args.grid_text, cfg, "grid");
    args.n_classes = pick(args.classes_opt, args.n_classes, cfg, "n_classes");
    args.rotation_locality = pick(args.locality_opt, args.rotation_locality, cfg,
                                  "rotation_locality");
    args.seed = pick(args.seed_opt, args.seed, cfg, "seed");
    ensure_out_dir(args.out);

    SynthSpec spec;
    spec.m = static_cast<std::size_t>(args.m);
    spec.t = static_cast<Eigen::Index>(args.t);
    spec.v = static_cast<Eigen::Index>(args.v);
    spec.noise_sigma = args.noise_sigma;
    spec.n_classes = static_cast<int>(args.n_classes);
    spec.rotation_locality = args.rotation_locality;
    spec.seed = args.seed;
    if (!args.grid_text.empty()) {
        std::stringstream ss(args.grid_text);
        std::string token;
        std::vector<Eigen::Index> dims;
        while (std::getline(ss, token, ',')) {
            try {
                dims.push_back(static_cast<Eigen::Index>(std::stol(token)));
            } catch (...) {
                throw ValidationError("--grid must be 'nx,ny,nz'");
            }
        }
        if (dims.size() != 3) throw ValidationError("--grid must be 'nx,ny,nz'");
        spec.grid_dims = {dims[0], dims[1], dims[2]};
    }

    SynthCohort synth = synth_cohort(spec);
    const fs::path out(args.out);

    Manifest manifest;
    for (const auto& scan : synth.cohort.scans) {
        const std::string file = scan.subject_id + ".dmat";
        save_matrix(scan.data, (out / file).string(), MatrixFormat::Dmat);
        manifest.subjects.push_back({scan.subject_id, file});
    }
    if (synth.cohort.coords) {
        save_coords(*synth.cohort.coords, (out / "coords.csv").string());
        manifest.coords_path = "coords.csv";
    }
    if (!synth.labels.empty()) {
        save_labels(synth.labels, (out / "labels.csv").string());
        manifest.labels_path = "labels.csv";
    }
    save_manifest(manifest, (out / "manifest.json").string());
    save_matrix(synth.true_reference, (out / "true_reference.dmat").string(),
                MatrixFormat::Dmat);
    for (const auto& tr : synth.true_transforms) {
        save_matrix(tr.values, (out / ("true_transform_" + tr.subject_id + ".dmat")).string(),
                    MatrixFormat::Dmat);
    }

    json resolved{{"command", "simulate"},
                  {"m", args.m},
                  {"t", args.t},
                  {"v", args.v},
                  {"noise_sigma", args.noise_sigma},
                  {"grid", args.grid_text},
                  {"n_classes", args.n_classes},
                  {"rotation_locality", args.rotation_locality},
                  {"seed", args.seed}};
    write_json(resolved, (out / "resolved-config.json").string());

    json report;
    report["command"] = "simulate";
    report["subjects"] = json::array();
    for (const auto& scan : synth.cohort.scans) report["subjects"].push_back(scan.subject_id);
    report["t"] = args.t;
    report["v"] = args.v;
    report["labeled"] = !synth.labels.empty();
    report["has_coords"] = synth.cohort.coords.has_value();
    write_json(report, (out / "report.json").string());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string manifest, out, config_path, protocol = "loso-linear", labels, split = "half";
    EngineOpts engine;
    double ridge = 1.0;
    int segment_length = 6;
    int stride = 6;
    std::uint64_t seed = 0;
    int threads = 0;
    CLI::Option* manifest_opt = nullptr;
    CLI::Option* protocol_opt = nullptr;
    CLI::Option* labels_opt = nullptr;
    CLI::Option* split_opt = nullptr;
    CLI::Option* ridge_opt = nullptr;
    CLI::Option* seglen_opt = nullptr;
    CLI::Option* stride_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

EvalConfig make_eval_config(EngineId id, const EngineOpts& opts, double ridge, int threads,
                            const Cohort& cohort) {
    EvalConfig config;
    config.engine = id;
    config.align = opts.alignment_config(threads);
    config.ridge = ridge;
    auto prior = build_prior_for_run(id, opts, cohort);
    if (prior) config.prior = std::move(*prior);
    return config;
}

int run_evaluate(EvaluateArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.manifest = pick(args.manifest_opt, args.manifest, cfg, "manifest");
    args.protocol = pick(args.protocol_opt, args.protocol, cfg, "protocol");
    args.labels = pick(args.labels_opt, args.labels, cfg, "labels");
    args.split = pick(args.split_opt, args.split, cfg, "split");
    args.ridge = pick(args.ridge_opt, args.ridge, cfg, "ridge");
    args.segment_length = pick(args.seglen_opt, args.segment_length, cfg, "segment_length");
    args.stride = pick(args.stride_opt, args.stride, cfg, "stride");
    args.seed = pick(args.seed_opt, args.seed, cfg, "seed");
    args.engine.resolve(cfg);
    if (args.manifest.empty()) throw ValidationError("--manifest is required");
    ensure_out_dir(args.out);

    const EngineId id = engine_from_string(args.engine.engine);
    if (id != EngineId::None) validate_engine_options(id, args.engine);

    LoadedCohort loaded = load_cohort(args.manifest);
    std::vector<int> labels = loaded.labels;
    if (!args.labels.empty()) labels = load_labels(args.labels);

    EvalConfig config = make_eval_config(id, args.engine, args.ridge, args.threads,
                                         loaded.cohort);

    ClassificationReport report;
    if (args.protocol == "loso-linear") {
        if (labels.empty()) {
            throw ValidationError("protocol loso-linear needs labels (--labels or manifest)");
        }
        report = loso_linear_classify({loaded.cohort, labels}, config);
    } else if (args.protocol == "segment-corr") {
        SegmentSpec spec{args.segment_length, args.stride};
        report = segment_correlation_classify(loaded.cohort, spec, config,
                                              parse_split(args.split, loaded.cohort.t()));
    } else {
        throw ValidationError("--protocol must be loso-linear or segment-corr");
    }

    const fs::path out(args.out);
    json resolved = args.engine.resolved();
    resolved["command"] = "evaluate";
    resolved["manifest"] = args.manifest;
    resolved["protocol"] = args.protocol;
    resolved["labels"] = args.labels;
    resolved["split"] = args.split;
    resolved["ridge"] = args.ridge;
    resolved["segment_length"] = args.segment_length;
    resolved["stride"] = args.stride;
    resolved["seed"] = args.seed;
    write_json(resolved, (out / "resolved-config.json").string());

    json doc;
    doc["command"] = "evaluate";
    doc["protocol"] = args.protocol;
    doc["engine"] = args.engine.engine;
    doc["mean_accuracy"] = report.mean_accuracy;
    json per_subject = json::array();
    for (std::size_t i = 0; i < report.subject_ids.size(); ++i) {
        per_subject.push_back({{"subject_id", report.subject_ids[i]},
                               {"accuracy", report.per_subject_accuracy[i]}});
    }
    doc["per_subject"] = per_subject;
    doc["notices"] = report.notices;
    write_json(doc, (out / "report.json").string());

    for (const auto& [key, w] : report.coefficient_maps) {
        Matrix map(w.size(), 1);
        map.col(0) = w;
        save_matrix(map,
                    (out / ("coefmap_" + std::to_string(key.first) + "_vs_" +
                            std::to_string(key.second) + ".dmat"))
                        .string(),
                    MatrixFormat::Dmat);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// select-k
// ---------------------------------------------------------------------------

struct SelectKArgs {
    std::string manifest, out, config_path, grid = "1:100", evaluator = "loso-linear",
                labels, split = "half";
    EngineOpts engine;
    double ridge = 1.0;
    int segment_length = 6;
    int stride = 6;
    std::uint64_t seed = 0;
    int threads = 0;
    CLI::Option* manifest_opt = nullptr;
    CLI::Option* grid_opt = nullptr;
    CLI::Option* evaluator_opt = nullptr;
    CLI::Option* labels_opt = nullptr;
    CLI::Option* split_opt = nullptr;
    CLI::Option* ridge_opt = nullptr;
    CLI::Option* seglen_opt = nullptr;
    CLI::Option* stride_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

int run_select_k(SelectKArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.manifest = pick(args.manifest_opt, args.manifest, cfg, "manifest");
    args.grid = pick(args.grid_opt, args.grid, cfg, "grid");
    args.evaluator = pick(args.evaluator_opt, args.evaluator, cfg, "evaluator");
    args.labels = pick(args.labels_opt, args.labels, cfg, "labels");
    args.split = pick(args.split_opt, args.split, cfg, "split");
    args.ridge = pick(args.ridge_opt, args.ridge, cfg, "ridge");
    args.segment_length = pick(args.seglen_opt, args.segment_length, cfg, "segment_length");
    args.stride = pick(args.stride_opt, args.stride, cfg, "stride");
    args.seed = pick(args.seed_opt, args.seed, cfg, "seed");
    args.engine.resolve(cfg);
    if (args.manifest.empty()) throw ValidationError("--manifest is required");
    ensure_out_dir(args.out);

    const EngineId id = engine_from_string(args.engine.engine);
    // Per-candidate k overrides the flag; force a prior build by treating the
    // run as regularized.
    EngineOpts prior_opts = args.engine;
    prior_opts.k = 1.0;
    validate_engine_options(id, prior_opts);

    LoadedCohort loaded = load_cohort(args.manifest);
    std::vector<int> labels = loaded.labels;
    if (!args.labels.empty()) labels = load_labels(args.labels);

    auto prior = build_prior_for_run(id, prior_opts, loaded.cohort);
    if (!prior) throw ValidationError("select-k needs an engine that uses k");

    KGrid grid{parse_grid(args.grid)};
    EvalConfig base;
    base.engine = id;
    base.align = args.engine.alignment_config(args.threads);
    base.ridge = args.ridge;

    SelectionReport report;
    SegmentSpec spec{args.segment_length, args.stride};
    if (args.evaluator == "loso-linear") {
        report = select_k(loaded.cohort, labels, nullptr, nullptr, *prior, grid,
                          EvaluatorId::LosoLinear, base);
    } else if (args.evaluator == "segment-corr") {
        SplitSpec split = parse_split(args.split, loaded.cohort.t());
        report = select_k(loaded.cohort, {}, &spec, &split, *prior, grid,
                          EvaluatorId::SegmentCorr, base);
    } else {
        throw ValidationError("--evaluator must be loso-linear or segment-corr");
    }

    const fs::path out(args.out);
    json resolved = args.engine.resolved();
    resolved["command"] = "select-k";
    resolved["manifest"] = args.manifest;
    resolved["grid"] = args.grid;
    resolved["evaluator"] = args.evaluator;
    resolved["labels"] = args.labels;
    resolved["split"] = args.split;
    resolved["ridge"] = args.ridge;
    resolved["segment_length"] = args.segment_length;
    resolved["stride"] = args.stride;
    resolved["seed"] = args.seed;
    write_json(resolved, (out / "resolved-config.json").string());

    json doc;
    doc["command"] = "select-k";
    doc["chosen_k"] = report.chosen_k;
    json per_k = json::array();
    for (const auto& entry : report.per_k) {
        per_k.push_back({{"k", entry.k},
                         {"mean_accuracy", entry.mean_accuracy},
                         {"fold_accuracies", entry.fold_accuracies}});
    }
    doc["per_k"] = per_k;
    write_json(doc, (out / "report.json").string());

    std::ofstream csv((out / "per_k.csv").string(), std::ios::trunc);
    if (!csv) throw ValidationError("per_k.csv: cannot open for writing");
    csv << "k,mean_accuracy\n";
    for (const auto& entry : report.per_k) {
        csv << fmt17(entry.k) << ',' << fmt17(entry.mean_accuracy) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseArgs {
    std::string kind, manifest, out, config_path, metric = "reference";
    EngineOpts engine;
    int n = 20;
    double bin_width = 1.0;
    std::uint64_t voxel_sample = 50;
    std::uint64_t seed = 0;
    int threads = 0;
    CLI::Option* manifest_opt = nullptr;
    CLI::Option* n_opt = nullptr;
    CLI::Option* metric_opt = nullptr;
    CLI::Option* bin_width_opt = nullptr;
    CLI::Option* voxel_sample_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

void write_sensitivity_outputs(const SensitivityReport& report, const std::string& kind,
                               const fs::path& out) {
    json doc;
    doc["command"] = "diagnose";
    doc["kind"] = kind;
    doc["method"] = report.method;
    doc["n_trials"] = report.n_trials;
    doc["variance"] = report.variance;
    doc["per_trial_metric"] = report.per_trial_metric;
    doc["per_trial_objective"] = report.per_trial_objective;
    write_json(doc, (out / "report.json").string());

    std::ofstream csv((out / "trials.csv").string(), std::ios::trunc);
    if (!csv) throw ValidationError("trials.csv: cannot open for writing");
    csv << "trial,metric,objective\n";
    for (std::size_t i = 0; i < report.per_trial_metric.size(); ++i) {
        csv << i << ',' << fmt17(report.per_trial_metric[i]) << ','
            << fmt17(report.per_trial_objective[i]) << '\n';
    }
}

int run_diagnose(DiagnoseArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.manifest = pick(args.manifest_opt, args.manifest, cfg, "manifest");
    args.n = pick(args.n_opt, args.n, cfg, "n");
    args.metric = pick(args.metric_opt, args.metric, cfg, "metric");
    args.bin_width = pick(args.bin_width_opt, args.bin_width, cfg, "bin_width");
    args.voxel_sample = pick(args.voxel_sample_opt, args.voxel_sample, cfg, "voxel_sample");
    args.seed = pick(args.seed_opt, args.seed, cfg, "seed");
    args.engine.resolve(cfg);
    if (args.manifest.empty()) throw ValidationError("--manifest is required");
    ensure_out_dir(args.out);

    const EngineId id = engine_from_string(args.engine.engine);
    validate_engine_options(id, args.engine);

    LoadedCohort loaded = load_cohort(args.manifest);
    const Cohort& cohort = loaded.cohort;
    std::optional<LocationMatrix> prior = build_prior_for_run(id, args.engine, cohort);
    const LocationMatrix* F = prior ? &*prior : nullptr;
    const AlignmentConfig config = args.engine.alignment_config(args.threads);
    const fs::path out(args.out);

    if (args.kind == "order-sensitivity") {
        SensitivityMetric metric;
        if (args.metric == "reference") {
            metric = SensitivityMetric::ReferenceDistance;
        } else if (args.metric == "aligned") {
            metric = SensitivityMetric::AlignedOutputDistance;
        } else {
            throw ValidationError("--metric must be reference or aligned");
        }
        SensitivityReport report =
            order_sensitivity(cohort, args.n, id, config, F, metric, args.seed);
        write_sensitivity_outputs(report, args.kind, out);
    } else if (args.kind == "rotation-sensitivity") {
        SensitivityReport report =
            reference_rotation_sensitivity(cohort, args.n, args.seed, id, config, F);
        write_sensitivity_outputs(report, args.kind, out);
    } else if (args.kind == "locality") {
        if (!cohort.coords) {
            throw ValidationError("locality diagnostics need coordinates in the manifest");
        }
        AlignmentResult result;
        switch (id) {
            case EngineId::Opp: result = single_pass_align(cohort, F, config); break;
            case EngineId::Gpa: result = gpa_align(cohort, config); break;
            case EngineId::Hyper: result = hyperalign(cohort); break;
            case EngineId::Promises: result = promises_align(cohort, F, config); break;
            case EngineId::PromisesEfficient:
                result = efficient_promises_align(cohort, F, config);
                break;
            default: throw ValidationError("locality diagnostics need an alignment engine");
        }
        LocalityReport report =
            loading_locality(result, *cohort.coords, args.bin_width,
                             static_cast<std::size_t>(args.voxel_sample), args.seed);

        json doc;
        doc["command"] = "diagnose";
        doc["kind"] = "locality";
        doc["engine"] = args.engine.engine;
        doc["bin_edges"] = report.bin_edges;
        doc["cumulative_sq_loading"] = report.cumulative_sq_loading;
        doc["crossing_50"] = locality_crossing(report, 0.5);
        doc["crossing_90"] = locality_crossing(report, 0.9);
        doc["sampled_voxels"] = report.sampled_voxels;
        doc["notices"] = report.notices;
        write_json(doc, (out / "report.json").string());

        std::ofstream bins((out / "bins.csv").string(), std::ios::trunc);
        if (!bins) throw ValidationError("bins.csv: cannot open for writing");
        bins << "bin_lo,bin_hi,count,q1,median,q3\n";
        for (std::size_t b = 0; b < report.per_bin.size(); ++b) {
            bins << fmt17(report.bin_edges[b]) << ',' << fmt17(report.bin_edges[b + 1]) << ','
                 << report.per_bin[b].count << ',' << fmt17(report.per_bin[b].q1) << ','
                 << fmt17(report.per_bin[b].median) << ',' << fmt17(report.per_bin[b].q3)
                 << '\n';
        }
        std::ofstream cum((out / "cumulative.csv").string(), std::ios::trunc);
        if (!cum) throw ValidationError("cumulative.csv: cannot open for writing");
        cum << "distance,cumulative_sq_loading\n";
        for (std::size_t b = 0; b < report.cumulative_sq_loading.size(); ++b) {
            cum << fmt17(report.bin_edges[b + 1]) << ','
                << fmt17(report.cumulative_sq_loading[b]) << '\n';
        }
    } else {
        throw ValidationError("diagnose kind must be order-sensitivity, rotation-sensitivity, "
                              "or locality");
    }

    json resolved = args.engine.resolved();
    resolved["command"] = "diagnose";
    resolved["kind"] = args.kind;
    resolved["manifest"] = args.manifest;
    resolved["n"] = args.n;
    resolved["metric"] = args.metric;
    resolved["bin_width"] = args.bin_width;
    resolved["voxel_sample"] = args.voxel_sample;
    resolved["seed"] = args.seed;
    write_json(resolved, (out / "resolved-config.json").string());
    return 0;
}

// ---------------------------------------------------------------------------
// build-prior
// ---------------------------------------------------------------------------

struct BuildPriorArgs {
    std::string coords, out, config_path, kind = "euclidean";
    CLI::Option* coords_opt = nullptr;
    CLI::Option* kind_opt = nullptr;
};

int run_build_prior(BuildPriorArgs& args) {
    const json cfg = load_config_file(args.config_path);
    args.coords = pick(args.coords_opt, args.coords, cfg, "coords");
    args.kind = pick(args.kind_opt, args.kind, cfg, "kind");
    if (args.coords.empty()) throw ValidationError("--coords is required");
    ensure_out_dir(args.out);

    VoxelCoordinates coords = load_coords(args.coords);
    LocationMatrix F;
    if (args.kind == "euclidean") {
        F = build_location_matrix(coords, PriorKind::EuclideanSimilarity);
    } else if (args.kind == "identity") {
        F = identity_location_matrix(static_cast<Eigen::Index>(coords.size()));
    } else {
        throw ValidationError("--kind must be euclidean or identity");
    }

    const fs::path out(args.out);
    save_matrix(F.values, (out / "prior.dmat").string(), MatrixFormat::Dmat);

    json resolved{{"command", "build-prior"}, {"coords", args.coords}, {"kind", args.kind}};
    write_json(resolved, (out / "resolved-config.json").string());

    json report;
    report["command"] = "build-prior";
    report["kind"] = args.kind;
    report["v"] = coords.size();
    report["full_rank"] = check_full_rank(F.values, kDefaultRankTol);
    write_json(report, (out / "report.json").string());
    return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
    CLI::App app{"Procrustes functional alignment toolkit"};
    app.require_subcommand(1);

    AlignArgs align_args;
    SimulateArgs sim_args;
    EvaluateArgs eval_args;
    SelectKArgs selk_args;
    DiagnoseArgs diag_args;
    BuildPriorArgs prior_args;

    // align
    CLI::App* align_cmd = app.add_subcommand("align", "Align a cohort and write transforms");
    align_args.manifest_opt =
        align_cmd->add_option("--manifest", align_args.manifest, "Cohort manifest JSON");
    align_cmd->add_option("--out", align_args.out, "Output directory")->required();
    align_args.engine.attach(align_cmd, false);
    align_args.order_opt = align_cmd->add_option(
        "--order", align_args.order, "Subject order for engine hyper (comma-separated indices)");
    align_args.seed_opt = align_cmd->add_option("--seed", align_args.seed, "Master seed");
    align_cmd->add_option("--threads", align_args.threads,
                          "Worker threads (0 = PROMISES_THREADS or hardware)");
    align_cmd->add_option("--config", align_args.config_path, "JSON config file");

    // simulate
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort");
    sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();
    sim_args.m_opt = sim_cmd->add_option("--m", sim_args.m, "Subjects (default 4)");
    sim_args.t_opt = sim_cmd->add_option("--t", sim_args.t, "Time points (default 8)");
    sim_args.v_opt = sim_cmd->add_option("--v", sim_args.v, "Voxels (default 8)");
    sim_args.noise_opt =
        sim_cmd->add_option("--noise-sigma", sim_args.noise_sigma, "Noise std dev (default 0)");
    sim_args.grid_opt = sim_cmd->add_option("--grid", sim_args.grid_text,
                                            "Grid dims 'nx,ny,nz' (enables coordinates)");
    sim_args.classes_opt =
        sim_cmd->add_option("--n-classes", sim_args.n_classes, "Class count (0 = unlabeled)");
    sim_args.locality_opt = sim_cmd->add_option("--rotation-locality", sim_args.rotation_locality,
                                                "0 = identity transforms, 1 = fully Haar");
    sim_args.seed_opt = sim_cmd->add_option("--seed", sim_args.seed, "Master seed");
    sim_cmd->add_option("--config", sim_args.config_path, "JSON config file");

    // evaluate
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Between-subject evaluation harnesses");
    eval_args.manifest_opt =
        eval_cmd->add_option("--manifest", eval_args.manifest, "Cohort manifest JSON");
    eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
    eval_args.protocol_opt = eval_cmd->add_option("--protocol", eval_args.protocol,
                                                  "loso-linear or segment-corr");
    eval_args.labels_opt =
        eval_cmd->add_option("--labels", eval_args.labels, "Labels CSV (overrides manifest)");
    eval_args.engine.attach(eval_cmd, true);
    eval_args.ridge_opt =
        eval_cmd->add_option("--ridge", eval_args.ridge, "Ridge penalty (default 1.0)");
    eval_args.seglen_opt = eval_cmd->add_option("--segment-length", eval_args.segment_length,
                                                "Segment length in time points (default 6)");
    eval_args.stride_opt =
        eval_cmd->add_option("--stride", eval_args.stride, "Segment stride (default 6)");
    eval_args.split_opt = eval_cmd->add_option("--split", eval_args.split,
                                               "'half' or 'tb:te:sb:se' time ranges");
    eval_args.seed_opt = eval_cmd->add_option("--seed", eval_args.seed, "Master seed");
    eval_cmd->add_option("--threads", eval_args.threads,
                         "Worker threads (0 = PROMISES_THREADS or hardware)");
    eval_cmd->add_option("--config", eval_args.config_path, "JSON config file");

    // select-k
    CLI::App* selk_cmd = app.add_subcommand("select-k", "Nested CV concentration selection");
    selk_args.manifest_opt =
        selk_cmd->add_option("--manifest", selk_args.manifest, "Cohort manifest JSON");
    selk_cmd->add_option("--out", selk_args.out, "Output directory")->required();
    selk_args.grid_opt = selk_cmd->add_option("--grid", selk_args.grid,
                                              "Candidates: 'lo:hi' or comma list (default 1:100)");
    selk_args.evaluator_opt = selk_cmd->add_option("--evaluator", selk_args.evaluator,
                                                   "loso-linear or segment-corr");
    selk_args.labels_opt =
        selk_cmd->add_option("--labels", selk_args.labels, "Labels CSV (overrides manifest)");
    selk_args.engine.attach(selk_cmd, false);
    selk_args.ridge_opt =
        selk_cmd->add_option("--ridge", selk_args.ridge, "Ridge penalty (default 1.0)");
    selk_args.seglen_opt = selk_cmd->add_option("--segment-length", selk_args.segment_length,
                                                "Segment length in time points (default 6)");
    selk_args.stride_opt =
        selk_cmd->add_option("--stride", selk_args.stride, "Segment stride (default 6)");
    selk_args.split_opt = selk_cmd->add_option("--split", selk_args.split,
                                               "'half' or 'tb:te:sb:se' time ranges");
    selk_args.seed_opt = selk_cmd->add_option("--seed", selk_args.seed, "Master seed");
    selk_cmd->add_option("--threads", selk_args.threads,
                         "Worker threads (0 = PROMISES_THREADS or hardware)");
    selk_cmd->add_option("--config", selk_args.config_path, "JSON config file");

    // diagnose
    CLI::App* diag_cmd = app.add_subcommand("diagnose", "Sensitivity and locality diagnostics");
    diag_cmd->add_option("kind", diag_args.kind,
                         "order-sensitivity, rotation-sensitivity, or locality")
        ->required();
    diag_args.manifest_opt =
        diag_cmd->add_option("--manifest", diag_args.manifest, "Cohort manifest JSON");
    diag_cmd->add_option("--out", diag_args.out, "Output directory")->required();
    diag_args.n_opt = diag_cmd->add_option("--n", diag_args.n, "Trial count (default 20)");
    diag_args.engine.attach(diag_cmd, false);
    diag_args.metric_opt = diag_cmd->add_option("--metric", diag_args.metric,
                                                "Order metric: reference or aligned");
    diag_args.bin_width_opt = diag_cmd->add_option("--bin-width", diag_args.bin_width,
                                                   "Locality bin width (default 1.0)");
    diag_args.voxel_sample_opt = diag_cmd->add_option(
        "--voxel-sample", diag_args.voxel_sample, "Locality target-voxel sample size (default 50)");
    diag_args.seed_opt = diag_cmd->add_option("--seed", diag_args.seed, "Master seed");
    diag_cmd->add_option("--threads", diag_args.threads,
                         "Worker threads (0 = PROMISES_THREADS or hardware)");
    diag_cmd->add_option("--config", diag_args.config_path, "JSON config file");

    // build-prior
    CLI::App* prior_cmd = app.add_subcommand("build-prior", "Build a location matrix file");
    prior_args.coords_opt =
        prior_cmd->add_option("--coords", prior_args.coords, "Coordinates CSV (header x,y,z)");
    prior_cmd->add_option("--out", prior_args.out, "Output directory")->required();
    prior_args.kind_opt =
        prior_cmd->add_option("--kind", prior_args.kind, "euclidean or identity");
    prior_cmd->add_option("--config", prior_args.config_path, "JSON config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (align_cmd->parsed()) return run_align(align_args);
        if (sim_cmd->parsed()) return run_simulate(sim_args);
        if (eval_cmd->parsed()) return run_evaluate(eval_args);
        if (selk_cmd->parsed()) return run_select_k(selk_args);
        if (diag_cmd->parsed()) return run_diagnose(diag_args);
        if (prior_cmd->parsed()) return run_build_prior(prior_args);
        throw ValidationError("no subcommand given");
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace promises
