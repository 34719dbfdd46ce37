#include "promises/simulate.hpp"

#include "promises/rng.hpp"

#include <Eigen/QR>

#include <cstdio>
#include <string>

namespace promises {

namespace {

// Seed streams for cohort generation; kept stable so a documented seed
// always regenerates the same cohort.
constexpr std::uint64_t kStreamReference = 0;
constexpr std::uint64_t kStreamRotation = 1;
constexpr std::uint64_t kStreamNoise = 2;

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.gauss();
    }
    return m;
}

}  // namespace

Matrix haar_orthogonal(Eigen::Index v, std::uint64_t seed) {
    if (v < 1) throw ValidationError("haar_orthogonal: v must be positive");
    Rng rng(seed);
    Matrix G = gaussian_matrix(v, v, rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ();
    Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign-of-diagonal correction makes the draw exactly Haar-uniform.
    for (Eigen::Index j = 0; j < v; ++j) {
        if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    }
    return Q;
}

VoxelCoordinates grid_coords(const std::array<Eigen::Index, 3>& dims) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
        throw ValidationError("grid_coords: all dimensions must be positive");
    }
    VoxelCoordinates coords;
    coords.units = VoxelCoordinates::Units::VoxelIndex;
    coords.entries.reserve(
        static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
        static_cast<std::size_t>(dims[2]));
    for (Eigen::Index x = 0; x < dims[0]; ++x) {
        for (Eigen::Index y = 0; y < dims[1]; ++y) {
            for (Eigen::Index z = 0; z < dims[2]; ++z) {
                coords.entries.push_back({static_cast<double>(x), static_cast<double>(y),
                                          static_cast<double>(z)});
            }
        }
    }
    return coords;
}

SynthCohort synth_cohort(const SynthSpec& spec) {
    if (spec.m < 2) throw ValidationError("synth_cohort: m must be at least 2");
    if (spec.t < 1 || spec.v < 1) throw ValidationError("synth_cohort: t and v must be positive");
    if (spec.noise_sigma < 0.0) throw ValidationError("synth_cohort: noise_sigma must be >= 0");
    if (spec.rotation_locality < 0.0 || spec.rotation_locality > 1.0) {
        throw ValidationError("synth_cohort: rotation_locality must lie in [0, 1]");
    }
    if (spec.n_classes < 0 || static_cast<Eigen::Index>(spec.n_classes) > spec.t) {
        throw ValidationError("synth_cohort: n_classes must lie in [0, t]");
    }
    const bool has_grid = spec.grid_dims[0] > 0;
    if (has_grid && spec.grid_dims[0] * spec.grid_dims[1] * spec.grid_dims[2] != spec.v) {
        throw ValidationError("synth_cohort: grid dimensions must multiply to v");
    }

    SynthCohort out;

    Rng ref_rng(derive_seed(spec.seed, kStreamReference));
    Matrix M = gaussian_matrix(spec.t, spec.v, ref_rng);
    if (spec.n_classes > 0) {
        // Block-constant class patterns: class c owns a contiguous band of
        // voxels and adds a unit-amplitude offset to its rows.  Labels cycle
        // so every class appears evenly across any contiguous time split.
        out.labels.resize(static_cast<std::size_t>(spec.t));
        for (Eigen::Index row = 0; row < spec.t; ++row) {
            const int c = static_cast<int>(row % spec.n_classes);
            out.labels[static_cast<std::size_t>(row)] = c;
            const Eigen::Index lo = spec.v * c / spec.n_classes;
            const Eigen::Index hi = spec.v * (c + 1) / spec.n_classes;
            for (Eigen::Index col = lo; col < hi; ++col) M(row, col) += 1.0;
        }
    }
    out.true_reference = M;

    for (std::size_t i = 0; i < spec.m; ++i) {
        const double a = spec.rotation_locality;
        Matrix R;
        if (a == 0.0) {
            R = Matrix::Identity(spec.v, spec.v);
        } else {
            Matrix G = haar_orthogonal(spec.v, derive_seed(spec.seed, kStreamRotation, i));
            // Polar retraction of the blend keeps the draw orthogonal while
            // rotation_locality dials it between identity and fully Haar.
            Matrix B = a * G + (1.0 - a) * Matrix::Identity(spec.v, spec.v);
            R = svd_polar(B);
        }

        Matrix X = M * R.transpose();
        if (spec.noise_sigma > 0.0) {
            Rng noise_rng(derive_seed(spec.seed, kStreamNoise, i));
            X += spec.noise_sigma * gaussian_matrix(spec.t, spec.v, noise_rng);
        }

        char id[16];
        std::snprintf(id, sizeof(id), "s%03zu", i);
        out.cohort.scans.push_back({id, std::move(X)});
        out.true_transforms.push_back({id, std::move(R)});
    }

    if (has_grid) out.cohort.coords = grid_coords(spec.grid_dims);
    out.cohort.validate();
    return out;
}

}  // namespace promises
