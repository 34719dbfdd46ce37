#pragma once

#include "promises/align.hpp"
#include "promises/matrix.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace promises {

struct SynthSpec {
    std::size_t m = 2;
    Eigen::Index t = 8;
    Eigen::Index v = 8;
    double noise_sigma = 0.0;
    std::array<Eigen::Index, 3> grid_dims = {0, 0, 0};  // product must equal v when set
    int n_classes = 0;                                  // 0 = unlabeled
    double rotation_locality = 1.0;                     // 0 = identity, 1 = fully Haar
    std::uint64_t seed = 0;
};

struct SynthCohort {
    Cohort cohort;
    Matrix true_reference;
    std::vector<OrthogonalTransform> true_transforms;
    std::vector<int> labels;  // empty when n_classes = 0
};

// Haar-uniform orthogonal matrix: QR of an iid Gaussian draw with the
// sign-of-R-diagonal correction.  Deterministic per seed.
Matrix haar_orthogonal(Eigen::Index v, std::uint64_t seed);

// Lattice points of the grid in lexicographic order, voxel-index units.
VoxelCoordinates grid_coords(const std::array<Eigen::Index, 3>& dims);

// X_i = M R_i^T + E_i with M iid standard Gaussian (plus block-constant class
// means when n_classes > 0), R_i = polar(a G + (1-a) I) for Haar G and
// a = rotation_locality, E_i iid Gaussian(0, noise_sigma^2).
SynthCohort synth_cohort(const SynthSpec& spec);

}  // namespace promises
