#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace promises {

// All numerics are IEEE-754 double throughout the library.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Input or configuration problems: caller gave us something unusable.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical breakdown on otherwise valid input (rank collapse, NaN creep).
// The CLI maps these to exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SubjectScan {
    std::string subject_id;
    Matrix data;  // t time points x v voxels
};

struct VoxelCoordinates {
    enum class Units { VoxelIndex, Millimeter };

    std::vector<std::array<double, 3>> entries;
    Units units = Units::VoxelIndex;

    std::size_t size() const { return entries.size(); }
};

struct Cohort {
    std::vector<SubjectScan> scans;
    std::optional<VoxelCoordinates> coords;

    std::size_t m() const { return scans.size(); }
    Eigen::Index t() const { return scans.empty() ? 0 : scans.front().data.rows(); }
    Eigen::Index v() const { return scans.empty() ? 0 : scans.front().data.cols(); }

    // Throws ValidationError unless m >= 2, all scans share (t, v), all
    // entries are finite, and coords (when present) match v.
    void validate() const;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace promises
