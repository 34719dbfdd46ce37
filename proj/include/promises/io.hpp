#pragma once

#include "promises/matrix.hpp"

#include <optional>
#include <string>
#include <vector>

namespace promises {

enum class MatrixFormat { Csv, Dmat };

// Picks Dmat for a ".dmat" extension, Csv otherwise.
MatrixFormat format_from_path(const std::string& path);

// CSV matrices are headerless comma-separated rows; dmat is "PMX1" magic,
// rows and cols as little-endian u64, then the row-major little-endian f64
// payload.  Loads reject NaN/Inf naming the offending cell, ragged rows, and
// malformed headers.
Matrix load_matrix(const std::string& path, MatrixFormat format);
Matrix load_matrix(const std::string& path);  // format from extension
void save_matrix(const Matrix& m, const std::string& path, MatrixFormat format);
void save_matrix(const Matrix& m, const std::string& path);

// Coordinates CSV requires the exact header "x,y,z".
VoxelCoordinates load_coords(const std::string& path);
void save_coords(const VoxelCoordinates& coords, const std::string& path);

// Labels CSV: one integer class id per row, headerless.
std::vector<int> load_labels(const std::string& path);
void save_labels(const std::vector<int>& labels, const std::string& path);

// Cohort manifest: JSON with an ordered "subjects" array of
// {"subject_id": ..., "data": ...} entries plus optional "coords" and
// "labels" paths.  Relative paths resolve against the manifest directory.
struct ManifestEntry {
    std::string subject_id;
    std::string data_path;
};

struct Manifest {
    std::vector<ManifestEntry> subjects;
    std::optional<std::string> coords_path;
    std::optional<std::string> labels_path;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

struct LoadedCohort {
    Cohort cohort;
    std::vector<int> labels;  // empty when the manifest names none
};

LoadedCohort load_cohort(const std::string& manifest_path);

}  // namespace promises
