#include "promises/io.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace promises {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kDmatMagic[4] = {'P', 'M', 'X', '1'};

void write_u64_le(std::ostream& out, std::uint64_t value) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return value;
}

void write_f64_le(std::ostream& out, double value) {
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    write_u64_le(out, bits);
}

double read_f64_le(std::istream& in) {
    std::uint64_t bits = read_u64_le(in);
    double value;
    std::memcpy(&value, &bits, 8);
    return value;
}

double parse_cell(const std::string& token, const std::string& path, std::size_t row,
                  std::size_t col) {
    const char* begin = token.c_str();
    char* end = nullptr;
    double value = std::strtod(begin, &end);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == begin || (end && *end != '\0')) {
        throw ValidationError(path + ": unparsable value '" + token + "' at row " +
                              std::to_string(row + 1) + ", column " + std::to_string(col + 1));
    }
    if (!std::isfinite(value)) {
        throw ValidationError(path + ": non-finite value at row " + std::to_string(row + 1) +
                              ", column " + std::to_string(col + 1));
    }
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t row_idx = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            row.push_back(parse_cell(trim(cells[c]), path, row_idx, c));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ValidationError(path + ": ragged row " + std::to_string(row_idx + 1) + " has " +
                                  std::to_string(row.size()) + " cells, expected " +
                                  std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
        ++row_idx;
    }
    if (rows.empty()) throw ValidationError(path + ": empty matrix file");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
    }
    return m;
}

Matrix load_matrix_dmat(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDmatMagic, 4) != 0) {
        throw ValidationError(path + ": bad magic, not a dmat file");
    }
    std::uint64_t rows = read_u64_le(in);
    std::uint64_t cols = read_u64_le(in);
    if (!in) throw ValidationError(path + ": truncated dmat header");
    if (rows == 0 || cols == 0) throw ValidationError(path + ": dmat dimensions must be positive");
    // 1e9 cells = 8 GB; anything above is a corrupt header in practice.
    if (rows > (1ULL << 32) || cols > (1ULL << 32) || rows * cols > 1000000000ULL) {
        throw ValidationError(path + ": implausible dmat dimensions");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r) {
        for (std::uint64_t c = 0; c < cols; ++c) {
            double value = read_f64_le(in);
            if (!in) throw ValidationError(path + ": truncated dmat payload");
            if (!std::isfinite(value)) {
                throw ValidationError(path + ": non-finite value at row " + std::to_string(r + 1) +
                                      ", column " + std::to_string(c + 1));
            }
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value;
        }
    }
    return m;
}

}  // namespace

void Cohort::validate() const {
    if (scans.size() < 2) {
        throw ValidationError("cohort needs at least 2 subjects, got " +
                              std::to_string(scans.size()));
    }
    const Eigen::Index t0 = scans.front().data.rows();
    const Eigen::Index v0 = scans.front().data.cols();
    if (t0 < 1 || v0 < 1) throw ValidationError("cohort matrices must be non-empty");
    for (const auto& scan : scans) {
        if (scan.data.rows() != t0 || scan.data.cols() != v0) {
            throw ValidationError("subject '" + scan.subject_id + "' has shape " +
                                  std::to_string(scan.data.rows()) + "x" +
                                  std::to_string(scan.data.cols()) + ", expected " +
                                  std::to_string(t0) + "x" + std::to_string(v0));
        }
        if (!scan.data.allFinite()) {
            throw ValidationError("subject '" + scan.subject_id + "' contains non-finite values");
        }
    }
    if (coords && static_cast<Eigen::Index>(coords->size()) != v0) {
        throw ValidationError("coordinates describe " + std::to_string(coords->size()) +
                              " voxels but matrices have " + std::to_string(v0));
    }
}

MatrixFormat format_from_path(const std::string& path) {
    return fs::path(path).extension() == ".dmat" ? MatrixFormat::Dmat : MatrixFormat::Csv;
}

Matrix load_matrix(const std::string& path, MatrixFormat format) {
    return format == MatrixFormat::Dmat ? load_matrix_dmat(path) : load_matrix_csv(path);
}

Matrix load_matrix(const std::string& path) { return load_matrix(path, format_from_path(path)); }

void save_matrix(const Matrix& m, const std::string& path, MatrixFormat format) {
    if (m.rows() < 1 || m.cols() < 1) throw ValidationError("refusing to save an empty matrix");
    if (!m.allFinite()) throw ValidationError("refusing to save non-finite values to " + path);
    if (format == MatrixFormat::Dmat) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError(path + ": cannot open for writing");
        out.write(kDmatMagic, 4);
        write_u64_le(out, static_cast<std::uint64_t>(m.rows()));
        write_u64_le(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64_le(out, m(r, c));
        }
        if (!out) throw ValidationError(path + ": write failure");
    } else {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw ValidationError(path + ": cannot open for writing");
        char buf[64];
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                // 17 significant digits round-trip any double exactly.
                std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
                out << buf;
                if (c + 1 < m.cols()) out << ',';
            }
            out << '\n';
        }
        if (!out) throw ValidationError(path + ": write failure");
    }
}

void save_matrix(const Matrix& m, const std::string& path) {
    save_matrix(m, path, format_from_path(path));
}

VoxelCoordinates load_coords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open for reading");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty coordinates file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() != 3 || trim(header[0]) != "x" || trim(header[1]) != "y" ||
        trim(header[2]) != "z") {
        throw ValidationError(path + ": coordinates file must start with header 'x,y,z'");
    }
    VoxelCoordinates coords;
    std::size_t row_idx = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3) {
            throw ValidationError(path + ": coordinate row " + std::to_string(row_idx + 1) +
                                  " has " + std::to_string(cells.size()) + " cells, expected 3");
        }
        std::array<double, 3> p;
        for (std::size_t c = 0; c < 3; ++c) p[c] = parse_cell(trim(cells[c]), path, row_idx + 1, c);
        coords.entries.push_back(p);
        ++row_idx;
    }
    if (coords.entries.empty()) throw ValidationError(path + ": no coordinate rows");
    return coords;
}

void save_coords(const VoxelCoordinates& coords, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(path + ": cannot open for writing");
    out << "x,y,z\n";
    char buf[64];
    for (const auto& p : coords.entries) {
        for (int c = 0; c < 3; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", p[static_cast<std::size_t>(c)]);
            out << buf;
            if (c < 2) out << ',';
        }
        out << '\n';
    }
    if (!out) throw ValidationError(path + ": write failure");
}

std::vector<int> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open for reading");
    std::vector<int> labels;
    std::string line;
    std::size_t row_idx = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string token = trim(line);
        if (token.empty()) continue;
        double value = parse_cell(token, path, row_idx, 0);
        int label = static_cast<int>(value);
        if (static_cast<double>(label) != value) {
            throw ValidationError(path + ": label at row " + std::to_string(row_idx + 1) +
                                  " is not an integer");
        }
        labels.push_back(label);
        ++row_idx;
    }
    if (labels.empty()) throw ValidationError(path + ": no labels");
    return labels;
}

void save_labels(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(path + ": cannot open for writing");
    for (int label : labels) out << label << '\n';
    if (!out) throw ValidationError(path + ": write failure");
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open for reading");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError(path + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("subjects") || !doc["subjects"].is_array()) {
        throw ValidationError(path + ": manifest needs a 'subjects' array");
    }
    Manifest manifest;
    for (const auto& entry : doc["subjects"]) {
        if (!entry.is_object() || !entry.contains("subject_id") || !entry.contains("data")) {
            throw ValidationError(path + ": each subject needs 'subject_id' and 'data'");
        }
        manifest.subjects.push_back(
            {entry["subject_id"].get<std::string>(), entry["data"].get<std::string>()});
    }
    if (doc.contains("coords")) manifest.coords_path = doc["coords"].get<std::string>();
    if (doc.contains("labels")) manifest.labels_path = doc["labels"].get<std::string>();
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    json doc;
    doc["subjects"] = json::array();
    for (const auto& entry : manifest.subjects) {
        doc["subjects"].push_back({{"subject_id", entry.subject_id}, {"data", entry.data_path}});
    }
    if (manifest.coords_path) doc["coords"] = *manifest.coords_path;
    if (manifest.labels_path) doc["labels"] = *manifest.labels_path;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(path + ": cannot open for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw ValidationError(path + ": write failure");
}

LoadedCohort load_cohort(const std::string& manifest_path) {
    Manifest manifest = load_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    LoadedCohort loaded;
    for (const auto& entry : manifest.subjects) {
        loaded.cohort.scans.push_back({entry.subject_id, load_matrix(resolve(entry.data_path))});
    }
    if (manifest.coords_path) loaded.cohort.coords = load_coords(resolve(*manifest.coords_path));
    if (manifest.labels_path) loaded.labels = load_labels(resolve(*manifest.labels_path));
    loaded.cohort.validate();
    return loaded;
}

}  // namespace promises
