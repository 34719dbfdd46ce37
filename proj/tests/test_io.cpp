#include <doctest.h>

#include <promises/io.hpp>
#include <promises/rng.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace promises;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("pmx_io_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

// Builds a dmat file byte by byte, independent of save_matrix.
void write_dmat_raw(const fs::path& path, std::uint64_t rows, std::uint64_t cols,
                    const std::vector<double>& row_major) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write("PMX1", 4);
    auto put_u64 = [&](std::uint64_t value) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    };
    put_u64(rows);
    put_u64(cols);
    for (double value : row_major) {
        std::uint64_t bits;
        std::memcpy(&bits, &value, 8);
        put_u64(bits);
    }
}

Matrix seeded_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gauss();
    }
    return m;
}

}  // namespace

TEST_CASE("csv identity matrix loads") {
    const fs::path dir = fresh_dir("csv_identity");
    write_text(dir / "id.csv", "1,0\n0,1\n");
    const Matrix m = load_matrix((dir / "id.csv").string());
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 0.0);
    CHECK(m(1, 0) == 0.0);
    CHECK(m(1, 1) == 1.0);
}

TEST_CASE("dmat file written externally loads with declared dimensions") {
    const fs::path dir = fresh_dir("dmat_raw");
    const std::vector<double> payload{1.5, -2.0, 0.0, 3.25, 1e-300, -7.0};
    write_dmat_raw(dir / "m.dmat", 3, 2, payload);
    const Matrix m = load_matrix((dir / "m.dmat").string());
    REQUIRE(m.rows() == 3);
    REQUIRE(m.cols() == 2);
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) CHECK(m(i, j) == payload[idx++]);
    }
}

TEST_CASE("csv nan cell is rejected naming the cell") {
    const fs::path dir = fresh_dir("csv_nan");
    write_text(dir / "bad.csv", "1,2\n3,nan\n");
    try {
        load_matrix((dir / "bad.csv").string());
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
}

TEST_CASE("csv ragged rows are rejected") {
    const fs::path dir = fresh_dir("csv_ragged");
    write_text(dir / "bad.csv", "1,2\n3\n");
    CHECK_THROWS_AS(load_matrix((dir / "bad.csv").string()), ValidationError);
}

TEST_CASE("identity round-trips through both formats") {
    const fs::path dir = fresh_dir("roundtrip_id");
    const Matrix id = Matrix::Identity(2, 2);
    for (MatrixFormat format : {MatrixFormat::Csv, MatrixFormat::Dmat}) {
        const fs::path path = dir / (format == MatrixFormat::Csv ? "id.csv" : "id.dmat");
        save_matrix(id, path.string(), format);
        const Matrix back = load_matrix(path.string());
        CHECK((back - id).norm() == 0.0);
    }
}

TEST_CASE("seeded 5x7 dmat round-trip is bit-identical") {
    const fs::path dir = fresh_dir("roundtrip_bits");
    const Matrix m = seeded_matrix(5, 7, 90001);
    save_matrix(m, (dir / "m.dmat").string(), MatrixFormat::Dmat);
    const Matrix back = load_matrix((dir / "m.dmat").string());
    REQUIRE(back.rows() == 5);
    REQUIRE(back.cols() == 7);
    for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 7; ++j) {
            CHECK(std::memcmp(&back(i, j), &m(i, j), sizeof(double)) == 0);
        }
    }
}

TEST_CASE("csv round-trip of random data is exact through 17 significant digits") {
    const fs::path dir = fresh_dir("roundtrip_csv");
    const Matrix m = seeded_matrix(4, 3, 90017);
    save_matrix(m, (dir / "m.csv").string(), MatrixFormat::Csv);
    const Matrix back = load_matrix((dir / "m.csv").string());
    // 17 significant digits round-trip doubles exactly.
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(back(i, j) == m(i, j));
    }
}

TEST_CASE("zero 1x1 csv reloads as zero") {
    const fs::path dir = fresh_dir("zero_csv");
    Matrix z(1, 1);
    z(0, 0) = 0.0;
    save_matrix(z, (dir / "z.csv").string(), MatrixFormat::Csv);
    const Matrix back = load_matrix((dir / "z.csv").string());
    CHECK(back(0, 0) == 0.0);
}

TEST_CASE("format follows the file extension") {
    CHECK(format_from_path("a/b/c.dmat") == MatrixFormat::Dmat);
    CHECK(format_from_path("a/b/c.csv") == MatrixFormat::Csv);
    CHECK(format_from_path("noext") == MatrixFormat::Csv);
}

TEST_CASE("coords load single triple") {
    const fs::path dir = fresh_dir("coords_one");
    write_text(dir / "c.csv", "x,y,z\n0,0,0\n");
    const VoxelCoordinates coords = load_coords((dir / "c.csv").string());
    REQUIRE(coords.size() == 1);
    CHECK(coords.entries[0][0] == 0.0);
    CHECK(coords.entries[0][1] == 0.0);
    CHECK(coords.entries[0][2] == 0.0);
}

TEST_CASE("duplicate coordinate rows load fine") {
    const fs::path dir = fresh_dir("coords_dup");
    write_text(dir / "c.csv", "x,y,z\n1,2,3\n1,2,3\n");
    const VoxelCoordinates coords = load_coords((dir / "c.csv").string());
    REQUIRE(coords.size() == 2);
    CHECK(coords.entries[0] == coords.entries[1]);
}

TEST_CASE("coords header missing a column is rejected") {
    const fs::path dir = fresh_dir("coords_badheader");
    write_text(dir / "c.csv", "x,y\n0,0\n");
    CHECK_THROWS_AS(load_coords((dir / "c.csv").string()), ValidationError);
}

TEST_CASE("coords round-trip") {
    const fs::path dir = fresh_dir("coords_roundtrip");
    VoxelCoordinates coords;
    coords.entries = {{0.5, -1.25, 3.0}, {2.0, 0.0, -7.5}};
    save_coords(coords, (dir / "c.csv").string());
    const VoxelCoordinates back = load_coords((dir / "c.csv").string());
    REQUIRE(back.size() == 2);
    CHECK(back.entries == coords.entries);
}

TEST_CASE("labels round-trip") {
    const fs::path dir = fresh_dir("labels_roundtrip");
    const std::vector<int> labels{0, 1, 2, 1, 0};
    save_labels(labels, (dir / "l.csv").string());
    CHECK(load_labels((dir / "l.csv").string()) == labels);
}

TEST_CASE("cohort validation rejects mismatched shapes") {
    Cohort cohort;
    cohort.scans.push_back({"a", Matrix::Zero(3, 4)});
    cohort.scans.push_back({"b", Matrix::Zero(3, 5)});
    CHECK_THROWS_AS(cohort.validate(), ValidationError);

    Cohort single;
    single.scans.push_back({"a", Matrix::Zero(3, 4)});
    CHECK_THROWS_AS(single.validate(), ValidationError);

    Cohort bad_coords;
    bad_coords.scans.push_back({"a", Matrix::Zero(3, 4)});
    bad_coords.scans.push_back({"b", Matrix::Zero(3, 4)});
    VoxelCoordinates coords;
    coords.entries = {{0, 0, 0}, {1, 0, 0}};  // 2 entries for v = 4
    bad_coords.coords = coords;
    CHECK_THROWS_AS(bad_coords.validate(), ValidationError);
}

TEST_CASE("manifest loads subjects in order and resolves relative paths") {
    const fs::path dir = fresh_dir("manifest");
    fs::create_directories(dir / "data");
    const Matrix a = seeded_matrix(4, 3, 90031);
    const Matrix b = seeded_matrix(4, 3, 90032);
    save_matrix(a, (dir / "data" / "a.dmat").string(), MatrixFormat::Dmat);
    save_matrix(b, (dir / "data" / "b.dmat").string(), MatrixFormat::Dmat);
    write_text(dir / "coords.csv", "x,y,z\n0,0,0\n1,0,0\n2,0,0\n");
    write_text(dir / "labels.csv", "0\n1\n0\n1\n");

    Manifest manifest;
    manifest.subjects = {{"subj_a", "data/a.dmat"}, {"subj_b", "data/b.dmat"}};
    manifest.coords_path = "coords.csv";
    manifest.labels_path = "labels.csv";
    save_manifest(manifest, (dir / "manifest.json").string());

    const LoadedCohort loaded = load_cohort((dir / "manifest.json").string());
    REQUIRE(loaded.cohort.m() == 2);
    CHECK(loaded.cohort.scans[0].subject_id == "subj_a");
    CHECK(loaded.cohort.scans[1].subject_id == "subj_b");
    CHECK((loaded.cohort.scans[0].data - a).norm() == 0.0);
    CHECK((loaded.cohort.scans[1].data - b).norm() == 0.0);
    REQUIRE(loaded.cohort.coords.has_value());
    CHECK(loaded.cohort.coords->size() == 3);
    CHECK(loaded.labels == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("dmat with wrong magic is rejected") {
    const fs::path dir = fresh_dir("dmat_magic");
    write_text(dir / "bad.dmat", "XXXX");
    CHECK_THROWS_AS(load_matrix((dir / "bad.dmat").string()), ValidationError);
}

TEST_CASE("missing file is rejected") {
    CHECK_THROWS_AS(load_matrix("/nonexistent/path/m.csv"), ValidationError);
}
