#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>

namespace oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("naive_matmul: shape mismatch");
    Matrix out(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (Eigen::Index l = 0; l < a.cols(); ++l) acc += a(i, l) * b(l, j);
            out(i, j) = acc;
        }
    }
    return out;
}

double naive_frob_sq(const Matrix& a) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
    }
    return acc;
}

double naive_trace_inner(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("naive_trace_inner: shape mismatch");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) acc += a(i, j) * b(i, j);
    }
    return acc;
}

double naive_objective(const std::vector<Matrix>& aligned, const Matrix& m) {
    double acc = 0.0;
    for (const Matrix& a : aligned) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                const double d = a(i, j) - m(i, j);
                acc += d * d;
            }
        }
    }
    return acc;
}

double naive_penalized(const std::vector<Matrix>& x, const std::vector<Matrix>& r,
                       const Matrix& m, double k, const Matrix& f) {
    double acc = 0.0;
    for (std::size_t s = 0; s < x.size(); ++s) {
        const Matrix xr = naive_matmul(x[s], r[s]);
        for (Eigen::Index i = 0; i < xr.rows(); ++i) {
            for (Eigen::Index j = 0; j < xr.cols(); ++j) {
                const double d = xr(i, j) - m(i, j);
                acc += d * d;
            }
        }
        if (k != 0.0) acc -= 2.0 * k * naive_trace_inner(f, r[s]);
    }
    return acc;
}

Matrix rot2(double theta) {
    Matrix r(2, 2);
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

Matrix refl2(double theta) {
    Matrix r(2, 2);
    r << std::cos(theta), std::sin(theta), std::sin(theta), -std::cos(theta);
    return r;
}

GridBest grid_opp_best(const Matrix& a, double h) {
    const double two_pi = 2.0 * M_PI;
    GridBest best{-std::numeric_limits<double>::infinity(), Matrix()};
    for (double theta = 0.0; theta < two_pi; theta += h) {
        const Matrix r = rot2(theta);
        const double val = naive_trace_inner(a, r);
        if (val > best.value) {
            best.value = val;
            best.r = r;
        }
        const Matrix q = refl2(theta);
        const double val2 = naive_trace_inner(a, q);
        if (val2 > best.value) {
            best.value = val2;
            best.r = q;
        }
    }
    return best;
}

namespace {

// Best O(2) element for one subject by coarse grid plus local refinement.
Matrix grid_opp_refined(const Matrix& a) {
    const double two_pi = 2.0 * M_PI;
    const double coarse = 1e-3;
    double best_val = -std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    bool best_reflect = false;
    for (double theta = 0.0; theta < two_pi; theta += coarse) {
        const double vr = naive_trace_inner(a, rot2(theta));
        if (vr > best_val) {
            best_val = vr;
            best_theta = theta;
            best_reflect = false;
        }
        const double vq = naive_trace_inner(a, refl2(theta));
        if (vq > best_val) {
            best_val = vq;
            best_theta = theta;
            best_reflect = true;
        }
    }
    const double fine = 1e-7;
    double refined = best_theta;
    for (double theta = best_theta - 2.0 * coarse; theta <= best_theta + 2.0 * coarse;
         theta += fine) {
        const Matrix r = best_reflect ? refl2(theta) : rot2(theta);
        const double val = naive_trace_inner(a, r);
        if (val > best_val) {
            best_val = val;
            refined = theta;
        }
    }
    return best_reflect ? refl2(refined) : rot2(refined);
}

}  // namespace

AltGridResult alt_grid_align(const std::vector<Matrix>& x, double k, const Matrix& f,
                             int sweeps) {
    const std::size_t m = x.size();
    std::vector<Matrix> r(m, Matrix::Identity(2, 2));
    std::vector<Matrix> aligned = x;

    Matrix ref = Matrix::Zero(x[0].rows(), x[0].cols());
    for (std::size_t i = 0; i < m; ++i) ref += x[i];
    ref /= static_cast<double>(m);

    double prev = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t i = 0; i < m; ++i) {
            Matrix a = naive_matmul(x[i].transpose(), ref);
            if (k != 0.0) a = a + k * f;
            r[i] = grid_opp_refined(a);
            aligned[i] = naive_matmul(x[i], r[i]);
        }
        ref = Matrix::Zero(x[0].rows(), x[0].cols());
        for (std::size_t i = 0; i < m; ++i) ref += aligned[i];
        ref /= static_cast<double>(m);

        const double obj = (k != 0.0) ? naive_penalized(x, r, ref, k, f)
                                      : naive_objective(aligned, ref);
        if (std::abs(prev - obj) < 1e-13 * (1.0 + std::abs(obj))) {
            prev = obj;
            break;
        }
        prev = obj;
    }
    return AltGridResult{prev, aligned, ref};
}

std::vector<double> jacobi_singular_values(const Matrix& a) {
    const Eigen::Index n = a.cols();
    Matrix s = naive_matmul(a.transpose(), a);

    for (int pass = 0; pass < 100; ++pass) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
        }
        if (off < 1e-26) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (s(p, q) == 0.0) continue;
                const double tau = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double sip = s(i, p);
                    const double siq = s(i, q);
                    s(i, p) = c * sip - sn * siq;
                    s(i, q) = sn * sip + c * siq;
                }
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double spj = s(p, j);
                    const double sqj = s(q, j);
                    s(p, j) = c * spj - sn * sqj;
                    s(q, j) = sn * spj + c * sqj;
                }
            }
        }
    }

    std::vector<double> values(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        values[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, s(i, i)));
    }
    std::sort(values.begin(), values.end(), std::greater<double>());
    return values;
}

double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("naive_pearson: shape mismatch");
    }
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da <= 0.0 || db <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / std::sqrt(da * db);
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for hashing");
    std::uint64_t hash = 1469598103934665603ull;
    char byte;
    while (in.get(byte)) {
        hash ^= static_cast<unsigned char>(byte);
        hash *= 1099511628211ull;
    }
    return hash;
}

}  // namespace oracle
