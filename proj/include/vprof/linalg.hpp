#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "vprof/errors.hpp"

namespace vprof {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + ": non-finite entries");
}

inline void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + ": non-finite entries");
}

/// Format a double with 17 significant digits (exact round-trip).
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Thin orthonormal basis for the column span of B (rank decided at `tol`
/// relative to the largest singular value). Returns a d x r matrix.
inline Mat orthonormal_columns(const Mat& B, double tol = 1e-12) {
    if (B.cols() == 0) return Mat(B.rows(), 0);
    Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * std::max(1.0, smax)) ++r;
    return svd.matrixU().leftCols(r);
}

/// Run fn(i) for i in [0, n) on up to `jobs` threads. Each index writes only
/// its own output slot, so results do not depend on the thread count.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int nt = std::min<std::size_t>(jobs, n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

/// Least-squares fit of log|y| = a + r t; returns the rate r. Points with
/// |y| below `floor` are skipped.
inline double fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& y,
                                   double floor = 1e-300) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    int n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(y[i]) < floor) continue;
        double ly = std::log(std::abs(y[i]));
        st += t[i];
        sy += ly;
        stt += t[i] * t[i];
        sty += t[i] * ly;
        ++n;
    }
    if (n < 2) return 0.0;
    double denom = n * stt - st * st;
    if (std::abs(denom) < 1e-300) return 0.0;
    return (n * sty - st * sy) / denom;
}

} // namespace vprof
