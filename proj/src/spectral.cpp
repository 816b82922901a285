#include "vprof/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

namespace vprof {

namespace {

// Basis of ker M, rank decided at `tol` relative to the largest singular value.
CMat complex_kernel(const CMat& M, double tol) {
    Eigen::JacobiSVD<CMat> svd(M, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * std::max(1.0, smax)) ++rank;
    int d = static_cast<int>(M.cols());
    return svd.matrixV().rightCols(d - rank);
}

// Generalized eigenspace for one eigenvalue: grow ker (A - lambda I)^k until
// the dimension stabilizes (k <= d). The shifted matrix is normalized so that
// powers stay O(1) and the rank threshold is meaningful.
CMat generalized_eigenspace(const Mat& A, std::complex<double> lambda, double tol) {
    int d = static_cast<int>(A.rows());
    CMat S = A.cast<std::complex<double>>();
    for (int i = 0; i < d; ++i) S(i, i) -= lambda;
    double scale = S.norm();
    if (scale > 0) S /= scale;
    CMat P = S;
    CMat best = complex_kernel(P, tol);
    for (int k = 2; k <= d; ++k) {
        P = P * S;
        CMat ker = complex_kernel(P, tol);
        if (ker.cols() == best.cols()) break;
        best = ker;
    }
    return best;
}

} // namespace

SpectralSplit classify_spectrum(const Mat& A, double tol_zero) {
    if (A.rows() != A.cols() || A.rows() == 0)
        fail(ErrorKind::InvalidInput, "classify_spectrum: matrix must be square and non-empty");
    require_finite(A, "classify_spectrum");
    const int d = static_cast<int>(A.rows());
    const double anorm = A.norm();
    if (tol_zero < 0) tol_zero = 1e-9 * std::max(1.0, anorm);

    Eigen::EigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success)
        fail(ErrorKind::NumericFailure, "classify_spectrum: eigenvalue solver failed");
    CVec evals = es.eigenvalues();

    // Residual sanity check on the solver output.
    {
        CMat V = es.eigenvectors();
        double resid = (A.cast<std::complex<double>>() * V - V * evals.asDiagonal()).norm();
        if (!(resid <= 1e-8 * std::max(1.0, anorm) * d))
            fail(ErrorKind::NumericFailure,
                 "classify_spectrum: eigen decomposition residual " + fmt17(resid));
    }

    // Cluster eigenvalues so each distinct one is processed once. Conjugate
    // pairs are handled through their upper-half representative.
    const double cluster_tol = 1e-7 * std::max(1.0, anorm);
    const double kernel_tol = 1e-10;
    std::vector<std::complex<double>> reps;
    for (int i = 0; i < d; ++i) {
        std::complex<double> z = evals(i);
        if (z.imag() < -cluster_tol) continue; // conjugate handled by the pair
        bool seen = false;
        for (auto& r : reps)
            if (std::abs(r - z) <= cluster_tol) { seen = true; break; }
        if (!seen) reps.push_back(z);
    }

    std::vector<Vec> cols_s, cols_u, cols_c;
    auto push_real_block = [&](std::vector<Vec>& dst, const CMat& kernel, bool complex_pair) {
        for (int j = 0; j < kernel.cols(); ++j) {
            dst.emplace_back(kernel.col(j).real());
            if (complex_pair) dst.emplace_back(kernel.col(j).imag());
        }
    };

    std::optional<double> beta_plus, beta_minus;
    for (auto& lambda : reps) {
        bool complex_pair = lambda.imag() > cluster_tol;
        std::complex<double> use = complex_pair ? lambda : std::complex<double>(lambda.real(), 0.0);
        CMat kernel = generalized_eigenspace(A, use, kernel_tol);
        double re = lambda.real();
        if (re > tol_zero) {
            push_real_block(cols_u, kernel, complex_pair);
            beta_plus = beta_plus ? std::min(*beta_plus, re) : re;
        } else if (re < -tol_zero) {
            push_real_block(cols_s, kernel, complex_pair);
            beta_minus = beta_minus ? std::min(*beta_minus, -re) : -re;
        } else {
            push_real_block(cols_c, kernel, complex_pair);
        }
    }

    auto to_basis = [&](const std::vector<Vec>& cols) {
        Mat B(d, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) B.col(static_cast<Eigen::Index>(j)) = cols[j];
        return orthonormal_columns(B);
    };

    SpectralSplit split;
    split.dim = d;
    split.eigenvalues = evals;
    split.tol_zero = tol_zero;
    split.beta_plus = beta_plus;
    split.beta_minus = beta_minus;
    split.basis_s = to_basis(cols_s);
    split.basis_u = to_basis(cols_u);
    split.basis_c = to_basis(cols_c);

    int ks = split.dim_s(), ku = split.dim_u(), kc = split.dim_c();
    if (ks + ku + kc != d)
        fail(ErrorKind::NumericFailure,
             "classify_spectrum: generalized eigenspace dimensions sum to " +
                 std::to_string(ks + ku + kc) + " instead of " + std::to_string(d) +
                 " (borderline spectrum? adjust tol_zero)");

    Mat B(d, d);
    if (ks) B.leftCols(ks) = split.basis_s;
    if (ku) B.middleCols(ks, ku) = split.basis_u;
    if (kc) B.rightCols(kc) = split.basis_c;
    Eigen::PartialPivLU<Mat> lu(B);
    Mat Binv = lu.inverse();

    auto projector = [&](int offset, int count) {
        Mat P = Mat::Zero(d, d);
        if (count) P = B.middleCols(offset, count) * Binv.middleRows(offset, count);
        return P;
    };
    split.proj_s = projector(0, ks);
    split.proj_u = projector(ks, ku);
    split.proj_c = projector(ks + ku, kc);
    return split;
}

Vec project(const SpectralSplit& split, Subspace which, const Vec& v) {
    if (v.size() != split.dim)
        fail(ErrorKind::InvalidInput, "project: vector length " + std::to_string(v.size()) +
                                          " does not match dimension " + std::to_string(split.dim));
    return split.proj(which) * v;
}

Mat expm(const Mat& A, ExpmInfo* info) {
    // Pade(13) with scaling and squaring (Higham 2005).
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const int d = static_cast<int>(A.rows());
    const double theta13 = 5.371920351148152;
    double norm = A.cwiseAbs().rowwise().sum().maxCoeff(); // infinity norm
    int s = 0;
    if (norm > theta13) s = static_cast<int>(std::ceil(std::log2(norm / theta13)));
    Mat As = A / std::pow(2.0, s);

    Mat I = Mat::Identity(d, d);
    Mat A2 = As * As;
    Mat A4 = A2 * A2;
    Mat A6 = A2 * A4;
    Mat U = As * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 +
                  b[3] * A2 + b[1] * I);
    Mat V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 +
            b[0] * I;
    Mat R = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < s; ++k) R = R * R;
    if (info) {
        info->pade_order = 13;
        info->squarings = s;
    }
    return R;
}

Vec expm_action(const Mat& A, double t, const Vec& v, ExpmInfo* info) {
    if (A.rows() != A.cols() || A.rows() != v.size())
        fail(ErrorKind::InvalidInput, "expm_action: dimension mismatch");
    require_finite(A, "expm_action");
    require_finite(v, "expm_action");
    if (!std::isfinite(t)) fail(ErrorKind::InvalidInput, "expm_action: non-finite time");
    if (t == 0.0 || A.norm() * std::abs(t) == 0.0) {
        if (info) *info = ExpmInfo{13, 0};
        return v; // identity path, no arithmetic on v
    }
    const double guard = 500.0;
    if (A.cwiseAbs().rowwise().sum().maxCoeff() * std::abs(t) > guard)
        fail(ErrorKind::Range, "expm_action: ||A t|| exceeds overflow guard " + fmt17(guard));
    return expm(A * t, info) * v;
}

DecayReport decay_bound_check(const SpectralSplit& split, const Mat& A,
                              const std::vector<std::pair<double, Vec>>& samples, double c_ref) {
    DecayReport report;
    for (const auto& [t, v] : samples) {
        if (!std::isfinite(t)) fail(ErrorKind::InvalidInput, "decay_bound_check: non-finite time");
        require_finite(v, "decay_bound_check");
        double vn = v.norm();
        if (vn == 0.0) continue;
        if (t >= 0.0 && split.beta_minus) {
            double lhs = expm_action(A, t, project(split, Subspace::Stable, v)).norm();
            double ratio = lhs / (std::exp(-*split.beta_minus * t / 2.0) * vn);
            report.stable_samples.push_back({t, ratio});
            report.c_stable = std::max(report.c_stable, ratio);
            if (ratio > c_ref) report.violations.push_back({t, ratio});
        }
        if (t <= 0.0 && split.beta_plus) {
            double lhs = expm_action(A, t, project(split, Subspace::Unstable, v)).norm();
            double ratio = lhs / (std::exp(*split.beta_plus * t / 2.0) * vn);
            report.unstable_samples.push_back({t, ratio});
            report.c_unstable = std::max(report.c_unstable, ratio);
            if (ratio > c_ref) report.violations.push_back({t, ratio});
        }
    }
    return report;
}

} // namespace vprof
