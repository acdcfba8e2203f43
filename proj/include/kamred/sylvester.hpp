#pragma once

// Spectral solver for the small Sylvester equations
//     c X + A X - sign X B = Y
// with A, B self-adjoint of size <= 2. Diagonalize both sides, divide by the
// eigenvalue combinations, transform back; one iterative-refinement pass
// keeps the algebraic residual at machine precision even when a divisor is
// small relative to ||A|| + ||B|| + |c|.

#include "kamred/hamiltonian.hpp"

namespace kamred {

struct SylvesterStats {
    double min_divisor = std::numeric_limits<double>::infinity();
    int p = 0, q = 0;
};

namespace detail {

inline Mat sylvester_apply(double c, const Mat& A, const Mat& B, const Mat& X, int sign) {
    return c * X + A * X - double(sign) * (X * B);
}

inline Mat sylvester_core(double c, const BlockEig& ea, const BlockEig& eb, const Mat& Y,
                          int sign, double floor, SylvesterStats* stats) {
    const int p = int(ea.vals.size()), q = int(eb.vals.size());
    Mat Yt = ea.vecs.adjoint() * Y * eb.vecs;
    Mat Xt(p, q);
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < q; ++b) {
            double div = c + ea.vals[a] - double(sign) * eb.vals[b];
            if (stats && std::abs(div) < stats->min_divisor) {
                stats->min_divisor = std::abs(div);
                stats->p = a;
                stats->q = b;
            }
            if (std::abs(div) < floor || div == 0.0)
                throw SmallDivisorError("sylvester: divisor below floor", {}, a, b, div, floor);
            Xt(a, b) = Yt(a, b) / div;
        }
    return ea.vecs * Xt * eb.vecs.adjoint();
}

} // namespace detail

// Solve with precomputed eigendecompositions (the hot path).
inline Mat solve_sylvester_eig(double c, const BlockEig& ea, const BlockEig& eb, const Mat& A,
                               const Mat& B, const Mat& Y, int sign, double floor = 0.0,
                               SylvesterStats* stats = nullptr) {
    Mat X = detail::sylvester_core(c, ea, eb, Y, sign, floor, stats);
    // one refinement pass
    Mat R = Y - detail::sylvester_apply(c, A, B, X, sign);
    X += detail::sylvester_core(c, ea, eb, R, sign, floor, nullptr);
    return X;
}

// Convenience entry: p x q right-hand side, A (p x p) and B (q x q) self-adjoint.
inline Mat solve_sylvester_2x2(double c, const Mat& A, const Mat& B, const Mat& Y, int sign,
                               double floor = 0.0, SylvesterStats* stats = nullptr) {
    if (sign != 1 && sign != -1) throw InvalidInputError("solve_sylvester_2x2: sign must be +-1");
    if (A.rows() != A.cols() || B.rows() != B.cols() || Y.rows() != A.rows() ||
        Y.cols() != B.rows())
        throw DimensionError("solve_sylvester_2x2: shape mismatch");
    auto eig_of = [](const Mat& m) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.adjoint().eval()));
        BlockEig e;
        e.vals = es.eigenvalues();
        e.vecs = es.eigenvectors();
        return e;
    };
    BlockEig ea = eig_of(A), eb = eig_of(B);
    return solve_sylvester_eig(c, ea, eb, A, B, Y, sign, floor, stats);
}

} // namespace kamred
