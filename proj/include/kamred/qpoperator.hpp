#pragma once

// Time-quasi-periodic operator algebra. A QPOperator is a family of spatial
// matrices A_hat(l) on modes j in {-M..M}, indexed by the time-Fourier mode
// l with |l|_inf <= L. The block view groups modes by |j|: block (beta,alpha)
// is the sub-matrix on rows |k|=beta, columns |j|=alpha (2x2 away from zero).

#include "kamred/core.hpp"

namespace kamred {

struct QPOperator {
    int d = 1, L = 0, M = 0;
    std::vector<Mat> mats; // one (2M+1)x(2M+1) matrix per flattened l

    QPOperator() = default;
    QPOperator(int d, int L, int M) : d(d), L(L), M(M) {
        mats.assign(box().size(), Mat::Zero(2 * M + 1, 2 * M + 1));
    }
    LatticeBox box() const { return LatticeBox{d, L}; }
    int n() const { return 2 * M + 1; }

    static QPOperator identity(int d, int L, int M) {
        QPOperator A(d, L, M);
        std::vector<int> zero(std::size_t(d), 0);
        A.mats[A.box().flatten(zero)] = Mat::Identity(2 * M + 1, 2 * M + 1);
        return A;
    }

    Mat& slice(const std::vector<int>& ell) { return mats[box().flatten(ell)]; }
    const Mat& slice(const std::vector<int>& ell) const { return mats[box().flatten(ell)]; }
    // entry A_hat(l)^{k}_{j} (row k, column j)
    cplx entry(const std::vector<int>& ell, int k, int j) const {
        return slice(ell)(k + M, j + M);
    }

    bool finite() const {
        for (const auto& m : mats)
            if (!m.allFinite()) return false;
        return true;
    }
    double max_abs() const {
        double v = 0;
        for (const auto& m : mats) v = std::max(v, m.cwiseAbs().maxCoeff());
        return v;
    }
    double frob() const {
        double v = 0;
        for (const auto& m : mats) v += m.squaredNorm();
        return std::sqrt(v);
    }

    QPOperator& operator*=(cplx s) {
        for (auto& m : mats) m *= s;
        return *this;
    }
    QPOperator& operator+=(const QPOperator& o) {
        check_same(o, "QPOperator +=");
        for (std::size_t i = 0; i < mats.size(); ++i) mats[i] += o.mats[i];
        return *this;
    }
    QPOperator& operator-=(const QPOperator& o) {
        check_same(o, "QPOperator -=");
        for (std::size_t i = 0; i < mats.size(); ++i) mats[i] -= o.mats[i];
        return *this;
    }
    void check_same(const QPOperator& o, const char* who) const {
        if (d != o.d || L != o.L || M != o.M) throw DimensionError(std::string(who) + ": grid mismatch");
    }
};

inline QPOperator op_add(QPOperator a, const QPOperator& b) { a += b; return a; }
inline QPOperator op_sub(QPOperator a, const QPOperator& b) { a -= b; return a; }
inline QPOperator op_scale(QPOperator a, cplx s) { a *= s; return a; }

// operator product: l-convolution (AB)_hat(l) = sum_{l'} A_hat(l-l') B_hat(l'),
// exact when L_out >= L_a + L_b
inline QPOperator op_mul(const QPOperator& A, const QPOperator& B, int L_out = -1) {
    if (A.d != B.d || A.M != B.M) throw DimensionError("op_mul: grid mismatch");
    if (L_out < 0) L_out = A.L + B.L;
    QPOperator C(A.d, L_out, A.M);
    const LatticeBox ba = A.box(), bb = B.box(), bc = C.box();
    std::vector<int> ea(std::size_t(A.d)), eb(std::size_t(A.d)), ec(std::size_t(A.d));
    for (std::size_t la = 0; la < ba.size(); ++la) {
        if (A.mats[la].isZero(0)) continue;
        ba.unflatten(la, ea.data());
        for (std::size_t lb = 0; lb < bb.size(); ++lb) {
            if (B.mats[lb].isZero(0)) continue;
            bb.unflatten(lb, eb.data());
            bool in = true;
            for (int i = 0; i < A.d; ++i) {
                ec[std::size_t(i)] = ea[std::size_t(i)] + eb[std::size_t(i)];
                if (std::abs(ec[std::size_t(i)]) > L_out) { in = false; break; }
            }
            if (!in) continue;
            C.mats[bc.flatten(ec)].noalias() += A.mats[la] * B.mats[lb];
        }
    }
    return C;
}

// adjoint as a theta-dependent operator: (A*)(l) = A_hat(-l)^dagger
inline QPOperator op_adjoint(const QPOperator& A) {
    QPOperator out(A.d, A.L, A.M);
    const LatticeBox b = A.box();
    for (std::size_t l = 0; l < b.size(); ++l) out.mats[l] = A.mats[b.negate(l)].adjoint();
    return out;
}

// conjugate operator (bar A) u := conj(A conj u): (bar A)(l) = S conj(A_hat(-l)) S
// where S flips the mode index j -> -j (i.e. reverse rows and columns).
inline QPOperator op_conj(const QPOperator& A) {
    QPOperator out(A.d, A.L, A.M);
    const LatticeBox b = A.box();
    for (std::size_t l = 0; l < b.size(); ++l)
        out.mats[l] = A.mats[b.negate(l)].conjugate().reverse();
    return out;
}

// max | A_hat(l) - S conj(A_hat(-l)) S |: zero iff A maps real to real
inline double op_reality_violation(const QPOperator& A) {
    const LatticeBox b = A.box();
    double worst = 0;
    for (std::size_t l = 0; l < b.size(); ++l) {
        Mat dlt = A.mats[l] - A.mats[b.negate(l)].conjugate().reverse().eval();
        worst = std::max(worst, dlt.cwiseAbs().maxCoeff());
    }
    return worst;
}

// max | A_hat(l)^dagger - A_hat(-l) |: zero iff A is self-adjoint
inline double op_selfadjoint_violation(const QPOperator& A) {
    const LatticeBox b = A.box();
    double worst = 0;
    for (std::size_t l = 0; l < b.size(); ++l) {
        Mat dlt = A.mats[l].adjoint().eval() - A.mats[b.negate(l)];
        worst = std::max(worst, dlt.cwiseAbs().maxCoeff());
    }
    return worst;
}

// multiply rows (sigma_left) and columns (sigma_right) by <j>^sigma
inline QPOperator op_weight(const QPOperator& A, double sigma_left, double sigma_right) {
    QPOperator out = A;
    const int M = A.M;
    RVec wl(2 * M + 1), wr(2 * M + 1);
    for (int j = -M; j <= M; ++j) {
        wl[j + M] = std::pow(ang(double(j)), sigma_left);
        wr[j + M] = std::pow(ang(double(j)), sigma_right);
    }
    for (auto& m : out.mats) m = wl.asDiagonal() * m * wr.asDiagonal();
    return out;
}

// --------------------------------------------------------------------------
// Block norm table: ||[A_hat(l)]^beta_alpha||_0 (largest singular value) for
// every l and block pair. Blocks are at most 2x2, so the norms come in closed
// form; every decay/weighted norm below reads this table, with <D>-weights
// entering as exact scalar factors <beta>^a <alpha>^b per block.
// --------------------------------------------------------------------------
namespace detail {

inline double spec_norm_2x2(cplx a, cplx b, cplx c, cplx dd) {
    double f = std::norm(a) + std::norm(b) + std::norm(c) + std::norm(dd);
    cplx det = a * dd - b * c;
    double disc = f * f - 4.0 * std::norm(det);
    if (disc < 0) disc = 0; // roundoff
    return std::sqrt(0.5 * (f + std::sqrt(disc)));
}

} // namespace detail

struct BlockNormTable {
    int d = 1, L = 0, M = 0;
    std::vector<double> t; // [lflat][(beta)*(M+1)+alpha]
    double at(std::size_t l, int beta, int alpha) const {
        return t[l * std::size_t((M + 1) * (M + 1)) + std::size_t(beta * (M + 1) + alpha)];
    }
};

inline BlockNormTable block_norms(const QPOperator& A) {
    BlockNormTable tb;
    tb.d = A.d;
    tb.L = A.L;
    tb.M = A.M;
    const int M = A.M;
    const std::size_t nl = A.mats.size();
    tb.t.assign(nl * std::size_t((M + 1) * (M + 1)), 0.0);
    for (std::size_t l = 0; l < nl; ++l) {
        const Mat& m = A.mats[l];
        for (int beta = 0; beta <= M; ++beta)
            for (int alpha = 0; alpha <= M; ++alpha) {
                // block rows: modes {+beta, -beta}; cols: {+alpha, -alpha}
                double v;
                if (beta == 0 && alpha == 0) {
                    v = std::abs(m(M, M));
                } else if (beta == 0) {
                    v = std::sqrt(std::norm(m(M, M + alpha)) + std::norm(m(M, M - alpha)));
                } else if (alpha == 0) {
                    v = std::sqrt(std::norm(m(M + beta, M)) + std::norm(m(M - beta, M)));
                } else {
                    v = detail::spec_norm_2x2(m(M + beta, M + alpha), m(M + beta, M - alpha),
                                              m(M - beta, M + alpha), m(M - beta, M - alpha));
                }
                tb.t[l * std::size_t((M + 1) * (M + 1)) + std::size_t(beta * (M + 1) + alpha)] = v;
            }
    }
    return tb;
}

// |A|_s = sup_alpha ( sum_{l,beta} <l, beta-alpha>^{2s} ||[A_hat(l)]^beta_alpha||_0^2 )^{1/2},
// with optional block weights <beta>^{wb} <alpha>^{wa} folded in.
inline std::vector<double> decay_profile(const BlockNormTable& tb, double s, double wb = 0.0,
                                         double wa = 0.0) {
    const int M = tb.M;
    const LatticeBox box{tb.d, tb.L};
    std::vector<double> acc(std::size_t(M + 1), 0.0);
    for (std::size_t l = 0; l < box.size(); ++l) {
        int linf = box.linf(l);
        for (int beta = 0; beta <= M; ++beta)
            for (int alpha = 0; alpha <= M; ++alpha) {
                double v = tb.at(l, beta, alpha);
                if (v == 0) continue;
                v *= std::pow(ang(double(beta)), wb) * std::pow(ang(double(alpha)), wa);
                double w = std::pow(ang2(linf, beta - alpha), 2.0 * s);
                acc[std::size_t(alpha)] += w * v * v;
            }
    }
    for (auto& x : acc) x = std::sqrt(x);
    return acc;
}

inline double decay_norm(const BlockNormTable& tb, double s, double wb = 0.0, double wa = 0.0) {
    auto prof = decay_profile(tb, s, wb, wa);
    double best = 0;
    for (double v : prof) best = std::max(best, v);
    return best;
}

inline double decay_norm(const QPOperator& A, double s) { return decay_norm(block_norms(A), s); }
inline std::vector<double> decay_profile(const QPOperator& A, double s) {
    return decay_profile(block_norms(A), s);
}

// Weighted operator-class norms (the M_{s,rho} and L_{s,rho} norms):
//   Ms = |<D>^rho A|_s + |A <D>^rho|_s + sum_{sigma in {0,+-rho}} |<D>^sigma A <D>^{-sigma}|_s
//   Ls = sum_{sigma in {0,+-rho}} |<D>^sigma A <D>^{-sigma}|_s
struct WeightedNorms {
    double Ms_norm = 0.0;
    double Ls_norm = 0.0;
};

inline WeightedNorms weighted_norms(const BlockNormTable& tb, double s, double rho) {
    WeightedNorms r;
    double conj_sum = decay_norm(tb, s, 0.0, 0.0) + decay_norm(tb, s, rho, -rho) +
                      decay_norm(tb, s, -rho, rho);
    r.Ls_norm = conj_sum;
    r.Ms_norm = decay_norm(tb, s, rho, 0.0) + decay_norm(tb, s, 0.0, rho) + conj_sum;
    return r;
}

inline WeightedNorms weighted_norms(const QPOperator& A, double s, double rho) {
    return weighted_norms(block_norms(A), s, rho);
}

// Validated (s, rho) parameter record: s must dominate s0(d).
struct DecayWeights {
    double s = 0.0;
    double rho = 0.0;
    static DecayWeights checked(double s, double rho, int d) {
        if (s < sobolev_s0(d))
            throw InvalidInputError("DecayWeights: s below s0 = [(d+1)/2]+1");
        return DecayWeights{s, rho};
    }
};

// --------------------------------------------------------------------------
// Smoothing projector on time modes: lowpass keeps |l|_inf < N.
// --------------------------------------------------------------------------
inline std::pair<QPOperator, QPOperator> smooth_project(const QPOperator& A, int N) {
    if (N <= 0) throw InvalidInputError("smooth_project: N must be positive");
    QPOperator low(A.d, A.L, A.M), high(A.d, A.L, A.M);
    const LatticeBox b = A.box();
    for (std::size_t l = 0; l < b.size(); ++l) {
        if (b.linf(l) < N) low.mats[l] = A.mats[l];
        else high.mats[l] = A.mats[l];
    }
    return {std::move(low), std::move(high)};
}

// --------------------------------------------------------------------------
// 2x2 operator-matrix pair [[A^d, A^a], [-bar(A^a), -bar(A^d)]]. Only the two
// generating blocks are stored; the mirrored blocks are implied.
// Structure conditions of the class N_s(rho,o):
//   diag: A_hat^d(l)^dagger = A_hat^d(-l)            ([A^d]* = A^d)
//   anti: A_hat^a(l)^T      = S A_hat^a(l) S         ([A^a]* = bar A^a)
// --------------------------------------------------------------------------
struct MatrixPair {
    QPOperator diag;
    QPOperator anti;

    MatrixPair() = default;
    MatrixPair(int d, int L, int M) : diag(d, L, M), anti(d, L, M) {}

    int d() const { return diag.d; }
    int L() const { return diag.L; }
    int M() const { return diag.M; }

    MatrixPair& operator+=(const MatrixPair& o) {
        diag += o.diag;
        anti += o.anti;
        return *this;
    }
    MatrixPair& operator-=(const MatrixPair& o) {
        diag -= o.diag;
        anti -= o.anti;
        return *this;
    }
    MatrixPair& operator*=(cplx s) {
        diag *= s;
        anti *= s;
        return *this;
    }
};

struct StructureReport {
    double diag_violation = 0.0;
    double anti_violation = 0.0;
    double max_violation() const { return std::max(diag_violation, anti_violation); }
};

inline StructureReport structure_check(const MatrixPair& A) {
    StructureReport r;
    r.diag_violation = op_selfadjoint_violation(A.diag);
    double worst = 0.0;
    for (const auto& m : A.anti.mats) {
        Mat dlt = m.transpose().eval() - m.reverse().eval();
        worst = std::max(worst, dlt.cwiseAbs().maxCoeff());
    }
    r.anti_violation = worst;
    return r;
}

// ||| A |||_{s,rho,o}: the class norm of the pair
struct PairNorm {
    double total = 0.0;
    double diag_Ms = 0.0;  // |<D>^rho A^d|_s + |A^d <D>^rho|_s
    double anti_Mo = 0.0;  // |<D>^o A^a|_s + |A^a <D>^o|_s
    double conj_sum = 0.0; // sum_{sigma,delta} |<D>^sigma A^delta <D>^{-sigma}|_s
};

inline PairNorm pair_norm(const MatrixPair& A, double s, double rho, double o) {
    BlockNormTable td = block_norms(A.diag), ta = block_norms(A.anti);
    PairNorm r;
    r.diag_Ms = decay_norm(td, s, rho, 0.0) + decay_norm(td, s, 0.0, rho);
    r.anti_Mo = decay_norm(ta, s, o, 0.0) + decay_norm(ta, s, 0.0, o);
    for (double sigma : {0.0, rho, -rho})
        r.conj_sum += decay_norm(td, s, sigma, -sigma) + decay_norm(ta, s, sigma, -sigma);
    r.total = r.diag_Ms + r.anti_Mo + r.conj_sum;
    return r;
}

inline std::pair<MatrixPair, MatrixPair> smooth_project(const MatrixPair& A, int N) {
    auto [ld, hd] = smooth_project(A.diag, N);
    auto [la, ha] = smooth_project(A.anti, N);
    MatrixPair low, high;
    low.diag = std::move(ld);
    low.anti = std::move(la);
    high.diag = std::move(hd);
    high.anti = std::move(ha);
    return {std::move(low), std::move(high)};
}

} // namespace kamred
