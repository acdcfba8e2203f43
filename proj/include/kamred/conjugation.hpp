#pragma once

// Lie-series conjugation on a theta-collocation grid.
//
// The change of variables q = e^{-iU(theta)} v maps i dq/dt = H(t) q into
// i dv/dt = H~(t) v with
//     H~ = e^{iU} H e^{-iU} - int_0^1 e^{isU} (omega . d_theta U) e^{-isU} ds.
// We evaluate everything on a G^d collocation grid (G = 4L+1), compute the
// matrix exponentials by scaling-and-squaring Taylor series at each point,
// apply the fixed 8-node Gauss-Legendre rule in s, transform back to
// l-coefficients and re-truncate to |l|_inf <= L, reporting the discarded
// band mass.
//
// All per-point arithmetic runs on the two generating half-blocks. Matrices
// of the form [[X, Y], [ c(Y),  c(X)]]  (class G: exponentials, c = bar)
// and          [[X, Y], [-c(Y), -c(X)]] (class N: Hamiltonians, generators)
// are closed under the products used here, so the mirrored blocks are never
// formed; this halves the flops and makes the output structure exact by
// construction.

#include <bit>

#include "kamred/hamiltonian.hpp"

namespace kamred {

struct ThetaGrid {
    int d = 1;
    int G = 1; // points per theta-dimension
    std::size_t points() const {
        std::size_t p = 1;
        for (int i = 0; i < d; ++i) p *= std::size_t(G);
        return p;
    }
};

inline ThetaGrid conjugation_grid(int d, int L) { return ThetaGrid{d, 4 * L + 1}; }

// values of a block family on the grid; entry e of point p at v[p*n*n + e],
// with e in column-major matrix order
struct GridVals {
    int d = 1, G = 1, n = 0;
    std::vector<cplx> v;
    GridVals() = default;
    GridVals(const ThetaGrid& g, int n) : d(g.d), G(g.G), n(n) {
        v.assign(g.points() * std::size_t(n) * std::size_t(n), cplx(0, 0));
    }
    std::size_t points() const {
        std::size_t p = 1;
        for (int i = 0; i < d; ++i) p *= std::size_t(G);
        return p;
    }
    Eigen::Map<const Mat> at(std::size_t p) const {
        return Eigen::Map<const Mat>(v.data() + p * std::size_t(n) * std::size_t(n), n, n);
    }
    Eigen::Map<Mat> at(std::size_t p) {
        return Eigen::Map<Mat>(v.data() + p * std::size_t(n) * std::size_t(n), n, n);
    }
};

namespace detail {

using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One separable stage: contract the fastest lattice axis (length `len`)
// against W (rows_out x len), then rotate that axis to the slowest position.
// After d stages every axis is transformed once and the order is restored.
inline void transform_stage(std::vector<cplx>& data, std::vector<cplx>& scratch,
                            std::size_t outer, int len, int len_out, std::size_t E,
                            const Mat& W, int threads) {
    scratch.resize(outer * std::size_t(len_out) * E);
    parallel_for(outer, [&](std::size_t r) {
        Eigen::Map<const RowMat> in(data.data() + r * std::size_t(len) * E, len, long(E));
        RowMat out = W * in; // len_out x E
        // rotate: out axis becomes slowest -> scratch[(g*outer + r)*E + e]
        for (int g = 0; g < len_out; ++g)
            std::copy_n(out.data() + std::size_t(g) * E, E,
                        scratch.data() + (std::size_t(g) * outer + r) * E);
    }, threads);
    data.swap(scratch);
}

inline Mat synth_matrix(int G, int L) {
    Mat W(G, 2 * L + 1);
    for (int g = 0; g < G; ++g)
        for (int l = -L; l <= L; ++l)
            W(g, l + L) = std::exp(cplx(0, 2.0 * PI * g * l / G));
    return W;
}

inline Mat analysis_matrix(int G) {
    // output modes -(G-1)/2 .. (G-1)/2 (the full grid band)
    int Lb = (G - 1) / 2;
    Mat W(G, G);
    for (int l = -Lb; l <= Lb; ++l)
        for (int g = 0; g < G; ++g)
            W(l + Lb, g) = std::exp(cplx(0, -2.0 * PI * g * l / G)) / double(G);
    return W;
}

} // namespace detail

// smallest band L' <= A.L containing every nonzero slice
inline int op_band(const QPOperator& A) {
    const LatticeBox b = A.box();
    int band = 0;
    for (std::size_t l = 0; l < b.size(); ++l)
        if (!A.mats[l].isZero(0)) band = std::max(band, b.linf(l));
    return band;
}

// copy into a lattice of band Lnew (crops or zero-pads)
inline QPOperator op_rebox(const QPOperator& A, int Lnew) {
    QPOperator out(A.d, Lnew, A.M);
    const LatticeBox bo = out.box();
    std::vector<int> ell(std::size_t(A.d), 0);
    for (std::size_t l = 0; l < bo.size(); ++l) {
        bo.unflatten(l, ell.data());
        if (A.box().contains(ell.data())) out.mats[l] = A.slice(ell);
    }
    return out;
}

// synthesize values on the grid; `lscale` multiplies slice l by a scalar
// (identity for plain synthesis; i(omega.l) gives the time derivative)
inline GridVals synth_grid(const QPOperator& A_in, const ThetaGrid& grid,
                           const std::function<cplx(const std::vector<int>&)>& lscale = nullptr,
                           int threads = 0) {
    // shrink to the effective band first; the grid stays G = 4L+1
    QPOperator A = op_rebox(A_in, std::min(A_in.L, op_band(A_in)));
    const int side = 2 * A.L + 1, n = A.n();
    const std::size_t E = std::size_t(n) * std::size_t(n);
    const LatticeBox b = A.box();

    std::vector<cplx> data(b.size() * E);
    std::vector<int> ell(std::size_t(A.d), 0);
    for (std::size_t l = 0; l < b.size(); ++l) {
        cplx s(1, 0);
        if (lscale) {
            b.unflatten(l, ell.data());
            s = lscale(ell);
        }
        Eigen::Map<Mat>(data.data() + l * E, n, n) = s * A.mats[l];
    }

    Mat W = detail::synth_matrix(grid.G, A.L);
    std::vector<cplx> scratch;
    std::size_t outer = b.size() / std::size_t(side);
    for (int axis = 0; axis < A.d; ++axis) {
        detail::transform_stage(data, scratch, outer, side, grid.G, E, W, threads);
        // after the stage: one more axis has length G
        outer = outer / std::size_t(side) * std::size_t(grid.G);
    }
    GridVals out(grid, n);
    out.v = std::move(data);
    return out;
}

struct AnalysisResult {
    QPOperator kept;
    double dropped_mass = 0.0; // Frobenius mass outside |l|_inf <= L_keep
    double kept_mass = 0.0;
};

inline AnalysisResult analyze_grid(GridVals& vals, int d, int L_keep, int threads = 0) {
    const int G = vals.G, n = vals.n;
    const std::size_t E = std::size_t(n) * std::size_t(n);
    const int Lb = (G - 1) / 2; // full grid band
    Mat W = detail::analysis_matrix(G);
    std::vector<cplx> scratch;
    std::size_t outer = vals.points() / std::size_t(G);
    for (int axis = 0; axis < d; ++axis) {
        detail::transform_stage(vals.v, scratch, outer, G, G, E, W, threads);
    }
    AnalysisResult res;
    res.kept = QPOperator(d, L_keep, (n - 1) / 2);
    const LatticeBox bfull{d, Lb}, bkeep{d, L_keep};
    std::vector<int> ell(std::size_t(d), 0);
    double drop2 = 0, keep2 = 0;
    for (std::size_t l = 0; l < bfull.size(); ++l) {
        Eigen::Map<const Mat> m(vals.v.data() + l * E, n, n);
        bfull.unflatten(l, ell.data());
        if (bkeep.contains(ell.data())) {
            res.kept.mats[bkeep.flatten(ell)] = m;
            keep2 += m.squaredNorm();
        } else {
            drop2 += m.squaredNorm();
        }
    }
    res.dropped_mass = std::sqrt(drop2);
    res.kept_mass = std::sqrt(keep2);
    return res;
}

// --------------------------------------------------------------------------
// Half-block pair arithmetic. c(Z) := conj(Z) reversed in both indices.
// Class G:  [[X, Y], [ c(Y),  c(X)]]   (contains exp(i * class-N))
// Class N:  [[X, Y], [-c(Y), -c(X)]]   (Hamiltonians and generators times i
//                                       live in G; H(t), P, U-dot are N)
// Products: GxG -> G, GxN -> N, NxG -> N; all need 4 half-size multiplies.
// --------------------------------------------------------------------------
namespace detail {

struct HalfPair {
    Mat X, Y;
    void setZero(int n) {
        X.setZero(n, n);
        Y.setZero(n, n);
    }
    double frob() const { return std::sqrt(X.squaredNorm() + Y.squaredNorm()); }
};

inline Mat cflip(const Mat& Z) { return Z.conjugate().reverse(); }

// exact 1-norm of the assembled 2n x 2n matrix of either class
inline double full_one_norm(const HalfPair& A) {
    Eigen::VectorXd cx = A.X.cwiseAbs().colwise().sum();
    Eigen::VectorXd cy = A.Y.cwiseAbs().colwise().sum();
    const int n = int(cx.size());
    double best = 0;
    for (int j = 0; j < n; ++j) {
        best = std::max(best, cx[j] + cy[n - 1 - j]); // columns of [X; +-c(Y)]
        best = std::max(best, cy[j] + cx[n - 1 - j]); // columns of [Y; +-c(X)]
    }
    return best;
}

// R = A * B with A in G and B in either class (sign +1: B in G, result G;
// sign -1: B in N, result N)
inline void mulG(HalfPair& R, const HalfPair& A, const HalfPair& B, double sign) {
    R.X.noalias() = A.X * B.X;
    R.X.noalias() += sign * (A.Y * cflip(B.Y));
    R.Y.noalias() = A.X * B.Y;
    R.Y.noalias() += sign * (A.Y * cflip(B.X));
}

// R = T * A with T in N, A in G; result N
inline void mulNG(HalfPair& R, const HalfPair& T, const HalfPair& A) {
    R.X.noalias() = T.X * A.X;
    R.X.noalias() += T.Y * cflip(A.Y);
    R.Y.noalias() = T.X * A.Y;
    R.Y.noalias() += T.Y * cflip(A.X);
}

} // namespace detail

struct ConjugationOptions {
    double series_tol = 1e-16;      // relative Taylor/ad-series cutoff
    double max_generator_norm = 1.0; // ||U(theta)|| beyond this -> StepSizeError
    int max_terms = 60;
    int threads = 0;
};

struct ConjugationResult {
    MatrixPair H_new;          // re-truncated to |l|_inf <= L
    double dropped_mass = 0.0; // band mass discarded by the re-truncation
    double kept_mass = 0.0;
    double max_generator_norm = 0.0; // largest ||U(theta)||_1 seen on the grid
};

// H~ = e^{iU} (H0 + P) e^{-iU} - int_0^1 e^{isU} U-dot e^{-isU} ds
inline ConjugationResult conjugate_hamiltonian(const BlockDiagHamiltonian& H0,
                                               const MatrixPair& P, const MatrixPair& U,
                                               const RVec& omega, const ThetaGrid& grid,
                                               const ConjugationOptions& opt = {}) {
    const int d = P.d(), L = P.L(), n = 2 * P.M() + 1;
    if (U.d() != d || U.M() != P.M()) throw DimensionError("conjugate_hamiltonian: grid mismatch");
    if (omega.size() != d) throw DimensionError("conjugate_hamiltonian: omega dimension");
    if (grid.G < 2 * L + 1)
        throw InvalidInputError("conjugate_hamiltonian: grid too coarse for the retained band");

    const LatticeBox ubox = U.diag.box();
    auto dot_scale = [&](const std::vector<int>& ell) {
        double wl = 0;
        for (int i = 0; i < d; ++i) wl += omega[i] * ell[std::size_t(i)];
        return cplx(0, wl);
    };

    GridVals Ud = synth_grid(U.diag, grid, nullptr, opt.threads);
    GridVals Ua = synth_grid(U.anti, grid, nullptr, opt.threads);
    GridVals Ud_t = synth_grid(U.diag, grid, dot_scale, opt.threads);
    GridVals Ua_t = synth_grid(U.anti, grid, dot_scale, opt.threads);
    GridVals Pd = synth_grid(P.diag, grid, nullptr, opt.threads);
    GridVals Pa = synth_grid(P.anti, grid, nullptr, opt.threads);
    (void)ubox;

    const Mat H0m = H0.to_matrix();
    const auto& gl_nodes = GaussLegendre8::nodes();
    const auto& gl_w = GaussLegendre8::weights();

    const std::size_t npts = grid.points();
    GridVals Rd(grid, n), Ra(grid, n);
    std::atomic<std::uint64_t> max_norm_bits{0};
    auto update_max = [&](double v) {
        std::uint64_t nv = std::bit_cast<std::uint64_t>(v), cur = max_norm_bits.load();
        while (std::bit_cast<double>(cur) < v && !max_norm_bits.compare_exchange_weak(cur, nv)) {}
    };

    parallel_for(npts, [&](std::size_t p) {
        using detail::HalfPair;
        HalfPair A;             // iU(theta), class G generator
        A.X = cplx(0, 1) * Ud.at(p);
        A.Y = cplx(0, 1) * Ua.at(p);
        double nrm = detail::full_one_norm(A);
        update_max(nrm);
        if (nrm > opt.max_generator_norm)
            throw StepSizeError("conjugate_hamiltonian: ||U(theta)|| too large for the exponential "
                                "series; shrink epsilon");

        // ---- exponential increments F+- = e^{+-iU} - Id, kept separate from
        // the identity so every term below scales with ||U|| and the grid
        // round trip adds no absolute noise floor
        int sq = 0;
        double sc = nrm;
        while (sc > 0.5) { sc *= 0.5; ++sq; }
        HalfPair As = A;
        if (sq > 0) {
            double f = std::ldexp(1.0, -sq);
            As.X *= f;
            As.Y *= f;
        }
        Mat cAsX = detail::cflip(As.X), cAsY = detail::cflip(As.Y);
        HalfPair Fp = As, Fm, term, tmp;
        Fm.X = -As.X;
        Fm.Y = -As.Y;
        term = As;
        double ref = std::max(term.frob(), 1e-300);
        for (int k = 2; k <= opt.max_terms; ++k) {
            tmp.X.noalias() = term.X * As.X;
            tmp.X.noalias() += term.Y * cAsY;
            tmp.Y.noalias() = term.X * As.Y;
            tmp.Y.noalias() += term.Y * cAsX;
            tmp.X /= double(k);
            tmp.Y /= double(k);
            term = tmp;
            Fp.X += term.X;
            Fp.Y += term.Y;
            if (k % 2 == 0) { Fm.X += term.X; Fm.Y += term.Y; }
            else            { Fm.X -= term.X; Fm.Y -= term.Y; }
            if (term.frob() <= opt.series_tol * ref) break;
            if (k == opt.max_terms)
                throw StepSizeError("conjugate_hamiltonian: exponential series did not converge");
        }
        for (int i = 0; i < sq; ++i) {
            // (Id + F)^2 = Id + 2F + F^2
            detail::mulG(tmp, Fp, Fp, +1.0);
            tmp.X += 2.0 * Fp.X;
            tmp.Y += 2.0 * Fp.Y;
            Fp = tmp;
            detail::mulG(tmp, Fm, Fm, +1.0);
            tmp.X += 2.0 * Fm.X;
            tmp.Y += 2.0 * Fm.Y;
            Fm = tmp;
        }

        // ---- sandwich increment:
        // e^{iU} H e^{-iU} - H0 = P + F+ H + H F- + F+ H F-,  H := H0 + P(theta)
        HalfPair Hg;
        Hg.X = H0m + Pd.at(p);
        Hg.Y = Pa.at(p);
        HalfPair T1, T2, S;
        detail::mulG(T1, Fp, Hg, -1.0); // F+ H   (G * N -> N)
        detail::mulNG(T2, Hg, Fm);      // H F-   (N * G -> N)
        detail::mulNG(S, T1, Fm);       // F+ H F-
        S.X += T1.X + T2.X + Pd.at(p);
        S.Y += T1.Y + T2.Y + Pa.at(p);

        // ---- integral term, 8-node Gauss-Legendre in s:
        // C(s) = e^{isU} U-dot e^{-isU} = sum_m s^m ad_{iU}^m(U-dot)/m!
        HalfPair T;
        T.X = Ud_t.at(p);
        T.Y = Ua_t.at(p);
        double t0 = T.frob();
        HalfPair Iacc, C1, C2;
        Iacc.setZero(n);
        if (t0 > 0) {
            double mfac = 1.0;
            // node accumulators: sum_k w_k s_k^m collapses onto each T_m
            for (int m = 0; m <= opt.max_terms; ++m) {
                if (m > 0) {
                    detail::mulG(C1, A, T, -1.0); // (iU) T
                    detail::mulNG(C2, T, A);      // T (iU)
                    T.X = C1.X - C2.X;
                    T.Y = C1.Y - C2.Y;
                    mfac *= double(m);
                }
                double glm = 0;
                for (int k = 0; k < 8; ++k) glm += gl_w[k] * std::pow(gl_nodes[k], m);
                Iacc.X += (glm / mfac) * T.X;
                Iacc.Y += (glm / mfac) * T.Y;
                if (m > 0 && T.frob() / mfac <= opt.series_tol * t0) break;
                if (m == opt.max_terms)
                    throw StepSizeError("conjugate_hamiltonian: commutator series did not converge");
            }
        }

        Rd.at(p) = S.X - Iacc.X;
        Ra.at(p) = S.Y - Iacc.Y;
    }, opt.threads);

    AnalysisResult ad = analyze_grid(Rd, d, L, opt.threads);
    AnalysisResult aa = analyze_grid(Ra, d, L, opt.threads);
    ConjugationResult res;
    res.H_new.diag = std::move(ad.kept);
    res.H_new.anti = std::move(aa.kept);
    // the constant part rides along exactly
    {
        std::vector<int> zero(std::size_t(d), 0);
        res.H_new.diag.slice(zero) += H0m;
    }
    res.dropped_mass = std::hypot(ad.dropped_mass, aa.dropped_mass);
    res.kept_mass = std::hypot(ad.kept_mass, aa.kept_mass);
    res.max_generator_norm = std::bit_cast<double>(max_norm_bits.load());
    return res;
}

// --------------------------------------------------------------------------
// Dense helpers (transform composition, small oracles, integrators).
// --------------------------------------------------------------------------

// assemble the full 2(2M+1) matrix of a pair: sign +1 -> class G, -1 -> class N
inline Mat assemble_full(const Mat& X, const Mat& Y, double sign) {
    const int n = int(X.rows());
    Mat F(2 * n, 2 * n);
    F.topLeftCorner(n, n) = X;
    F.topRightCorner(n, n) = Y;
    F.bottomLeftCorner(n, n) = sign * detail::cflip(Y);
    F.bottomRightCorner(n, n) = sign * detail::cflip(X);
    return F;
}

// pointwise synthesis of a MatrixPair at one theta (sum over nonzero slices)
inline std::pair<Mat, Mat> pair_at_theta(const MatrixPair& P, const RVec& theta) {
    const int n = 2 * P.M() + 1;
    Mat X = Mat::Zero(n, n), Y = Mat::Zero(n, n);
    const LatticeBox b = P.diag.box();
    std::vector<int> ell(std::size_t(P.d()));
    for (std::size_t l = 0; l < b.size(); ++l) {
        bool zd = P.diag.mats[l].isZero(0), za = P.anti.mats[l].isZero(0);
        if (zd && za) continue;
        b.unflatten(l, ell.data());
        double ph = 0;
        for (int i = 0; i < P.d(); ++i) ph += ell[std::size_t(i)] * theta[i];
        cplx e = std::exp(cplx(0, ph));
        if (!zd) X += e * P.diag.mats[l];
        if (!za) Y += e * P.anti.mats[l];
    }
    return {std::move(X), std::move(Y)};
}

// the full doubled Hamiltonian matrix at one theta: H0 + P(theta), class N
inline Mat full_hamiltonian_at(const BlockDiagHamiltonian& H0, const MatrixPair& P,
                               const RVec& theta) {
    auto [X, Y] = pair_at_theta(P, theta);
    X += H0.to_matrix();
    return assemble_full(X, Y, -1.0);
}

// scaling-and-squaring Taylor exponential for dense matrices
inline Mat expm_dense(const Mat& A, double tol = 1e-16, int max_terms = 80) {
    double nrm = A.cwiseAbs().colwise().sum().maxCoeff();
    int sq = 0;
    while (nrm > 0.5) { nrm *= 0.5; ++sq; }
    Mat As = A * std::ldexp(1.0, -sq);
    const int n = int(A.rows());
    Mat E = Mat::Identity(n, n) + As, term = As;
    for (int k = 2; k <= max_terms; ++k) {
        term = (term * As) / double(k);
        E += term;
        if (term.norm() <= tol * std::max(1.0, E.norm())) break;
        if (k == max_terms) throw StepSizeError("expm_dense: series did not converge");
    }
    for (int i = 0; i < sq; ++i) E = E * E;
    return E;
}

} // namespace kamred
