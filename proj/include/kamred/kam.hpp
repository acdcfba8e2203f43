#pragma once

// The KAM iteration: second-order Melnikov checks, block-wise homological
// solves, the superconvergent truncation schedule N_n = N0^{(3/2)^n}, and
// the composed transformation.

#include <chrono>

#include "kamred/conjugation.hpp"
#include "kamred/sylvester.hpp"

namespace kamred {

// --------------------------------------------------------------------------
// Schedule. a = 6 tau + 4 and b = a + 1 are carried for reporting; N_n is
// rounded half-up and capped at the time truncation L (beyond that the
// projector tail is empty and the step is exact Newton on the retained band).
// --------------------------------------------------------------------------
struct KamSchedule {
    int N0 = 3;
    int n_max = 9;
    double target_norm = 1e-10;
    double a = 0.0, b = 0.0; // 6 tau + 4, a + 1
    int L_cap = 0;

    static KamSchedule from_config(int N0, int n_max, double target_norm, double tau, int L) {
        if (N0 < 2) throw InvalidInputError("KamSchedule: N0 must be >= 2");
        KamSchedule s;
        s.N0 = N0;
        s.n_max = n_max;
        s.target_norm = target_norm;
        s.a = 6.0 * tau + 4.0;
        s.b = s.a + 1.0;
        s.L_cap = L;
        return s;
    }
    // N_n, capped; `capped` reports whether the cap bit
    int N(int n, bool* capped = nullptr) const {
        double raw = std::pow(double(N0), std::pow(1.5, double(n)));
        long long r = (long long)std::floor(raw + 0.5);
        if (capped) *capped = (r > L_cap);
        return int(std::min<long long>(r, L_cap));
    }
};

struct MelnikovViolation {
    std::vector<int> ell;
    int i = 0, j = 0;
    int a = 1, ap = 1;
    double divisor = 0.0;
    int kind = 0; // 0 difference, 1 sum
};

struct MelnikovReport {
    bool pass = true;
    double min_margin = std::numeric_limits<double>::infinity();
    std::vector<MelnikovViolation> violations;
};

// |omega.l + lambda_i +- lambda_j| >= gamma <i-+j> / N^tau over |l|_inf <= N,
// 0 <= i,j <= M, all sign labels; (0,j,j) excluded for the difference kind.
inline MelnikovReport melnikov_check(const BlockDiagHamiltonian& H0, const RVec& omega, int N,
                                     double gamma, double tau) {
    if (H0.eigs.empty()) throw InvalidInputError("melnikov_check: eigen cache not refreshed");
    MelnikovReport rep;
    const int M = H0.M(), d = int(omega.size());
    const double Nt = std::pow(double(N), tau);
    const LatticeBox box{d, N};
    std::vector<int> ell(std::size_t(d), 0);
    for (std::size_t lf = 0; lf < box.size(); ++lf) {
        double wl = box.dot_omega(lf, omega);
        bool l_zero = box.linf(lf) == 0;
        for (int i = 0; i <= M; ++i) {
            auto [li0, li1] = H0.lambdas(i);
            for (int j = 0; j <= M; ++j) {
                auto [lj0, lj1] = H0.lambdas(j);
                for (int sa = 0; sa < 2; ++sa)
                    for (int sb = 0; sb < 2; ++sb) {
                        double la = sa ? li1 : li0, lb = sb ? lj1 : lj0;
                        // difference kind
                        if (!(l_zero && i == j)) {
                            double div = wl + la - lb;
                            double thr = gamma * ang(double(i - j)) / Nt;
                            double margin = gamma > 0 ? std::abs(div) / thr
                                                      : std::numeric_limits<double>::infinity();
                            rep.min_margin = std::min(rep.min_margin, margin);
                            if (margin < 1.0) {
                                box.unflatten(lf, ell.data());
                                rep.violations.push_back(
                                    {ell, i, j, sa ? 1 : -1, sb ? 1 : -1, div, 0});
                            }
                        }
                        // sum kind
                        {
                            double div = wl + la + lb;
                            double thr = gamma * ang(double(i + j)) / Nt;
                            double margin = gamma > 0 ? std::abs(div) / thr
                                                      : std::numeric_limits<double>::infinity();
                            rep.min_margin = std::min(rep.min_margin, margin);
                            if (margin < 1.0) {
                                box.unflatten(lf, ell.data());
                                rep.violations.push_back(
                                    {ell, i, j, sa ? 1 : -1, sb ? 1 : -1, div, 1});
                            }
                        }
                    }
            }
        }
    }
    rep.pass = rep.violations.empty();
    return rep;
}

// --------------------------------------------------------------------------
// Homological equation: omega.d_theta U = i[U, H0] + Pi_N P - floor(P).
// Solved block-by-block; the solution inherits the N_s(1,1) symmetries from
// the uniqueness of each block solve.
// --------------------------------------------------------------------------
struct HomologicalResult {
    MatrixPair U;
    double min_divisor = std::numeric_limits<double>::infinity();
    double residual = 0.0;     // |omega.dth U - i[U,H0] - Pi_N P + floor(P)|_s
    double residual_rel = 0.0; // residual / |P|_s
};

namespace detail {

// block (beta, alpha) of a spatial matrix: rows {+beta,-beta}, cols {+alpha,-alpha}
inline Mat get_block(const Mat& m, int M, int beta, int alpha) {
    const int pb = beta == 0 ? 1 : 2, pa = alpha == 0 ? 1 : 2;
    Mat b(pb, pa);
    for (int r = 0; r < pb; ++r)
        for (int c = 0; c < pa; ++c) {
            int row = r == 0 ? M + beta : M - beta;
            int col = c == 0 ? M + alpha : M - alpha;
            b(r, c) = m(row, col);
        }
    return b;
}

inline void set_block(Mat& m, int M, int beta, int alpha, const Mat& b) {
    const int pb = beta == 0 ? 1 : 2, pa = alpha == 0 ? 1 : 2;
    for (int r = 0; r < pb; ++r)
        for (int c = 0; c < pa; ++c) {
            int row = r == 0 ? M + beta : M - beta;
            int col = c == 0 ? M + alpha : M - alpha;
            m(row, col) = b(r, c);
        }
}

} // namespace detail

// floor(P): the block diagonal of the l = 0 slice of the diagonal part
inline BlockDiagHamiltonian floor_of(const MatrixPair& P) {
    std::vector<int> zero(std::size_t(P.d()), 0);
    return block_diag_of(P.diag.slice(zero), P.M());
}

inline HomologicalResult solve_homological(const BlockDiagHamiltonian& H0, const MatrixPair& P,
                                           const RVec& omega, int N, double gamma, double tau,
                                           int threads = 0) {
    if (H0.eigs.empty()) throw InvalidInputError("solve_homological: eigen cache not refreshed");
    const int M = P.M(), d = P.d();
    HomologicalResult res;
    res.U = MatrixPair(d, P.L(), M);
    const LatticeBox box = P.diag.box();
    const double Nt = std::pow(double(N), tau);

    // conjugated blocks for the anti equations
    std::vector<Mat> conj_blocks(std::size_t(M + 1));
    std::vector<BlockEig> conj_eigs(std::size_t(M + 1));
    for (int j = 0; j <= M; ++j) {
        conj_blocks[std::size_t(j)] = H0.conj_block(j);
        Eigen::SelfAdjointEigenSolver<Mat> es(conj_blocks[std::size_t(j)]);
        conj_eigs[std::size_t(j)] = BlockEig{es.eigenvalues(), es.eigenvectors()};
    }

    // modes carried by Pi_N P: |l|_inf < N
    std::vector<std::size_t> slots;
    for (std::size_t lf = 0; lf < box.size(); ++lf)
        if (box.linf(lf) < N) slots.push_back(lf);

    std::vector<double> min_div(slots.size(), std::numeric_limits<double>::infinity());
    std::mutex err_note;
    parallel_for(slots.size(), [&](std::size_t si) {
        std::size_t lf = slots[si];
        double wl = box.dot_omega(lf, omega);
        bool l_zero = box.linf(lf) == 0;
        Mat& Ud = res.U.diag.mats[lf];
        Mat& Ua = res.U.anti.mats[lf];
        const Mat& Pd = P.diag.mats[lf];
        const Mat& Pa = P.anti.mats[lf];
        SylvesterStats st;
        for (int beta = 0; beta <= M; ++beta)
            for (int alpha = 0; alpha <= M; ++alpha) {
                // diagonal part; (0, j, j) row is removed by floor(P)
                if (!(l_zero && beta == alpha)) {
                    Mat Y = cplx(0, -1) * detail::get_block(Pd, M, beta, alpha);
                    if (!Y.isZero(0)) {
                        double floor = gamma > 0 ? gamma * ang(double(beta - alpha)) / Nt : 0.0;
                        Mat X = solve_sylvester_eig(wl, H0.eig(beta), H0.eig(alpha),
                                                    H0.blocks[std::size_t(beta)],
                                                    H0.blocks[std::size_t(alpha)], Y, +1, floor, &st);
                        detail::set_block(Ud, M, beta, alpha, X);
                    }
                }
                // anti part (sum divisors)
                {
                    Mat Y = cplx(0, -1) * detail::get_block(Pa, M, beta, alpha);
                    if (!Y.isZero(0)) {
                        double floor = gamma > 0 ? gamma * ang(double(beta + alpha)) / Nt : 0.0;
                        Mat X = solve_sylvester_eig(wl, H0.eig(beta), conj_eigs[std::size_t(alpha)],
                                                    H0.blocks[std::size_t(beta)],
                                                    conj_blocks[std::size_t(alpha)], Y, -1, floor, &st);
                        detail::set_block(Ua, M, beta, alpha, X);
                    }
                }
            }
        min_div[si] = st.min_divisor;
    }, threads);
    for (double v : min_div) res.min_divisor = std::min(res.min_divisor, v);

    // residual of the defining identity, computed independently in Fourier
    {
        QPOperator Rd(d, P.L(), M), Ra(d, P.L(), M);
        Mat H = H0.to_matrix();
        BlockDiagHamiltonian fl = floor_of(P);
        Mat flm = fl.to_matrix();
        auto [Plow_d, Phigh_d] = smooth_project(P.diag, N);
        auto [Plow_a, Phigh_a] = smooth_project(P.anti, N);
        for (std::size_t lf = 0; lf < box.size(); ++lf) {
            cplx ddt(0, box.dot_omega(lf, omega));
            const Mat& Ud = res.U.diag.mats[lf];
            const Mat& Ua = res.U.anti.mats[lf];
            Rd.mats[lf] = ddt * Ud - cplx(0, 1) * (Ud * H - H * Ud) - Plow_d.mats[lf];
            Ra.mats[lf] = ddt * Ua + cplx(0, 1) * (H * Ua + Ua * detail::cflip(H).eval()) -
                          Plow_a.mats[lf];
            if (box.linf(lf) == 0) Rd.mats[lf] += flm;
        }
        double rnorm = std::hypot(decay_norm(Rd, sobolev_s0(d)), decay_norm(Ra, sobolev_s0(d)));
        double pnorm = std::hypot(decay_norm(P.diag, sobolev_s0(d)),
                                  decay_norm(P.anti, sobolev_s0(d)));
        res.residual = rnorm;
        res.residual_rel = pnorm > 0 ? rnorm / pnorm : 0.0;
    }
    return res;
}

// --------------------------------------------------------------------------
// One KAM step and the full iteration.
// --------------------------------------------------------------------------
struct KamIterationRow {
    int n = 0;
    int N = 0;
    bool N_capped = false;
    double norm_P_s = 0.0;   // |||P|||_{s,1,0}
    double norm_P_low = 0.0; // same at s_low = s0
    double min_divisor = 0.0;
    double hom_residual_rel = 0.0;
    double conj_dropped = 0.0;
    double structure = 0.0;
    double identity_check = 0.0; // |P+ - (Pi^bot_N P + R)|_s
    double wall_time = 0.0;
};

struct KamState {
    int n = 0;
    BlockDiagHamiltonian H0;
    MatrixPair P;
    std::vector<MatrixPair> transforms;
    std::vector<KamIterationRow> log;
};

enum class KamStatus { Converged, Rejected, MaxIter };

struct KamOptions {
    double s = 4.0;
    double gamma = 0.05;
    double tau = 16.0;
    double hom_residual_tol = 1e-10;
    double identity_tol = 1e-9;
    double structure_tol = 1e-9;
    int threads = 0;
};

inline KamIterationRow kam_step(KamState& state, const RVec& omega, const KamSchedule& sched,
                                const KamOptions& opt) {
    auto t_start = std::chrono::steady_clock::now();
    KamIterationRow row;
    row.n = state.n;
    bool capped = false;
    const int N = sched.N(state.n, &capped);
    row.N = N;
    row.N_capped = capped;
    const int d = state.P.d(), L = state.P.L();

    state.H0.refresh_eigs();
    MelnikovReport mel = melnikov_check(state.H0, omega, N, opt.gamma, opt.tau);
    if (!mel.pass) {
        const auto& v = mel.violations.front();
        throw SmallDivisorError("kam_step: Melnikov condition violated", v.ell, v.i, v.j,
                                v.divisor, opt.gamma / std::pow(double(N), opt.tau));
    }

    HomologicalResult hom =
        solve_homological(state.H0, state.P, omega, N, opt.gamma, opt.tau, opt.threads);
    row.min_divisor = hom.min_divisor;
    row.hom_residual_rel = hom.residual_rel;
    if (hom.residual_rel > opt.hom_residual_tol)
        throw ModelError("kam_step: homological residual " + std::to_string(hom.residual_rel) +
                         " exceeds tolerance");

    ConjugationOptions copt;
    copt.threads = opt.threads;
    ConjugationResult conj = conjugate_hamiltonian(state.H0, state.P, hom.U, omega,
                                                   conjugation_grid(d, L), copt);
    row.conj_dropped = conj.dropped_mass;

    // new block diagonal: h_j + [P_hat^d(0)]^j_j, hermitized
    BlockDiagHamiltonian H0_new = state.H0;
    {
        BlockDiagHamiltonian corr = floor_of(state.P);
        double dev = corr.selfadjoint_violation();
        if (dev > 1e-12)
            throw ModelError("kam_step: diagonal correction not self-adjoint: " +
                             std::to_string(dev));
        corr.hermitize();
        H0_new += corr;
        H0_new.refresh_eigs();
    }

    // new perturbation
    MatrixPair P_new = conj.H_new;
    std::vector<int> zero(std::size_t(d), 0);
    P_new.diag.slice(zero) -= H0_new.to_matrix();

    // consistency: P+ must equal Pi^bot_N P + R with
    // R = conj - H0 - P - i[U, H0] + U-dot  (coefficient-space identity)
    {
        const LatticeBox box = state.P.diag.box();
        Mat H = state.H0.to_matrix();
        auto [Plow_d, Phigh_d] = smooth_project(state.P.diag, N);
        auto [Plow_a, Phigh_a] = smooth_project(state.P.anti, N);
        QPOperator Dd(d, L, state.P.M()), Da(d, L, state.P.M());
        for (std::size_t lf = 0; lf < box.size(); ++lf) {
            cplx ddt(0, box.dot_omega(lf, omega));
            const Mat& Ud = hom.U.diag.mats[lf];
            const Mat& Ua = hom.U.anti.mats[lf];
            // R slice
            Mat Rd = conj.H_new.diag.mats[lf] - state.P.diag.mats[lf] -
                     cplx(0, 1) * (Ud * H - H * Ud) + ddt * Ud;
            Mat Ra = conj.H_new.anti.mats[lf] - state.P.anti.mats[lf] +
                     cplx(0, 1) * (H * Ua + Ua * detail::cflip(H).eval()) + ddt * Ua;
            if (box.linf(lf) == 0) Rd -= H;
            Dd.mats[lf] = P_new.diag.mats[lf] - Phigh_d.mats[lf] - Rd;
            Da.mats[lf] = P_new.anti.mats[lf] - Phigh_a.mats[lf] - Ra;
        }
        row.identity_check = std::hypot(decay_norm(Dd, sobolev_s0(d)), decay_norm(Da, sobolev_s0(d)));
        double pref = std::max(1e-300, decay_norm(state.P.diag, sobolev_s0(d)));
        if (row.identity_check > opt.identity_tol * pref)
            throw ModelError("kam_step: new-perturbation identity violated: " +
                             std::to_string(row.identity_check / pref));
    }

    row.structure = structure_check(P_new).max_violation();
    if (row.structure > opt.structure_tol)
        throw ModelError("kam_step: structure violation " + std::to_string(row.structure));

    state.H0 = std::move(H0_new);
    state.P = std::move(P_new);
    state.transforms.push_back(std::move(hom.U));
    state.n += 1;

    PairNorm pn_s = pair_norm(state.P, opt.s, 1.0, 0.0);
    PairNorm pn_low = pair_norm(state.P, sobolev_s0(d), 1.0, 0.0);
    row.norm_P_s = pn_s.total;
    row.norm_P_low = pn_low.total;
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    state.log.push_back(row);
    return row;
}

struct KamResult {
    KamStatus status = KamStatus::MaxIter;
    BlockDiagHamiltonian H0_inf;
    std::vector<MatrixPair> transforms;
    std::vector<KamIterationRow> log;
    double final_norm = 0.0;
    int iterations = 0;
    // rejection details
    std::string reject_reason;
    int reject_stage = -1;
    double reject_divisor = 0.0;
};

inline KamResult kam_iterate(const BlockDiagHamiltonian& H0, const MatrixPair& P,
                             const RVec& omega, const KamSchedule& sched, const KamOptions& opt) {
    KamState state;
    state.H0 = H0;
    state.P = P;
    KamResult res;
    PairNorm pn0 = pair_norm(state.P, opt.s, 1.0, 0.0);
    double norm = pn0.total;
    {
        KamIterationRow r0;
        r0.n = -1;
        r0.N = 0;
        r0.norm_P_s = norm;
        r0.norm_P_low = pair_norm(state.P, sobolev_s0(P.d()), 1.0, 0.0).total;
        state.log.push_back(r0);
    }
    try {
        while (norm > sched.target_norm && state.n < sched.n_max) {
            KamIterationRow row = kam_step(state, omega, sched, opt);
            norm = row.norm_P_s;
        }
        res.status = norm <= sched.target_norm ? KamStatus::Converged : KamStatus::MaxIter;
    } catch (const SmallDivisorError& e) {
        res.status = KamStatus::Rejected;
        res.reject_reason = e.what();
        res.reject_stage = state.n;
        res.reject_divisor = e.divisor;
    }
    state.H0.refresh_eigs();
    res.H0_inf = std::move(state.H0);
    res.transforms = std::move(state.transforms);
    res.log = std::move(state.log);
    res.final_norm = norm;
    res.iterations = state.n;
    return res;
}

// --------------------------------------------------------------------------
// Composed transformation A(theta) = e^{-iG(theta)} e^{-iU^1(theta)} ... and
// its inverse (product of inverses in reverse order).
// --------------------------------------------------------------------------
struct ComposedTransform {
    Mat A;
    Mat A_inv;
};

inline ComposedTransform compose_transforms(const std::vector<MatrixPair>& transforms,
                                            const MatrixPair* G, const RVec& theta,
                                            double id_tol = 1e-10) {
    int n2 = 0;
    if (G) n2 = 2 * (2 * G->M() + 1);
    else if (!transforms.empty()) n2 = 2 * (2 * transforms.front().M() + 1);
    else throw InvalidInputError("compose_transforms: nothing to compose");
    ComposedTransform ct;
    ct.A = Mat::Identity(n2, n2);
    ct.A_inv = Mat::Identity(n2, n2);
    auto push = [&](const MatrixPair& Upair) {
        auto [X, Y] = pair_at_theta(Upair, theta);
        Mat Ufull = assemble_full(X, Y, -1.0);
        Mat F = expm_dense(cplx(0, -1) * Ufull);
        Mat Finv = expm_dense(cplx(0, 1) * Ufull);
        ct.A = ct.A * F;          // later factors act first on v
        ct.A_inv = Finv * ct.A_inv;
    };
    if (G) push(*G);
    for (const auto& U : transforms) push(U);
    double dev = (ct.A * ct.A_inv - Mat::Identity(n2, n2)).cwiseAbs().maxCoeff();
    if (dev > id_tol)
        throw ModelError("compose_transforms: A A^{-1} deviates from identity by " +
                         std::to_string(dev));
    return ct;
}

} // namespace kamred
