#pragma once

// Preliminary transformation: solve the transport homological equation for
// the order-0 symbol g, build G = diag(Op(g), -bar Op(g)), and conjugate the
// first-order system so that the diagonal part of the perturbation becomes a
// smoothing (order -1) operator while the anti-diagonal part stays bounded.

#include "kamred/conjugation.hpp"
#include "kamred/measure.hpp"

namespace kamred {

struct TransportSolution {
    Symbol g;        // order 0, exactly self-adjoint on the window
    Symbol residual; // k - <k> - omega.d_theta g - d_x g sign(xi) chi(xi)
    double worst_divisor = std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::vector<int>, int>> near_divisors; // within 10x of the floor
};

// d_x g . (xi/|xi|) chi(xi), exact in Fourier
inline Symbol transport_direction_term(const Symbol& g) {
    Symbol out(g.order, g.d, g.L, g.Kx, g.M);
    for (std::size_t l = 0; l < g.box().size(); ++l)
        for (int k = -g.Kx; k <= g.Kx; ++k)
            for (int xi = -g.M; xi <= g.M; ++xi)
                out.at(l, k, xi) =
                    cplx(0, double(k)) * CutoffTable::sign_chi(xi) * g.at(l, k, xi);
    return out;
}

// omega . d_theta g, exact in Fourier
inline Symbol theta_derivative(const Symbol& g, const RVec& omega) {
    Symbol out(g.order, g.d, g.L, g.Kx, g.M);
    const LatticeBox b = g.box();
    for (std::size_t l = 0; l < b.size(); ++l) {
        cplx fac(0, b.dot_omega(l, omega));
        for (int k = -g.Kx; k <= g.Kx; ++k)
            for (int xi = -g.M; xi <= g.M; ++xi) out.at(l, k, xi) = fac * g.at(l, k, xi);
    }
    return out;
}

inline TransportSolution solve_transport_symbol(const Symbol& k_sym, const RVec& omega,
                                                double gamma, double tau0) {
    TransportSolution sol;
    Symbol kc = subtract_average(k_sym);

    // record divisors within 10x of the floor before inverting
    const LatticeBox b = kc.box();
    std::vector<int> ell(std::size_t(kc.d), 0);
    for (std::size_t l = 0; l < b.size(); ++l) {
        double wl = b.dot_omega(l, omega);
        int linf = b.linf(l);
        for (int k = -kc.Kx; k <= kc.Kx; ++k) {
            if (linf == 0 && k == 0) continue;
            double floor = gamma / std::pow(ang(double(linf)), tau0);
            for (int sign : {1, -1}) {
                double div = std::abs(wl + sign * k);
                sol.worst_divisor = std::min(sol.worst_divisor, div);
                if (div < 10.0 * floor) {
                    b.unflatten(l, ell.data());
                    sol.near_divisors.emplace_back(ell, sign * k);
                }
            }
        }
    }

    // q = (w.dth + dx)^{-1}[kc chi1+] + (w.dth - dx)^{-1}[kc chi1-]
    Symbol kp = kc, km = kc;
    for (std::size_t l = 0; l < b.size(); ++l)
        for (int k = -kc.Kx; k <= kc.Kx; ++k)
            for (int xi = -kc.M; xi <= kc.M; ++xi) {
                kp.at(l, k, xi) *= CutoffTable::chi1_plus(xi);
                km.at(l, k, xi) *= CutoffTable::chi1_minus(xi);
            }
    Symbol q = transport_inverse(kp, omega, +1, gamma, tau0);
    q += transport_inverse(km, omega, -1, gamma, tau0);
    sol.g = symmetrize_symbol(q);
    sol.g.order = 0.0;

    sol.residual = kc;
    sol.residual -= theta_derivative(sol.g, omega);
    sol.residual -= transport_direction_term(sol.g);
    return sol;
}

// per-alpha profile of the diagonal blocks and its log-log decay slope over
// alpha in [2, alpha_max]
struct DecaySlope {
    double slope = 0.0;
    std::vector<double> profile;
};

inline DecaySlope diag_decay_slope(const QPOperator& A, double s, int alpha_max) {
    DecaySlope r;
    r.profile = decay_profile(A, s);
    std::vector<double> xs, ys;
    for (int a = 2; a <= std::min<int>(alpha_max, int(r.profile.size()) - 1); ++a) {
        double v = r.profile[std::size_t(a)];
        if (v > 0) {
            xs.push_back(std::log(double(a)));
            ys.push_back(std::log(v));
        }
    }
    r.slope = xs.size() >= 2 ? fit_slope(xs, ys) : 0.0;
    return r;
}

struct RegularizationDiagnostics {
    double worst_divisor = 0.0;
    double dropped_mass = 0.0;
    double diag_decay_slope = 0.0;  // of the new diagonal perturbation
    double norm_P1_analog = 0.0;    // |B + Z + i[G,B] + eps K1 - G-dot - H0|
    double norm_P_diag_rest = 0.0;  // higher-order diagonal corrections
    double norm_P_anti = 0.0;       // conjugated anti part (the K2 image)
    double g_norm = 0.0;            // |Op(g)|_{0,s,alpha=2} symbol norm
    double structure_violation = 0.0;
    int near_divisor_count = 0;
};

struct RegularizationResult {
    Symbol g;
    BlockDiagHamiltonian H0; // D + eps [K]
    MatrixPair P;
    RegularizationDiagnostics diagnostics;
};

inline RegularizationResult regularize(const FirstOrderSystem& sys, const RVec& omega,
                                       const WaveConfig& cfg, int threads = 0) {
    // omega must lie in O_gamma
    auto og = check_O_gamma(omega, cfg.gamma, cfg.tau0, std::max(2 * cfg.L, 32));
    if (!og.member)
        throw SmallDivisorError("regularize: omega outside O_gamma", og.worst.ell, og.worst.i,
                                og.worst.j, og.worst.divisor,
                                cfg.gamma / std::pow(ang(double(LatticeBox{cfg.d, 1}.linf(0))), cfg.tau0));

    RegularizationResult res;

    // transport solve for the eps-scaled diagonal symbol
    Symbol k_eps = sys.k_sym;
    k_eps *= cfg.epsilon;
    TransportSolution ts = solve_transport_symbol(k_eps, omega, cfg.gamma, cfg.tau0);
    res.g = ts.g;
    res.diagnostics.worst_divisor = ts.worst_divisor;
    res.diagnostics.near_divisor_count = int(ts.near_divisors.size());
    res.diagnostics.g_norm = symbol_norm(res.g, 0.0, cfg.s, 2);

    // G pair: diag = Op(g), anti = 0
    MatrixPair G(cfg.d, cfg.L, cfg.M);
    G.diag = quantize(res.g, cfg.M);

    // full conjugation of H(t) = D + eps K
    MatrixPair Keps = sys.K;
    Keps *= cfg.epsilon;
    ConjugationOptions opt;
    opt.threads = threads;
    ConjugationResult conj =
        conjugate_hamiltonian(sys.D, Keps, G, omega, conjugation_grid(cfg.d, cfg.L), opt);

    // new time-independent part: H0 = D + eps <k>
    RVec avgk = average_k(sys);
    res.H0 = sys.D;
    const int Msym = (int(avgk.size()) - 1) / 2;
    auto avg_at = [&](int j) { return cfg.epsilon * avgk[j + Msym]; };
    res.H0.blocks[0](0, 0) += avg_at(0);
    for (int j = 1; j <= cfg.M; ++j) {
        res.H0.blocks[std::size_t(j)](0, 0) += avg_at(j);
        res.H0.blocks[std::size_t(j)](1, 1) += avg_at(-j);
    }
    res.H0.refresh_eigs();

    // P = conjugated Hamiltonian minus H0 (subtract from the l = 0 slice)
    res.P = std::move(conj.H_new);
    std::vector<int> zero(std::size_t(cfg.d), 0);
    res.P.diag.slice(zero) -= res.H0.to_matrix();

    res.diagnostics.dropped_mass = conj.dropped_mass;
    res.diagnostics.structure_violation = structure_check(res.P).max_violation();
    res.diagnostics.diag_decay_slope =
        diag_decay_slope(res.P.diag, cfg.s, cfg.M - cfg.Kx).slope;
    res.diagnostics.norm_P_anti = decay_norm(res.P.anti, cfg.s);

    // first-order diagonal remainder, mirrored in coefficient space:
    // P1 = D + i[G,B] + eps K1 - G-dot - H0  (B the |j| multiplier)
    {
        SplitD sd = split_D(cfg.mass, cfg.M);
        QPOperator P1(cfg.d, cfg.L, cfg.M);
        const LatticeBox b = P1.box();
        Mat Bm = sd.B.cast<cplx>().asDiagonal();
        for (std::size_t l = 0; l < b.size(); ++l) {
            const Mat& Gl = G.diag.mats[l];
            Mat comm = Gl * Bm - Bm * Gl;
            P1.mats[l] = cplx(0, 1) * comm + cfg.epsilon * sys.K.diag.mats[l] -
                         cplx(0, b.dot_omega(l, omega)) * Gl;
        }
        Mat Dm = sys.D.to_matrix();
        P1.slice(zero) += Dm - res.H0.to_matrix();
        res.diagnostics.norm_P1_analog = decay_norm(P1, cfg.s);
        QPOperator rest = res.P.diag;
        rest -= P1;
        res.diagnostics.norm_P_diag_rest = decay_norm(rest, cfg.s);
    }
    return res;
}

} // namespace kamred
