#pragma once

// First-order formulation of the forced wave equation: the built-in
// perturbation families W(omega t) of order one (Conditions I-II), the
// change to complex coordinates q = D^{1/2} u + i D^{-1/2} u_t, and the
// splitting D = B + Z.
//
// Symbols are built on a padded xi-window (M + 2 Kx) so that the adjoint /
// sandwich algebra downstream (transport solve, symmetrizations) is exact on
// every entry the quantized operators at truncation M can see.

#include "kamred/config.hpp"
#include "kamred/hamiltonian.hpp"
#include "kamred/symbol.hpp"

namespace kamred {

enum class CStarAssignment { AllSame, Parity }; // xi -> index into c_star_values

struct PerturbationW {
    Symbol w;                          // order-1 symbol, exactly self-adjoint
    std::vector<double> c_star_values; // Gamma*
    CStarAssignment assignment = CStarAssignment::AllSame;
    double e_decay = 1.0;
    double b_bound = 0.0; // measured sup |b(xi)| <xi>^{e-1}

    double c_star(long long xi) const {
        if (assignment == CStarAssignment::AllSame) return c_star_values[0];
        return c_star_values[std::size_t(std::llabs(xi) % 2)];
    }
};

inline int padded_window(const WaveConfig& cfg) { return cfg.M + 2 * cfg.Kx; }

namespace detail {

// add amp * cos(theta_axis) * cos(x) * <xi> chi(xi), symmetrized exactly
inline void add_osc_part(Symbol& w, int axis, double amp) {
    if (amp == 0) return;
    const int Ms = w.M;
    std::vector<int> ell(std::size_t(w.d), 0);
    // v-hat(l, k) = amp/4 on the four modes (l = +-e_axis, k = +-1)
    for (int sl : {-1, 1}) {
        ell.assign(std::size_t(w.d), 0);
        ell[std::size_t(axis)] = sl;
        std::size_t lf = w.box().flatten(ell);
        for (int k : {-1, 1})
            for (int xi = -Ms; xi <= Ms; ++xi) {
                if (std::abs(xi + k) > Ms) continue; // keep the pair rule exact
                double prof =
                    0.5 * (ang(double(xi)) * CutoffTable::chi(xi) +
                           ang(double(xi + k)) * CutoffTable::chi(xi + k));
                w.at(lf, k, xi) += cplx(amp / 4.0 * prof, 0.0);
            }
    }
}

// add a mean-zero order-0 trig polynomial amp*(cos x + cos theta_1)
inline void add_lower_order(Symbol& w, double amp) {
    if (amp == 0) return;
    std::vector<int> ell(std::size_t(w.d), 0);
    std::size_t l0 = w.box().flatten(ell);
    for (int k : {-1, 1})
        for (int xi = -w.M; xi <= w.M; ++xi) w.at(l0, k, xi) += cplx(amp / 2.0, 0.0);
    for (int sl : {-1, 1}) {
        ell.assign(std::size_t(w.d), 0);
        ell[0] = sl;
        std::size_t lf = w.box().flatten(ell);
        for (int xi = -w.M; xi <= w.M; ++xi) w.at(lf, 0, xi) += cplx(amp / 2.0, 0.0);
    }
}

} // namespace detail

struct ConditionReport {
    double reality = 0.0;       // Condition I: operator reality violation
    double self_adjoint = 0.0;  // Condition I: operator self-adjointness violation
    double avg_imag = 0.0;      // max |Im <w>(xi)|
    double b_profile = 0.0;     // sup_xi |b(xi)| <xi>^{e-1}
};

inline ConditionReport check_conditions(const PerturbationW& W, int M_op) {
    ConditionReport r;
    QPOperator op = quantize(W.w, M_op);
    r.reality = op_reality_violation(op);
    r.self_adjoint = op_selfadjoint_violation(op);
    auto avg = average_symbol(W.w);
    for (int xi = -W.w.M; xi <= W.w.M; ++xi) {
        cplx a = avg[std::size_t(xi + W.w.M)];
        r.avg_imag = std::max(r.avg_imag, std::abs(a.imag()));
        double b = a.real() - W.c_star(xi) * ang(double(xi));
        r.b_profile = std::max(r.b_profile, std::abs(b) * std::pow(ang(double(xi)), W.e_decay - 1.0));
    }
    return r;
}

inline PerturbationW make_perturbation(const WaveConfig& cfg) {
    const int Ms = padded_window(cfg);
    const int Kx = std::max(cfg.Kx, 1);
    PerturbationW W;
    W.e_decay = cfg.e_decay;
    W.w = Symbol(1.0, cfg.d, cfg.L, Kx, Ms);
    std::vector<int> zero(std::size_t(cfg.d), 0);
    std::size_t l0 = W.w.box().flatten(zero);

    switch (cfg.family) {
        case FamilyKind::Constant: {
            W.c_star_values = {cfg.c_star};
            for (int xi = -Ms; xi <= Ms; ++xi)
                W.w.at(l0, 0, xi) = cplx(cfg.c_star * ang(double(xi)), 0.0);
            detail::add_lower_order(W.w, cfg.lower_amp);
            break;
        }
        case FamilyKind::Oscillatory: {
            W.c_star_values = {cfg.c_star};
            for (int xi = -Ms; xi <= Ms; ++xi)
                W.w.at(l0, 0, xi) = cplx(cfg.c_star * ang(double(xi)), 0.0);
            detail::add_osc_part(W.w, 0, cfg.v_amp);
            if (cfg.v_amp2 != 0) {
                if (cfg.d < 2) throw ConfigError("v_amp2 requires d >= 2");
                detail::add_osc_part(W.w, 1, cfg.v_amp2);
            }
            break;
        }
        case FamilyKind::TwoLevel: {
            W.c_star_values = {cfg.c_star, cfg.c_star2};
            W.assignment = CStarAssignment::Parity;
            for (int xi = -Ms; xi <= Ms; ++xi)
                W.w.at(l0, 0, xi) = cplx(W.c_star(xi) * ang(double(xi)), 0.0);
            detail::add_osc_part(W.w, 0, cfg.v_amp);
            break;
        }
        case FamilyKind::Custom:
            throw ConfigError("make_perturbation: custom symbols are loaded by the CLI");
    }

    ConditionReport rep = check_conditions(W, cfg.M);
    W.b_bound = rep.b_profile;
    double tol = 1e-12;
    if (rep.reality > tol || rep.self_adjoint > tol || rep.avg_imag > tol)
        throw ModelError("make_perturbation: Condition I violated (reality " +
                         std::to_string(rep.reality) + ", self-adjoint " +
                         std::to_string(rep.self_adjoint) + ")");
    // Condition II: the average must be a(xi)<xi> up to a <xi>^{1-e} tail.
    // The built-in families have b = 0; reject anything that strays.
    if (!cfg.unchecked && rep.b_profile > 1e-10 + 10.0 * std::abs(cfg.lower_amp))
        throw ModelError("make_perturbation: Condition II violated, |<w>(xi)-a(xi)<xi>|<xi>^{e-1} up to " +
                         std::to_string(rep.b_profile));
    return W;
}

// Same checks for a user-supplied symbol (the --unchecked path still reports).
inline PerturbationW wrap_custom_perturbation(Symbol w, std::vector<double> c_star_values,
                                              double e_decay, int M_op, bool unchecked) {
    PerturbationW W;
    W.w = std::move(w);
    W.c_star_values = std::move(c_star_values);
    W.e_decay = e_decay;
    ConditionReport rep = check_conditions(W, M_op);
    W.b_bound = rep.b_profile;
    if (!unchecked) {
        if (rep.reality > 1e-12 || rep.self_adjoint > 1e-12)
            throw ModelError("custom perturbation violates Condition I");
    }
    return W;
}

// --------------------------------------------------------------------------
// First-order system: D = diag(sqrt(j^2+m)); K = 1/2 D^{-1/2} W D^{-1/2},
// entering as the pair [[K, K], [-K, -K]]. The scalar epsilon is applied by
// the callers when assembling H(t) = D + eps K.
// --------------------------------------------------------------------------
struct FirstOrderSystem {
    BlockDiagHamiltonian D;
    MatrixPair K;   // diag = anti = K (unscaled)
    Symbol k_sym;   // symbol of K on the padded window
};

inline FirstOrderSystem build_first_order(const PerturbationW& W, const WaveConfig& cfg) {
    FirstOrderSystem sys;
    sys.D = free_hamiltonian(cfg.mass, cfg.M);

    QPOperator Wop = quantize(W.w, cfg.M);
    const int n = 2 * cfg.M + 1;
    RVec dinv(n);
    for (int j = -cfg.M; j <= cfg.M; ++j)
        dinv[j + cfg.M] = std::pow(double(j) * j + cfg.mass, -0.25);
    QPOperator K(cfg.d, cfg.L, cfg.M);
    for (std::size_t l = 0; l < Wop.mats.size(); ++l)
        K.mats[l] = 0.5 * (dinv.asDiagonal() * Wop.mats[l] * dinv.asDiagonal());
    sys.K.diag = K;
    sys.K.anti = std::move(K);

    // symbol of K on the padded window: k(l,h,xi) = w(l,h,xi)/2 * ((xi+h)^2+m)^{-1/4} (xi^2+m)^{-1/4}
    const Symbol& w = W.w;
    sys.k_sym = Symbol(-1.0, w.d, w.L, w.Kx, w.M);
    for (std::size_t l = 0; l < w.box().size(); ++l)
        for (int h = -w.Kx; h <= w.Kx; ++h)
            for (int xi = -w.M; xi <= w.M; ++xi) {
                if (std::abs(xi + h) > w.M) continue;
                double f = 0.5 * std::pow(double(xi + h) * (xi + h) + cfg.mass, -0.25) *
                           std::pow(double(xi) * xi + cfg.mass, -0.25);
                sys.k_sym.at(l, h, xi) = f * w.at(l, h, xi);
            }
    return sys;
}

// average <k>(xi) = k-hat(0,0,xi) of the (unscaled) K symbol; real by
// self-adjointness
inline RVec average_k(const FirstOrderSystem& sys) {
    auto avg = average_symbol(sys.k_sym);
    RVec out(long(avg.size()));
    for (std::size_t i = 0; i < avg.size(); ++i) out[long(i)] = avg[i].real();
    return out;
}

// --------------------------------------------------------------------------
// D = B + Z with B = |j| and Z_j = sqrt(j^2+m) - |j|, a multiplier of order -1.
// --------------------------------------------------------------------------
struct SplitD {
    RVec B; // index j+M
    RVec Z;
};

inline SplitD split_D(double mass, int M) {
    if (mass <= 0) throw InvalidInputError("split_D: mass must be positive");
    SplitD s;
    s.B = RVec::Zero(2 * M + 1);
    s.Z = RVec::Zero(2 * M + 1);
    for (int j = -M; j <= M; ++j) {
        double b = std::abs(double(j));
        double z = std::sqrt(double(j) * j + mass) - b;
        s.B[j + M] = b;
        s.Z[j + M] = z;
        if (j != 0 && std::abs(z) > mass / ang(double(j)) * (1 + 1e-14))
            throw ModelError("split_D: |Z_j| <= m/<j> violated");
    }
    return s;
}

} // namespace kamred
