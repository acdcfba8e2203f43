#pragma once

// Discrete pseudo-differential symbol calculus on T^d x T x Z.
//
// A symbol a(theta, x, xi) is stored by its Fourier coefficients
// a_hat(l, k, xi) over the window |l|_inf <= L, |k| <= Kx, |xi| <= M, with a
// declared order m. xi lives on the integer lattice: the quantized operator
// only ever evaluates the symbol at integer frequencies, so the algebra below
// is exact on the retained window and the smooth cutoffs of the continuum
// theory degenerate to {0,1} tables.

#include <optional>

#include "kamred/core.hpp"
#include "kamred/qpoperator.hpp"

namespace kamred {

struct Symbol {
    double order = 0.0; // declared pseudo-differential order m
    int d = 1;          // number of time frequencies
    int L = 0;          // time-Fourier truncation |l|_inf <= L
    int Kx = 0;         // x-Fourier truncation of the x-dependence |k| <= Kx
    int M = 0;          // xi-window half-width
    std::vector<cplx> c;

    Symbol() = default;
    Symbol(double order, int d, int L, int Kx, int M)
        : order(order), d(d), L(L), Kx(Kx), M(M) {
        if (d < 1 || L < 0 || Kx < 0 || M < 1)
            throw InvalidInputError("Symbol: bad truncation parameters");
        c.assign(box().size() * std::size_t(2 * Kx + 1) * std::size_t(2 * M + 1), cplx(0, 0));
    }

    LatticeBox box() const { return LatticeBox{d, L}; }
    int nk() const { return 2 * Kx + 1; }
    int nxi() const { return 2 * M + 1; }

    std::size_t idx(std::size_t lflat, int k, int xi) const {
        return (lflat * std::size_t(nk()) + std::size_t(k + Kx)) * std::size_t(nxi()) +
               std::size_t(xi + M);
    }
    cplx& at(std::size_t lflat, int k, int xi) { return c[idx(lflat, k, xi)]; }
    const cplx& at(std::size_t lflat, int k, int xi) const { return c[idx(lflat, k, xi)]; }

    // coefficient at (l, k, xi), zero outside the window
    cplx get(const std::vector<int>& ell, int k, int xi) const {
        if (int(ell.size()) != d) throw DimensionError("Symbol::get: wrong ell dimension");
        if (!box().contains(ell.data()) || std::abs(k) > Kx || std::abs(xi) > M)
            return cplx(0, 0);
        return at(box().flatten(ell), k, xi);
    }
    void set(const std::vector<int>& ell, int k, int xi, cplx v) {
        if (!box().contains(ell.data()) || std::abs(k) > Kx || std::abs(xi) > M)
            throw DimensionError("Symbol::set: mode outside window");
        at(box().flatten(ell), k, xi) = v;
    }

    bool finite() const {
        for (const auto& z : c)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
        return true;
    }

    // max |a_hat(l,k,xi) - conj a_hat(-l,-k,-xi)|: reality of the symbol
    // (real operator <=> a(theta,x,xi) = conj a(theta,x,-xi) with real
    // theta,x dependence).
    double reality_violation() const {
        const LatticeBox b = box();
        double worst = 0.0;
        for (std::size_t l = 0; l < b.size(); ++l) {
            std::size_t ln = b.negate(l);
            for (int k = -Kx; k <= Kx; ++k)
                for (int xi = -M; xi <= M; ++xi)
                    worst = std::max(worst,
                                     std::abs(at(l, k, xi) - std::conj(at(ln, -k, -xi))));
        }
        return worst;
    }

    Symbol& operator*=(cplx s) {
        for (auto& z : c) z *= s;
        return *this;
    }
    Symbol& operator+=(const Symbol& o) {
        if (d != o.d || L != o.L || Kx != o.Kx || M != o.M)
            throw DimensionError("Symbol +=: grid mismatch");
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.c[i];
        return *this;
    }
    Symbol& operator-=(const Symbol& o) {
        if (d != o.d || L != o.L || Kx != o.Kx || M != o.M)
            throw DimensionError("Symbol -=: grid mismatch");
        for (std::size_t i = 0; i < c.size(); ++i) c[i] -= o.c[i];
        return *this;
    }
};

// Exact {0,1} cutoff tables on the integer lattice. chi matches the smooth
// cutoff (1 for |xi|>=1, 0 for |xi|<=1/2) at the integers; chi1 matches the
// transport cutoff (0 for |xi|<=3/2, 1 for |xi|>=2).
struct CutoffTable {
    static double chi(int xi) { return std::abs(xi) >= 1 ? 1.0 : 0.0; }
    static double chi1(int xi) { return std::abs(xi) >= 2 ? 1.0 : 0.0; }
    static double chi1_plus(int xi) { return xi > 0 ? chi1(xi) : 0.0; }
    static double chi1_minus(int xi) { return xi <= 0 ? chi1(xi) : 0.0; }
    // xi/|xi| * chi(xi), the transport direction weight
    static double sign_chi(int xi) { return xi == 0 ? 0.0 : (xi > 0 ? 1.0 : -1.0); }
};

// --------------------------------------------------------------------------
// |a|_{m,s,alpha} = sup_{beta<=alpha} sup_xi ||d^beta_xi a(.,.,xi)||_s <xi>^{-m+beta}
// with ||.||_s the (theta,x) Sobolev norm and d_xi a central finite
// difference (one-sided at the window edges). alpha <= 2 supported.
// --------------------------------------------------------------------------
inline double symbol_norm(const Symbol& a, double m, double s, int alpha) {
    if (alpha < 0 || alpha > 2)
        throw InvalidInputError("symbol_norm: alpha must be in {0,1,2}");
    if (s < 0) throw InvalidInputError("symbol_norm: s must be >= 0");
    if (!a.finite()) throw InvalidInputError("symbol_norm: non-finite coefficient");

    const LatticeBox b = a.box();
    const int M = a.M;

    // d^beta_xi by finite differences along xi for a fixed (l,k) row
    auto diff = [&](const std::vector<cplx>& row, std::vector<cplx>& out) {
        const int n = 2 * M + 1;
        out.resize(n);
        for (int i = 0; i < n; ++i) {
            if (i == 0) out[i] = row[1] - row[0];
            else if (i == n - 1) out[i] = row[n - 1] - row[n - 2];
            else out[i] = (row[i + 1] - row[i - 1]) / 2.0;
        }
    };

    // accumulate ||.||_s^2 per xi for each derivative level
    std::vector<std::vector<double>> ssq(std::size_t(alpha) + 1,
                                         std::vector<double>(std::size_t(2 * M + 1), 0.0));
    std::vector<cplx> row(std::size_t(2 * M + 1)), d1, d2;
    for (std::size_t l = 0; l < b.size(); ++l) {
        int linf = b.linf(l);
        for (int k = -a.Kx; k <= a.Kx; ++k) {
            for (int xi = -M; xi <= M; ++xi) row[std::size_t(xi + M)] = a.at(l, k, xi);
            double w = std::pow(ang2(linf, k), 2.0 * s);
            for (int xi = 0; xi < 2 * M + 1; ++xi)
                ssq[0][std::size_t(xi)] += w * std::norm(row[std::size_t(xi)]);
            if (alpha >= 1) {
                diff(row, d1);
                for (int xi = 0; xi < 2 * M + 1; ++xi)
                    ssq[1][std::size_t(xi)] += w * std::norm(d1[std::size_t(xi)]);
            }
            if (alpha >= 2) {
                diff(d1, d2);
                for (int xi = 0; xi < 2 * M + 1; ++xi)
                    ssq[2][std::size_t(xi)] += w * std::norm(d2[std::size_t(xi)]);
            }
        }
    }
    double best = 0.0;
    for (int beta = 0; beta <= alpha; ++beta)
        for (int xi = -M; xi <= M; ++xi) {
            double v = std::sqrt(ssq[std::size_t(beta)][std::size_t(xi + M)]) *
                       std::pow(ang(double(xi)), -m + beta);
            best = std::max(best, v);
        }
    return best;
}

// --------------------------------------------------------------------------
// Quantization: Op(a) u = sum_xi a(theta, x, xi) u_hat(xi) e^{i x xi}, i.e.
// A_hat(l)^{k'}_{j} = a_hat(l, k'-j, j) on modes |j|, |k'| <= M_op.
// --------------------------------------------------------------------------
inline QPOperator quantize(const Symbol& a, int M_op = -1) {
    if (M_op < 0) M_op = a.M;
    if (M_op > a.M) throw DimensionError("quantize: target truncation exceeds symbol window");
    QPOperator A(a.d, a.L, M_op);
    const LatticeBox b = a.box();
    const int n = 2 * M_op + 1;
    for (std::size_t l = 0; l < b.size(); ++l) {
        Mat& Al = A.mats[l];
        Al.setZero(n, n);
        for (int j = -M_op; j <= M_op; ++j) {
            int k_lo = std::max(-M_op, j - a.Kx), k_hi = std::min(M_op, j + a.Kx);
            for (int kp = k_lo; kp <= k_hi; ++kp)
                Al(kp + M_op, j + M_op) = a.at(l, kp - j, j);
        }
    }
    return A;
}

// Inverse of quantize on the retained window: a_hat(l, h, xi) = A_hat(l)^{xi+h}_{xi}.
inline Symbol symbol_of(const QPOperator& A, double order, int Kx) {
    Symbol a(order, A.d, A.L, Kx, A.M);
    for (std::size_t l = 0; l < A.mats.size(); ++l)
        for (int xi = -A.M; xi <= A.M; ++xi)
            for (int h = -Kx; h <= Kx; ++h) {
                int kp = xi + h;
                if (std::abs(kp) <= A.M) a.at(l, h, xi) = A.mats[l](kp + A.M, xi + A.M);
            }
    return a;
}

// --------------------------------------------------------------------------
// Adjoint symbol: a*(l, k, xi) = conj a(-l, -k, xi + k). Entries whose source
// falls outside the xi-window are dropped to zero; to keep the involution and
// self-adjoint symmetrizations exact we also zero the mirror cell, and report
// the dropped mass.
// --------------------------------------------------------------------------
struct AdjointResult {
    Symbol sym;
    double dropped_mass = 0.0; // sqrt of summed |.|^2 of out-of-window sources
};

inline AdjointResult adjoint_symbol_full(const Symbol& a) {
    AdjointResult r{Symbol(a.order, a.d, a.L, a.Kx, a.M), 0.0};
    const LatticeBox b = a.box();
    double drop2 = 0.0;
    for (std::size_t l = 0; l < b.size(); ++l) {
        std::size_t ln = b.negate(l);
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi) {
                if (std::abs(xi + k) <= a.M) {
                    r.sym.at(l, k, xi) = std::conj(a.at(ln, -k, xi + k));
                } else {
                    // source out of window; mirror cell of a that becomes
                    // unreachable contributes to the diagnostic
                    drop2 += std::norm(a.at(l, k, xi));
                }
            }
    }
    r.dropped_mass = std::sqrt(drop2);
    return r;
}

inline Symbol adjoint_symbol(const Symbol& a) { return adjoint_symbol_full(a).sym; }

// (a + a*)/2 with the edge rule that keeps the result exactly self-adjoint:
// cells whose adjoint partner left the window are zeroed on both sides.
inline Symbol symmetrize_symbol(const Symbol& a) {
    Symbol g(a.order, a.d, a.L, a.Kx, a.M);
    const LatticeBox b = a.box();
    for (std::size_t l = 0; l < b.size(); ++l) {
        std::size_t ln = b.negate(l);
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi) {
                if (std::abs(xi + k) > a.M) continue;
                g.at(l, k, xi) = 0.5 * (a.at(l, k, xi) + std::conj(a.at(ln, -k, xi + k)));
            }
    }
    return g;
}

// max deviation of a from a* on cells whose partner is retained
inline double self_adjoint_violation(const Symbol& a) {
    const LatticeBox b = a.box();
    double worst = 0.0;
    for (std::size_t l = 0; l < b.size(); ++l) {
        std::size_t ln = b.negate(l);
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi) {
                if (std::abs(xi + k) > a.M) continue;
                worst = std::max(worst,
                                 std::abs(a.at(l, k, xi) - std::conj(a.at(ln, -k, xi + k))));
            }
    }
    return worst;
}

// <a>_{theta,x}(xi) = a_hat(0, 0, xi)
inline std::vector<cplx> average_symbol(const Symbol& a) {
    std::vector<cplx> avg(std::size_t(2 * a.M + 1), cplx(0, 0));
    std::vector<int> zero(std::size_t(a.d), 0);
    std::size_t l0 = a.box().flatten(zero);
    for (int xi = -a.M; xi <= a.M; ++xi) avg[std::size_t(xi + a.M)] = a.at(l0, 0, xi);
    return avg;
}

inline Symbol subtract_average(const Symbol& a) {
    Symbol out = a;
    std::vector<int> zero(std::size_t(a.d), 0);
    std::size_t l0 = a.box().flatten(zero);
    for (int xi = -a.M; xi <= a.M; ++xi) out.at(l0, 0, xi) = cplx(0, 0);
    return out;
}

// --------------------------------------------------------------------------
// Composition. expansion_order 0 keeps the pointwise product a.b (convolution
// in (l,k), pointwise in xi); order 1 subtracts i d_xi a . d_x b, with d_xi a
// central finite difference and d_x exact (multiply by i k). The remainder
// Op(a)Op(b) - Op(product symbol) is returned as an exact operator on the
// widened band.
// --------------------------------------------------------------------------
struct ComposeResult {
    Symbol sym;
    QPOperator remainder; // band L_a + L_b, exact on the truncation
};

namespace detail {

// pointwise-in-xi product of two symbols (convolution over (l,k) modes)
inline Symbol symbol_product(const Symbol& a, const Symbol& b) {
    if (a.d != b.d || a.M != b.M)
        throw DimensionError("compose_symbols: grid mismatch");
    Symbol p(a.order + b.order, a.d, a.L + b.L, a.Kx + b.Kx, a.M);
    const LatticeBox ba = a.box(), bb = b.box(), bp = p.box();
    std::vector<int> ea(std::size_t(a.d)), eb(std::size_t(a.d)), ep(std::size_t(a.d));
    for (std::size_t la = 0; la < ba.size(); ++la) {
        ba.unflatten(la, ea.data());
        for (std::size_t lb = 0; lb < bb.size(); ++lb) {
            bb.unflatten(lb, eb.data());
            for (int i = 0; i < a.d; ++i) ep[std::size_t(i)] = ea[std::size_t(i)] + eb[std::size_t(i)];
            std::size_t lp = bp.flatten(ep);
            for (int ka = -a.Kx; ka <= a.Kx; ++ka)
                for (int kb = -b.Kx; kb <= b.Kx; ++kb)
                    for (int xi = -a.M; xi <= a.M; ++xi)
                        p.at(lp, ka + kb, xi) += a.at(la, ka, xi) * b.at(lb, kb, xi);
        }
    }
    return p;
}

// central finite difference in xi (one-sided at the edges)
inline Symbol d_xi(const Symbol& a) {
    Symbol out(a.order - 1, a.d, a.L, a.Kx, a.M);
    for (std::size_t l = 0; l < a.box().size(); ++l)
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi) {
                cplx v;
                if (xi == -a.M) v = a.at(l, k, xi + 1) - a.at(l, k, xi);
                else if (xi == a.M) v = a.at(l, k, xi) - a.at(l, k, xi - 1);
                else v = (a.at(l, k, xi + 1) - a.at(l, k, xi - 1)) / 2.0;
                out.at(l, k, xi) = v;
            }
    return out;
}

// d_x: multiply mode k by ik (exact)
inline Symbol d_x(const Symbol& a) {
    Symbol out(a.order, a.d, a.L, a.Kx, a.M);
    for (std::size_t l = 0; l < a.box().size(); ++l)
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi)
                out.at(l, k, xi) = cplx(0, double(k)) * a.at(l, k, xi);
    return out;
}

} // namespace detail

inline ComposeResult compose_symbols(const Symbol& a, const Symbol& b, int expansion_order) {
    if (expansion_order != 0 && expansion_order != 1)
        throw InvalidInputError("compose_symbols: expansion_order must be 0 or 1");
    Symbol p = detail::symbol_product(a, b);
    if (expansion_order == 1) {
        Symbol corr = detail::symbol_product(detail::d_xi(a), detail::d_x(b));
        corr *= cplx(0, -1); // -i d_xi a . d_x b
        // corr has the same widened window as p
        p += corr;
    }
    QPOperator prod = op_mul(quantize(a), quantize(b), a.L + b.L);
    QPOperator rem = op_sub(prod, quantize(p, a.M));
    return ComposeResult{std::move(p), std::move(rem)};
}

// --------------------------------------------------------------------------
// Transport inverse: divide mode (l,k) by i(omega.l +- k); the (0,0) modes
// must vanish (callers subtract the average first). A divisor below
// gamma/<l>^{tau0} raises SmallDivisorError.
// --------------------------------------------------------------------------
inline Symbol transport_inverse(const Symbol& a, const RVec& omega, int sign, double gamma,
                                double tau0) {
    if (omega.size() != a.d) throw DimensionError("transport_inverse: omega dimension");
    if (sign != 1 && sign != -1) throw InvalidInputError("transport_inverse: sign must be +-1");
    const LatticeBox b = a.box();
    Symbol out(a.order, a.d, a.L, a.Kx, a.M);
    std::vector<int> ell(std::size_t(a.d), 0);
    for (std::size_t l = 0; l < b.size(); ++l) {
        b.unflatten(l, ell.data());
        double wl = b.dot_omega(l, omega);
        int linf = b.linf(l);
        for (int k = -a.Kx; k <= a.Kx; ++k) {
            if (linf == 0 && k == 0) {
                for (int xi = -a.M; xi <= a.M; ++xi) {
                    if (std::abs(a.at(l, k, xi)) > 0)
                        throw InvalidInputError(
                            "transport_inverse: nonzero (l,k)=(0,0) component; subtract the average first");
                }
                continue;
            }
            double div = wl + sign * k;
            double floor = gamma / std::pow(ang(double(linf)), tau0);
            if (std::abs(div) < floor)
                throw SmallDivisorError("transport_inverse: small divisor", ell, k, 0, div, floor);
            cplx inv = 1.0 / cplx(0.0, div);
            for (int xi = -a.M; xi <= a.M; ++xi) out.at(l, k, xi) = a.at(l, k, xi) * inv;
        }
    }
    return out;
}

// forward operator (omega . d_theta + sign d_x), exact in Fourier
inline Symbol transport_forward(const Symbol& a, const RVec& omega, int sign) {
    const LatticeBox b = a.box();
    Symbol out(a.order, a.d, a.L, a.Kx, a.M);
    for (std::size_t l = 0; l < b.size(); ++l) {
        double wl = b.dot_omega(l, omega);
        for (int k = -a.Kx; k <= a.Kx; ++k) {
            cplx fac(0.0, wl + sign * k);
            for (int xi = -a.M; xi <= a.M; ++xi) out.at(l, k, xi) = fac * a.at(l, k, xi);
        }
    }
    return out;
}

} // namespace kamred
