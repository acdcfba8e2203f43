#include "test_util.hpp"

#include "kamred/regularize.hpp"

using namespace kamred;

namespace {

WaveConfig small_cfg(FamilyKind fam = FamilyKind::Oscillatory) {
    WaveConfig c;
    c.d = 1;
    c.L = 3;
    c.Kx = 1;
    c.M = 10;
    c.mass = 1.0;
    c.epsilon = 1e-3;
    c.gamma = 0.05;
    c.tau0 = 1.5;
    c.tau1 = 3.0;
    c.tau = 16.0;
    c.s = 2.0;
    c.family = fam;
    c.c_star = 0.3;
    c.v_amp = 1.0;
    return c;
}

RVec omega1(double w = 1.3178097) {
    RVec o(1);
    o << w;
    return o;
}

} // namespace

TEST_CASE("transport solve: averaged input gives zero generator") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    TransportSolution ts = solve_transport_symbol(sys.k_sym, omega1(), cfg.gamma, cfg.tau0);
    double gmax = 0, rmax = 0;
    for (auto& z : ts.g.c) gmax = std::max(gmax, std::abs(z));
    for (auto& z : ts.residual.c) rmax = std::max(rmax, std::abs(z));
    CHECK(gmax == 0.0);
    CHECK(rmax == 0.0);
}

TEST_CASE("transport solve: single mode has the closed-form inverse") {
    // k = e^{i(theta_1 + x)} on xi >= 2 via chi1+
    const int M = 8;
    Symbol k(0.0, 1, 2, 1, M);
    std::vector<int> l1{1};
    for (int xi = -M; xi <= M; ++xi) k.set(l1, 1, xi, 1.0);
    RVec om = omega1(1.7229);
    TransportSolution ts = solve_transport_symbol(k, om, 0.05, 1.5);
    // q on xi >= 2: k / (i(omega_1 + 1)); g = (q + q*)/2 keeps that on the
    // retained cells
    cplx expect = cplx(1, 0) / cplx(0, om[0] + 1.0);
    for (int xi = 2; xi <= M - 2; ++xi) {
        cplx got = ts.g.get(l1, 1, xi);
        // the adjoint partner lives at (-1,-1, xi+1) which is zero for xi>=2,
        // so g = q/2 there
        CHECK_THAT(std::abs(got - 0.5 * expect), Catch::Matchers::WithinAbs(0.0, 1e-14));
    }
    // residual vanishes identically where the transport acted: recompute the
    // forward operator independently
    double worst = 0;
    for (int xi = 3; xi <= M - 3; ++xi) {
        // omega.d_theta g + d_x g sign(xi) chi(xi) at mode (l=1,k=1)
        cplx g = ts.g.get(l1, 1, xi);
        cplx forward = cplx(0, om[0]) * g + cplx(0, 1) * CutoffTable::sign_chi(xi) * g;
        cplx gm = ts.g.get(l1, 1, xi); // mirror cell of the adjoint part
        (void)gm;
        cplx resid = k.get(l1, 1, xi) - forward;
        worst = std::max(worst, std::abs(resid - ts.residual.get(l1, 1, xi)));
    }
    CHECK(worst < 1e-13);
}

TEST_CASE("transport round trip against an independent forward recompute") {
    Rng rng(11001);
    WaveConfig cfg = small_cfg();
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    RVec om = omega1(1.347297);
    TransportSolution ts = solve_transport_symbol(sys.k_sym, om, cfg.gamma, cfg.tau0);

    // identity: k - <k> == omega.dth g + dx g sign chi + residual, recomputed
    // with plain loops
    const Symbol& g = ts.g;
    Symbol kc = subtract_average(sys.k_sym);
    const LatticeBox b = g.box();
    double worst = 0;
    std::vector<int> ell(1, 0);
    for (std::size_t l = 0; l < b.size(); ++l) {
        b.unflatten(l, ell.data());
        for (int k = -g.Kx; k <= g.Kx; ++k)
            for (int xi = -g.M; xi <= g.M; ++xi) {
                cplx fw = cplx(0, om[0] * ell[0] ) * g.at(l, k, xi) +
                          cplx(0, double(k)) * CutoffTable::sign_chi(xi) * g.at(l, k, xi);
                cplx lhs = kc.at(l, k, xi);
                cplx rhs = fw + ts.residual.at(l, k, xi);
                worst = std::max(worst, std::abs(lhs - rhs));
            }
    }
    CHECK(worst < 1e-12);
    // g is exactly self-adjoint and the quantized generator is self-adjoint
    CHECK(self_adjoint_violation(ts.g) < 1e-14);
    CHECK(op_selfadjoint_violation(quantize(ts.g, cfg.M)) < 1e-13);
}

TEST_CASE("regularize: zero perturbation is inert") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);
    cfg.c_star = 0.0;
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    RegularizationResult r = regularize(sys, omega1(), cfg);
    CHECK(r.P.diag.max_abs() < 1e-14);
    CHECK(r.P.anti.max_abs() < 1e-14);
    for (int j = 0; j <= cfg.M; ++j)
        CHECK_THAT(r.H0.blocks[std::size_t(j)](0, 0).real(),
                   Catch::Matchers::WithinAbs(std::sqrt(double(j) * j + 1.0), 1e-14));
    double gmax = 0;
    for (auto& z : r.g.c) gmax = std::max(gmax, std::abs(z));
    CHECK(gmax == 0.0);
}

TEST_CASE("regularize: constant family leaves exactly the anti-diagonal part") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    RegularizationResult r = regularize(sys, omega1(), cfg);
    // g = 0 (k is already averaged), diag(P) = 0, anti(P) = eps K exactly
    double gmax = 0;
    for (auto& z : r.g.c) gmax = std::max(gmax, std::abs(z));
    CHECK(gmax == 0.0);
    CHECK(r.P.diag.max_abs() < 1e-13);
    QPOperator expect = sys.K.anti;
    expect *= cfg.epsilon;
    CHECK(op_sub(r.P.anti, expect).max_abs() < 1e-13);
}

TEST_CASE("regularize: oscillatory family") {
    WaveConfig cfg = small_cfg();
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    RegularizationResult r = regularize(sys, omega1(), cfg);

    SECTION("structure and reality of the output") {
        CHECK(r.diagnostics.structure_violation < 1e-10);
        CHECK(r.H0.selfadjoint_violation() < 1e-13);
        for (const auto& blk : r.H0.blocks) CHECK(blk.imag().cwiseAbs().maxCoeff() < 1e-13);
    }

    SECTION("diagonal part decays like <alpha>^{-1}") {
        CHECK(r.diagnostics.diag_decay_slope <= -0.8);
    }

    SECTION("weighted norm of diag(P) finite and within (C/gamma) eps") {
        WeightedNorms wn = weighted_norms(r.P.diag, cfg.s, 1.0);
        REQUIRE(std::isfinite(wn.Ms_norm));
        double C = wn.Ms_norm * cfg.gamma / cfg.epsilon;
        WARN("regularization constant C = " << C);
        CHECK(wn.Ms_norm <= 100.0 / cfg.gamma * cfg.epsilon);
        // anti part is order zero: comparable to ||eps K||
        double ka = decay_norm(op_scale(sys.K.anti, cfg.epsilon), cfg.s);
        double pa = decay_norm(r.P.anti, cfg.s);
        CHECK(pa < 2.0 * ka + 1e-12);
        CHECK(pa > 0.5 * ka);
    }

    SECTION("epsilon-linearity over three decades") {
        std::vector<double> xs, ys;
        for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
            WaveConfig c2 = cfg;
            c2.epsilon = eps;
            RegularizationResult rr = regularize(sys, omega1(), c2);
            PairNorm pn = pair_norm(rr.P, c2.s, 1.0, 0.0);
            xs.push_back(std::log(eps));
            ys.push_back(std::log(pn.total));
        }
        double slope = fit_slope(xs, ys);
        INFO("epsilon-linearity slope = " << slope);
        CHECK(slope > 0.9);
        CHECK(slope < 1.1);
    }
}

TEST_CASE("regularize: spectral consistency for autonomous perturbations") {
    // W time-independent: the full l=0 Hamiltonian is similar before/after
    WaveConfig cfg = small_cfg(FamilyKind::TwoLevel);
    cfg.v_amp = 0.0; // pure multiplier: time-independent, but x-dependence none
    // add x-dependence while staying autonomous: use the oscillatory shape at l=0
    PerturbationW W = make_perturbation(cfg);
    // inject an autonomous x-dependent part by hand (self-adjoint, real)
    {
        Symbol add(1.0, cfg.d, cfg.L, std::max(cfg.Kx, 1), W.w.M);
        std::vector<int> l0{0};
        std::size_t lf = add.box().flatten(l0);
        for (int k : {-1, 1})
            for (int xi = -add.M; xi <= add.M; ++xi) {
                if (std::abs(xi + k) > add.M) continue;
                double prof = 0.5 * (ang(double(xi)) * CutoffTable::chi(xi) +
                                     ang(double(xi + k)) * CutoffTable::chi(xi + k));
                add.at(lf, k, xi) += 0.25 * prof;
            }
        W.w += add;
    }
    FirstOrderSystem sys = build_first_order(W, cfg);
    RegularizationResult r = regularize(sys, omega1(), cfg);

    std::vector<int> l0{0};
    Mat before = assemble_full(sys.D.to_matrix() + cfg.epsilon * sys.K.diag.slice(l0),
                               cfg.epsilon * sys.K.anti.slice(l0), -1.0);
    Mat after = assemble_full(r.H0.to_matrix() + r.P.diag.slice(l0), r.P.anti.slice(l0), -1.0);
    Eigen::ComplexEigenSolver<Mat> e1(before), e2(after);
    double worst = 0;
    for (int i = 0; i < before.rows(); ++i) {
        double best = 1e300;
        for (int j = 0; j < before.rows(); ++j)
            best = std::min(best, std::abs(e1.eigenvalues()[i] - e2.eigenvalues()[j]));
        worst = std::max(worst, best);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("regularize: gamma sensitivity of the generator") {
    WaveConfig cfg = small_cfg();
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    Symbol k_eps = sys.k_sym;
    k_eps *= cfg.epsilon;

    // worst admissible ||Op(g)|| over omega samples in O_gamma, for two gammas
    auto max_g = [&](double gamma) {
        double worst = 0;
        for (int i = 0; i < 60; ++i) {
            RVec om(1);
            om << 1.0 + (i + 0.5) / 60.0;
            if (!check_O_gamma(om, gamma, cfg.tau0, 24).member) continue;
            TransportSolution ts = solve_transport_symbol(k_eps, om, gamma, cfg.tau0);
            worst = std::max(worst, decay_norm(quantize(ts.g, cfg.M), cfg.s));
        }
        REQUIRE(worst > 0);
        return worst;
    };
    double g_big = max_g(0.2), g_small = max_g(0.02);
    double slope = std::log(g_small / g_big) / std::log(0.02 / 0.2);
    INFO("gamma-sensitivity exponent = " << -slope);
    // growth no faster than gamma^{-1.2}
    CHECK(-slope >= -1.2);
    CHECK(g_small >= g_big * (1.0 - 1e-12)); // monotone: more omegas admitted
}

TEST_CASE("regularize rejects omega outside O_gamma") {
    WaveConfig cfg = small_cfg();
    PerturbationW W = make_perturbation(cfg);
    FirstOrderSystem sys = build_first_order(W, cfg);
    RVec bad(1);
    bad << 1.5; // 2 omega - 3 = 0
    CHECK_THROWS_AS(regularize(sys, bad, cfg), SmallDivisorError);
}
