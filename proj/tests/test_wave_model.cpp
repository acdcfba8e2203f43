#include "test_util.hpp"

#include "kamred/wave.hpp"

using namespace kamred;

namespace {

WaveConfig small_cfg(FamilyKind fam, int d = 1) {
    WaveConfig c;
    c.d = d;
    c.L = 2;
    c.Kx = 1;
    c.M = 8;
    c.mass = 1.0;
    c.epsilon = 1e-3;
    c.family = fam;
    c.c_star = 0.3;
    c.c_star2 = 0.5;
    c.v_amp = 1.0;
    c.v_amp2 = 0.0;
    c.tau0 = d + 0.5;
    c.tau1 = c.tau0 + d + 0.5;
    c.tau = 16.0;
    c.s = 2.0;
    return c;
}

} // namespace

TEST_CASE("constant family: exact multiplier average") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);
    PerturbationW W = make_perturbation(cfg);
    auto avg = average_symbol(W.w);
    for (int xi = -W.w.M; xi <= W.w.M; ++xi) {
        CHECK_THAT(avg[std::size_t(xi + W.w.M)].real(),
                   Catch::Matchers::WithinAbs(0.3 * ang(double(xi)), 1e-15));
        CHECK(avg[std::size_t(xi + W.w.M)].imag() == 0.0);
    }
    CHECK(W.b_bound < 1e-14);
    CHECK(W.c_star_values == std::vector<double>{0.3});
}

TEST_CASE("oscillatory family: mean-zero modulation, b = 0") {
    WaveConfig cfg = small_cfg(FamilyKind::Oscillatory);
    PerturbationW W = make_perturbation(cfg);
    auto avg = average_symbol(W.w);
    for (int xi = -W.w.M; xi <= W.w.M; ++xi)
        CHECK_THAT(avg[std::size_t(xi + W.w.M)].real(),
                   Catch::Matchers::WithinAbs(0.3 * ang(double(xi)), 1e-14));
    CHECK(W.b_bound < 1e-13);
    // Condition I at the operator level
    ConditionReport rep = check_conditions(W, cfg.M);
    CHECK(rep.reality < 1e-12);
    CHECK(rep.self_adjoint < 1e-12);
}

TEST_CASE("two-level family: alternating average per xi") {
    WaveConfig cfg = small_cfg(FamilyKind::TwoLevel);
    cfg.v_amp = 0.5;
    PerturbationW W = make_perturbation(cfg);
    auto avg = average_symbol(W.w);
    for (int xi = -W.w.M; xi <= W.w.M; ++xi) {
        double a = (std::abs(xi) % 2 == 0) ? 0.3 : 0.5;
        CHECK_THAT(avg[std::size_t(xi + W.w.M)].real(),
                   Catch::Matchers::WithinAbs(a * ang(double(xi)), 1e-14));
        CHECK(W.c_star(xi) == a);
    }
}

TEST_CASE("all families satisfy Conditions I-II at the operator level") {
    for (FamilyKind fam :
         {FamilyKind::Constant, FamilyKind::Oscillatory, FamilyKind::TwoLevel}) {
        WaveConfig cfg = small_cfg(fam, 2);
        cfg.v_amp2 = fam == FamilyKind::Oscillatory ? 0.7 : 0.0;
        PerturbationW W = make_perturbation(cfg);
        QPOperator op = quantize(W.w, cfg.M);
        CHECK(op_reality_violation(op) < 1e-12);
        CHECK(op_selfadjoint_violation(op) < 1e-12);
    }
}

TEST_CASE("custom symbols violating Condition I are rejected") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);
    Symbol bad(1.0, 1, 1, 1, cfg.M + 2);
    std::vector<int> l1{1};
    bad.set(l1, 1, 0, cplx(1.0, 0.5)); // no reality partner
    CHECK_THROWS_AS(wrap_custom_perturbation(bad, {0.0}, 1.0, cfg.M, false), ModelError);
    // the unchecked path wraps but records the violation
    PerturbationW W = wrap_custom_perturbation(bad, {0.0}, 1.0, cfg.M, true);
    CHECK(check_conditions(W, cfg.M).self_adjoint > 1e-3);
}

TEST_CASE("first-order system") {
    WaveConfig cfg = small_cfg(FamilyKind::Constant);

    SECTION("zero perturbation") {
        cfg.c_star = 0.0;
        PerturbationW W = make_perturbation(cfg);
        FirstOrderSystem sys = build_first_order(W, cfg);
        CHECK(sys.K.diag.max_abs() == 0.0);
        for (int j = 0; j <= cfg.M; ++j) {
            double expect = std::sqrt(double(j) * j + cfg.mass);
            CHECK_THAT(sys.D.blocks[std::size_t(j)](0, 0).real(),
                       Catch::Matchers::WithinAbs(expect, 1e-15));
        }
    }

    SECTION("scalar value at the zero mode: w = <xi>, m = 1 -> K(0,0) = 1/2") {
        cfg.c_star = 1.0;
        PerturbationW W = make_perturbation(cfg);
        FirstOrderSystem sys = build_first_order(W, cfg);
        std::vector<int> l0{0};
        CHECK_THAT(sys.K.diag.slice(l0)(cfg.M, cfg.M).real(),
                   Catch::Matchers::WithinAbs(0.5, 1e-15));
        CHECK(sys.D.blocks[0](0, 0) == cplx(1.0, 0));
    }

    SECTION("K is real and self-adjoint for a random admissible family") {
        WaveConfig oc = small_cfg(FamilyKind::Oscillatory);
        PerturbationW W = make_perturbation(oc);
        FirstOrderSystem sys = build_first_order(W, oc);
        CHECK(op_reality_violation(sys.K.diag) < 1e-12);
        CHECK(op_selfadjoint_violation(sys.K.diag) < 1e-12);
        // K-pair has the N-class structure and is bounded (order 0): block
        // norms stay below the w-derived bound (1/2) max|a| + osc amplitude
        CHECK(structure_check(sys.K).max_violation() < 1e-12);
        BlockNormTable tb = block_norms(sys.K.diag);
        double bound = 0.5 * (oc.c_star + oc.v_amp);
        for (int alpha = 0; alpha <= oc.M; ++alpha)
            CHECK(tb.at(tb.t.size() ? sys.K.diag.box().flatten(std::vector<int>(1, 0)) : 0, alpha,
                        alpha) <= bound + 1e-12);
    }

    SECTION("k symbol reproduces the matrix entries") {
        WaveConfig oc = small_cfg(FamilyKind::Oscillatory);
        PerturbationW W = make_perturbation(oc);
        FirstOrderSystem sys = build_first_order(W, oc);
        QPOperator K2 = quantize(sys.k_sym, oc.M);
        CHECK(op_sub(K2, sys.K.diag).max_abs() < 1e-14);
    }
}

TEST_CASE("split D") {
    SplitD s = split_D(1.0, 6);
    CHECK(s.Z[0 + 6] == 1.0);                    // m=1, j=0 -> Z_0 = 1
    CHECK_THAT(s.Z[3 + 6], Catch::Matchers::WithinAbs(std::sqrt(10.0) - 3.0, 1e-15));
    CHECK(s.Z[3 + 6] <= 1.0 / 3.0);
    CHECK(s.B[6] == 0.0);
    CHECK(s.B[2 + 6] == 2.0);

    // Z_j <j> monotone and bounded by m over the truncation (j >= 1)
    for (double m : {1.0, 2.5}) {
        SplitD sd = split_D(m, 12);
        double prev = 0.0;
        for (int j = 1; j <= 12; ++j) {
            double zj = sd.Z[j + 12] * ang(double(j));
            CHECK(zj <= m * (1 + 1e-14));
            CHECK(zj >= prev - 1e-14);
            prev = zj;
        }
    }
    CHECK_THROWS_AS(split_D(-1.0, 4), InvalidInputError);
}

TEST_CASE("config validation names the violated inequality") {
    WaveConfig c = small_cfg(FamilyKind::Constant);
    c.tau0 = 0.5; // <= d
    CHECK(c.violated_inequality() == "tau0 > d");
    c.tau0 = 1.5;
    c.tau1 = 2.0; // <= tau0 + d
    CHECK(c.violated_inequality() == "tau1 > tau0 + d");
    c.tau1 = 3.0;
    c.tau = 2.5; // below d + tau1/rho - 1/rho = 3
    CHECK(c.violated_inequality() ==
          "tau > max{d + tau1/rho - 1/rho, d + tau0/rho - 1}");
    c.tau = 16.0;
    CHECK(c.violated_inequality().empty());
}
