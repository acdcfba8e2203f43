#pragma once

// Direct time integration of the truncated first-order system and Sobolev
// norm tracking. The scheme is the exponential midpoint rule
//     q_{k+1} = exp(-i dt H(t_k + dt/2)) q_k,
// applied to the state vector through an adaptively truncated Taylor series
// (with substeps when ||dt H|| is large), so each step realizes the frozen
// midpoint flow to machine precision: for self-adjoint samples the step is
// unitary up to roundoff, and any norm movement in the coupled system is
// dynamics, not discretization.

#include <map>

#include "kamred/kam.hpp"

namespace kamred {

// quasi-periodic Hamiltonian t -> H0 + P(omega t) as a dense matrix family
struct QPHamiltonian {
    BlockDiagHamiltonian H0;
    MatrixPair P;
    RVec omega;

    int dim() const { return 2 * (2 * H0.M() + 1); }
    Mat at(double t) const {
        RVec theta = omega * t;
        return full_hamiltonian_at(H0, P, theta);
    }
    // fastest angular rate carried by the time dependence
    double max_rate() const {
        int band = std::max(op_band(P.diag), op_band(P.anti));
        double wmax = 0;
        for (int i = 0; i < omega.size(); ++i) wmax += std::abs(omega[i]);
        return std::max(1.0, wmax * std::max(1, band));
    }
};

// max deviation of H from the admissible sample classes: self-adjoint, or
// the Hamiltonian-field structure H^dagger = J H J with J = diag(I, -I)
inline double hamiltonian_structure_violation(const Mat& H) {
    const int n2 = int(H.rows()), n = n2 / 2;
    double herm = (H - H.adjoint().eval()).cwiseAbs().maxCoeff();
    Mat JHJ = H;
    JHJ.topRightCorner(n, n) *= -1.0;
    JHJ.bottomLeftCorner(n, n) *= -1.0;
    double pseudo = (H.adjoint().eval() - JHJ).cwiseAbs().maxCoeff();
    return std::min(herm, pseudo);
}

// y <- exp(fac * H) y by Taylor series with substeps
inline void apply_exp_vec(const Mat& H, cplx fac, Vec& y, double tol = 1e-16) {
    double nrm = std::abs(fac) * H.cwiseAbs().colwise().sum().maxCoeff();
    int sub = std::max(1, int(std::ceil(nrm / 0.5)));
    cplx f = fac / double(sub);
    Vec term(y.size()), acc(y.size());
    for (int s = 0; s < sub; ++s) {
        acc = y;
        term = y;
        for (int k = 1; k <= 64; ++k) {
            term = (f / double(k)) * (H * term).eval();
            acc += term;
            if (term.norm() <= tol * acc.norm()) break;
            if (k == 64) throw StepSizeError("apply_exp_vec: series did not converge");
        }
        y = acc;
    }
}

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::map<double, std::vector<double>> r_norms; // r -> ||q(t)||_{H^r x H^r} per stored time
};

// Sobolev norm of the doubled state (both components weighted by <j>^{2r})
inline double sobolev_norm(const Vec& q, double r) {
    const int n = int(q.size()) / 2, M = (n - 1) / 2;
    double acc = 0;
    for (int j = -M; j <= M; ++j) {
        double w = std::pow(ang(double(j)), 2.0 * r);
        acc += w * (std::norm(q[j + M]) + std::norm(q[n + j + M]));
    }
    return std::sqrt(acc);
}

struct IntegrateOptions {
    std::vector<double> r_list = {0.0, 1.0, 2.0};
    int store_every = 1;      // store state/norms every k-th step
    double structure_tol = 1e-9;
    int structure_check_every = 64; // sample the model check this often
};

inline double integrate_dt_max(const QPHamiltonian& H) {
    // resolve the fastest oscillation of t -> H(t) with ~10 midpoints
    return 2.0 * PI / (10.0 * H.max_rate());
}

inline Trajectory integrate(const QPHamiltonian& Hfun, const Vec& q0, double T, double dt,
                            const IntegrateOptions& opt = {}) {
    if (dt <= 0 || T <= 0) throw InvalidInputError("integrate: T, dt must be positive");
    double dtm = integrate_dt_max(Hfun);
    if (dt > dtm)
        throw StepSizeError("integrate: dt " + std::to_string(dt) + " exceeds dt_max " +
                            std::to_string(dtm));
    const long long steps = (long long)std::llround(T / dt);
    Trajectory traj;
    Vec q = q0;
    auto store = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(q);
        for (double r : opt.r_list) traj.r_norms[r].push_back(sobolev_norm(q, r));
    };
    store(0.0);
    for (long long k = 0; k < steps; ++k) {
        double tm = (double(k) + 0.5) * dt;
        Mat H = Hfun.at(tm);
        if (opt.structure_check_every > 0 && k % opt.structure_check_every == 0) {
            double v = hamiltonian_structure_violation(H);
            if (v > opt.structure_tol)
                throw ModelError("integrate: Hamiltonian sample violates structure by " +
                                 std::to_string(v));
        }
        apply_exp_vec(H, cplx(0, -dt), q);
        if (!q.allFinite()) throw ModelError("integrate: state became non-finite");
        if ((k + 1) % opt.store_every == 0 || k + 1 == steps) store(double(k + 1) * dt);
    }
    return traj;
}

struct BoundednessRow {
    double r = 0.0;
    double sup_ratio = 0.0;
    double inf_ratio = 0.0;
};

inline std::vector<BoundednessRow> boundedness_report(const Trajectory& traj,
                                                      const std::vector<double>& r_list) {
    std::vector<BoundednessRow> out;
    for (double r : r_list) {
        auto it = traj.r_norms.find(r);
        if (it == traj.r_norms.end() || it->second.empty())
            throw InvalidInputError("boundedness_report: norms for requested r not tracked");
        const auto& v = it->second;
        double n0 = v.front();
        if (n0 == 0) throw InvalidInputError("boundedness_report: zero initial norm");
        BoundednessRow row;
        row.r = r;
        row.sup_ratio = 0;
        row.inf_ratio = std::numeric_limits<double>::infinity();
        for (double x : v) {
            row.sup_ratio = std::max(row.sup_ratio, x / n0);
            row.inf_ratio = std::min(row.inf_ratio, x / n0);
        }
        out.push_back(row);
    }
    return out;
}

// initial data: single spatial mode j (second component the conjugate partner)
inline Vec initial_mode(int M, int j) {
    const int n = 2 * M + 1;
    Vec q = Vec::Zero(2 * n);
    q[j + M] = 1.0;
    q[n + (-j) + M] = 1.0;
    return q;
}

// random profile with ||q||_{H^r} < inf: coefficients ~ <j>^{-(r+1)}
inline Vec initial_random_sobolev(int M, double r, std::uint64_t seed) {
    const int n = 2 * M + 1;
    Vec q = Vec::Zero(2 * n);
    Rng rng(seed);
    for (int j = -M; j <= M; ++j)
        q[j + M] = rng.ccoeff() * std::pow(ang(double(j)), -(r + 1.0));
    for (int j = -M; j <= M; ++j) q[n + j + M] = std::conj(q[-j + M]);
    q /= sobolev_norm(q, r);
    return q;
}

// --------------------------------------------------------------------------
// Reduction check: v(t) = A^{-1}(omega t) q(t) must evolve (up to the
// retained-band defects) by the constant block-diagonal flow e^{-i H_inf t}.
// --------------------------------------------------------------------------
struct ReductionReport {
    double tol_v = 0.0;
    double max_vnorm_dev = 0.0;    // max_t | ||v(t)||_r / ||v(0)||_r - 1 |
    double worst_vnorm_time = 0.0;
    double max_state_dev = 0.0;    // max_t ||v(t) - e^{-iH_inf t} v(0)|| / ||v(0)||
    double worst_state_time = 0.0;
    double max_block_dev = 0.0;    // per-block modulus drift (relative)
    int worst_block = 0;
    bool pass = false;
};

struct ReductionCheckInput {
    const QPHamiltonian* Hq = nullptr; // original system
    const std::vector<MatrixPair>* transforms = nullptr;
    const MatrixPair* G = nullptr;
    const BlockDiagHamiltonian* H_inf = nullptr;
    double r = 2.0;
    double T = 100.0;
    double dt = 0.01;
    double sample_dt = 1.0; // transform evaluation stride
    double tol_v = 0.0;     // (dropped band + final norm) * T * safety
};

inline ReductionReport verify_reduction(const ReductionCheckInput& in) {
    ReductionReport rep;
    rep.tol_v = in.tol_v;
    const int n2 = in.Hq->dim(), n = n2 / 2, M = (n - 1) / 2;

    // reduced flow by eigen decomposition of the (self-adjoint) full H_inf
    Mat Hinf_full = assemble_full(in.H_inf->to_matrix(), Mat::Zero(n, n), -1.0);
    if ((Hinf_full - Hinf_full.adjoint().eval()).cwiseAbs().maxCoeff() > 1e-9)
        throw ModelError("verify_reduction: H_inf not self-adjoint");
    Eigen::SelfAdjointEigenSolver<Mat> es(Hinf_full);

    IntegrateOptions iopt;
    iopt.r_list = {in.r};
    int stride = std::max(1, int(std::llround(in.sample_dt / in.dt)));
    iopt.store_every = stride;
    Vec q0 = initial_random_sobolev(M, in.r, 20240u);
    Trajectory traj = integrate(*in.Hq, q0, in.T, in.dt, iopt);

    // v(0)
    RVec theta0 = RVec::Zero(in.Hq->omega.size());
    ComposedTransform ct0 = compose_transforms(*in.transforms, in.G, theta0);
    Vec v0 = ct0.A_inv * q0;
    double v0n = sobolev_norm(v0, in.r);
    std::vector<double> block0(std::size_t(M + 1), 0.0);
    auto block_mod = [&](const Vec& v, int b) {
        double acc = std::norm(v[M + b]) + std::norm(v[n + M + b]);
        if (b > 0) acc += std::norm(v[M - b]) + std::norm(v[n + M - b]);
        return std::sqrt(acc);
    };
    for (int b = 0; b <= M; ++b) block0[std::size_t(b)] = block_mod(v0, b);

    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        double t = traj.times[k];
        RVec theta = in.Hq->omega * t;
        ComposedTransform ct = compose_transforms(*in.transforms, in.G, theta);
        Vec v = ct.A_inv * traj.states[k];
        double dev = std::abs(sobolev_norm(v, in.r) / v0n - 1.0);
        if (dev > rep.max_vnorm_dev) {
            rep.max_vnorm_dev = dev;
            rep.worst_vnorm_time = t;
        }
        // against the reduced flow
        Vec vref = es.eigenvectors() *
                   ((-cplx(0, 1) * t * es.eigenvalues().cast<cplx>().array()).exp() *
                    (es.eigenvectors().adjoint() * v0).array())
                       .matrix();
        double sdev = (v - vref).norm() / v0.norm();
        if (sdev > rep.max_state_dev) {
            rep.max_state_dev = sdev;
            rep.worst_state_time = t;
        }
        for (int b = 0; b <= M; ++b) {
            if (block0[std::size_t(b)] < 1e-14) continue;
            double bdev = std::abs(block_mod(v, b) - block0[std::size_t(b)]) / v0n;
            if (bdev > rep.max_block_dev) {
                rep.max_block_dev = bdev;
                rep.worst_block = b;
            }
        }
    }
    rep.pass = rep.max_vnorm_dev < in.tol_v && rep.max_block_dev < in.tol_v;
    return rep;
}

} // namespace kamred
