#pragma once

#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "kamred/errors.hpp"

namespace kamred {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr double PI = 3.141592653589793238462643383279502884;

// <x> = max{1, |x|}, the Japanese-bracket weight used by every norm here.
inline double ang(double x) { return std::max(1.0, std::abs(x)); }
inline double ang(long long x) { return std::max<double>(1.0, std::llabs(x)); }
// <l, j> = max{1, |l|, |j|}
inline double ang2(long long linf, long long j) {
    return std::max<double>(1.0, std::max<double>(std::llabs(linf), std::llabs(j)));
}

// s0 = [(d+1)/2] + 1
inline double sobolev_s0(int d) { return std::floor((d + 1) / 2.0) + 1.0; }

// --------------------------------------------------------------------------
// Lattice of time-Fourier modes: l in Z^d with |l|_inf <= L, flattened
// row-major (first component slowest). Index 0 corresponds to l = (-L,..,-L).
// --------------------------------------------------------------------------
struct LatticeBox {
    int d = 1;
    int L = 0;

    std::size_t size() const {
        std::size_t n = 1;
        for (int i = 0; i < d; ++i) n *= std::size_t(2 * L + 1);
        return n;
    }
    int side() const { return 2 * L + 1; }

    void unflatten(std::size_t idx, int* ell) const {
        for (int i = d - 1; i >= 0; --i) {
            ell[i] = int(idx % side()) - L;
            idx /= side();
        }
    }
    std::vector<int> unflatten(std::size_t idx) const {
        std::vector<int> ell(d);
        unflatten(idx, ell.data());
        return ell;
    }
    std::size_t flatten(const int* ell) const {
        std::size_t idx = 0;
        for (int i = 0; i < d; ++i) idx = idx * side() + std::size_t(ell[i] + L);
        return idx;
    }
    std::size_t flatten(const std::vector<int>& ell) const { return flatten(ell.data()); }

    bool contains(const int* ell) const {
        for (int i = 0; i < d; ++i)
            if (ell[i] < -L || ell[i] > L) return false;
        return true;
    }
    // index of -l
    std::size_t negate(std::size_t idx) const { return size() - 1 - idx; }

    int linf(std::size_t idx) const {
        int m = 0;
        for (int i = d - 1; i >= 0; --i) {
            int c = int(idx % side()) - L;
            m = std::max(m, std::abs(c));
            idx /= side();
        }
        return m;
    }
    double dot_omega(std::size_t idx, const RVec& omega) const {
        double s = 0.0;
        for (int i = d - 1; i >= 0; --i) {
            int c = int(idx % side()) - L;
            s += omega[i] * c;
            idx /= side();
        }
        return s;
    }
};

// --------------------------------------------------------------------------
// Deterministic RNG. splitmix64 for stream derivation, xoshiro-free: we just
// chain splitmix; uniform doubles built bit-wise so results are identical
// across platforms and standard libraries.
// --------------------------------------------------------------------------
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next_u64() { return splitmix64(state); }
    // uniform in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    // symmetric, roughly unit-scale complex coefficient
    cplx ccoeff() { return cplx(uniform(-1.0, 1.0), uniform(-1.0, 1.0)); }
    // derive an independent stream (sample k of a seeded family)
    static Rng stream(std::uint64_t seed, std::uint64_t k) {
        std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (k + 1));
        splitmix64(s);
        return Rng(s);
    }
};

// --------------------------------------------------------------------------
// Tiny thread pool: parallel loop over [0, n) in contiguous chunks. Workers
// write to disjoint slots only; reductions stay sequential in the caller so
// results do not depend on the thread count.
// --------------------------------------------------------------------------
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         int threads = 0) {
    int nt = resolve_threads(threads);
    if (nt <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::size_t chunk = std::max<std::size_t>(1, n / std::size_t(8 * nt));
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mtx;
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                std::size_t i0 = next.fetch_add(chunk);
                if (i0 >= n) return;
                std::size_t i1 = std::min(n, i0 + chunk);
                try {
                    for (std::size_t i = i0; i < i1; ++i) body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mtx);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// --------------------------------------------------------------------------
// Least-squares slope of y against x (used for the log-log decay fits).
// --------------------------------------------------------------------------
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || x.size() != y.size())
        throw InvalidInputError("fit_slope: need >= 2 matching points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= double(x.size());
    my /= double(x.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0) throw InvalidInputError("fit_slope: degenerate abscissae");
    return sxy / sxx;
}

// 8-node Gauss-Legendre rule on [0,1].
struct GaussLegendre8 {
    static const std::array<double, 8>& nodes() {
        static const std::array<double, 8> s = {
            0.5 - 0.9602898564975363 / 2, 0.5 - 0.7966664774136267 / 2,
            0.5 - 0.5255324099163290 / 2, 0.5 - 0.1834346424956498 / 2,
            0.5 + 0.1834346424956498 / 2, 0.5 + 0.5255324099163290 / 2,
            0.5 + 0.7966664774136267 / 2, 0.5 + 0.9602898564975363 / 2};
        return s;
    }
    static const std::array<double, 8>& weights() {
        static const std::array<double, 8> w = {
            0.1012285362903763 / 2, 0.2223810344533745 / 2,
            0.3137066458778873 / 2, 0.3626837833783620 / 2,
            0.3626837833783620 / 2, 0.3137066458778873 / 2,
            0.2223810344533745 / 2, 0.1012285362903763 / 2};
        return w;
    }
    // sum_k w_k s_k^m (the rule applied to s^m; exact up to degree 15)
    static double moment(int m) {
        double acc = 0;
        for (int k = 0; k < 8; ++k) acc += weights()[k] * std::pow(nodes()[k], m);
        return acc;
    }
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

} // namespace kamred
