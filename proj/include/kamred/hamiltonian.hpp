#pragma once

// Time-independent block-diagonal part of the reduced system: a scalar block
// at mode 0 and self-adjoint 2x2 blocks coupling the modes {+j, -j}.

#include "kamred/qpoperator.hpp"

namespace kamred {

struct BlockEig {
    Eigen::VectorXd vals; // ascending
    Mat vecs;             // unitary, deterministic phase
};

struct BlockDiagHamiltonian {
    // blocks[j]: 1x1 for j = 0, else 2x2 in the basis (mode +j, mode -j)
    std::vector<Mat> blocks;
    std::vector<BlockEig> eigs; // refreshed explicitly

    BlockDiagHamiltonian() = default;
    explicit BlockDiagHamiltonian(int M) {
        blocks.resize(std::size_t(M + 1));
        blocks[0] = Mat::Zero(1, 1);
        for (int j = 1; j <= M; ++j) blocks[std::size_t(j)] = Mat::Zero(2, 2);
    }
    int M() const { return int(blocks.size()) - 1; }
    double h0() const { return blocks[0](0, 0).real(); }

    double selfadjoint_violation() const {
        double worst = 0;
        for (const auto& b : blocks)
            worst = std::max(worst, (b - b.adjoint().eval()).cwiseAbs().maxCoeff());
        return worst;
    }

    // fold the (tiny) accumulated anti-hermitian part back in
    void hermitize() {
        for (auto& b : blocks) b = 0.5 * (b + b.adjoint().eval());
    }

    void refresh_eigs() {
        eigs.resize(blocks.size());
        for (std::size_t j = 0; j < blocks.size(); ++j) {
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (blocks[j] + blocks[j].adjoint().eval()));
            BlockEig e;
            e.vals = es.eigenvalues(); // ascending
            e.vecs = es.eigenvectors();
            // deterministic phase: largest-modulus component real positive
            for (int c = 0; c < e.vecs.cols(); ++c) {
                int imax = 0;
                double best = -1;
                for (int r = 0; r < e.vecs.rows(); ++r)
                    if (std::abs(e.vecs(r, c)) > best) { best = std::abs(e.vecs(r, c)); imax = r; }
                cplx z = e.vecs(imax, c);
                if (std::abs(z) > 0) e.vecs.col(c) *= std::conj(z) / std::abs(z);
            }
            eigs[j] = std::move(e);
        }
    }
    const BlockEig& eig(int j) const { return eigs[std::size_t(j)]; }

    // eigenvalues (lambda_{j,a}) ascending; for j = 0 both labels coincide
    std::pair<double, double> lambdas(int j) const {
        const auto& v = eigs[std::size_t(j)].vals;
        if (v.size() == 1) return {v[0], v[0]};
        return {v[0], v[1]};
    }

    // the (2M+1)x(2M+1) matrix on modes -M..M
    Mat to_matrix() const {
        int M_ = M();
        Mat H = Mat::Zero(2 * M_ + 1, 2 * M_ + 1);
        H(M_, M_) = blocks[0](0, 0);
        for (int j = 1; j <= M_; ++j) {
            const Mat& b = blocks[std::size_t(j)];
            H(M_ + j, M_ + j) = b(0, 0);
            H(M_ + j, M_ - j) = b(0, 1);
            H(M_ - j, M_ + j) = b(1, 0);
            H(M_ - j, M_ - j) = b(1, 1);
        }
        return H;
    }

    // sigma_x conj(h_j) sigma_x: the block of the conjugated operator; same
    // spectrum, enters the anti-diagonal homological equation
    Mat conj_block(int j) const {
        const Mat& b = blocks[std::size_t(j)];
        if (b.rows() == 1) return b.conjugate();
        Mat out(2, 2);
        out(0, 0) = std::conj(b(1, 1));
        out(0, 1) = std::conj(b(1, 0));
        out(1, 0) = std::conj(b(0, 1));
        out(1, 1) = std::conj(b(0, 0));
        return out;
    }

    BlockDiagHamiltonian& operator+=(const BlockDiagHamiltonian& o) {
        for (std::size_t j = 0; j < blocks.size(); ++j) blocks[j] += o.blocks[j];
        return *this;
    }
};

// D = diag(sqrt(j^2 + m)) as a block Hamiltonian
inline BlockDiagHamiltonian free_hamiltonian(double mass, int M) {
    BlockDiagHamiltonian H(M);
    H.blocks[0](0, 0) = std::sqrt(mass);
    for (int j = 1; j <= M; ++j) {
        double l = std::sqrt(double(j) * j + mass);
        H.blocks[std::size_t(j)](0, 0) = l;
        H.blocks[std::size_t(j)](1, 1) = l;
    }
    return H;
}

// extract the block-diagonal part of a spatial matrix (the |j|=|k| entries)
inline BlockDiagHamiltonian block_diag_of(const Mat& H, int M) {
    BlockDiagHamiltonian out(M);
    out.blocks[0](0, 0) = H(M, M);
    for (int j = 1; j <= M; ++j) {
        Mat b(2, 2);
        b(0, 0) = H(M + j, M + j);
        b(0, 1) = H(M + j, M - j);
        b(1, 0) = H(M - j, M + j);
        b(1, 1) = H(M - j, M - j);
        out.blocks[std::size_t(j)] = b;
    }
    return out;
}

// embed into a QPOperator (l = 0 slice only)
inline QPOperator to_qpoperator(const BlockDiagHamiltonian& H, int d, int L) {
    QPOperator A(d, L, H.M());
    std::vector<int> zero(std::size_t(d), 0);
    A.mats[A.box().flatten(zero)] = H.to_matrix();
    return A;
}

} // namespace kamred
