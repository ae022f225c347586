#pragma once

#include "ntkae/autoencoder.hpp"
#include "ntkae/dataset.hpp"
#include "ntkae/spectral.hpp"
#include "ntkae/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ntkae {

enum class KernelKind { G, H, K, Kinf };

/// Symmetric nd x nd kernel with d x d blocks; row (i, p) maps to index i * d + p,
/// i.e. the column-stacking vec() convention.
template <typename Scalar>
struct BasicKernelMatrix {
    Index n = 0;
    Index d = 0;
    KernelKind kind = KernelKind::K;
    MatrixX<Scalar> data;

    [[nodiscard]] Index dim() const { return n * d; }
    [[nodiscard]] auto block(Index i, Index j) const { return data.block(i * d, j * d, d, d); }
};
using KernelMatrix = BasicKernelMatrix<double>;

/// Limiting kernel in factor form: K_inf = M (x) I_d where M is M_G (weakly)
/// or M_G + M_H (jointly).
struct LimitingKernelFactor {
    Matrix M_G;
    Matrix M_H;
    Regime regime = Regime::jointly;
    Index d = 0;

    [[nodiscard]] Matrix factor() const { return regime == Regime::weakly ? M_G : Matrix(M_G + M_H); }
    [[nodiscard]] KernelMatrix expand() const;
};

struct KernelOptions {
    Index max_dim = 4096;
};

inline void check_capacity(Index dim, const KernelOptions& opts) {
    if (dim > opts.max_dim)
        throw CapacityError("kernel dimension " + std::to_string(dim) + " exceeds dense cap " + std::to_string(opts.max_dim));
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian expectations for unit vectors with cosine c = cos(theta):
//   E[1[w.x >= 0] 1[w.x' >= 0]] <x, x'>  = c (pi - theta) / (2 pi)
//   E[relu(w.x) relu(w.x')]             = (sin theta + (pi - theta) c) / (2 pi)

template <typename Scalar>
inline Scalar clamp_cosine(Scalar c) { return std::clamp(c, Scalar(-1), Scalar(1)); }

// Angle forms. Going through acos(x.y) loses about sqrt(eps) near c = 1, so
// the vector versions below measure the angle as 2 atan2(|x - y|, |x + y|).
template <typename Scalar>
inline Scalar angle_gram_G(Scalar theta) {
    return std::cos(theta) * (std::numbers::pi_v<Scalar> - theta) / (Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
inline Scalar angle_gram_H(Scalar theta) {
    return (std::sin(theta) + (std::numbers::pi_v<Scalar> - theta) * std::cos(theta)) / (Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
inline Scalar arccos_gram_G(Scalar c) {
    c = clamp_cosine(c);
    return c * (std::numbers::pi_v<Scalar> - std::acos(c)) / (Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
inline Scalar arccos_gram_H(Scalar c) {
    c = clamp_cosine(c);
    const Scalar theta = std::acos(c);
    return (std::sqrt(Scalar(1) - c * c) + (std::numbers::pi_v<Scalar> - theta) * c) /
           (Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// Angle between two nonzero vectors, accurate for nearly parallel inputs.
template <typename D1, typename D2>
typename D1::Scalar unit_angle(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y) {
    const VectorX<typename D1::Scalar> a = x.normalized(), b = y.normalized();
    return typename D1::Scalar(2) * std::atan2((a - b).norm(), (a + b).norm());
}

template <typename Derived>
MatrixX<typename Derived::Scalar> pairwise_angles(const Eigen::MatrixBase<Derived>& X) {
    const Index n = X.cols();
    MatrixX<typename Derived::Scalar> T(n, n);
    for (Index j = 0; j < n; ++j) {
        T(j, j) = 0;
        for (Index i = j + 1; i < n; ++i) T(i, j) = T(j, i) = unit_angle(X.col(i), X.col(j));
    }
    return T;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> limiting_gram_G(const Eigen::MatrixBase<Derived>& X) {
    using Scalar = typename Derived::Scalar;
    return pairwise_angles(X).unaryExpr([](Scalar t) { return angle_gram_G(t); });
}

template <typename Derived>
MatrixX<typename Derived::Scalar> limiting_gram_H(const Eigen::MatrixBase<Derived>& X) {
    using Scalar = typename Derived::Scalar;
    return pairwise_angles(X).unaryExpr([](Scalar t) { return angle_gram_H(t); });
}

/// Scalar s such that the infinite-width jointly trained NTK block for the
/// pair (x, x') is s * I: c (pi - arccos c) / (pi d) + sqrt(1 - c^2) / (2 pi d).
template <typename Scalar>
inline Scalar analytic_pair_ntk_scalar(Scalar c, Index d) {
    c = clamp_cosine(c);
    const Scalar pi = std::numbers::pi_v<Scalar>;
    return c * (pi - std::acos(c)) / (pi * Scalar(d)) + std::sqrt(Scalar(1) - c * c) / (Scalar(2) * pi * Scalar(d));
}

template <typename D1, typename D2>
MatrixX<typename D1::Scalar> analytic_pair_ntk(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& x2) {
    using Scalar = typename D1::Scalar;
    require(x.size() == x2.size(), "analytic_pair_ntk: dimension mismatch");
    require(std::abs(x.norm() - Scalar(1)) <= Scalar(1e-6) && std::abs(x2.norm() - Scalar(1)) <= Scalar(1e-6),
            "analytic_pair_ntk: inputs must be unit vectors");
    const Index d = x.size();
    const Scalar theta = unit_angle(x, x2);
    const Scalar s = (angle_gram_G(theta) + angle_gram_H(theta)) / Scalar(d);
    return s * MatrixX<Scalar>::Identity(d, d);
}

LimitingKernelFactor analytic_Kinf(const Dataset& ds, Regime regime);

// ---------------------------------------------------------------------------
// Empirical kernels. The cross forms evaluate the blocks between the columns
// of P (probes, d x p) and X (training samples, d x n):
//   G block (a, j) = (1/m) sum_r 1[w_r.p_a >= 0] 1[w_r.x_j >= 0] <p_a, x_j> a_r a_r^T
//   H block (a, j) = (1/m) sum_r relu(w_r.p_a) relu(w_r.x_j) I

template <typename Scalar, typename DP, typename DX>
MatrixX<Scalar> cross_G(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<DP>& P,
                        const Eigen::MatrixBase<DX>& X) {
    const Index d = model.d(), m = model.m(), np = P.cols(), n = X.cols();
    require(P.rows() == d && X.rows() == d, "cross_G: dimension mismatch");
    const MatrixX<Scalar>& A = model.A();
    const MatrixX<Scalar> Zp = model.W().transpose() * P;  // m x np
    const MatrixX<Scalar> Zx = model.W().transpose() * X;  // m x n

    // B[(i, p), r] = 1[w_r.x_i >= 0] a_r[p], so (Bp Bx^T)[(a,p),(j,q)] = sum_r 1 1 a_rp a_rq.
    auto pattern_rows = [&](const MatrixX<Scalar>& Z, Index count) {
        MatrixX<Scalar> B(count * d, m);
        for (Index i = 0; i < count; ++i)
            for (Index r = 0; r < m; ++r) B.block(i * d, r, d, 1) = active(Z(r, i)) * A.col(r);
        return B;
    };
    const MatrixX<Scalar> Bp = pattern_rows(Zp, np);
    const MatrixX<Scalar> Bx = pattern_rows(Zx, n);
    MatrixX<Scalar> out = (Bp * Bx.transpose()) / Scalar(m);
    const MatrixX<Scalar> inner = P.transpose() * X;
    for (Index a = 0; a < np; ++a)
        for (Index j = 0; j < n; ++j) out.block(a * d, j * d, d, d) *= inner(a, j);
    return out;
}

/// n_p x n factor of the H cross kernel (the full block is factor(a, j) * I_d).
template <typename Scalar, typename DP, typename DX>
MatrixX<Scalar> cross_H_factor(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<DP>& P,
                               const Eigen::MatrixBase<DX>& X) {
    require(P.rows() == model.d() && X.rows() == model.d(), "cross_H: dimension mismatch");
    const MatrixX<Scalar> Hp = (model.W().transpose() * P).cwiseMax(Scalar(0));
    const MatrixX<Scalar> Hx = (model.W().transpose() * X).cwiseMax(Scalar(0));
    return (Hp.transpose() * Hx) / Scalar(model.m());
}

template <typename Scalar>
MatrixX<Scalar> kron_identity(const MatrixX<Scalar>& M, Index d) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(M.rows() * d, M.cols() * d);
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j)
            if (M(i, j) != Scalar(0)) out.block(i * d, j * d, d, d).diagonal().setConstant(M(i, j));
    return out;
}

template <typename Scalar, typename DX>
BasicKernelMatrix<Scalar> empirical_G(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<DX>& X,
                                      const KernelOptions& opts = {}) {
    check_capacity(X.cols() * model.d(), opts);
    BasicKernelMatrix<Scalar> K{X.cols(), model.d(), KernelKind::G, cross_G(model, X, X)};
    // Symmetrize away round-off from the two GEMM operands being assembled separately.
    K.data = (Scalar(0.5) * (K.data + K.data.transpose())).eval();
    return K;
}

template <typename Scalar, typename DX>
BasicKernelMatrix<Scalar> empirical_H(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<DX>& X,
                                      const KernelOptions& opts = {}) {
    check_capacity(X.cols() * model.d(), opts);
    MatrixX<Scalar> f = cross_H_factor(model, X, X);
    f = (Scalar(0.5) * (f + f.transpose())).eval();
    return {X.cols(), model.d(), KernelKind::H, kron_identity(f, model.d())};
}

/// Regime kernel: weakly -> G, jointly -> G + H. No tied NTK is defined.
template <typename Scalar, typename DX>
BasicKernelMatrix<Scalar> empirical_K(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<DX>& X,
                                      Regime regime, const KernelOptions& opts = {}) {
    if (regime == Regime::tied) throw PreconditionError("empirical_K: no neural tangent kernel is defined for the tied regime");
    BasicKernelMatrix<Scalar> K = empirical_G(model, X, opts);
    if (regime == Regime::jointly) K.data += empirical_H(model, X, opts).data;
    K.kind = KernelKind::K;
    return K;
}

template <typename Scalar>
double min_eigenvalue(const BasicKernelMatrix<Scalar>& K) {
    return static_cast<double>(symmetric_eigenvalues(K.data)(0));
}
inline double min_eigenvalue(const LimitingKernelFactor& F) { return symmetric_eigenvalues(F.factor())(0); }
inline double min_eigenvalue(const Matrix& S) { return symmetric_eigenvalues(S)(0); }

/// Spectral norm of K_t - K_0 by power iteration.
template <typename Scalar>
double kernel_drift(const BasicKernelMatrix<Scalar>& K_t, const BasicKernelMatrix<Scalar>& K_0, const PowerOptions& opts = {}) {
    if (K_t.n != K_0.n || K_t.d != K_0.d || K_t.data.rows() != K_0.data.rows())
        throw PreconditionError("kernel_drift: shape mismatch");
    return symmetric_spectral_norm(K_t.data - K_0.data, opts);
}

/// Kernel dump: CSV header `i,j,p,q,value`, one row per entry of every block.
void write_kernel_csv(const KernelMatrix& K, const std::string& path);

}  // namespace ntkae
