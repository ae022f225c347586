#pragma once

#include "ntkae/rng.hpp"
#include "ntkae/types.hpp"

#include <cmath>

namespace ntkae {

struct PowerOptions {
    double tolerance = 1e-8;
    long max_iterations = 10000;
    std::uint64_t seed = 0x5eed;
};

/// Largest |eigenvalue| of a symmetric matrix by power iteration from a fixed
/// pseudo-random start vector. The estimate ||S v|| for unit v is the square
/// root of the Rayleigh quotient of S^2, so a +lambda/-lambda pair at the top
/// of the spectrum does not stall convergence.
template <typename Derived>
double symmetric_spectral_norm(const Eigen::MatrixBase<Derived>& S, const PowerOptions& opts = {}) {
    using Scalar = typename Derived::Scalar;
    require(S.rows() == S.cols(), "symmetric_spectral_norm: matrix must be square");
    const Index n = S.rows();
    if (n == 0) return 0.0;
    if (S.cwiseAbs().maxCoeff() == Scalar(0)) return 0.0;

    Rng rng = make_rng(opts.seed, {stream::power_start, static_cast<std::uint64_t>(n)});
    VectorX<Scalar> v(n);
    for (Index i = 0; i < n; ++i) v(i) = Scalar(standard_normal(rng));
    v.normalize();

    double estimate = 0.0;
    for (long it = 0; it < opts.max_iterations; ++it) {
        VectorX<Scalar> w = S * v;
        const double norm = static_cast<double>(w.norm());
        if (norm == 0.0) {
            // Start vector fell into the null space; restart along a coordinate axis.
            v.setZero();
            v(it % n) = Scalar(1);
            continue;
        }
        v = w / Scalar(norm);
        if (it > 0 && std::abs(norm - estimate) <= opts.tolerance * norm) {
            estimate = norm;
            break;
        }
        estimate = norm;
    }
    return estimate;
}

/// Dense symmetric eigenvalues in ascending order; rejects asymmetric input.
template <typename Derived>
VectorX<typename Derived::Scalar> symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& S, double asym_tol = 1e-8) {
    using Scalar = typename Derived::Scalar;
    require(S.rows() == S.cols(), "symmetric_eigenvalues: matrix must be square");
    const double asym = S.rows() == 0 ? 0.0 : static_cast<double>((S - S.transpose()).cwiseAbs().maxCoeff());
    if (asym > asym_tol) throw PreconditionError("symmetric_eigenvalues: asymmetry " + std::to_string(asym) + " exceeds tolerance");
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(S, Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

}  // namespace ntkae
