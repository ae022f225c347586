#pragma once

#include "ntkae/rng.hpp"
#include "ntkae/types.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

namespace ntkae {

enum class DecoderInit { rademacher, gaussian };

/// Two-layer ReLU autoencoder u = s * A relu(W^T x).
///
/// The output scale s is held by the model rather than folded into the
/// weights: s = 1/sqrt(m d) for the weakly and jointly trained regimes, and
/// s = 1/m for the weight-tied regime. In the tied regime the decoder is the
/// encoder matrix itself; `A()` returns a reference to `W()`, so the tie
/// cannot drift.
template <typename Scalar>
class BasicAutoencoder {
public:
    using MatrixType = MatrixX<Scalar>;

    BasicAutoencoder(MatrixType W, std::optional<MatrixType> A, Regime regime, double sigma_sq, std::uint64_t seed)
        : W_(std::move(W)), regime_(regime), sigma_sq_(sigma_sq), seed_(seed) {
        require(W_.rows() >= 1 && W_.cols() >= 1, "autoencoder: empty weight matrix");
        if (regime_ == Regime::tied) {
            require(!A.has_value() || (A->rows() == W_.rows() && A->cols() == W_.cols()),
                    "autoencoder: tied decoder must match encoder shape");
        } else {
            require(A.has_value(), "autoencoder: decoder matrix required for untied regimes");
            require(A->rows() == W_.rows() && A->cols() == W_.cols(), "autoencoder: W and A must have identical shape");
            A_ = std::move(*A);
        }
    }

    [[nodiscard]] const MatrixType& W() const { return W_; }
    [[nodiscard]] const MatrixType& A() const { return regime_ == Regime::tied ? W_ : *A_; }
    [[nodiscard]] Index d() const { return W_.rows(); }
    [[nodiscard]] Index m() const { return W_.cols(); }
    [[nodiscard]] Regime regime() const { return regime_; }
    [[nodiscard]] double sigma_sq() const { return sigma_sq_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    [[nodiscard]] Scalar output_scale() const {
        if (regime_ == Regime::tied) return Scalar(1) / Scalar(m());
        return Scalar(1) / std::sqrt(Scalar(m()) * Scalar(d()));
    }

    /// New state with replaced weights; the decoder argument is ignored for tied models.
    [[nodiscard]] BasicAutoencoder with_weights(MatrixType W, MatrixType A) const {
        if (regime_ == Regime::tied) return BasicAutoencoder(std::move(W), std::nullopt, regime_, sigma_sq_, seed_);
        return BasicAutoencoder(std::move(W), std::move(A), regime_, sigma_sq_, seed_);
    }
    [[nodiscard]] BasicAutoencoder with_encoder(MatrixType W) const {
        if (regime_ == Regime::tied) return BasicAutoencoder(std::move(W), std::nullopt, regime_, sigma_sq_, seed_);
        return BasicAutoencoder(std::move(W), *A_, regime_, sigma_sq_, seed_);
    }

private:
    MatrixType W_;
    std::optional<MatrixType> A_;
    Regime regime_;
    double sigma_sq_;
    std::uint64_t seed_;
};

using Autoencoder = BasicAutoencoder<double>;

template <typename Scalar>
struct BasicReconstructionBatch {
    MatrixX<Scalar> U;
    Scalar loss{};  // 0.5 * ||X - U||_F^2
};
using ReconstructionBatch = BasicReconstructionBatch<double>;

// Two indicator conventions are in play. Activation patterns (kernels, flip
// counts) use 1[z >= 0]; the ReLU derivative used by the gradients is 0 at z == 0.
template <typename Scalar>
inline Scalar relu(Scalar z) { return z > Scalar(0) ? z : Scalar(0); }
template <typename Scalar>
inline Scalar relu_derivative(Scalar z) { return z > Scalar(0) ? Scalar(1) : Scalar(0); }
template <typename Scalar>
inline Scalar active(Scalar z) { return z >= Scalar(0) ? Scalar(1) : Scalar(0); }

/// W columns i.i.d. N(0, I) (N(0, sigma_sq I) for tied); A Rademacher or
/// standard normal. Each hidden unit r draws from its own substream, so the
/// result is independent of fill order.
inline Autoencoder init_model(Index d, Index m, Regime regime, double sigma_sq, std::uint64_t seed,
                              DecoderInit decoder_init = DecoderInit::rademacher) {
    require(d >= 2 && m >= 1, "init_model: need d >= 2 and m >= 1");
    if (regime == Regime::tied) require(sigma_sq > 0.0, "init_model: sigma_sq must be positive");
    const double w_scale = regime == Regime::tied ? std::sqrt(sigma_sq) : 1.0;
    Matrix W(d, m);
    for (Index r = 0; r < m; ++r) {
        Rng rng = make_rng(seed, {stream::encoder, static_cast<std::uint64_t>(r)});
        for (Index p = 0; p < d; ++p) W(p, r) = w_scale * standard_normal(rng);
    }
    if (regime == Regime::tied) return Autoencoder(std::move(W), std::nullopt, regime, sigma_sq, seed);

    Matrix A(d, m);
    for (Index r = 0; r < m; ++r) {
        Rng rng = make_rng(seed, {stream::decoder, static_cast<std::uint64_t>(r)});
        for (Index p = 0; p < d; ++p)
            A(p, r) = decoder_init == DecoderInit::rademacher ? rademacher(rng) : standard_normal(rng);
    }
    return Autoencoder(std::move(W), std::move(A), regime, sigma_sq, seed);
}

/// Pre-activations Z = W^T X (m x n).
template <typename Scalar, typename Derived>
MatrixX<Scalar> preactivations(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    require(X.rows() == model.d(), "preactivations: dimension mismatch");
    return model.W().transpose() * X;
}

template <typename Scalar, typename Derived>
MatrixX<Scalar> batch_outputs(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    const MatrixX<Scalar> hidden = preactivations(model, X).cwiseMax(Scalar(0));
    return model.output_scale() * (model.A() * hidden);
}

template <typename Scalar, typename Derived>
VectorX<Scalar> forward(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
    static_assert(Derived::ColsAtCompileTime == 1 || Derived::ColsAtCompileTime == Eigen::Dynamic);
    return batch_outputs(model, x.derived()).col(0);
}

template <typename Scalar, typename Derived>
BasicReconstructionBatch<Scalar> batch_forward(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    BasicReconstructionBatch<Scalar> out;
    out.U = batch_outputs(model, X);
    out.loss = Scalar(0.5) * (X - out.U).squaredNorm();
    return out;
}

namespace detail {

// Encoder gradient for an arbitrary decoder matrix: column r is
// -s * sum_i relu'(w_r^T x_i) (a_r^T r_i) x_i with residual r_i = x_i - u_i.
template <typename Scalar, typename DX>
MatrixX<Scalar> encoder_gradient(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& A, const MatrixX<Scalar>& R,
                                 const Eigen::MatrixBase<DX>& X, Scalar scale) {
    MatrixX<Scalar> S = A.transpose() * R;  // m x n
    S.array() *= Z.unaryExpr([](Scalar z) { return relu_derivative(z); }).array();
    return -scale * (X * S.transpose());
}

template <typename Scalar>
MatrixX<Scalar> decoder_gradient(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& R, Scalar scale) {
    return -scale * (R * Z.cwiseMax(Scalar(0)).transpose());
}

}  // namespace detail

/// Gradient of the loss with respect to W (d x m); the decoder is held fixed.
template <typename Scalar, typename Derived>
MatrixX<Scalar> grad_encoder(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    const MatrixX<Scalar> Z = preactivations(model, X);
    const MatrixX<Scalar> R = X - model.output_scale() * (model.A() * Z.cwiseMax(Scalar(0)));
    return detail::encoder_gradient(Z, model.A(), R, X, model.output_scale());
}

/// Gradient of the loss with respect to A (d x m); the loss is quadratic in A.
template <typename Scalar, typename Derived>
MatrixX<Scalar> grad_decoder(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    const MatrixX<Scalar> Z = preactivations(model, X);
    const MatrixX<Scalar> R = X - model.output_scale() * (model.A() * Z.cwiseMax(Scalar(0)));
    return detail::decoder_gradient(Z, R, model.output_scale());
}

/// Chain-rule gradient of the tied loss L(W) = 0.5 sum ||x_i - s W relu(W^T x_i)||^2.
template <typename Scalar, typename Derived>
MatrixX<Scalar> grad_tied(const BasicAutoencoder<Scalar>& model, const Eigen::MatrixBase<Derived>& X) {
    require(model.regime() == Regime::tied, "grad_tied: model is not weight-tied");
    const MatrixX<Scalar> Z = preactivations(model, X);
    const MatrixX<Scalar> R = X - model.output_scale() * (model.W() * Z.cwiseMax(Scalar(0)));
    return detail::encoder_gradient(Z, model.W(), R, X, model.output_scale()) +
           detail::decoder_gradient(Z, R, model.output_scale());
}

/// Model checkpoint: magic "NTKM", u32 d, u32 m, u8 regime, f64 sigma_sq,
/// u64 seed, then W and (untied only) A as column-major little-endian f64.
void save_model(const Autoencoder& model, const std::string& path);
Autoencoder load_model(const std::string& path);

}  // namespace ntkae
