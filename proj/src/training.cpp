#include "ntkae/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ntkae {

namespace {

double regime_constant(Regime regime, double eta_constant) {
    if (eta_constant > 0.0) return eta_constant;
    return regime == Regime::weakly ? 0.25 : 1.0 / 64.0;
}

std::string fmt_optional(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}

}  // namespace

double matrix_spectral_norm(const Matrix& M) {
    const Matrix gram = M.rows() <= M.cols() ? Matrix(M * M.transpose()) : Matrix(M.transpose() * M);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

double default_step_size(Regime regime, const SpectralStats& stats, Index n, Index d, double eta_constant) {
    if (!(stats.lambda0_hat > 0.0) || stats.degenerate)
        throw DegenerateDataError("default_step_size: lambda0_hat is zero; the data is degenerate (duplicate samples?)");
    const double c = regime_constant(regime, eta_constant);
    if (regime == Regime::weakly) return c * stats.lambda0_hat / (double(n) * double(d) * stats.lambda_n);
    return c * stats.lambda0_hat / (double(n) * stats.lambda_n);
}

double theoretical_envelope(double initial, double eta, double lambda0_hat, Index d, long k) {
    require(eta * lambda0_hat < 2.0 * double(d), "theoretical_envelope: requires eta * lambda0 < 2d");
    require(k >= 0, "theoretical_envelope: k must be non-negative");
    return std::pow(1.0 - eta * lambda0_hat / (2.0 * double(d)), double(k)) * initial;
}

MovementRadii movement_radii(Regime regime, const Autoencoder& model0, const Dataset& ds, const SpectralStats& stats,
                             double delta, double R_w, double R_a) {
    (void)regime;
    require(stats.lambda0_hat > 0.0, "movement_radii: lambda0_hat must be positive");
    const double n = double(ds.n()), d = double(ds.d()), m = double(model0.m());
    const double lambda0 = stats.lambda0_hat, lambda_n = stats.lambda_n;
    MovementRadii r;
    r.initial_residual_sq = 2.0 * batch_forward(model0, ds.X).loss;
    const double residual = std::sqrt(r.initial_residual_sq);
    r.R_prime = d * std::sqrt(lambda_n) * residual / (std::sqrt(m) * lambda0);
    r.R_prime_gd = 4.0 * r.R_prime;
    const double norm_W = matrix_spectral_norm(model0.W());
    const double norm_A = matrix_spectral_norm(model0.A());
    const double common = 4.0 * std::sqrt(d * lambda_n) * residual / (std::sqrt(m) * lambda0);
    r.R_w_prime = common * (norm_A + R_a);
    r.R_a_prime = common * (norm_W + R_w);
    r.R_ball = lambda0 * delta / (8.0 * n * n * d);
    r.initial_residual_sq_bound = 2.0 * n / delta;
    return r;
}

WidthBounds width_bounds(const SpectralStats& stats, Index n, Index d, double delta) {
    require(stats.lambda0_hat > 0.0 && delta > 0.0, "width_bounds: need lambda0_hat > 0 and delta > 0");
    const double nn = double(n), dd = double(d), l0 = std::pow(stats.lambda0_hat, 4.0);
    WidthBounds b;
    b.weakly_delta2 = std::pow(nn, 5.0) * std::pow(dd, 4.0) * stats.lambda_n / (l0 * delta * delta);
    b.weakly_delta3 = b.weakly_delta2 / delta;
    b.jointly = nn * dd * std::pow(stats.lambda_n, 3.0) / (l0 * delta * delta);
    return b;
}

std::vector<long> count_pattern_flips(const Autoencoder& model_k, const Autoencoder& model_0, const Dataset& ds) {
    require(model_k.d() == model_0.d() && model_k.m() == model_0.m(), "count_pattern_flips: shape mismatch");
    const Matrix Zk = preactivations(model_k, ds.X);
    const Matrix Z0 = preactivations(model_0, ds.X);
    std::vector<long> counts(static_cast<std::size_t>(ds.n()), 0);
    for (Index i = 0; i < ds.n(); ++i)
        for (Index r = 0; r < model_k.m(); ++r)
            if (active(Zk(r, i)) != active(Z0(r, i))) ++counts[static_cast<std::size_t>(i)];
    return counts;
}

TrainResult train(const Autoencoder& model0, const Dataset& ds, const TrainConfig& cfg, const StepObserver& observer) {
    require(cfg.steps >= 0, "train: steps must be non-negative");
    require(cfg.checkpoint_stride >= 0 && cfg.kernel_eval_stride >= 0, "train: strides must be non-negative");
    require(model0.d() == ds.d(), "train: model and dataset dimensions differ");
    require(model0.regime() == cfg.regime || (model0.regime() != Regime::tied && cfg.regime != Regime::tied),
            "train: tied models train only in the tied regime");

    const SpectralStats stats = spectral_stats(ds);
    TrainTrace trace;
    trace.config = cfg;
    trace.lambda0_hat = stats.lambda0_hat;
    trace.lambda_n = stats.lambda_n;
    trace.extension_step_size = cfg.regime == Regime::tied;
    if (cfg.eta) {
        require(std::isfinite(*cfg.eta) && *cfg.eta > 0.0, "train: explicit eta must be positive and finite");
        trace.eta = *cfg.eta;
    } else {
        trace.eta = default_step_size(cfg.regime, stats, ds.n(), ds.d(), cfg.eta_constant);
    }
    if (stats.degenerate) throw DegenerateDataError("train: lambda0_hat is zero; refusing to train on degenerate data");
    trace.radii = movement_radii(cfg.regime, model0, ds, stats, cfg.delta);

    const double eta = trace.eta;
    const double scale = model0.output_scale();
    const Matrix& X = ds.X;
    const bool envelope_defined = eta * stats.lambda0_hat < 2.0 * double(ds.d());
    const double contraction = 1.0 - eta * stats.lambda0_hat / (2.0 * double(ds.d()));

    std::optional<KernelMatrix> K0;
    const bool kernels_enabled = cfg.kernel_eval_stride > 0 && cfg.regime != Regime::tied;
    if (kernels_enabled) K0 = empirical_K(model0, X, cfg.regime, cfg.kernel);

    Matrix W = model0.W();
    Matrix A = model0.A();
    const Matrix W0 = W, A0 = A;

    auto record_checkpoint = [&](long k, const Autoencoder& current) {
        Checkpoint c;
        c.step = k;
        c.max_col_move_W = (W - W0).colwise().norm().maxCoeff();
        c.frob_move_W = (W - W0).norm();
        c.frob_move_A = (A - A0).norm();
        if (kernels_enabled && k % cfg.kernel_eval_stride == 0) {
            const KernelMatrix Kk = empirical_K(current, X, cfg.regime, cfg.kernel);
            c.min_eig_K = min_eigenvalue(Kk);
            c.drift_K = kernel_drift(Kk, *K0);
        }
        const auto flips = count_pattern_flips(current, model0, ds);
        c.max_flips = flips.empty() ? 0 : *std::max_element(flips.begin(), flips.end());
        trace.checkpoints.push_back(c);
    };

    Autoencoder current = model0;
    for (long k = 0;; ++k) {
        const Matrix Z = W.transpose() * X;
        const Matrix R = X - scale * (A * Z.cwiseMax(0.0));
        const double loss = 0.5 * R.squaredNorm();
        if (!std::isfinite(loss)) throw DivergenceError("train: non-finite loss at step " + std::to_string(k), k);
        trace.loss.push_back(loss);
        trace.envelope.push_back(envelope_defined ? std::pow(contraction, double(k)) * trace.loss.front()
                                                  : std::numeric_limits<double>::quiet_NaN());
        if (k > 0 && loss > trace.loss[static_cast<std::size_t>(k - 1)]) ++trace.loss_increases;
        if (envelope_defined && loss > trace.envelope.back()) ++trace.envelope_violations;

        if (observer) observer(k, current);
        const bool last = k == cfg.steps || loss <= cfg.loss_floor;
        if (k == 0 || last || (cfg.checkpoint_stride > 0 && k % cfg.checkpoint_stride == 0)) record_checkpoint(k, current);
        if (last) {
            trace.early_stopped = k < cfg.steps;
            break;
        }

        switch (cfg.regime) {
            case Regime::weakly:
                W -= eta * detail::encoder_gradient(Z, A, R, X, scale);
                break;
            case Regime::jointly: {
                // Both gradients are evaluated at step k before either matrix moves.
                Matrix gW = detail::encoder_gradient(Z, A, R, X, scale);
                Matrix gA = detail::decoder_gradient(Z, R, scale);
                W -= eta * gW;
                A -= eta * gA;
                break;
            }
            case Regime::tied:
                W -= eta * (detail::encoder_gradient(Z, W, R, X, scale) + detail::decoder_gradient(Z, R, scale));
                A = W;
                break;
        }
        current = current.with_weights(W, A);
    }
    return {std::move(current), std::move(trace)};
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "step,loss,envelope\n";
    for (std::size_t k = 0; k < trace.loss.size(); ++k) out << k << ',' << trace.loss[k] << ',' << trace.envelope[k] << '\n';
}

void write_checkpoint_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "step,max_col_move_W,frob_move_W,frob_move_A,min_eig_K,drift_K,max_flips\n";
    for (const auto& c : trace.checkpoints)
        out << c.step << ',' << c.max_col_move_W << ',' << c.frob_move_W << ',' << c.frob_move_A << ','
            << fmt_optional(c.min_eig_K) << ',' << fmt_optional(c.drift_K) << ',' << c.max_flips << '\n';
}

}  // namespace ntkae
