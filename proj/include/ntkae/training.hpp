#pragma once

#include "ntkae/autoencoder.hpp"
#include "ntkae/dataset.hpp"
#include "ntkae/kernels.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace ntkae {

struct TrainConfig {
    Regime regime = Regime::jointly;
    long steps = 1000;
    std::optional<double> eta;     // nullopt: theorem step size from default_step_size
    double eta_constant = 0.0;     // 0: 1/4 for weakly, 1/64 for jointly and tied
    long checkpoint_stride = 100;  // 0: only the first and last step
    long kernel_eval_stride = 0;   // 0: never assemble K(k)
    double loss_floor = 1e-12;
    double delta = 0.1;            // confidence parameter used by the radius formulas
    KernelOptions kernel;
};

struct Checkpoint {
    long step = 0;
    double max_col_move_W = 0.0;  // max_r ||w_r(k) - w_r(0)||
    double frob_move_W = 0.0;
    double frob_move_A = 0.0;
    std::optional<double> min_eig_K;
    std::optional<double> drift_K;  // ||K(k) - K(0)||
    long max_flips = 0;
};

struct MovementRadii {
    double R_prime = 0.0;     // gradient flow, weakly
    double R_prime_gd = 0.0;  // gradient descent, weakly (per-column)
    double R_w_prime = 0.0;   // gradient descent, jointly (Frobenius)
    double R_a_prime = 0.0;
    double R_ball = 0.0;      // perturbation ball for the weakly kernel
    double initial_residual_sq = 0.0;        // measured ||X - U(0)||_F^2
    double initial_residual_sq_bound = 0.0;  // Markov bound 2n/delta
};

struct TrainTrace {
    std::vector<double> loss;      // 0.5 ||X - U(k)||_F^2, k = 0..K (shorter on early stop)
    std::vector<double> envelope;  // (1 - eta lambda0 / (2d))^k * loss[0]
    std::vector<Checkpoint> checkpoints;
    TrainConfig config;
    double eta = 0.0;
    double lambda0_hat = 0.0;
    double lambda_n = 0.0;
    MovementRadii radii;
    long loss_increases = 0;         // count of k with loss[k+1] > loss[k]
    long envelope_violations = 0;    // count of k with loss[k] > envelope[k]
    bool early_stopped = false;
    bool extension_step_size = false;  // tied regime borrows the jointly formula

    [[nodiscard]] bool monotone() const { return loss_increases == 0; }
    [[nodiscard]] double residual_sq(std::size_t k) const { return 2.0 * loss.at(k); }
};

struct TrainResult {
    Autoencoder model;
    TrainTrace trace;
};

/// Called with (k, model after k steps) for k = 0..K.
using StepObserver = std::function<void(long, const Autoencoder&)>;

/// weakly: c lambda0 / (n d lambda_n); jointly and tied: c lambda0 / (n lambda_n).
double default_step_size(Regime regime, const SpectralStats& stats, Index n, Index d, double eta_constant = 0.0);

/// (1 - eta lambda0 / (2d))^k * initial; requires eta lambda0 < 2d.
double theoretical_envelope(double initial, double eta, double lambda0_hat, Index d, long k);

/// Radii are evaluated from the measured initial residual and weight norms.
/// `R_w`, `R_a` feed the coupled jointly radii; passing 0 gives the tightest values.
MovementRadii movement_radii(Regime regime, const Autoencoder& model0, const Dataset& ds, const SpectralStats& stats,
                             double delta, double R_w = 0.0, double R_a = 0.0);

/// Width requirements of the convergence theorems with the unspecified constant set to 1.
/// The weakly bound appears with both delta^3 and delta^2 in the source, so both are kept.
struct WidthBounds {
    double weakly_delta3 = 0.0;  // n^5 d^4 lambda_n / (lambda0^4 delta^3)
    double weakly_delta2 = 0.0;  // n^5 d^4 lambda_n / (lambda0^4 delta^2)
    double jointly = 0.0;        // n d lambda_n^3 / (lambda0^4 delta^2)
};
WidthBounds width_bounds(const SpectralStats& stats, Index n, Index d, double delta);

std::vector<long> count_pattern_flips(const Autoencoder& model_k, const Autoencoder& model_0, const Dataset& ds);

TrainResult train(const Autoencoder& model0, const Dataset& ds, const TrainConfig& cfg, const StepObserver& observer = {});

// Trace CSV `step,loss,envelope` and checkpoint CSV
// `step,max_col_move_W,frob_move_W,frob_move_A,min_eig_K,drift_K,max_flips`.
void write_trace_csv(const TrainTrace& trace, const std::string& path);
void write_checkpoint_csv(const TrainTrace& trace, const std::string& path);

double matrix_spectral_norm(const Matrix& M);

}  // namespace ntkae
