#pragma once

#include "ntkae/autoencoder.hpp"
#include "ntkae/dataset.hpp"
#include "ntkae/kernels.hpp"
#include "ntkae/training.hpp"

#include <vector>

namespace ntkae {

/// First-order Taylor model of a jointly trained autoencoder around its
/// initialization. The tangent kernel here is the parameter-Jacobian Gram
///   NTK0 = grad f0(X) grad f0(X)^T = (G(0) + H(0)) / d,
/// under which vec(f_t(X)) evolves as d/dt vec(f) = NTK0 vec(X - f) in
/// gradient-flow time t (t = k * eta for gradient descent).
struct LinearizedSolution {
    Vector eigvals;  // ascending, negatives clamped to 0
    Matrix eigvecs;  // orthonormal columns
    Matrix f0_train; // d x n initial reconstructions
    Autoencoder model0;
    Dataset ds;

    [[nodiscard]] double lambda_min() const { return eigvals(0); }
    [[nodiscard]] double lambda_max() const { return eigvals(eigvals.size() - 1); }
    /// Eigenvalues at or below this are treated as zero by the pseudo-inverse.
    [[nodiscard]] double pinv_threshold() const { return 1e-10 * lambda_max(); }
};

LinearizedSolution build_linearized(const Autoencoder& model0, const Dataset& ds, const KernelOptions& opts = {});

/// Tangent kernel between probe columns P (d x p) and the training set: (p d) x (n d).
Matrix probe_kernel(const LinearizedSolution& sol, const Matrix& P);

/// vec(f_t(X)) = (I - e^{-NTK0 t}) vec(X) + e^{-NTK0 t} vec(f0(X)); t may be +infinity.
Matrix lin_predict_train(const LinearizedSolution& sol, double t);

struct SignalNoise {
    Vector mu;     // kernel-weighted combination of the training samples
    Vector gamma;  // initialization-dependent residual
};

SignalNoise lin_predict_test(const LinearizedSolution& sol, const Vector& x, double t);
/// Column-wise lin_predict_test for a probe matrix (d x p); returns mu and gamma as d x p.
std::pair<Matrix, Matrix> lin_predict_probes(const LinearizedSolution& sol, const Matrix& P, double t);

/// ||omega(t)|| where omega is the parameter displacement of the linearized model.
double lin_param_drift(const LinearizedSolution& sol, double t);

struct MemorizationRecord {
    std::vector<double> kernel_scores;  // trace of the (probe, i) tangent-kernel block
    double mu_norm = 0.0;
    double gamma_norm = 0.0;
    double nearest_train_overlap = 0.0;  // max_i <probe, x_i>
};

std::vector<MemorizationRecord> memorization_profile(const LinearizedSolution& sol, const Matrix& probes, double t);

/// Outputs of a trained network at probe points along a gradient-descent run.
struct Trajectory {
    double eta = 0.0;
    std::uint64_t init_seed = 0;
    Matrix train_X;
    Matrix probes;                   // d x p
    std::vector<long> steps;
    std::vector<Matrix> outputs;     // f_k(probes), one d x p matrix per recorded step
};

/// Trains `model0` jointly with step size eta and records probe outputs at `record_steps`.
Trajectory record_trajectory(const Autoencoder& model0, const Dataset& ds, double eta, const std::vector<long>& record_steps,
                             const Matrix& probes);

struct GapRecord {
    long step = 0;
    double t = 0.0;
    Index probe = 0;
    double gap = 0.0;  // ||f_t(x) - f_t^lin(x)||
};

/// Gaps at matched times t = k * eta.
std::vector<GapRecord> agreement_gap(const Trajectory& trajectory, const LinearizedSolution& sol);

/// fraction * 2 / (lambda_max + lambda_min) of the limiting tangent kernel
/// (M_G + M_H) / d: a step size far below the gradient-descent stability limit.
double stable_step_size(const Dataset& ds, double fraction = 0.1);

enum class ProbeKind { train_point, perturbed, orthogonal, random };
ProbeKind parse_probe_kind(std::string_view text);
std::string_view to_string(ProbeKind kind);

/// Unit probe vectors of one kind. Orthogonal probes need d > rank(X).
Matrix make_probes(const Dataset& ds, ProbeKind kind, Index count, std::uint64_t seed, double perturbation = 0.1);

}  // namespace ntkae
