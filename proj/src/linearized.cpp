#include "ntkae/linearized.hpp"

#include "ntkae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ntkae {

namespace {

double decay(double lambda, double t) {
    if (t == 0.0 || lambda <= 0.0) return 1.0;
    return std::exp(-lambda * t);
}

// Spectral weight of K^+ (I - e^{-K t}) along an eigenvalue.
double inverse_weight(double lambda, double t, double threshold) {
    if (lambda <= threshold) return 0.0;
    return (1.0 - decay(lambda, t)) / lambda;
}

Eigen::Map<const Vector> vec_of(const Matrix& M) { return {M.data(), M.size()}; }

void require_invertible(const LinearizedSolution& sol, const char* what) {
    if (!(sol.lambda_min() > kDegenerateLambda0))
        throw DegenerateDataError(std::string(what) + ": tangent kernel is singular (lambda_min = " +
                                  std::to_string(sol.lambda_min()) + ")");
}

Vector inverse_weights(const LinearizedSolution& sol, double t) {
    Vector w(sol.eigvals.size());
    const double thr = sol.pinv_threshold();
    for (Index i = 0; i < w.size(); ++i) w(i) = inverse_weight(sol.eigvals(i), t, thr);
    return w;
}

}  // namespace

LinearizedSolution build_linearized(const Autoencoder& model0, const Dataset& ds, const KernelOptions& opts) {
    require(model0.regime() != Regime::tied, "build_linearized: the tangent kernel is defined for untied models only");
    require(model0.d() == ds.d(), "build_linearized: dimension mismatch");
    const KernelMatrix K = empirical_K(model0, ds.X, Regime::jointly, opts);
    const Matrix ntk = K.data / double(ds.d());

    Eigen::SelfAdjointEigenSolver<Matrix> solver(ntk);
    if (solver.info() != Eigen::Success) throw Error("build_linearized: eigensolver failed");
    Vector eigvals = solver.eigenvalues();
    const double top = eigvals.maxCoeff();
    if (eigvals(0) < -1e-8 * std::max(top, 0.0))
        throw Error("build_linearized: tangent kernel is not positive semi-definite (lambda_min = " + std::to_string(eigvals(0)) + ")");
    eigvals = eigvals.cwiseMax(0.0);

    return {std::move(eigvals), solver.eigenvectors(), batch_outputs(model0, ds.X), model0, ds};
}

Matrix probe_kernel(const LinearizedSolution& sol, const Matrix& P) {
    const Index d = sol.ds.d();
    return (cross_G(sol.model0, P, sol.ds.X) + kron_identity(cross_H_factor(sol.model0, P, sol.ds.X), d)) / double(d);
}

Matrix lin_predict_train(const LinearizedSolution& sol, double t) {
    require(t >= 0.0, "lin_predict_train: t must be non-negative");
    const Matrix residual0 = sol.ds.X - sol.f0_train;
    Vector coeff = sol.eigvecs.transpose() * vec_of(residual0);
    for (Index i = 0; i < coeff.size(); ++i) coeff(i) *= decay(sol.eigvals(i), t);
    const Vector remaining = sol.eigvecs * coeff;
    Matrix out = sol.ds.X;
    Eigen::Map<Vector>(out.data(), out.size()) -= remaining;
    return out;
}

std::pair<Matrix, Matrix> lin_predict_probes(const LinearizedSolution& sol, const Matrix& P, double t) {
    require(t >= 0.0, "lin_predict_test: t must be non-negative");
    require_invertible(sol, "lin_predict_test");
    const Index d = sol.ds.d(), p = P.cols();
    for (Index a = 0; a < p; ++a)
        require(std::abs(P.col(a).norm() - 1.0) <= 1e-6, "lin_predict_test: probe " + std::to_string(a) + " is not a unit vector");

    const Vector w = inverse_weights(sol, t);
    const Matrix Kx = probe_kernel(sol, P);  // (p d) x (n d)
    // Shared operator K(x, X) V diag(w) V^T applied to vec(X) and vec(f0(X)).
    const Matrix KV = Kx * sol.eigvecs;
    const Vector signal = KV * (w.asDiagonal() * (sol.eigvecs.transpose() * vec_of(sol.ds.X)));
    const Vector noise = KV * (w.asDiagonal() * (sol.eigvecs.transpose() * vec_of(sol.f0_train)));

    Matrix mu(d, p), gamma(d, p);
    const Matrix f0 = batch_outputs(sol.model0, P);
    for (Index a = 0; a < p; ++a) {
        mu.col(a) = signal.segment(a * d, d);
        gamma.col(a) = f0.col(a) - noise.segment(a * d, d);
    }
    return {std::move(mu), std::move(gamma)};
}

SignalNoise lin_predict_test(const LinearizedSolution& sol, const Vector& x, double t) {
    require(x.size() == sol.ds.d(), "lin_predict_test: dimension mismatch");
    auto [mu, gamma] = lin_predict_probes(sol, Matrix(x), t);
    return {mu.col(0), gamma.col(0)};
}

double lin_param_drift(const LinearizedSolution& sol, double t) {
    require(t >= 0.0, "lin_param_drift: t must be non-negative");
    require_invertible(sol, "lin_param_drift");
    // ||omega||^2 = r^T M NTK0 M r with M = NTK0^{-1} (I - e^{-NTK0 t}); diagonal in the eigenbasis.
    const Matrix residual0 = sol.ds.X - sol.f0_train;
    const Vector coeff = sol.eigvecs.transpose() * vec_of(residual0);
    const double thr = sol.pinv_threshold();
    double total = 0.0;
    for (Index i = 0; i < coeff.size(); ++i) {
        const double w = inverse_weight(sol.eigvals(i), t, thr);
        total += w * w * sol.eigvals(i) * coeff(i) * coeff(i);
    }
    return std::sqrt(total);
}

std::vector<MemorizationRecord> memorization_profile(const LinearizedSolution& sol, const Matrix& probes, double t) {
    const auto [mu, gamma] = lin_predict_probes(sol, probes, t);
    const Matrix Kx = probe_kernel(sol, probes);
    const Index d = sol.ds.d(), n = sol.ds.n();
    const Matrix overlaps = probes.transpose() * sol.ds.X;
    std::vector<MemorizationRecord> out(static_cast<std::size_t>(probes.cols()));
    for (Index a = 0; a < probes.cols(); ++a) {
        auto& rec = out[static_cast<std::size_t>(a)];
        rec.kernel_scores.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) rec.kernel_scores[static_cast<std::size_t>(i)] = Kx.block(a * d, i * d, d, d).trace();
        rec.mu_norm = mu.col(a).norm();
        rec.gamma_norm = gamma.col(a).norm();
        rec.nearest_train_overlap = overlaps.row(a).maxCoeff();
    }
    return out;
}

Trajectory record_trajectory(const Autoencoder& model0, const Dataset& ds, double eta, const std::vector<long>& record_steps,
                             const Matrix& probes) {
    require(!record_steps.empty(), "record_trajectory: no steps requested");
    require(std::is_sorted(record_steps.begin(), record_steps.end()), "record_trajectory: steps must be ascending");
    Trajectory traj;
    traj.eta = eta;
    traj.init_seed = model0.seed();
    traj.train_X = ds.X;
    traj.probes = probes;

    TrainConfig cfg;
    cfg.regime = Regime::jointly;
    cfg.steps = record_steps.back();
    cfg.eta = eta;
    cfg.checkpoint_stride = 0;
    cfg.loss_floor = 0.0;
    std::size_t next = 0;
    train(model0, ds, cfg, [&](long k, const Autoencoder& model) {
        while (next < record_steps.size() && record_steps[next] == k) {
            traj.steps.push_back(k);
            traj.outputs.push_back(batch_outputs(model, probes));
            ++next;
        }
    });
    return traj;
}

std::vector<GapRecord> agreement_gap(const Trajectory& trajectory, const LinearizedSolution& sol) {
    if (trajectory.init_seed != sol.model0.seed()) throw PreconditionError("agreement_gap: trajectory and linearization use different init seeds");
    if (trajectory.train_X.rows() != sol.ds.X.rows() || trajectory.train_X.cols() != sol.ds.X.cols() ||
        trajectory.train_X != sol.ds.X)
        throw PreconditionError("agreement_gap: trajectory and linearization use different datasets");
    std::vector<GapRecord> out;
    for (std::size_t s = 0; s < trajectory.steps.size(); ++s) {
        const double t = double(trajectory.steps[s]) * trajectory.eta;
        const auto [mu, gamma] = lin_predict_probes(sol, trajectory.probes, t);
        const Matrix lin = mu + gamma;
        for (Index a = 0; a < trajectory.probes.cols(); ++a)
            out.push_back({trajectory.steps[s], t, a, (trajectory.outputs[s].col(a) - lin.col(a)).norm()});
    }
    return out;
}

ProbeKind parse_probe_kind(std::string_view text) {
    if (text == "train-point") return ProbeKind::train_point;
    if (text == "perturbed") return ProbeKind::perturbed;
    if (text == "orthogonal") return ProbeKind::orthogonal;
    if (text == "random") return ProbeKind::random;
    throw PreconditionError("unknown probe kind '" + std::string(text) + "'");
}

std::string_view to_string(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::train_point: return "train-point";
        case ProbeKind::perturbed: return "perturbed";
        case ProbeKind::orthogonal: return "orthogonal";
        case ProbeKind::random: return "random";
    }
    return "unknown";
}

Matrix make_probes(const Dataset& ds, ProbeKind kind, Index count, std::uint64_t seed, double perturbation) {
    require(count >= 1, "make_probes: count must be positive");
    const Index d = ds.d(), n = ds.n();
    Matrix P(d, count);
    Rng rng = make_rng(seed, {stream::probe, static_cast<std::uint64_t>(kind)});
    auto gaussian = [&] {
        Vector g(d);
        for (Index p = 0; p < d; ++p) g(p) = standard_normal(rng);
        return g;
    };

    Matrix basis;
    if (kind == ProbeKind::orthogonal) {
        Eigen::JacobiSVD<Matrix> svd(ds.X, Eigen::ComputeFullU);
        const auto& s = svd.singularValues();
        Index rank = 0;
        while (rank < s.size() && s(rank) > 1e-10 * s(0)) ++rank;
        if (rank >= d) throw PreconditionError("make_probes: the training set spans R^d; no orthogonal probes exist");
        basis = svd.matrixU().rightCols(d - rank);
    }

    for (Index a = 0; a < count; ++a) {
        Vector v;
        switch (kind) {
            case ProbeKind::train_point: v = ds.X.col(a % n); break;
            case ProbeKind::perturbed: {
                Vector g = gaussian();
                v = ds.X.col(a % n) + perturbation * g / g.norm();
                break;
            }
            case ProbeKind::orthogonal: v = basis * (basis.transpose() * gaussian()); break;
            case ProbeKind::random: v = gaussian(); break;
        }
        P.col(a) = v / v.norm();
    }
    return P;
}

double stable_step_size(const Dataset& ds, double fraction) {
    require(fraction > 0.0 && fraction < 1.0, "stable_step_size: fraction must lie in (0, 1)");
    const LimitingKernelFactor F = analytic_Kinf(ds, Regime::jointly);
    const Vector ev = symmetric_eigenvalues(F.factor());
    const double d = static_cast<double>(ds.d());
    return fraction * 2.0 * d / (ev(ev.size() - 1) + std::max(ev(0), 0.0));
}

}  // namespace ntkae
