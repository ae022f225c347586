#pragma once

#include "ntkae/autoencoder.hpp"
#include "ntkae/dataset.hpp"
#include "ntkae/kernels.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ntkae {

/// One verified expectation or inequality.
///
/// Two-sided checks pass when |empirical - theoretical| <= tolerance; one-sided
/// checks pass when empirical <= theoretical + tolerance. Monte Carlo
/// tolerances are `sigmas` standard errors of the sample mean.
struct TheoryRecord {
    std::string name;
    double theoretical = 0.0;
    double empirical = 0.0;
    double std_error = 0.0;
    double tolerance = 0.0;
    long trials = 0;
    bool one_sided = false;
    bool pass = false;
    std::string note;
    std::string error;  // set when the check itself threw

    void decide();
};

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long count = 0;
};
MeanEstimate estimate_mean(const std::vector<double>& samples);

/// E ||x - (1/m) W relu(W^T x)||^2 for w_r ~ N(0, sigma^2 I):
/// (sigma^2/2 - 1)^2 + (2d + 3) sigma^4 / (4m) for unit x.
double tied_init_loss_expectation(Index d, Index m, double sigma_sq);
TheoryRecord check_weight_tied_init_loss(Index d, Index m, double sigma_sq, long trials, std::uint64_t seed, double sigmas = 3.0);

struct InitialLossReport {
    TheoryRecord expectation;          // E ||X - U(0)||_F^2 = 3n/2
    std::vector<TheoryRecord> markov;  // P(||X - U(0)||_F^2 > 2n/delta) <= delta
};
InitialLossReport check_initial_loss_expectation(Index n, Index d, Index m, long trials, std::uint64_t seed, double sigmas = 3.0,
                                                 const std::vector<double>& deltas = {0.1, 0.5});

/// E_{w ~ N(0, I)} [relu(w.x)^2 ||w||^2] = (d + 2) / 2 for unit x.
TheoryRecord check_relu_moment(Index d, long trials, std::uint64_t seed, double sigmas = 3.0);

struct ConcentrationPoint {
    Index m = 0;
    std::uint64_t seed = 0;
    double drift = 0.0;    // ||K(0) - K_inf||
    double min_eig = 0.0;  // lambda_min(K(0))
};

struct ConcentrationReport {
    KernelKind kernel = KernelKind::G;
    double lambda0_hat = 0.0;
    std::vector<Index> m_list;
    std::vector<ConcentrationPoint> points;  // m-major, seeds inner
    std::vector<double> median_drift;        // per m
    std::vector<double> eig_pass_fraction;   // per m: fraction of seeds with lambda_min >= 3 lambda0 / 4
    long inversions = 0;                     // increases of median drift along m_list
    std::vector<TheoryRecord> records;
};

/// `kernel` selects G (weakly-trained kernel vs M_G (x) I), H (vs M_H (x) I)
/// or K (G + H vs (M_G + M_H) (x) I).
ConcentrationReport check_kernel_concentration(const Dataset& ds, const std::vector<Index>& m_list,
                                               const std::vector<std::uint64_t>& seeds, KernelKind kernel,
                                               double min_seed_fraction = 0.8, long allowed_inversions = 1,
                                               const KernelOptions& opts = {});

struct LipschitzTrial {
    double radius = 0.0;
    double lhs = 0.0;    // ||H(W0 + D) - H(W0)||
    double bound = 0.0;  // (lambda_n / m)(2 ||W0|| + R) R
    bool adversarial = false;
    [[nodiscard]] double slack() const { return bound - lhs; }
};

struct LipschitzReport {
    std::vector<LipschitzTrial> trials;
    std::vector<TheoryRecord> records;  // one per radius
};

/// Deterministic check of ||H(W0 + D) - H(W0)|| <= (lambda_n/m)(2||W0|| + R) R for
/// random D with ||D||_F = R plus one rank-one perturbation along the top left
/// singular vector of X.
LipschitzReport check_H_lipschitz(const Autoencoder& model0, const Dataset& ds, const std::vector<double>& radii, long trials,
                                  std::uint64_t seed, double slack_tolerance = 1e-8);

/// max |analytic_pair_ntk(x, x) - I/d| over random unit x.
TheoryRecord check_analytic_self_value(Index d, long trials, std::uint64_t seed);

struct TheorySuiteConfig {
    std::uint64_t seed = 2024;
    double sigmas = 3.0;
    std::vector<std::string> only;  // empty: every check
    long relu_moment_trials = 100000;
    long tied_trials = 500;
    long initial_loss_trials = 200;
    long concentration_seeds = 10;
    long lipschitz_trials = 50;
};

struct TheoryReport {
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    std::vector<TheoryRecord> records;
    [[nodiscard]] bool all_pass() const;
};

/// Names accepted by TheorySuiteConfig::only.
const std::vector<std::string>& theory_check_names();

TheoryReport run_theory_suite(const TheorySuiteConfig& cfg);

/// Flat CSV `check,theoretical,empirical,stderr,tolerance,pass`.
void write_theory_csv(const TheoryReport& report, const std::string& path);
std::string theory_summary(const TheoryReport& report);

}  // namespace ntkae
