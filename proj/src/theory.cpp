#include "ntkae/theory.hpp"

#include "ntkae/parallel.hpp"
#include "ntkae/rng.hpp"
#include "ntkae/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace ntkae {

namespace {

Vector random_unit_vector(Index d, std::uint64_t seed) {
    Rng rng = make_rng(seed, {stream::probe, 0xf1});
    Vector x(d);
    for (Index p = 0; p < d; ++p) x(p) = standard_normal(rng);
    return x / x.norm();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    if (k == 0) return std::numeric_limits<double>::quiet_NaN();
    return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

TheoryRecord monte_carlo_record(std::string name, double theoretical, const std::vector<double>& samples, double sigmas) {
    const MeanEstimate est = estimate_mean(samples);
    TheoryRecord rec;
    rec.name = std::move(name);
    rec.theoretical = theoretical;
    rec.empirical = est.mean;
    rec.std_error = est.std_error;
    rec.trials = est.count;
    rec.tolerance = sigmas * est.std_error;
    rec.decide();
    return rec;
}

}  // namespace

void TheoryRecord::decide() {
    if (!error.empty()) {
        pass = false;
        return;
    }
    if (!std::isfinite(empirical)) {
        pass = false;
        return;
    }
    pass = one_sided ? empirical <= theoretical + tolerance : std::abs(empirical - theoretical) <= tolerance;
}

MeanEstimate estimate_mean(const std::vector<double>& samples) {
    MeanEstimate est;
    est.count = static_cast<long>(samples.size());
    if (samples.empty()) return est;
    // Two-pass mean/variance; summation order is the sample order.
    double sum = 0.0;
    for (double s : samples) sum += s;
    est.mean = sum / double(samples.size());
    if (samples.size() > 1) {
        double sq = 0.0;
        for (double s : samples) sq += (s - est.mean) * (s - est.mean);
        est.std_error = std::sqrt(sq / double(samples.size() - 1) / double(samples.size()));
    }
    return est;
}

double tied_init_loss_expectation(Index d, Index m, double sigma_sq) {
    const double bias = sigma_sq / 2.0 - 1.0;
    return bias * bias + (2.0 * double(d) + 3.0) * sigma_sq * sigma_sq / (4.0 * double(m));
}

TheoryRecord check_weight_tied_init_loss(Index d, Index m, double sigma_sq, long trials, std::uint64_t seed, double sigmas) {
    require(trials >= 100, "check_weight_tied_init_loss: need at least 100 trials");
    const Vector x = random_unit_vector(d, seed);
    std::vector<double> samples(static_cast<std::size_t>(trials));
    for (long t = 0; t < trials; ++t) {
        const Autoencoder model = init_model(d, m, Regime::tied, sigma_sq, substream_seed(seed, {stream::trial, std::uint64_t(t)}));
        samples[static_cast<std::size_t>(t)] = (x - forward(model, x)).squaredNorm();
    }
    TheoryRecord rec = monte_carlo_record("tied_init_loss_d" + std::to_string(d) + "_m" + std::to_string(m),
                                          tied_init_loss_expectation(d, m, sigma_sq), samples, sigmas);
    rec.note = "sigma_sq=" + fmt(sigma_sq);
    return rec;
}

InitialLossReport check_initial_loss_expectation(Index n, Index d, Index m, long trials, std::uint64_t seed, double sigmas,
                                                 const std::vector<double>& deltas) {
    require(trials >= 2, "check_initial_loss_expectation: need at least 2 trials");
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, n, d, seed);
    std::vector<double> samples(static_cast<std::size_t>(trials));
    for (long t = 0; t < trials; ++t) {
        const Autoencoder model = init_model(d, m, Regime::jointly, 1.0, substream_seed(seed, {stream::trial, std::uint64_t(t)}));
        samples[static_cast<std::size_t>(t)] = 2.0 * batch_forward(model, ds.X).loss;
    }
    InitialLossReport report;
    report.expectation = monte_carlo_record("initial_loss_n" + std::to_string(n), 1.5 * double(n), samples, sigmas);
    for (double delta : deltas) {
        const double threshold = 2.0 * double(n) / delta;
        std::vector<double> exceed(samples.size());
        std::transform(samples.begin(), samples.end(), exceed.begin(), [&](double s) { return s > threshold ? 1.0 : 0.0; });
        TheoryRecord rec;
        rec.name = "initial_loss_markov_delta" + fmt(delta);
        rec.theoretical = delta;
        const MeanEstimate est = estimate_mean(exceed);
        rec.empirical = est.mean;
        rec.trials = est.count;
        // Binomial standard error at the bound, so an all-zero sample still gets a tolerance.
        rec.std_error = std::sqrt(delta * (1.0 - delta) / double(trials));
        rec.tolerance = sigmas * rec.std_error;
        rec.one_sided = true;
        rec.note = "threshold=" + fmt(threshold);
        rec.decide();
        report.markov.push_back(rec);
    }
    return report;
}

TheoryRecord check_relu_moment(Index d, long trials, std::uint64_t seed, double sigmas) {
    require(trials >= 10000, "check_relu_moment: need at least 1e4 trials");
    const Vector x = random_unit_vector(d, seed);
    std::vector<double> samples(static_cast<std::size_t>(trials));
    Rng rng = make_rng(seed, {stream::trial});
    Vector w(d);
    for (long t = 0; t < trials; ++t) {
        for (Index p = 0; p < d; ++p) w(p) = standard_normal(rng);
        const double h = relu(w.dot(x));
        samples[static_cast<std::size_t>(t)] = h * h * w.squaredNorm();
    }
    return monte_carlo_record("relu_moment_d" + std::to_string(d), (double(d) + 2.0) / 2.0, samples, sigmas);
}

ConcentrationReport check_kernel_concentration(const Dataset& ds, const std::vector<Index>& m_list,
                                               const std::vector<std::uint64_t>& seeds, KernelKind kernel,
                                               double min_seed_fraction, long allowed_inversions, const KernelOptions& opts) {
    require(!m_list.empty() && !seeds.empty(), "check_kernel_concentration: empty sweep");
    require(kernel == KernelKind::G || kernel == KernelKind::H || kernel == KernelKind::K,
            "check_kernel_concentration: kernel must be G, H or K");
    check_capacity(ds.n() * ds.d(), opts);

    ConcentrationReport report;
    report.kernel = kernel;
    report.m_list = m_list;
    report.lambda0_hat = spectral_stats(ds).lambda0_hat;

    const LimitingKernelFactor limit = analytic_Kinf(ds, Regime::jointly);
    Matrix M;
    switch (kernel) {
        case KernelKind::G: M = limit.M_G; break;
        case KernelKind::H: M = limit.M_H; break;
        default: M = limit.M_G + limit.M_H; break;
    }
    const KernelMatrix K_inf{ds.n(), ds.d(), KernelKind::Kinf, kron_identity(M, ds.d())};

    for (Index m : m_list) {
        for (std::uint64_t seed : seeds) {
            const Autoencoder model = init_model(ds.d(), m, Regime::jointly, 1.0, seed);
            KernelMatrix K0;
            switch (kernel) {
                case KernelKind::G: K0 = empirical_G(model, ds.X, opts); break;
                case KernelKind::H: K0 = empirical_H(model, ds.X, opts); break;
                default: K0 = empirical_K(model, ds.X, Regime::jointly, opts); break;
            }
            report.points.push_back({m, seed, kernel_drift(K0, K_inf), min_eigenvalue(K0)});
        }
    }

    const std::string tag = kernel == KernelKind::G ? "G" : kernel == KernelKind::H ? "H" : "K";
    const double threshold = 0.75 * report.lambda0_hat;
    for (std::size_t a = 0; a < m_list.size(); ++a) {
        std::vector<double> drifts;
        long ok = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto& pt = report.points[a * seeds.size() + s];
            drifts.push_back(pt.drift);
            if (pt.min_eig >= threshold) ++ok;
        }
        report.median_drift.push_back(median(drifts));
        report.eig_pass_fraction.push_back(double(ok) / double(seeds.size()));

        TheoryRecord rec;
        rec.name = "concentration_" + tag + "_median_drift_m" + std::to_string(m_list[a]);
        rec.theoretical = 0.0;
        rec.empirical = report.median_drift.back();
        rec.tolerance = std::numeric_limits<double>::infinity();
        rec.trials = static_cast<long>(seeds.size());
        rec.note = "reported only";
        rec.decide();
        report.records.push_back(rec);
    }
    for (std::size_t a = 1; a < m_list.size(); ++a)
        if (report.median_drift[a] > report.median_drift[a - 1]) ++report.inversions;

    TheoryRecord trend;
    trend.name = "concentration_" + tag + "_trend_inversions";
    trend.theoretical = double(allowed_inversions);
    trend.empirical = double(report.inversions);
    trend.one_sided = true;
    trend.trials = static_cast<long>(m_list.size());
    trend.note = "median drift non-increasing in m";
    trend.decide();
    report.records.push_back(trend);

    // Required fraction of seeds with lambda_min(K(0)) >= 3 lambda0 / 4 at the widest m.
    TheoryRecord eig;
    eig.name = "concentration_" + tag + "_min_eig_m" + std::to_string(m_list.back());
    eig.theoretical = min_seed_fraction;
    eig.empirical = report.eig_pass_fraction.back();
    eig.trials = static_cast<long>(seeds.size());
    eig.note = "fraction of seeds with lambda_min >= " + fmt(threshold);
    eig.pass = eig.empirical >= eig.theoretical;
    report.records.push_back(eig);
    return report;
}

LipschitzReport check_H_lipschitz(const Autoencoder& model0, const Dataset& ds, const std::vector<double>& radii, long trials,
                                  std::uint64_t seed, double slack_tolerance) {
    require(model0.d() == ds.d(), "check_H_lipschitz: dimension mismatch");
    const Index d = model0.d(), m = model0.m();
    const double norm_W0 = matrix_spectral_norm(model0.W());
    const Matrix H0 = cross_H_factor(model0, ds.X, ds.X);
    // The H kernel is factor (x) I, so its spectral norm equals that of the factor.
    auto h_gap = [&](const Matrix& D) {
        const Autoencoder moved = model0.with_encoder(model0.W() + D);
        const Matrix diff = cross_H_factor(moved, ds.X, ds.X) - H0;
        const Matrix sym = 0.5 * (diff + diff.transpose());
        return symmetric_eigenvalues(sym).cwiseAbs().maxCoeff();
    };

    Eigen::JacobiSVD<Matrix> svd(ds.X, Eigen::ComputeThinU);
    const Vector top_direction = svd.matrixU().col(0);

    LipschitzReport report;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
        const double R = radii[ri];
        require(R >= 0.0, "check_H_lipschitz: radius must be non-negative");
        const double bound = ds.lambda_n / double(m) * (2.0 * norm_W0 + R) * R;
        double worst_slack = std::numeric_limits<double>::infinity();
        double worst_lhs = 0.0;
        for (long t = 0; t <= trials; ++t) {
            Matrix D;
            const bool adversarial = t == trials;
            if (adversarial) {
                D = R * top_direction * Vector::Constant(m, 1.0 / std::sqrt(double(m))).transpose();
            } else {
                Rng rng = make_rng(seed, {stream::perturbation, ri, std::uint64_t(t)});
                D.resize(d, m);
                for (Index c = 0; c < m; ++c)
                    for (Index p = 0; p < d; ++p) D(p, c) = standard_normal(rng);
                const double norm = D.norm();
                D *= norm > 0.0 ? R / norm : 0.0;
            }
            const LipschitzTrial trial{R, R == 0.0 ? 0.0 : h_gap(D), bound, adversarial};
            report.trials.push_back(trial);
            if (trial.slack() < worst_slack) {
                worst_slack = trial.slack();
                worst_lhs = trial.lhs;
            }
        }
        TheoryRecord rec;
        rec.name = "H_lipschitz_R" + fmt(R);
        rec.theoretical = bound;
        rec.empirical = worst_lhs;
        rec.tolerance = slack_tolerance;
        rec.trials = trials + 1;
        rec.one_sided = true;
        rec.note = "min slack " + fmt(worst_slack);
        rec.decide();
        report.records.push_back(rec);
    }
    return report;
}

TheoryRecord check_analytic_self_value(Index d, long trials, std::uint64_t seed) {
    double worst = 0.0;
    for (long t = 0; t < trials; ++t) {
        const Vector x = random_unit_vector(d, substream_seed(seed, {stream::trial, std::uint64_t(t)}));
        const Matrix K = analytic_pair_ntk(x, x);
        worst = std::max(worst, (K - Matrix::Identity(d, d) / double(d)).cwiseAbs().maxCoeff());
    }
    TheoryRecord rec;
    rec.name = "analytic_self_value_d" + std::to_string(d);
    rec.theoretical = 0.0;
    rec.empirical = worst;
    rec.tolerance = 1e-12;
    rec.trials = trials;
    rec.one_sided = true;
    rec.note = "max entrywise |K(x,x) - I/d|";
    rec.decide();
    return rec;
}

// ---------------------------------------------------------------------------

bool TheoryReport::all_pass() const {
    return std::all_of(records.begin(), records.end(), [](const TheoryRecord& r) { return r.pass; });
}

const std::vector<std::string>& theory_check_names() {
    static const std::vector<std::string> names = {"analytic", "relu_moment", "tied_loss", "initial_loss", "concentration", "lipschitz"};
    return names;
}

TheoryReport run_theory_suite(const TheorySuiteConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    for (const auto& name : cfg.only)
        if (std::find(theory_check_names().begin(), theory_check_names().end(), name) == theory_check_names().end())
            throw PreconditionError("unknown theory check '" + name + "'");
    auto selected = [&](const std::string& name) {
        return cfg.only.empty() || std::find(cfg.only.begin(), cfg.only.end(), name) != cfg.only.end();
    };

    using Job = std::function<std::vector<TheoryRecord>(std::uint64_t)>;
    std::vector<std::pair<std::string, Job>> jobs;
    const double sigmas = cfg.sigmas;

    if (selected("analytic"))
        jobs.emplace_back("analytic", [](std::uint64_t s) {
            return std::vector<TheoryRecord>{check_analytic_self_value(2, 100, s), check_analytic_self_value(8, 100, s),
                                             check_analytic_self_value(32, 100, s)};
        });
    if (selected("relu_moment"))
        jobs.emplace_back("relu_moment", [&](std::uint64_t s) {
            return std::vector<TheoryRecord>{check_relu_moment(4, cfg.relu_moment_trials, s, sigmas)};
        });
    if (selected("tied_loss"))
        jobs.emplace_back("tied_loss", [&](std::uint64_t s) {
            return std::vector<TheoryRecord>{check_weight_tied_init_loss(16, 512, 2.0, cfg.tied_trials, s, sigmas),
                                             check_weight_tied_init_loss(10, 100, 2.0, cfg.tied_trials, s + 1, sigmas)};
        });
    if (selected("initial_loss"))
        jobs.emplace_back("initial_loss", [&](std::uint64_t s) {
            auto rep = check_initial_loss_expectation(32, 16, 2048, cfg.initial_loss_trials, s, sigmas);
            std::vector<TheoryRecord> out{rep.expectation};
            out.insert(out.end(), rep.markov.begin(), rep.markov.end());
            return out;
        });
    if (selected("concentration"))
        jobs.emplace_back("concentration", [&](std::uint64_t s) {
            const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 16, 8, s);
            std::vector<std::uint64_t> seeds;
            for (long i = 0; i < cfg.concentration_seeds; ++i) seeds.push_back(substream_seed(s, {stream::trial, std::uint64_t(i)}));
            std::vector<TheoryRecord> out;
            for (KernelKind kind : {KernelKind::G, KernelKind::H}) {
                auto rep = check_kernel_concentration(ds, {256, 1024, 4096}, seeds, kind);
                out.insert(out.end(), rep.records.begin(), rep.records.end());
            }
            return out;
        });
    if (selected("lipschitz"))
        jobs.emplace_back("lipschitz", [&](std::uint64_t s) {
            const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 16, 8, s);
            const Autoencoder model = init_model(8, 1024, Regime::jointly, 1.0, s + 1);
            return check_H_lipschitz(model, ds, {0.1, 1.0, 10.0}, cfg.lipschitz_trials, s + 2).records;
        });

    // Each check owns seed = suite seed + its index in the full check list.
    std::vector<std::vector<TheoryRecord>> results(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        const auto& [name, job] = jobs[j];
        const auto index = static_cast<std::uint64_t>(
            std::find(theory_check_names().begin(), theory_check_names().end(), name) - theory_check_names().begin());
        try {
            results[j] = job(cfg.seed + index);
        } catch (const std::exception& e) {
            TheoryRecord rec;
            rec.name = name;
            rec.error = e.what();
            rec.decide();
            results[j] = {rec};
        }
    });

    TheoryReport report;
    report.seed = cfg.seed;
    for (auto& r : results) report.records.insert(report.records.end(), r.begin(), r.end());
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

void write_theory_csv(const TheoryReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "check,theoretical,empirical,stderr,tolerance,pass\n";
    for (const auto& r : report.records)
        out << r.name << ',' << r.theoretical << ',' << r.empirical << ',' << r.std_error << ',' << r.tolerance << ','
            << (r.pass ? 1 : 0) << '\n';
}

std::string theory_summary(const TheoryReport& report) {
    std::ostringstream os;
    long passed = 0;
    for (const auto& r : report.records) {
        os << (r.pass ? "PASS " : "FAIL ") << r.name << ": empirical " << fmt(r.empirical) << (r.one_sided ? " <= " : " vs ")
           << fmt(r.theoretical) << " (tol " << fmt(r.tolerance) << ")";
        if (!r.note.empty()) os << " [" << r.note << "]";
        if (!r.error.empty()) os << " error: " << r.error;
        os << '\n';
        passed += r.pass ? 1 : 0;
    }
    os << passed << "/" << report.records.size() << " checks passed, seed " << report.seed << ", " << fmt(report.wall_seconds) << " s\n";
    return os.str();
}

}  // namespace ntkae
