#include "ntkae/cli.hpp"

#include "ntkae/kernels.hpp"
#include "ntkae/parallel.hpp"
#include "ntkae/rng.hpp"
#include "ntkae/theory.hpp"
#include "ntkae/training.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

namespace ntkae::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%d-%H%M%S");
    return os.str();
}

// Fresh subdirectory per run; the configured directory itself only with overwrite.
fs::path prepare_output(const OutputSection& out, const std::string& command) {
    fs::path dir = out.directory;
    if (!out.overwrite) {
        const fs::path base = out.directory / (command + "-" + timestamp());
        dir = base;
        for (int suffix = 1; fs::exists(dir); ++suffix) dir = base.string() + "-" + std::to_string(suffix);
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw PreconditionError("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".write-test";
    {
        std::ofstream test(probe);
        if (!test) throw PreconditionError("output directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
    std::cout << "output: " << dir.string() << '\n';
    return dir;
}

std::ofstream open_csv(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path.string());
    out.precision(17);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw PreconditionError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string fmt_time(double t) {
    if (std::isinf(t)) return "inf";
    std::ostringstream os;
    os.precision(17);
    os << t;
    return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

json config_fields(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["dataset.kind"] = std::string(to_string(cfg.dataset.kind));
    j["dataset.path"] = cfg.dataset.path ? cfg.dataset.path->string() : "";
    j["dataset.format"] = cfg.dataset.format == DatasetFormat::csv ? "csv" : "binary";
    j["dataset.n"] = cfg.dataset.n;
    j["dataset.d"] = cfg.dataset.d;
    j["dataset.clusters"] = cfg.dataset.clusters;
    j["dataset.seed"] = cfg.dataset_seed();
    j["model.m"] = cfg.model.m;
    j["model.regime"] = std::string(to_string(cfg.model.regime));
    j["model.sigma_sq"] = cfg.model.sigma_sq;
    j["train.steps"] = cfg.train.steps;
    j["train.eta"] = cfg.train.eta ? json(*cfg.train.eta) : json("auto");
    j["train.eta_constant"] = cfg.train.eta_constant;
    j["train.checkpoint_stride"] = cfg.train.checkpoint_stride;
    j["train.kernel_eval_stride"] = cfg.train.kernel_eval_stride;
    j["train.loss_floor"] = cfg.train.loss_floor;
    j["train.delta"] = cfg.train.delta;
    j["sweep.m_list"] = join(cfg.sweep.m_list);
    j["sweep.seed_list"] = join(cfg.sweep.seed_list);
    j["output.directory"] = cfg.output.directory.string();
    j["output.overwrite"] = cfg.output.overwrite;
    return j;
}

TrainConfig train_config(const ExperimentConfig& cfg, Regime regime) {
    TrainConfig tc;
    tc.regime = regime;
    tc.steps = cfg.train.steps;
    tc.eta = cfg.train.eta;
    tc.eta_constant = cfg.train.eta_constant;
    tc.checkpoint_stride = cfg.train.checkpoint_stride;
    tc.kernel_eval_stride = cfg.train.kernel_eval_stride;
    tc.loss_floor = cfg.train.loss_floor;
    tc.delta = cfg.train.delta;
    return tc;
}

struct SweepPoint {
    Index m = 0;
    std::uint64_t seed = 0;
};

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
    std::vector<SweepPoint> points;
    for (Index m : cfg.widths()) {
        require(m >= 1, "sweep widths must be positive");
        for (std::uint64_t s : cfg.seeds()) points.push_back({m, s});
    }
    return points;
}

std::string point_suffix(const SweepPoint& p, bool sweep) {
    return sweep ? "_m" + std::to_string(p.m) + "_seed" + std::to_string(p.seed) : "";
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

SpectralStats checked_stats(const Dataset& ds) {
    const SpectralStats stats = spectral_stats(ds);
    if (stats.degenerate)
        throw DegenerateDataError("dataset has duplicate or nearly parallel samples (lambda0_hat = " +
                                  std::to_string(stats.lambda0_hat) + ")");
    if (ds.renormalized) std::cerr << "warning: dataset columns were renormalized onto the unit sphere\n";
    return stats;
}

json radii_fields(const MovementRadii& r) {
    json j;
    j["radius.R_prime"] = r.R_prime;
    j["radius.R_prime_gd"] = r.R_prime_gd;
    j["radius.R_w_prime"] = r.R_w_prime;
    j["radius.R_a_prime"] = r.R_a_prime;
    j["radius.R_ball"] = r.R_ball;
    j["initial_residual_sq"] = r.initial_residual_sq;
    j["initial_residual_sq_bound"] = r.initial_residual_sq_bound;
    return j;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    const Dataset ds = build_dataset(cfg);
    const SpectralStats stats = checked_stats(ds);
    const auto points = sweep_points(cfg);
    const bool sweep = points.size() > 1;
    const fs::path dir = prepare_output(cfg.output, "train");

    std::vector<std::optional<TrainResult>> results(points.size());
    std::vector<double> wall(points.size());
    const TrainConfig tc = train_config(cfg, cfg.model.regime);
    parallel_for(points.size(), [&](std::size_t i) {
        const auto t0 = Clock::now();
        const Autoencoder model0 =
            init_model(ds.d(), points[i].m, cfg.model.regime, cfg.model.sigma_sq, ExperimentConfig::model_seed(points[i].seed));
        results[i] = train(model0, ds, tc);
        wall[i] = seconds_since(t0);
    });

    // The sweep table is only written when there is more than one point.
    std::ofstream table;
    if (sweep) {
        table = open_csv(dir / "train_sweep.csv");
        table << "m,seed,eta,final_loss,envelope_violations,loss_increases,max_col_move_W,frob_move_W,frob_move_A\n";
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const TrainTrace& tr = results[i]->trace;
        const std::string sfx = point_suffix(points[i], sweep);
        write_trace_csv(tr, (dir / ("trace" + sfx + ".csv")).string());
        write_checkpoint_csv(tr, (dir / ("checkpoints" + sfx + ".csv")).string());

        json j = config_fields(cfg);
        j["model.m"] = points[i].m;
        j["point.seed"] = points[i].seed;
        j["eta"] = tr.eta;
        j["eta_extension"] = tr.extension_step_size;
        j["lambda0_hat"] = tr.lambda0_hat;
        j["lambda_n"] = tr.lambda_n;
        j.update(radii_fields(tr.radii));
        const WidthBounds wb = width_bounds(stats, ds.n(), ds.d(), cfg.train.delta);
        j["width_bound.weakly_delta3"] = wb.weakly_delta3;
        j["width_bound.weakly_delta2"] = wb.weakly_delta2;
        j["width_bound.jointly"] = wb.jointly;
        j["initial_loss"] = tr.loss.front();
        j["final_loss"] = tr.loss.back();
        j["final_envelope"] = tr.envelope.back();
        j["steps_run"] = static_cast<long>(tr.loss.size()) - 1;
        j["early_stopped"] = tr.early_stopped;
        j["loss_increases"] = tr.loss_increases;
        j["envelope_violations"] = tr.envelope_violations;
        j["wall_seconds"] = wall[i];
        write_json(dir / ("summary" + sfx + ".json"), j);

        const Checkpoint& last = tr.checkpoints.back();
        if (sweep)
            table << points[i].m << ',' << points[i].seed << ',' << tr.eta << ',' << tr.loss.back() << ','
                  << tr.envelope_violations << ',' << tr.loss_increases << ',' << last.max_col_move_W << ','
                  << last.frob_move_W << ',' << last.frob_move_A << '\n';
        std::cout << "m=" << points[i].m << " seed=" << points[i].seed << " eta=" << tr.eta
                  << " final loss " << tr.loss.back() << ", envelope violations " << tr.envelope_violations << '\n';
    }
    std::cout << "wall time " << seconds_since(start) << " s\n";
    return kSuccess;
}

int cmd_kernel(const ExperimentConfig& cfg, bool dump) {
    const auto start = Clock::now();
    require(cfg.model.regime != Regime::tied, "kernel: no tangent kernel is defined for the tied regime");
    const Dataset ds = build_dataset(cfg);
    const SpectralStats stats = checked_stats(ds);
    const Regime regime = cfg.model.regime;
    const LimitingKernelFactor Kinf = analytic_Kinf(ds, regime);
    const KernelMatrix Kinf_full = Kinf.expand();
    const double lambda0 = min_eigenvalue(Kinf);
    const auto points = sweep_points(cfg);
    const fs::path dir = prepare_output(cfg.output, "kernel");

    std::vector<double> drift(points.size()), min_eig(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        const Autoencoder model =
            init_model(ds.d(), points[i].m, regime, cfg.model.sigma_sq, ExperimentConfig::model_seed(points[i].seed));
        const KernelMatrix K0 = empirical_K(model, ds.X, regime);
        drift[i] = kernel_drift(K0, Kinf_full);
        min_eig[i] = min_eigenvalue(K0);
        if (dump && i == 0) write_kernel_csv(K0, (dir / "kernel_K0.csv").string());
    });
    if (dump) write_kernel_csv(Kinf_full, (dir / "kernel_Kinf.csv").string());

    auto table = open_csv(dir / "kernel_sweep.csv");
    table << "m,seed,drift,min_eig_K0,three_quarter_lambda0\n";
    for (std::size_t i = 0; i < points.size(); ++i)
        table << points[i].m << ',' << points[i].seed << ',' << drift[i] << ',' << min_eig[i] << ',' << 0.75 * lambda0 << '\n';

    auto trend = open_csv(dir / "kernel_trend.csv");
    trend << "m,median_drift,median_min_eig,fraction_min_eig_ok\n";
    const std::size_t per_m = cfg.seeds().size();
    std::vector<double> medians;
    for (std::size_t a = 0; a < points.size(); a += per_m) {
        std::vector<double> dr(drift.begin() + a, drift.begin() + a + per_m);
        std::vector<double> ev(min_eig.begin() + a, min_eig.begin() + a + per_m);
        const double ok = static_cast<double>(std::count_if(ev.begin(), ev.end(), [&](double e) { return e >= 0.75 * lambda0; })) /
                          static_cast<double>(per_m);
        medians.push_back(median(dr));
        trend << points[a].m << ',' << medians.back() << ',' << median(ev) << ',' << ok << '\n';
        std::cout << "m=" << points[a].m << " median drift " << medians.back() << ", median lambda_min(K0) " << median(ev)
                  << ", fraction >= 3/4 lambda0: " << ok << '\n';
    }
    long inversions = 0;
    for (std::size_t k = 1; k < medians.size(); ++k) inversions += medians[k] > medians[k - 1];

    json j = config_fields(cfg);
    j["lambda0_hat"] = stats.lambda0_hat;
    j["lambda_n"] = stats.lambda_n;
    j["lambda_min_Kinf"] = lambda0;
    j["gram_min_eig_G"] = stats.gram_min_eig_G;
    j["gram_min_eig_H"] = stats.gram_min_eig_H;
    j["drift_inversions"] = inversions;
    j["wall_seconds"] = seconds_since(start);
    write_json(dir / "kernel_summary.json", j);
    std::cout << "lambda_min(Kinf) " << lambda0 << ", lambda_n " << stats.lambda_n << '\n';
    return kSuccess;
}

int cmd_linearize(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    const Dataset ds = build_dataset(cfg);
    checked_stats(ds);
    const Index d = ds.d();
    const double lambda0 = min_eigenvalue(analytic_Kinf(ds, Regime::jointly));
    require(lambda0 > 0.0, "linearize: limiting kernel is singular");

    std::vector<double> times = cfg.probes.times;
    if (times.empty()) {
        const double scale = static_cast<double>(d) / lambda0;
        times = {0.0, scale, 5.0 * scale, std::numeric_limits<double>::infinity()};
    }
    const double eta = cfg.train.eta ? *cfg.train.eta
                                     : stable_step_size(ds, cfg.train.eta_constant > 0.0 ? cfg.train.eta_constant : 0.1);
    require(eta > 0.0 && std::isfinite(eta), "linearize: step size must be positive");
    const long K = cfg.train.steps;
    require(K >= 0, "linearize: steps must be non-negative");
    std::vector<long> record = {0, K / 4, K / 2, (3 * K) / 4, K};
    record.erase(std::unique(record.begin(), record.end()), record.end());

    std::vector<ProbeKind> kinds = cfg.probes.kinds;
    require(!kinds.empty() && cfg.probes.count >= 1, "linearize: need at least one probe");
    Matrix P(d, 0);
    std::vector<ProbeKind> probe_kind;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        const Matrix block = make_probes(ds, kinds[k], cfg.probes.count,
                                         substream_seed(cfg.dataset_seed(), {stream::probe, static_cast<std::uint64_t>(kinds[k])}));
        Matrix grown(d, P.cols() + block.cols());
        grown << P, block;
        P = std::move(grown);
        probe_kind.insert(probe_kind.end(), block.cols(), kinds[k]);
    }

    const auto points = sweep_points(cfg);
    const bool sweep = points.size() > 1;
    const fs::path dir = prepare_output(cfg.output, "linearize");

    std::vector<std::vector<std::vector<MemorizationRecord>>> profiles(points.size());
    std::vector<std::vector<GapRecord>> gaps(points.size());
    std::vector<double> drift_inf(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        const Autoencoder model0 =
            init_model(d, points[i].m, Regime::jointly, cfg.model.sigma_sq, ExperimentConfig::model_seed(points[i].seed));
        const LinearizedSolution sol = build_linearized(model0, ds);
        for (double t : times) profiles[i].push_back(memorization_profile(sol, P, t));
        gaps[i] = agreement_gap(record_trajectory(model0, ds, eta, record, P), sol);
        drift_inf[i] = lin_param_drift(sol, std::numeric_limits<double>::infinity());
    });

    {
        auto out = open_csv(dir / "probes.csv");
        out << "probe_id,kind\n";
        for (std::size_t a = 0; a < probe_kind.size(); ++a) out << a << ',' << to_string(probe_kind[a]) << '\n';
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto out = open_csv(dir / ("memorization" + point_suffix(points[i], sweep) + ".csv"));
        out << "probe_id,t,mu_norm,gamma_norm,nearest_train_overlap";
        for (Index s = 1; s <= ds.n(); ++s) out << ",score_" << s;
        out << '\n';
        for (std::size_t ti = 0; ti < times.size(); ++ti)
            for (std::size_t a = 0; a < profiles[i][ti].size(); ++a) {
                const MemorizationRecord& r = profiles[i][ti][a];
                out << a << ',' << fmt_time(times[ti]) << ',' << r.mu_norm << ',' << r.gamma_norm << ',' << r.nearest_train_overlap;
                for (double s : r.kernel_scores) out << ',' << s;
                out << '\n';
            }
    }
    auto agree = open_csv(dir / "agreement.csv");
    agree << "m,seed,t,probe_id,gap\n";
    auto trend = open_csv(dir / "agreement_trend.csv");
    trend << "m,seed,max_gap,param_drift_inf\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        double worst = 0.0;
        for (const GapRecord& g : gaps[i]) {
            agree << points[i].m << ',' << points[i].seed << ',' << g.t << ',' << g.probe << ',' << g.gap << '\n';
            worst = std::max(worst, g.gap);
        }
        trend << points[i].m << ',' << points[i].seed << ',' << worst << ',' << drift_inf[i] << '\n';
        std::cout << "m=" << points[i].m << " seed=" << points[i].seed << " max agreement gap " << worst << '\n';
    }

    json j = config_fields(cfg);
    j["eta"] = eta;
    j["lambda_min_Kinf"] = lambda0;
    j["times"] = [&] {
        std::string s;
        for (double t : times) s += (s.empty() ? "" : " ") + fmt_time(t);
        return s;
    }();
    j["probe_count"] = P.cols();
    j["wall_seconds"] = seconds_since(start);
    write_json(dir / "linearize_summary.json", j);
    return kSuccess;
}

int cmd_theory(const ExperimentConfig& cfg) {
    TheorySuiteConfig tc;
    tc.seed = cfg.seed;
    tc.sigmas = cfg.theory.sigmas;
    tc.only = cfg.theory.checks;
    for (const auto& name : tc.only) {
        const auto& known = theory_check_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw PreconditionError("theory: unknown check '" + name + "'");
    }
    const TheoryReport report = run_theory_suite(tc);
    const fs::path dir = prepare_output(cfg.output, "theory");
    write_theory_csv(report, (dir / "theory.csv").string());
    const std::string text = theory_summary(report);
    std::ofstream(dir / "theory_summary.txt") << text;
    std::cout << text;
    return report.all_pass() ? kSuccess : kCheckFailure;
}

int cmd_compare_regimes(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    const Dataset ds = build_dataset(cfg);
    checked_stats(ds);
    std::vector<std::uint64_t> seeds = cfg.sweep.seed_list;
    if (seeds.empty())
        for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(cfg.seed + s);
    const Index m = cfg.model.m;
    const fs::path dir = prepare_output(cfg.output, "compare-regimes");

    std::vector<std::optional<TrainResult>> weak(seeds.size()), joint(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        // One initialization per seed; the weakly run simply never moves A.
        const Autoencoder init = init_model(ds.d(), m, Regime::jointly, cfg.model.sigma_sq, ExperimentConfig::model_seed(seeds[i]));
        const Autoencoder as_weak(init.W(), init.A(), Regime::weakly, init.sigma_sq(), init.seed());
        weak[i] = train(as_weak, ds, train_config(cfg, Regime::weakly));
        joint[i] = train(init, ds, train_config(cfg, Regime::jointly));
    });

    auto out = open_csv(dir / "compare.csv");
    out << "seed,step,loss_weakly,loss_jointly\n";
    auto table = open_csv(dir / "compare_summary.csv");
    table << "seed,eta_weakly,eta_jointly,final_weakly,final_jointly,jointly_lower\n";
    long lower = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& lw = weak[i]->trace.loss;
        const auto& lj = joint[i]->trace.loss;
        for (std::size_t k = 0; k < std::max(lw.size(), lj.size()); ++k) {
            out << seeds[i] << ',' << k << ',';
            if (k < lw.size()) out << lw[k];
            out << ',';
            if (k < lj.size()) out << lj[k];
            out << '\n';
        }
        const bool jl = lj.back() <= lw.back();
        lower += jl;
        table << seeds[i] << ',' << weak[i]->trace.eta << ',' << joint[i]->trace.eta << ',' << lw.back() << ',' << lj.back() << ','
              << (jl ? 1 : 0) << '\n';
        std::cout << "seed=" << seeds[i] << " final loss weakly " << lw.back() << ", jointly " << lj.back() << '\n';
    }
    json j = config_fields(cfg);
    j["eta_weakly"] = weak.front()->trace.eta;
    j["eta_jointly"] = joint.front()->trace.eta;
    j["lambda0_hat"] = joint.front()->trace.lambda0_hat;
    j["lambda_n"] = joint.front()->trace.lambda_n;
    j["seeds"] = join(seeds);
    j["jointly_lower_count"] = lower;
    j["jointly_lower_fraction"] = static_cast<double>(lower) / static_cast<double>(seeds.size());
    j["wall_seconds"] = seconds_since(start);
    write_json(dir / "compare_summary.json", j);
    std::cout << "jointly reached the lower loss on " << lower << " of " << seeds.size() << " seeds\n";
    return kSuccess;
}

}  // namespace ntkae::cli
