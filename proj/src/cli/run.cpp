#include "ntkae/cli.hpp"

#include "CLI11.hpp"

#include <yaml-cpp/yaml.h>

#include <iostream>

namespace ntkae::cli {

namespace {

struct Overrides {
    std::string config;
    std::optional<Index> m, n, d;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> regime;
    std::optional<long> steps;
    std::optional<std::string> eta;
    std::optional<std::string> out;
    bool overwrite = false;
    std::vector<std::uint64_t> seeds;

    std::vector<Index> sweep_m;
    bool dump = false;
    std::vector<std::string> checks;
    std::optional<double> sigmas;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "YAML experiment file")->check(CLI::ExistingFile);
    cmd->add_option("--m", o.m, "hidden width");
    cmd->add_option("--n", o.n, "number of samples");
    cmd->add_option("--d", o.d, "input dimension");
    cmd->add_option("--seed", o.seed, "root seed");
    cmd->add_option("--regime", o.regime, "weakly, jointly or tied");
    cmd->add_option("--steps", o.steps, "gradient-descent steps");
    cmd->add_option("--eta", o.eta, "step size or 'auto'");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--overwrite", o.overwrite, "write into --out directly instead of a fresh subdirectory");
    cmd->add_option("--seeds", o.seeds, "sweep seeds");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.m) cfg.model.m = *o.m;
    if (o.n) cfg.dataset.n = *o.n;
    if (o.d) cfg.dataset.d = *o.d;
    if (o.seed) cfg.seed = *o.seed;
    if (o.regime) cfg.model.regime = parse_regime(*o.regime);
    if (o.steps) cfg.train.steps = *o.steps;
    if (o.eta) {
        if (*o.eta == "auto") {
            cfg.train.eta.reset();
        } else {
            try {
                std::size_t used = 0;
                cfg.train.eta = std::stod(*o.eta, &used);
                if (used != o.eta->size()) throw std::invalid_argument(*o.eta);
            } catch (const std::exception&) {
                throw PreconditionError("--eta must be a number or 'auto', got '" + *o.eta + "'");
            }
        }
    }
    if (o.out) cfg.output.directory = *o.out;
    if (o.overwrite) cfg.output.overwrite = true;
    if (!o.seeds.empty()) cfg.sweep.seed_list = o.seeds;
    if (!o.sweep_m.empty()) cfg.sweep.m_list = o.sweep_m;
    if (!o.checks.empty()) cfg.theory.checks = o.checks;
    if (o.sigmas) cfg.theory.sigmas = *o.sigmas;
    require(cfg.model.m >= 1, "m must be positive");
    require(cfg.train.steps >= 0, "steps must be non-negative");
    return cfg;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Two-layer ReLU autoencoder training and tangent-kernel experiments", "ntkae"};
    app.require_subcommand(1);
    Overrides o;
    auto* train = app.add_subcommand("train", "gradient descent with envelope and movement tracking");
    auto* kernel = app.add_subcommand("kernel", "empirical vs limiting kernel drift and eigenvalues");
    auto* linearize = app.add_subcommand("linearize", "linearized model: memorization profile and agreement gap");
    auto* theory = app.add_subcommand("theory", "Monte Carlo and deterministic identity checks");
    auto* compare = app.add_subcommand("compare-regimes", "weakly vs jointly trained losses from one initialization");
    for (auto* cmd : {train, kernel, linearize, theory, compare}) add_common(cmd, o);
    kernel->add_option("--sweep-m", o.sweep_m, "widths to sweep");
    linearize->add_option("--sweep-m", o.sweep_m, "widths to sweep");
    train->add_option("--sweep-m", o.sweep_m, "widths to sweep");
    kernel->add_flag("--dump", o.dump, "write K(0) and K_inf as CSV");
    theory->add_option("--check", o.checks, "run only these checks");
    theory->add_option("--tolerance-sigmas", o.sigmas, "Monte Carlo tolerance in standard errors");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kUsageError;
    }

    try {
        const ExperimentConfig cfg = resolve(o);
        if (train->parsed()) return cmd_train(cfg);
        if (kernel->parsed()) return cmd_kernel(cfg, o.dump);
        if (linearize->parsed()) return cmd_linearize(cfg);
        if (theory->parsed()) return cmd_theory(cfg);
        return cmd_compare_regimes(cfg);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const YAML::Exception& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckFailure;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"ntkae"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ntkae::cli
