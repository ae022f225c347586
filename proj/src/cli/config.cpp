#include "ntkae/cli.hpp"

#include "ntkae/rng.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <limits>

namespace ntkae::cli {

namespace {

// Keys allowed per section; anything else is a config error so typos do not pass silently.
void check_keys(const YAML::Node& node, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) throw PreconditionError("config: section '" + section + "' must be a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw PreconditionError("config: unknown key '" + section + "." + key + "'");
    }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception& e) {
        throw PreconditionError("config: bad value for '" + key + "': " + e.what());
    }
}

double parse_time(const std::string& text) {
    if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
    try {
        return std::stod(text);
    } catch (const std::exception&) {
        throw PreconditionError("config: bad time value '" + text + "'");
    }
}

}  // namespace

std::uint64_t ExperimentConfig::dataset_seed() const { return dataset.seed.value_or(seed); }

std::uint64_t ExperimentConfig::model_seed(std::uint64_t point_seed) { return substream_seed(point_seed, {stream::encoder, 0}); }

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
    return sweep.seed_list.empty() ? std::vector<std::uint64_t>{seed} : sweep.seed_list;
}

std::vector<Index> ExperimentConfig::widths() const {
    return sweep.m_list.empty() ? std::vector<Index>{model.m} : sweep.m_list;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw PreconditionError("config: cannot read " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg;
    if (root.IsNull()) return cfg;
    check_keys(root, "<root>", {"seed", "dataset", "model", "train", "sweep", "probes", "output", "theory"});
    if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root["seed"], "seed");

    if (const auto s = root["dataset"]) {
        check_keys(s, "dataset", {"kind", "path", "format", "n", "d", "seed", "clusters"});
        if (s["kind"]) cfg.dataset.kind = parse_dataset_kind(scalar<std::string>(s["kind"], "dataset.kind"));
        if (s["path"]) {
            std::filesystem::path p = scalar<std::string>(s["path"], "dataset.path");
            if (p.is_relative()) p = path.parent_path() / p;
            cfg.dataset.path = p;
        }
        if (s["format"]) {
            const auto f = scalar<std::string>(s["format"], "dataset.format");
            if (f == "csv") cfg.dataset.format = DatasetFormat::csv;
            else if (f == "binary") cfg.dataset.format = DatasetFormat::binary;
            else throw PreconditionError("config: dataset.format must be csv or binary");
        }
        if (s["n"]) cfg.dataset.n = scalar<Index>(s["n"], "dataset.n");
        if (s["d"]) cfg.dataset.d = scalar<Index>(s["d"], "dataset.d");
        if (s["clusters"]) cfg.dataset.clusters = scalar<Index>(s["clusters"], "dataset.clusters");
        if (s["seed"]) cfg.dataset.seed = scalar<std::uint64_t>(s["seed"], "dataset.seed");
    }
    if (const auto s = root["model"]) {
        check_keys(s, "model", {"m", "regime", "sigma_sq"});
        if (s["m"]) cfg.model.m = scalar<Index>(s["m"], "model.m");
        if (s["regime"]) cfg.model.regime = parse_regime(scalar<std::string>(s["regime"], "model.regime"));
        if (s["sigma_sq"]) cfg.model.sigma_sq = scalar<double>(s["sigma_sq"], "model.sigma_sq");
    }
    if (const auto s = root["train"]) {
        check_keys(s, "train", {"steps", "eta", "eta_constant", "checkpoint_stride", "kernel_eval_stride", "loss_floor", "delta"});
        if (s["steps"]) cfg.train.steps = scalar<long>(s["steps"], "train.steps");
        if (s["eta"]) {
            const auto text = scalar<std::string>(s["eta"], "train.eta");
            if (text == "auto") cfg.train.eta.reset();
            else cfg.train.eta = scalar<double>(s["eta"], "train.eta");
        }
        if (s["eta_constant"]) cfg.train.eta_constant = scalar<double>(s["eta_constant"], "train.eta_constant");
        if (s["checkpoint_stride"]) cfg.train.checkpoint_stride = scalar<long>(s["checkpoint_stride"], "train.checkpoint_stride");
        if (s["kernel_eval_stride"]) cfg.train.kernel_eval_stride = scalar<long>(s["kernel_eval_stride"], "train.kernel_eval_stride");
        if (s["loss_floor"]) cfg.train.loss_floor = scalar<double>(s["loss_floor"], "train.loss_floor");
        if (s["delta"]) cfg.train.delta = scalar<double>(s["delta"], "train.delta");
    }
    if (const auto s = root["sweep"]) {
        check_keys(s, "sweep", {"m_list", "seed_list"});
        if (s["m_list"]) cfg.sweep.m_list = scalar<std::vector<Index>>(s["m_list"], "sweep.m_list");
        if (s["seed_list"]) cfg.sweep.seed_list = scalar<std::vector<std::uint64_t>>(s["seed_list"], "sweep.seed_list");
        if (s["m_list"] && cfg.sweep.m_list.empty()) throw PreconditionError("config: sweep.m_list must be non-empty");
    }
    if (const auto s = root["probes"]) {
        check_keys(s, "probes", {"count", "kinds", "kind", "times"});
        if (s["count"]) cfg.probes.count = scalar<Index>(s["count"], "probes.count");
        if (s["kind"]) cfg.probes.kinds = {parse_probe_kind(scalar<std::string>(s["kind"], "probes.kind"))};
        if (s["kinds"]) {
            cfg.probes.kinds.clear();
            for (const auto& k : scalar<std::vector<std::string>>(s["kinds"], "probes.kinds")) cfg.probes.kinds.push_back(parse_probe_kind(k));
        }
        if (s["times"])
            for (const auto& t : scalar<std::vector<std::string>>(s["times"], "probes.times")) cfg.probes.times.push_back(parse_time(t));
    }
    if (const auto s = root["output"]) {
        check_keys(s, "output", {"directory", "overwrite"});
        if (s["directory"]) cfg.output.directory = scalar<std::string>(s["directory"], "output.directory");
        if (s["overwrite"]) cfg.output.overwrite = scalar<bool>(s["overwrite"], "output.overwrite");
    }
    if (const auto s = root["theory"]) {
        check_keys(s, "theory", {"checks", "sigmas"});
        if (s["checks"]) cfg.theory.checks = scalar<std::vector<std::string>>(s["checks"], "theory.checks");
        if (s["sigmas"]) cfg.theory.sigmas = scalar<double>(s["sigmas"], "theory.sigmas");
    }
    return cfg;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.path) {
        if (!std::filesystem::exists(*cfg.dataset.path))
            throw PreconditionError("dataset path does not exist: " + cfg.dataset.path->string());
        return load_dataset(*cfg.dataset.path, cfg.dataset.format);
    }
    return generate_dataset(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.d, cfg.dataset_seed(), cfg.dataset.clusters);
}

}  // namespace ntkae::cli
