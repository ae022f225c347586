#pragma once

#include "ntkae/dataset.hpp"
#include "ntkae/linearized.hpp"
#include "ntkae/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ntkae::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailure = 1, kUsageError = 2, kDivergence = 3 };

struct DatasetSection {
    DatasetKind kind = DatasetKind::uniform_sphere;
    std::optional<std::filesystem::path> path;
    DatasetFormat format = DatasetFormat::csv;
    Index n = 16;
    Index d = 8;
    Index clusters = 0;
    std::optional<std::uint64_t> seed;  // default: root seed
};

struct ModelSection {
    Index m = 1024;
    Regime regime = Regime::jointly;
    double sigma_sq = 2.0;
};

struct TrainSection {
    long steps = 1000;
    std::optional<double> eta;  // nullopt: "auto"
    double eta_constant = 0.0;
    long checkpoint_stride = 100;
    long kernel_eval_stride = 0;
    double loss_floor = 1e-12;
    double delta = 0.1;
};

struct SweepSection {
    std::vector<Index> m_list;
    std::vector<std::uint64_t> seed_list;
};

struct ProbeSection {
    Index count = 4;
    std::vector<ProbeKind> kinds = {ProbeKind::train_point, ProbeKind::perturbed, ProbeKind::random};
    std::vector<double> times;  // empty: {0, d/lambda0, 5d/lambda0, inf}
};

struct OutputSection {
    std::filesystem::path directory = "ntkae-out";
    bool overwrite = false;
};

struct TheorySection {
    std::vector<std::string> checks;
    double sigmas = 3.0;
};

/// Nested key-value experiment description (YAML on disk); flags override file values.
struct ExperimentConfig {
    std::uint64_t seed = 0;  // root of every random substream
    DatasetSection dataset;
    ModelSection model;
    TrainSection train;
    SweepSection sweep;
    ProbeSection probes;
    OutputSection output;
    TheorySection theory;

    [[nodiscard]] std::uint64_t dataset_seed() const;
    /// Model init seed for one sweep seed (the root seed when no sweep is given).
    [[nodiscard]] static std::uint64_t model_seed(std::uint64_t point_seed);
    [[nodiscard]] std::vector<std::uint64_t> seeds() const;
    [[nodiscard]] std::vector<Index> widths() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

Dataset build_dataset(const ExperimentConfig& cfg);

int cmd_train(const ExperimentConfig& cfg);
int cmd_kernel(const ExperimentConfig& cfg, bool dump);
int cmd_linearize(const ExperimentConfig& cfg);
int cmd_theory(const ExperimentConfig& cfg);
int cmd_compare_regimes(const ExperimentConfig& cfg);

/// Full command-line entry point: parses flags, dispatches, maps errors to exit codes.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace ntkae::cli
