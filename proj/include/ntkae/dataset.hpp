#pragma once

#include "ntkae/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>

namespace ntkae {

enum class DatasetKind { uniform_sphere, gaussian_normalized, clustered };

DatasetKind parse_dataset_kind(std::string_view text);
std::string_view to_string(DatasetKind kind);

/// Training data: the columns of `X` are the n samples, each of unit norm.
struct Dataset {
    Matrix X;                    // d x n
    double lambda_n = 0.0;       // ||X^T X||
    double min_separation = 0.0; // smallest distance between two columns, 0 when n == 1
    bool renormalized = false;   // set by load_dataset when some column was off the sphere

    [[nodiscard]] Index n() const { return X.cols(); }
    [[nodiscard]] Index d() const { return X.rows(); }
    [[nodiscard]] auto sample(Index i) const { return X.col(i); }
};

struct SpectralStats {
    double lambda_n = 0.0;
    double lambda0_hat = 0.0;
    double min_separation = 0.0;
    double gram_min_eig_G = 0.0;
    double gram_min_eig_H = 0.0;
    bool degenerate = false;  // lambda0_hat <= 1e-10
};

inline constexpr double kDuplicateThreshold = 1e-9;
inline constexpr double kDegenerateLambda0 = 1e-10;

/// Wraps a column matrix into a Dataset: validates shape, projects columns onto
/// the unit sphere and caches lambda_n and the minimum separation.
Dataset make_dataset(Matrix X);

/// `clusters` is used only by the clustered kind; 0 picks min(n, 4).
Dataset generate_dataset(DatasetKind kind, Index n, Index d, std::uint64_t seed, Index clusters = 0);

enum class DatasetFormat { csv, binary };

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format);

SpectralStats spectral_stats(const Dataset& ds);

// Largest eigenvalue of the PSD matrix X^T X by power iteration on the smaller Gram side.
double spectral_norm_gram(const Matrix& X);
double min_pairwise_distance(const Matrix& X);

}  // namespace ntkae
