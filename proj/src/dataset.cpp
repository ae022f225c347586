#include "ntkae/dataset.hpp"

#include "ntkae/kernels.hpp"
#include "ntkae/rng.hpp"
#include "ntkae/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace ntkae {

namespace {

constexpr int kMaxGenerateAttempts = 16;
constexpr double kRenormalizeWarn = 1e-6;
constexpr double kUnitTolerance = 1e-12;

Vector gaussian_vector(Rng& rng, Index d) {
    Vector v(d);
    for (Index p = 0; p < d; ++p) v(p) = standard_normal(rng);
    return v;
}

Vector random_unit(Rng& rng, Index d) {
    Vector v = gaussian_vector(rng, d);
    while (v.norm() == 0.0) v = gaussian_vector(rng, d);
    return v / v.norm();
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view text) {
    if (text == "uniform-sphere") return DatasetKind::uniform_sphere;
    if (text == "gaussian-normalized") return DatasetKind::gaussian_normalized;
    if (text == "clustered") return DatasetKind::clustered;
    throw PreconditionError("unknown dataset kind '" + std::string(text) + "'");
}

std::string_view to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::uniform_sphere: return "uniform-sphere";
        case DatasetKind::gaussian_normalized: return "gaussian-normalized";
        case DatasetKind::clustered: return "clustered";
    }
    return "unknown";
}

double spectral_norm_gram(const Matrix& X) {
    PowerOptions opts;
    opts.tolerance = 1e-15;
    opts.max_iterations = 100000;
    // Power iteration on the smaller of X^T X (n x n) and X X^T (d x d); both share the top eigenvalue.
    if (X.cols() <= X.rows()) return symmetric_spectral_norm(Matrix(X.transpose() * X), opts);
    return symmetric_spectral_norm(Matrix(X * X.transpose()), opts);
}

double min_pairwise_distance(const Matrix& X) {
    const Index n = X.cols();
    if (n < 2) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) best = std::min(best, (X.col(i) - X.col(j)).norm());
    return best;
}

Dataset make_dataset(Matrix X) {
    require(X.cols() >= 1, "dataset: need at least one sample");
    require(X.rows() >= 2, "dataset: need dimension d >= 2");
    Dataset ds;
    for (Index i = 0; i < X.cols(); ++i) {
        const double norm = X.col(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw DegenerateDataError("dataset: sample " + std::to_string(i) + " is zero or non-finite");
        if (std::abs(norm - 1.0) > kRenormalizeWarn) ds.renormalized = true;
        if (std::abs(norm - 1.0) > kUnitTolerance) X.col(i) /= norm;
    }
    ds.X = std::move(X);
    ds.lambda_n = spectral_norm_gram(ds.X);
    ds.min_separation = min_pairwise_distance(ds.X);
    return ds;
}

Dataset generate_dataset(DatasetKind kind, Index n, Index d, std::uint64_t seed, Index clusters) {
    require(n >= 1, "generate_dataset: n must be >= 1");
    require(d >= 2, "generate_dataset: d must be >= 2");
    if (kind == DatasetKind::clustered) {
        if (clusters == 0) clusters = std::min<Index>(n, 4);
        require(clusters >= 1 && clusters <= n, "generate_dataset: cluster count must be in [1, n]");
    }

    for (int attempt = 0; attempt < kMaxGenerateAttempts; ++attempt) {
        const auto a = static_cast<std::uint64_t>(attempt);
        Matrix X(d, n);
        switch (kind) {
            case DatasetKind::uniform_sphere:
                for (Index i = 0; i < n; ++i) {
                    Rng rng = make_rng(seed, {stream::dataset, 0, a, static_cast<std::uint64_t>(i)});
                    X.col(i) = random_unit(rng, d);
                }
                break;
            case DatasetKind::gaussian_normalized: {
                // Entries N(0, 1/d), then each column is projected to the sphere.
                Rng rng = make_rng(seed, {stream::dataset, 1, a});
                for (Index i = 0; i < n; ++i) {
                    Vector v = gaussian_vector(rng, d) / std::sqrt(double(d));
                    while (v.norm() == 0.0) v = gaussian_vector(rng, d);
                    X.col(i) = v / v.norm();
                }
                break;
            }
            case DatasetKind::clustered: {
                Rng rng = make_rng(seed, {stream::dataset, 2, a});
                Matrix centers(d, clusters);
                for (Index c = 0; c < clusters; ++c) centers.col(c) = random_unit(rng, d);
                constexpr double spread = 0.25;
                for (Index i = 0; i < n; ++i) {
                    Vector v = centers.col(i % clusters) + spread / std::sqrt(double(d)) * gaussian_vector(rng, d);
                    X.col(i) = v / v.norm();
                }
                break;
            }
        }
        if (n == 1 || min_pairwise_distance(X) >= kDuplicateThreshold) return make_dataset(std::move(X));
    }
    throw DegenerateDataError("generate_dataset: could not draw distinct samples after " +
                              std::to_string(kMaxGenerateAttempts) + " attempts");
}

SpectralStats spectral_stats(const Dataset& ds) {
    SpectralStats s;
    s.lambda_n = ds.lambda_n;
    s.min_separation = ds.min_separation;
    s.gram_min_eig_G = symmetric_eigenvalues(limiting_gram_G(ds.X))(0);
    s.gram_min_eig_H = symmetric_eigenvalues(limiting_gram_H(ds.X))(0);
    s.lambda0_hat = std::max(0.0, std::min(s.gram_min_eig_G, s.gram_min_eig_H));
    s.degenerate = s.lambda0_hat <= kDegenerateLambda0;
    if (s.degenerate) s.lambda0_hat = 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// File formats.

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_le(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ParseError("truncated file while reading " + what);
    return value;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& text, long row, std::size_t col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError("csv row " + std::to_string(row) + ", column " + std::to_string(col + 1) + ": cannot parse '" +
                         text + "'");
    }
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv row 1: missing header 'd,n'");
    const auto header = split_csv(line);
    if (header.size() != 2) throw ParseError("csv row 1: header must be 'd,n'");
    const double dv = parse_double(header[0], 1, 0), nv = parse_double(header[1], 1, 1);
    if (dv < 1 || nv < 1 || dv != std::floor(dv) || nv != std::floor(nv))
        throw ParseError("csv row 1: d and n must be positive integers");
    const auto d = static_cast<Index>(dv), n = static_cast<Index>(nv);
    Matrix X(d, n);
    for (Index p = 0; p < d; ++p) {
        const long row = static_cast<long>(p) + 2;
        if (!std::getline(in, line)) throw ParseError("csv row " + std::to_string(row) + ": expected " + std::to_string(d) + " data rows");
        const auto cells = split_csv(line);
        if (static_cast<Index>(cells.size()) != n)
            throw ParseError("csv row " + std::to_string(row) + ": expected " + std::to_string(n) + " values, found " +
                             std::to_string(cells.size()));
        for (Index j = 0; j < n; ++j) X(p, j) = parse_double(cells[j], row, static_cast<std::size_t>(j));
    }
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError("csv: unexpected trailing data after row " + std::to_string(d + 1));
    return make_dataset(std::move(X));
}

Dataset load_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "NTKD", 4) != 0) throw ParseError("binary dataset: bad magic (expected NTKD)");
    const auto d = read_le<std::uint32_t>(in, "d");
    const auto n = read_le<std::uint32_t>(in, "n");
    if (d == 0 || n == 0) throw ParseError("binary dataset: empty shape");
    Matrix X(d, n);
    if (!in.read(reinterpret_cast<char*>(X.data()), static_cast<std::streamsize>(sizeof(double) * X.size())))
        throw ParseError("binary dataset: truncated payload");
    return make_dataset(std::move(X));
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    return format == DatasetFormat::csv ? load_csv(path) : load_binary(path);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format) {
    if (format == DatasetFormat::csv) {
        std::ofstream out(path);
        if (!out) throw Error("cannot write " + path.string());
        out.precision(17);
        out << ds.d() << ',' << ds.n() << '\n';
        for (Index p = 0; p < ds.d(); ++p) {
            for (Index j = 0; j < ds.n(); ++j) out << (j ? "," : "") << ds.X(p, j);
            out << '\n';
        }
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write("NTKD", 4);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.d()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.n()));
    out.write(reinterpret_cast<const char*>(ds.X.data()), static_cast<std::streamsize>(sizeof(double) * ds.X.size()));
}

}  // namespace ntkae
