#include "ntkae/autoencoder.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ntkae {

namespace {

template <typename T>
void put(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ParseError(std::string("model checkpoint: truncated at ") + what);
    return value;
}

void put_matrix(std::ostream& os, const Matrix& M) {
    os.write(reinterpret_cast<const char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size()));
}

Matrix get_matrix(std::istream& is, Index rows, Index cols, const char* what) {
    Matrix M(rows, cols);
    if (!is.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size())))
        throw ParseError(std::string("model checkpoint: truncated ") + what);
    return M;
}

}  // namespace

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void save_model(const Autoencoder& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write("NTKM", 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.d()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.m()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(model.regime()));
    put<double>(out, model.sigma_sq());
    put<std::uint64_t>(out, model.seed());
    put_matrix(out, model.W());
    if (model.regime() != Regime::tied) put_matrix(out, model.A());
}

Autoencoder load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "NTKM", 4) != 0) throw ParseError("model checkpoint: bad magic (expected NTKM)");
    const auto d = get<std::uint32_t>(in, "d");
    const auto m = get<std::uint32_t>(in, "m");
    const auto regime_byte = get<std::uint8_t>(in, "regime");
    if (regime_byte > 2) throw ParseError("model checkpoint: unknown regime tag " + std::to_string(regime_byte));
    const auto regime = static_cast<Regime>(regime_byte);
    const auto sigma_sq = get<double>(in, "sigma_sq");
    const auto seed = get<std::uint64_t>(in, "seed");
    Matrix W = get_matrix(in, d, m, "W");
    if (regime == Regime::tied) return Autoencoder(std::move(W), std::nullopt, regime, sigma_sq, seed);
    Matrix A = get_matrix(in, d, m, "A");
    return Autoencoder(std::move(W), std::move(A), regime, sigma_sq, seed);
}

}  // namespace ntkae
