#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ntkae {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

enum class Regime : std::uint8_t { weakly = 0, jointly = 1, tied = 2 };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

// Error hierarchy. The CLI maps PreconditionError/ParseError/DegenerateDataError/
// CapacityError to exit code 2 and DivergenceError to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class DegenerateDataError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
    [[nodiscard]] long step() const { return step_; }

private:
    long step_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw PreconditionError(message);
}

}  // namespace ntkae
