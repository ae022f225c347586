#include "ntkae/types.hpp"

namespace ntkae {

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::weakly: return "weakly";
        case Regime::jointly: return "jointly";
        case Regime::tied: return "tied";
    }
    return "unknown";
}

Regime parse_regime(std::string_view text) {
    if (text == "weakly") return Regime::weakly;
    if (text == "jointly") return Regime::jointly;
    if (text == "tied") return Regime::tied;
    throw PreconditionError("unknown regime '" + std::string(text) + "' (expected weakly, jointly or tied)");
}

}  // namespace ntkae
