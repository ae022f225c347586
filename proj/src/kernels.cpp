#include "ntkae/kernels.hpp"

#include <fstream>

namespace ntkae {

KernelMatrix LimitingKernelFactor::expand() const {
    return {M_G.rows(), d, KernelKind::Kinf, kron_identity(factor(), d)};
}

LimitingKernelFactor analytic_Kinf(const Dataset& ds, Regime regime) {
    if (regime == Regime::tied) throw PreconditionError("analytic_Kinf: no limiting kernel is defined for the tied regime");
    return {limiting_gram_G(ds.X), limiting_gram_H(ds.X), regime, ds.d()};
}

void write_kernel_csv(const KernelMatrix& K, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "i,j,p,q,value\n";
    for (Index i = 0; i < K.n; ++i)
        for (Index j = 0; j < K.n; ++j)
            for (Index p = 0; p < K.d; ++p)
                for (Index q = 0; q < K.d; ++q) out << i << ',' << j << ',' << p << ',' << q << ',' << K.data(i * K.d + p, j * K.d + q) << '\n';
}

}  // namespace ntkae
