#include "ntkae/kernels.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ntkae;

TEST(ArcCosine, ClosedFormAtSpecialAngles) {
    const double pi = 3.14159265358979323846;
    EXPECT_NEAR(arccos_gram_G(1.0), 0.5, 1e-15);
    EXPECT_NEAR(arccos_gram_H(1.0), 0.5, 1e-15);
    EXPECT_NEAR(arccos_gram_G(0.0), 0.0, 1e-15);
    EXPECT_NEAR(arccos_gram_H(0.0), 1.0 / (2.0 * pi), 1e-15);
    EXPECT_NEAR(arccos_gram_G(-1.0), 0.0, 1e-15);
    EXPECT_NEAR(arccos_gram_H(-1.0), 0.0, 1e-15);
    // round-off above 1 is clamped rather than producing NaN
    EXPECT_TRUE(std::isfinite(arccos_gram_H(1.0 + 1e-15)));
    EXPECT_NEAR(analytic_pair_ntk_scalar(0.5, 4), (arccos_gram_G(0.5) + arccos_gram_H(0.5)) / 4.0, 1e-15);
}

TEST(ArcCosine, MatchesMonteCarlo) {
    const Matrix X = oracle::random_unit_columns(6, 5, 17);
    for (Index i = 0; i < X.cols(); ++i)
        for (Index j = i + 1; j < X.cols(); ++j) {
            const auto mc = oracle::monte_carlo_pair(X.col(i), X.col(j), 200000, unsigned(31 * i + j));
            const double c = X.col(i).dot(X.col(j));
            EXPECT_NEAR(arccos_gram_G(c), mc.G, 5.0 * mc.G_se + 1e-12) << "c=" << c;
            EXPECT_NEAR(arccos_gram_H(c), mc.H, 5.0 * mc.H_se + 1e-12) << "c=" << c;
        }
}

TEST(ArcCosine, PairSelfValueIsIdentityOverD) {
    for (Index d : {2, 8, 32}) {
        const Matrix X = oracle::random_unit_columns(d, 10, unsigned(d));
        for (Index i = 0; i < X.cols(); ++i) {
            const Matrix K = analytic_pair_ntk(X.col(i), X.col(i));
            EXPECT_LT((K - Matrix::Identity(d, d) / double(d)).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
    EXPECT_THROW(analytic_pair_ntk(Vector::Ones(3), Vector::Ones(3)), PreconditionError);
}

TEST(LimitingKernel, FactorAndExpansion) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 5, 4, 2);
    const LimitingKernelFactor weak = analytic_Kinf(ds, Regime::weakly);
    const LimitingKernelFactor joint = analytic_Kinf(ds, Regime::jointly);
    EXPECT_EQ(weak.factor(), weak.M_G);
    EXPECT_LT((joint.factor() - weak.M_G - joint.M_H).norm(), 1e-15);
    const KernelMatrix full = joint.expand();
    ASSERT_EQ(full.dim(), 20);
    EXPECT_LT((Matrix(full.block(1, 3)) - joint.factor()(1, 3) * Matrix::Identity(4, 4)).norm(), 1e-15);
    EXPECT_THROW(analytic_Kinf(ds, Regime::tied), PreconditionError);
    EXPECT_LT((limiting_gram_G(ds.X) - weak.M_G).norm(), 1e-15);
}

TEST(EmpiricalKernel, MatchesJacobianGram) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 4, 5, 8);
    const Autoencoder model = init_model(5, 12, Regime::jointly, 2.0, 4, DecoderInit::gaussian);
    const double s = model.output_scale();
    const double d = 5.0;
    const Matrix JW = oracle::jacobian_W(model.W(), model.A(), ds.X, s);
    const Matrix JA = oracle::jacobian_A(model.W(), ds.X, s);
    EXPECT_LT((empirical_G(model, ds.X).data - d * JW * JW.transpose()).norm(), 1e-12);
    EXPECT_LT((empirical_H(model, ds.X).data - d * JA * JA.transpose()).norm(), 1e-12);
    EXPECT_LT((empirical_K(model, ds.X, Regime::jointly).data - d * (JW * JW.transpose() + JA * JA.transpose())).norm(), 1e-12);
    EXPECT_EQ(empirical_K(model, ds.X, Regime::weakly).data, empirical_G(model, ds.X).data);
    EXPECT_THROW(empirical_K(model, ds.X, Regime::tied), PreconditionError);
}

TEST(EmpiricalKernel, CrossKernelsAgreeOnTrainingSet) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 6, 4, 1);
    const Autoencoder model = init_model(4, 64, Regime::jointly, 2.0, 2);
    EXPECT_LT((cross_G(model, ds.X, ds.X) - empirical_G(model, ds.X).data).norm(), 1e-12);
    EXPECT_LT((kron_identity(cross_H_factor(model, ds.X, ds.X), 4) - empirical_H(model, ds.X).data).norm(), 1e-12);
    const Matrix P = oracle::random_unit_columns(4, 2, 3);
    EXPECT_EQ(cross_G(model, P, ds.X).rows(), 8);
    EXPECT_EQ(cross_G(model, P, ds.X).cols(), 24);
}

TEST(EmpiricalKernel, ApproachesLimitWithWidth) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 6, 4, 5);
    const KernelMatrix limit = analytic_Kinf(ds, Regime::jointly).expand();
    double previous = INFINITY;
    for (Index m : {64, 1024, 16384}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 4; ++seed)
            total += kernel_drift(empirical_K(init_model(4, m, Regime::jointly, 2.0, seed), ds.X, Regime::jointly), limit);
        EXPECT_LT(total, previous) << "m=" << m;
        previous = total;
    }
    EXPECT_LT(previous / 4.0, 0.1);
}

TEST(EmpiricalKernel, CapacityGuard) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 10, 4, 5);
    const Autoencoder model = init_model(4, 8, Regime::jointly, 2.0, 2);
    KernelOptions small;
    small.max_dim = 39;
    EXPECT_THROW(empirical_G(model, ds.X, small), CapacityError);
    small.max_dim = 40;
    EXPECT_NO_THROW(empirical_G(model, ds.X, small));
}

TEST(Spectral, PowerMethodMatchesSvd) {
    for (unsigned seed = 0; seed < 5; ++seed) {
        const Matrix B = oracle::random_unit_columns(12, 12, seed);
        const Matrix S = B * B.transpose() - 0.3 * Matrix::Identity(12, 12);
        Eigen::JacobiSVD<Matrix> svd(S);
        EXPECT_NEAR(symmetric_spectral_norm(S, {1e-12, 100000, 0}), svd.singularValues()(0), 1e-8);
    }
    EXPECT_EQ(symmetric_spectral_norm(Matrix::Zero(3, 3)), 0.0);
}

TEST(Spectral, EigenvaluesAscendingAndAsymmetryRejected) {
    Matrix S(2, 2);
    S << 2, 1, 1, 2;
    const Vector ev = symmetric_eigenvalues(S);
    EXPECT_NEAR(ev(0), 1.0, 1e-14);
    EXPECT_NEAR(ev(1), 3.0, 1e-14);
    S(0, 1) = 1.1;
    EXPECT_THROW(symmetric_eigenvalues(S), PreconditionError);
}

TEST(Spectral, KernelDriftShapeMismatch) {
    const KernelMatrix a{2, 2, KernelKind::K, Matrix::Identity(4, 4)};
    const KernelMatrix b{3, 2, KernelKind::K, Matrix::Identity(6, 6)};
    EXPECT_THROW(kernel_drift(a, b), PreconditionError);
    EXPECT_NEAR(kernel_drift(a, KernelMatrix{2, 2, KernelKind::K, Matrix::Zero(4, 4)}), 1.0, 1e-12);
}

TEST(KernelCsv, HeaderAndRowCount) {
    const Dataset ds = generate_dataset(DatasetKind::uniform_sphere, 3, 2, 5);
    const KernelMatrix K = analytic_Kinf(ds, Regime::jointly).expand();
    const auto path = (std::filesystem::temp_directory_path() / "ntkae_kernel.csv").string();
    write_kernel_csv(K, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "i,j,p,q,value");
    long rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 36);
}

TEST(ArcCosine, AngleFormAgreesWithCosineForm) {
    const Matrix X = oracle::random_unit_columns(5, 6, 3);
    const Matrix G = limiting_gram_G(X), H = limiting_gram_H(X);
    for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) {
            const double c = X.col(i).dot(X.col(j));
            EXPECT_NEAR(G(i, j), arccos_gram_G(c), 1e-7);
            EXPECT_NEAR(H(i, j), arccos_gram_H(c), 1e-7);
            if (i != j) EXPECT_NEAR(analytic_pair_ntk(X.col(i), X.col(j))(0, 0), analytic_pair_ntk_scalar(c, Index(5)), 1e-12);
        }
    EXPECT_DOUBLE_EQ(G(2, 2), 0.5);
    EXPECT_DOUBLE_EQ(H(2, 2), 0.5);
}
