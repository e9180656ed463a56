#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "vie/solver.hpp"

using namespace vie;

namespace {

DenseMatrix random_matrix(Eigen::Index n, unsigned seed, double shift)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> d;
    DenseMatrix A(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) A(i, j) = cplx(d(rng), d(rng)) / std::sqrt(double(n));
    A.diagonal().array() += shift;
    return A;
}

FieldVector random_vector(Eigen::Index n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> d;
    FieldVector x(n);
    for (auto& v : x) v = cplx(d(rng), d(rng));
    return x;
}

LinearOperator as_op(const DenseMatrix& A)
{
    return [&A](const FieldVector& x) { return FieldVector(A * x); };
}

} // namespace

TEST(Gmres, IdentityConvergesInOneIteration)
{
    const FieldVector b = random_vector(20, 1);
    const SolveResult r = gmres([](const FieldVector& x) { return x; }, b);
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.report.iterations, 1);
    EXPECT_LT((r.x - b).norm(), 1e-14 * b.norm());
    EXPECT_EQ(r.report.residuals.front(), 1.0);
    EXPECT_EQ(r.report.residuals.size(), 2u);
}

TEST(Gmres, ZeroRightHandSide)
{
    const SolveResult r = gmres([](const FieldVector& x) { return FieldVector(2.0 * x); }, FieldVector::Zero(5));
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.report.iterations, 0);
    EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(Gmres, MatchesDirectSolve)
{
    const DenseMatrix A = random_matrix(50, 2, 2.0);
    const FieldVector b = random_vector(50, 3);
    GmresOptions opt;
    opt.tol = 1e-10;
    const SolveResult r = gmres(as_op(A), b, opt);
    const FieldVector x = A.partialPivLu().solve(b);
    EXPECT_TRUE(r.report.converged);
    EXPECT_LE(r.report.final_residual, opt.tol);
    EXPECT_LT((r.x - x).norm(), 10 * opt.tol * x.norm());
    EXPECT_LT(r.report.iterations, 50);
}

TEST(Gmres, FullGmresTerminatesByDimension)
{
    const DenseMatrix A = random_matrix(12, 4, 0.0);
    const FieldVector b = random_vector(12, 5);
    GmresOptions opt;
    opt.tol = 1e-12;
    const SolveResult r = gmres(as_op(A), b, opt);
    EXPECT_TRUE(r.report.converged);
    EXPECT_LE(r.report.iterations, 12);
}

TEST(Gmres, ExactInversePreconditionerConvergesImmediately)
{
    const DenseMatrix A = random_matrix(40, 6, 0.3);
    const DenseMatrix Ainv = A.inverse();
    const FieldVector b = random_vector(40, 7);
    GmresOptions opt;
    opt.tol = 1e-10;
    const SolveResult r = gmres(as_op(A), as_op(Ainv), b, opt);
    EXPECT_TRUE(r.report.converged);
    EXPECT_LE(r.report.iterations, 2);
    EXPECT_EQ(r.report.preconditioner_applies, r.report.operator_applies);
}

TEST(Gmres, RestartedStillConverges)
{
    const DenseMatrix A = random_matrix(60, 8, 3.0);
    const FieldVector b = random_vector(60, 9);
    GmresOptions opt;
    opt.tol = 1e-8;
    opt.restart = 5;
    const SolveResult r = gmres(as_op(A), b, opt);
    EXPECT_TRUE(r.report.converged);
    EXPECT_LT((A * r.x - b).norm() / b.norm(), 1e-8);
}

TEST(Gmres, ReportsNonConvergence)
{
    const DenseMatrix A = random_matrix(40, 10, 0.0);
    const FieldVector b = random_vector(40, 11);
    GmresOptions opt;
    opt.tol = 1e-12;
    opt.maxit = 3;
    const SolveResult r = gmres(as_op(A), b, opt);
    EXPECT_FALSE(r.report.converged);
    EXPECT_EQ(r.report.iterations, 3);
    EXPECT_GT(r.report.final_residual, 1e-12);
}

TEST(Gmres, ResidualHistoryIsMonotone)
{
    const DenseMatrix A = random_matrix(30, 12, 1.0);
    const SolveResult r = gmres(as_op(A), random_vector(30, 13));
    for (std::size_t i = 1; i < r.report.residuals.size(); ++i)
        EXPECT_LE(r.report.residuals[i], r.report.residuals[i - 1] * (1 + 1e-12));
    EXPECT_EQ(r.report.times.size(), r.report.residuals.size());
}

TEST(Gmres, RejectsBadOptions)
{
    GmresOptions opt;
    opt.tol = 0.0;
    EXPECT_THROW(gmres([](const FieldVector& x) { return x; }, FieldVector::Ones(3), opt), Error);
}

TEST(Spectrum, DiagonalAndPreconditioned)
{
    DenseMatrix A = DenseMatrix::Zero(3, 3);
    A.diagonal() << cplx(1, 0), cplx(2, 1), cplx(-3, 0);
    auto ev = spectrum(A);
    std::sort(ev.begin(), ev.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
    EXPECT_NEAR(std::abs(ev[0] - cplx(-3, 0)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(ev[2] - cplx(2, 1)), 0.0, 1e-14);
    for (const cplx& l : spectrum(A, DenseMatrix(A.inverse()))) EXPECT_NEAR(std::abs(l - 1.0), 0.0, 1e-13);
}

TEST(Spectrum, GuardsSize)
{
    EXPECT_THROW(spectrum(DenseMatrix::Identity(kSpectrumLimit + 1, kSpectrumLimit + 1)), DomainError);
}

TEST(DenseFromOperator, RecoversMatrix)
{
    const DenseMatrix A = random_matrix(7, 14, 0.0);
    EXPECT_EQ(dense_from_operator(as_op(A), 7), A);
}

TEST(ResidualFile, RoundTrip)
{
    const DenseMatrix A = random_matrix(20, 15, 1.5);
    const SolveResult r = gmres(as_op(A), random_vector(20, 16));
    const auto path = std::filesystem::temp_directory_path() / "vie_residuals.csv";
    write_residuals(path, r.report);
    const SolveReport back = read_residuals(path);
    EXPECT_EQ(back.residuals, r.report.residuals);
    EXPECT_EQ(back.times, r.report.times);
    EXPECT_EQ(back.iterations, r.report.iterations);
}
