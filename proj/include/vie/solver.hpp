#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "vie/common.hpp"

namespace vie {

using LinearOperator = std::function<FieldVector(const FieldVector&)>;

struct GmresOptions {
    double tol = 1e-4;
    int maxit = 1000;
    /// Restart length; 0 runs full GMRES.
    int restart = 0;
};

struct SolveReport {
    int iterations = 0;
    /// Relative residual ||b - A x|| / ||b|| per iteration, starting at 1.
    std::vector<double> residuals;
    /// Cumulative wall seconds at each residual entry.
    std::vector<double> times;
    bool converged = false;
    double final_residual = 1.0; // recomputed from b - A x
    double solve_seconds = 0.0;
    double operator_seconds = 0.0;
    double preconditioner_seconds = 0.0;
    int operator_applies = 0;
    int preconditioner_applies = 0;
};

struct SolveResult {
    FieldVector x;
    SolveReport report;
};

/// Right-preconditioned GMRES: solves A C^{-1} u = b and returns x = C^{-1} u.
/// The monitored residual is the residual of the original system.
SolveResult gmres(const LinearOperator& apply_a, const LinearOperator& apply_pinv, const FieldVector& b,
                  const GmresOptions& options = {});
SolveResult gmres(const LinearOperator& apply_a, const FieldVector& b, const GmresOptions& options = {});

inline constexpr Eigen::Index kSpectrumLimit = 3000;

/// Eigenvalues of A, or of A * Pinv when given. Dense and small only.
std::vector<cplx> spectrum(const DenseMatrix& a, const std::optional<DenseMatrix>& pinv = std::nullopt);

/// Dense matrix of a linear operator on n unknowns, one column per unit vector.
DenseMatrix dense_from_operator(const LinearOperator& op, Eigen::Index n);

/// iter,relative_residual,seconds
void write_residuals(const std::filesystem::path& path, const SolveReport& report);
SolveReport read_residuals(const std::filesystem::path& path);

} // namespace vie
