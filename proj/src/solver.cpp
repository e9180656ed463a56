#include "vie/solver.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace vie {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Givens rotation zeroing b in (a, b).
void make_givens(cplx a, cplx b, double& c, cplx& s)
{
    const double na = std::abs(a), nb = std::abs(b);
    if (nb == 0.0) {
        c = 1.0;
        s = 0.0;
        return;
    }
    if (na == 0.0) {
        c = 0.0;
        s = std::conj(b) / nb;
        return;
    }
    const double r = std::hypot(na, nb);
    c = na / r;
    s = (a / na) * std::conj(b) / r;
}

} // namespace

SolveResult gmres(const LinearOperator& apply_a, const LinearOperator& apply_pinv, const FieldVector& b,
                  const GmresOptions& options)
{
    if (!(options.tol > 0.0)) throw DomainError("GMRES tolerance must be positive");
    if (options.maxit < 1) throw DomainError("GMRES maxit must be at least 1");
    if (options.restart < 0) throw DomainError("GMRES restart must be non-negative");

    const auto t0 = Clock::now();
    SolveResult out;
    SolveReport& rep = out.report;
    const Eigen::Index n = b.size();
    out.x = FieldVector::Zero(n);

    auto op_a = [&](const FieldVector& v) {
        const auto t = Clock::now();
        FieldVector y = apply_a(v);
        rep.operator_seconds += seconds_since(t);
        ++rep.operator_applies;
        if (y.size() != n) throw ShapeError("operator returned a vector of the wrong length");
        return y;
    };
    auto op_p = [&](const FieldVector& v) {
        if (!apply_pinv) return v;
        const auto t = Clock::now();
        FieldVector y = apply_pinv(v);
        rep.preconditioner_seconds += seconds_since(t);
        ++rep.preconditioner_applies;
        if (y.size() != n) throw ShapeError("preconditioner returned a vector of the wrong length");
        return y;
    };

    const double bnorm = b.norm();
    rep.residuals.push_back(1.0);
    rep.times.push_back(0.0);
    if (bnorm == 0.0) {
        rep.converged = true;
        rep.final_residual = 0.0;
        rep.solve_seconds = seconds_since(t0);
        return out;
    }

    const int cycle = options.restart > 0 ? options.restart : options.maxit;
    FieldVector r = b;
    double rel = 1.0;
    int breakdowns = 0;

    while (rep.iterations < options.maxit) {
        const double beta = r.norm();
        std::vector<FieldVector> V;
        V.push_back(r / beta);
        DenseMatrix H = DenseMatrix::Zero(cycle + 1, cycle);
        std::vector<double> cs;
        std::vector<cplx> sn;
        Eigen::VectorXcd g = Eigen::VectorXcd::Zero(cycle + 1);
        g[0] = beta;

        int j = 0;
        bool breakdown = false;
        for (; j < cycle && rep.iterations < options.maxit; ++j) {
            FieldVector w = op_a(op_p(V[j]));
            const double before = w.norm();
            for (int i = 0; i <= j; ++i) {
                const cplx h = V[i].dot(w);
                H(i, j) = h;
                w -= h * V[i];
            }
            if (w.norm() < 0.7 * before) {
                for (int i = 0; i <= j; ++i) {
                    const cplx h = V[i].dot(w);
                    H(i, j) += h;
                    w -= h * V[i];
                }
            }
            const double hnext = w.norm();
            H(j + 1, j) = hnext;

            for (int i = 0; i < j; ++i) {
                const cplx a = H(i, j), c = H(i + 1, j);
                H(i, j) = cs[i] * a + sn[i] * c;
                H(i + 1, j) = -std::conj(sn[i]) * a + cs[i] * c;
            }
            double c;
            cplx s;
            make_givens(H(j, j), H(j + 1, j), c, s);
            cs.push_back(c);
            sn.push_back(s);
            H(j, j) = c * H(j, j) + s * H(j + 1, j);
            H(j + 1, j) = 0.0;
            g[j + 1] = -std::conj(s) * g[j];
            g[j] = c * g[j];

            ++rep.iterations;
            rel = std::abs(g[j + 1]) / bnorm;
            rep.residuals.push_back(rel);
            rep.times.push_back(seconds_since(t0));

            if (hnext <= 1e-14 * before) {
                breakdown = true;
                ++j;
                break;
            }
            if (rel <= options.tol) {
                ++j;
                break;
            }
            V.push_back(w / hnext);
        }

        // x += Pinv (V y), H(0:j, 0:j) y = g(0:j)
        const Eigen::VectorXcd y =
            H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
        FieldVector update = FieldVector::Zero(n);
        for (int i = 0; i < j; ++i) update += y[i] * V[i];
        out.x += op_p(update);

        r = b - op_a(out.x);
        rep.final_residual = r.norm() / bnorm;
        if (rep.final_residual <= options.tol) {
            rep.converged = true;
            break;
        }
        // Otherwise start a new cycle from the true residual (restart,
        // breakdown, or drift between the recurrence and b - A x).
        if (breakdown) ++breakdowns;
        if (breakdowns > 2) break;
    }

    rep.solve_seconds = seconds_since(t0);
    return out;
}

SolveResult gmres(const LinearOperator& apply_a, const FieldVector& b, const GmresOptions& options)
{
    return gmres(apply_a, LinearOperator{}, b, options);
}

std::vector<cplx> spectrum(const DenseMatrix& a, const std::optional<DenseMatrix>& pinv)
{
    if (a.rows() != a.cols()) throw ShapeError("spectrum needs a square matrix");
    if (a.rows() > kSpectrumLimit)
        throw DomainError("dense spectrum limited to " + std::to_string(kSpectrumLimit) + " unknowns, got " +
                          std::to_string(a.rows()));
    DenseMatrix m = a;
    if (pinv) {
        if (pinv->rows() != a.rows() || pinv->cols() != a.cols()) throw ShapeError("preconditioner shape mismatch");
        m = a * (*pinv);
    }
    Eigen::ComplexEigenSolver<DenseMatrix> es(m, false);
    if (es.info() != Eigen::Success) throw Error("eigenvalue iteration did not converge");
    const auto& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

DenseMatrix dense_from_operator(const LinearOperator& op, Eigen::Index n)
{
    DenseMatrix m(n, n);
    FieldVector e = FieldVector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        e[j] = 1.0;
        m.col(j) = op(e);
        e[j] = 0.0;
    }
    return m;
}

void write_residuals(const std::filesystem::path& path, const SolveReport& report)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "iter,relative_residual,seconds\n";
    out.precision(17);
    for (std::size_t i = 0; i < report.residuals.size(); ++i)
        out << i << ',' << report.residuals[i] << ',' << (i < report.times.size() ? report.times[i] : 0.0) << '\n';
}

SolveReport read_residuals(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "iter,relative_residual,seconds") throw Error("unexpected residuals header in " + path.string());
    SolveReport rep;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f0, f1, f2;
        if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') || !std::getline(ss, f2))
            throw Error("malformed residuals row " + std::to_string(row));
        rep.residuals.push_back(std::stod(f1));
        rep.times.push_back(std::stod(f2));
    }
    rep.iterations = rep.residuals.empty() ? 0 : int(rep.residuals.size()) - 1;
    if (!rep.residuals.empty()) rep.final_residual = rep.residuals.back();
    return rep;
}

} // namespace vie
