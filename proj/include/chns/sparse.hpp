#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <chrono>
#include <cmath>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace chns {

struct SolveReport {
    double residual_norm = 0.0;  // recomputed ||Ax-b||_2, never trusted from the backend
    double factor_time = 0.0;
    double solve_time = 0.0;
    int iterations = 0;
};

class SolveError : public std::runtime_error {
  public:
    enum class Kind { singular, accuracy };
    SolveError(Kind k, const std::string& msg, SolveReport rep = {})
        : std::runtime_error(msg), kind(k), report(rep) {}
    Kind kind;
    SolveReport report;
};

/// Square sparse system built from coordinate entries; duplicate entries are
/// summed on compression. An attached mean-zero constraint appends one
/// Lagrange-multiplier row/column, making the system size n+1.
class SparseSystem {
  public:
    SparseSystem() = default;
    explicit SparseSystem(int n) : n_(n) {}

    int size() const { return n_; }

    void add(int r, int c, double v) {
        if (r < 0 || r >= n_ || c < 0 || c >= n_)
            throw std::out_of_range("SparseSystem::add: entry outside system");
        entries_.emplace_back(r, c, v);
    }

    void reserve(std::size_t nnz) { entries_.reserve(nnz); }

    const std::vector<Eigen::Triplet<double>>& entries() const { return entries_; }

    /// Compressed row storage view: sorted, deduplicated column indices per row.
    Eigen::SparseMatrix<double, Eigen::RowMajor> csr() const {
        Eigen::SparseMatrix<double, Eigen::RowMajor> m(n_, n_);
        m.setFromTriplets(entries_.begin(), entries_.end());
        m.makeCompressed();
        return m;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return csr() * x; }

  private:
    int n_ = 0;
    std::vector<Eigen::Triplet<double>> entries_;
};

/// Augment with the zero-mean gauge c'x = 0 over x[offset .. offset+len),
/// bordering symmetrically: the multiplier column lands on the rows of the
/// same index range. Weights are normalized to unit max for pivoting sanity;
/// the gauge itself is scale-invariant.
inline SparseSystem attach_mean_zero(const SparseSystem& sys, std::span<const double> weights,
                                     int offset) {
    const int n = sys.size();
    const int m = static_cast<int>(weights.size());
    if (offset < 0 || offset + m > n)
        throw std::invalid_argument("attach_mean_zero: weights do not fit the system");
    double wmax = 0.0;
    for (double w : weights) wmax = std::max(wmax, std::abs(w));
    if (!(wmax > 0.0)) throw std::invalid_argument("attach_mean_zero: weights are all zero");

    SparseSystem aug(n + 1);
    aug.reserve(sys.entries().size() + 2 * static_cast<std::size_t>(m));
    for (const auto& t : sys.entries()) aug.add(t.row(), t.col(), t.value());
    for (int k = 0; k < m; ++k) {
        const double w = weights[k] / wmax;
        aug.add(n, offset + k, w);
        aug.add(offset + k, n, w);
    }
    return aug;
}

struct SolveOptions {
    double residual_rtol = 1e-10;
    double constraint_rtol = 1e-10;
    bool has_constraint = false;  // enables the c'x check on the last row
};

/// Direct sparse LU with partial pivoting. The returned residual is
/// recomputed from the inputs; a backward error above tolerance throws.
inline std::pair<Eigen::VectorXd, SolveReport> factor_solve(const SparseSystem& sys,
                                                            const Eigen::VectorXd& rhs,
                                                            const SolveOptions& opt = {}) {
    using clock = std::chrono::steady_clock;
    if (rhs.size() != sys.size()) throw std::invalid_argument("factor_solve: rhs length mismatch");

    Eigen::SparseMatrix<double> a(sys.size(), sys.size());
    a.setFromTriplets(sys.entries().begin(), sys.entries().end());
    a.makeCompressed();

    SolveReport rep;
    const auto t0 = clock::now();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(a);
    lu.factorize(a);
    const auto t1 = clock::now();
    if (lu.info() != Eigen::Success) {
        throw SolveError(SolveError::Kind::singular,
                         "factor_solve: singular system: " + lu.lastErrorMessage());
    }
    Eigen::VectorXd x = lu.solve(rhs);
    const auto t2 = clock::now();
    rep.factor_time = std::chrono::duration<double>(t1 - t0).count();
    rep.solve_time = std::chrono::duration<double>(t2 - t1).count();

    const Eigen::VectorXd r = a * x - rhs;
    rep.residual_norm = r.norm();
    const double scale = a.norm() * x.norm() + rhs.norm();
    if (!(rep.residual_norm <= opt.residual_rtol * std::max(scale, 1e-300))) {
        throw SolveError(SolveError::Kind::accuracy,
                         "factor_solve: residual " + std::to_string(rep.residual_norm) +
                             " above tolerance",
                         rep);
    }
    if (opt.has_constraint) {
        // With symmetric bordering, row n-1 holds the constraint weights.
        const int n = sys.size();
        double cx = 0.0;
        for (const auto& t : sys.entries())
            if (t.row() == n - 1 && t.col() != n - 1) cx += t.value() * x[t.col()];
        if (!(std::abs(cx) <= opt.constraint_rtol * std::max(1e-300, x.norm()))) {
            throw SolveError(SolveError::Kind::accuracy, "factor_solve: gauge constraint violated",
                             rep);
        }
    }
    return {std::move(x), rep};
}

/// MatrixMarket coordinate dump for debugging.
inline void write_matrix_market(const SparseSystem& sys, const std::string& path) {
    auto m = sys.csr();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
    char buf[96];
    for (int r = 0; r < m.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
            std::snprintf(buf, sizeof buf, "%d %d %.17g\n", static_cast<int>(it.row()) + 1,
                          static_cast<int>(it.col()) + 1, it.value());
            out << buf;
        }
}

}  // namespace chns
