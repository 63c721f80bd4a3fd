#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "chns/fields.hpp"
#include "chns/operators.hpp"
#include "chns/params.hpp"
#include "chns/sparse.hpp"

namespace chns {

/// Term-by-term decomposition of the two-level analysis energy
///   E = 1/4 (|grad phi|^2 + |grad(2phi - phi_old)|^2 + |grad(phi - phi_old)|^2)
///     + 1/4 (|u|^2 + |2u - u_old|^2 + |u - u_old|^2)
///     + (3L/eps) |phi - phi_old|^2
///     + (F(phi),1) + 1/2 (F(phi) - F(phi_old),1)
struct EnergyBreakdown {
    double grad_phi_terms = 0.0;
    double velocity_terms = 0.0;
    double stab_term = 0.0;
    double potential_terms = 0.0;
    double total = 0.0;
};

inline EnergyBreakdown discrete_energy(const StateHistory& h, const PhysicalParams& par,
                                       double lipschitz_L) {
    const FlowState& a = h.level_n;
    const FlowState& b = h.level_nm1;
    EnergyBreakdown e;

    ScalarField two_minus = combine(2.0, a.phi, -1.0, b.phi);
    ScalarField diff = combine(1.0, a.phi, -1.0, b.phi);
    e.grad_phi_terms = 0.25 * (h1semi_sq(a.phi) + h1semi_sq(two_minus) + h1semi_sq(diff));

    StaggeredVelocity vtwo = combine(2.0, a.vel, -1.0, b.vel);
    StaggeredVelocity vdiff = combine(1.0, a.vel, -1.0, b.vel);
    e.velocity_terms = 0.25 * (inner(a.vel, a.vel) + inner(vtwo, vtwo) + inner(vdiff, vdiff));

    e.stab_term = (3.0 * lipschitz_L / par.epsilon) * inner(diff, diff);

    const GridSpec& g = a.phi.grid();
    double fnew = 0.0, fold = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            fnew += F_potential(a.phi(i, j));
            fold += F_potential(b.phi(i, j));
        }
    fnew *= g.cell_area();
    fold *= g.cell_area();
    e.potential_terms = fnew + 0.5 * (fnew - fold);

    e.total = e.grad_phi_terms + e.velocity_terms + e.stab_term + e.potential_terms;
    return e;
}

/// Ginzburg-Landau + kinetic energy of a single state, the quantity tracked
/// for the physical experiments.
inline double physical_energy(const FlowState& st, const PhysicalParams& par) {
    const GridSpec& g = st.phi.grid();
    double fint = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) fint += F_potential(st.phi(i, j));
    fint *= g.cell_area();
    return 0.5 * par.epsilon * par.gamma * h1semi_sq(st.phi) + (par.gamma / par.epsilon) * fint +
           0.5 * inner(st.vel, st.vel);
}

inline double mass(const ScalarField& phi) { return integrate(phi); }

struct ErrorNorms {
    double phi = 0.0;
    double mu = 0.0;
    double vel = 0.0;
    double p = 0.0;
};

/// L2 errors against exact samples; the pressure error is gauge-invariant
/// (both discrete means subtracted first).
inline ErrorNorms error_norms(const FlowState& st, const FlowState& exact) {
    ErrorNorms e;
    e.phi = norm_l2(combine(1.0, st.phi, -1.0, exact.phi));
    e.mu = norm_l2(combine(1.0, st.mu, -1.0, exact.mu));
    e.vel = norm_l2(combine(1.0, st.vel, -1.0, exact.vel));
    const double area = st.p.grid().area();
    const double shift = integrate(st.p) / area - integrate(exact.p) / area;
    ScalarField dp = combine(1.0, st.p, -1.0, exact.p);
    for (double& v : dp.raw()) v -= shift;
    e.p = norm_l2(dp);
    return e;
}

// ---------------------------------------------------------------------------
// Convergence-rate fitting.

struct RateRow {
    double dt = 0.0;
    std::vector<double> errors;  // one per tracked variable
    std::vector<double> rates;   // log2 ratio against the previous row
};

struct RateTable {
    std::vector<std::string> variables;
    std::vector<RateRow> rows;
    std::vector<double> slopes;  // least-squares d log(err) / d log(dt)
};

inline RateTable fit_rates(const std::vector<std::string>& variables,
                           const std::vector<std::pair<double, std::vector<double>>>& data) {
    if (data.size() < 2) throw std::invalid_argument("fit_rates: need at least two rows");
    RateTable t;
    t.variables = variables;
    const std::size_t nv = variables.size();
    for (const auto& [dt, errs] : data) {
        if (errs.size() != nv) throw std::invalid_argument("fit_rates: row width mismatch");
        for (double e : errs)
            if (!(e > 0.0)) throw std::invalid_argument("fit_rates: errors must be positive");
        t.rows.push_back(RateRow{dt, errs, {}});
    }
    for (std::size_t r = 1; r < t.rows.size(); ++r) {
        t.rows[r].rates.resize(nv);
        for (std::size_t v = 0; v < nv; ++v)
            t.rows[r].rates[v] = std::log2(t.rows[r - 1].errors[v] / t.rows[r].errors[v]) /
                                 std::log2(t.rows[r - 1].dt / t.rows[r].dt);
    }
    t.slopes.resize(nv);
    const std::size_t nrows = t.rows.size();
    double sx = 0.0, sxx = 0.0;
    for (const auto& row : t.rows) {
        sx += std::log(row.dt);
        sxx += std::log(row.dt) * std::log(row.dt);
    }
    const double denom = nrows * sxx - sx * sx;
    for (std::size_t v = 0; v < nv; ++v) {
        double sy = 0.0, sxy = 0.0;
        for (const auto& row : t.rows) {
            sy += std::log(row.errors[v]);
            sxy += std::log(row.dt) * std::log(row.errors[v]);
        }
        t.slopes[v] = (nrows * sxy - sx * sy) / denom;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Discrete dual norm via the Neumann Poisson solve -lap(w) = zeta with the
// zero-mean gauge; the norm is |grad w|.

inline double hminus1_norm(const ScalarField& zeta) {
    const GridSpec& g = zeta.grid();
    const double zmean = integrate(zeta);
    if (!(std::abs(zmean) <= 1e-12 * g.area() * (1.0 + norm_l2(zeta))))
        throw std::invalid_argument("hminus1_norm: input must have zero mean");

    SparseSystem core = assemble(laplacian_neumann_op(g, -1.0));
    std::vector<double> w(static_cast<std::size_t>(g.cells()), g.cell_area());
    SparseSystem sys = attach_mean_zero(core, w, 0);

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.size());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) rhs[j * g.nx + i] = zeta(i, j);
    SolveOptions opt;
    opt.has_constraint = true;
    auto [x, rep] = factor_solve(sys, rhs, opt);
    (void)rep;

    ScalarField sol(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) sol(i, j) = x[j * g.nx + i];
    sol.apply_neumann_ghosts();
    return norm_h1semi(sol);
}

}  // namespace chns
