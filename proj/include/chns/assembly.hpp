#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

#include "chns/fields.hpp"
#include "chns/operators.hpp"
#include "chns/params.hpp"
#include "chns/sparse.hpp"

namespace chns {

/// Unknown ordering of the monolithic per-step system:
/// [phi | mu | u-interior | v-interior | p], with the gauge multiplier
/// appended by attach_mean_zero. Equation rows use the same offsets
/// (phase, chemical potential, momentum-x, momentum-y, continuity), so the
/// continuity block is row-aligned with the pressure columns and the
/// mean-zero bordering is symmetric.
struct DofMap {
    GridSpec grid;
    int nc = 0, nu = 0, nv = 0;
    int off_phi = 0, off_mu = 0, off_u = 0, off_v = 0, off_p = 0;

    explicit DofMap(const GridSpec& g) : grid(g) {
        nc = g.nx * g.ny;
        nu = (g.nx - 1) * g.ny;
        nv = g.nx * (g.ny - 1);
        off_phi = 0;
        off_mu = nc;
        off_u = 2 * nc;
        off_v = 2 * nc + nu;
        off_p = 2 * nc + nu + nv;
    }

    int size() const { return off_p + nc; }   // before gauge augmentation
    int cell(int i, int j) const { return j * grid.nx + i; }
    int ucol(int i, int j) const { return off_u + j * (grid.nx - 1) + (i - 1); }
    int vcol(int i, int j) const { return off_v + (j - 1) * grid.nx + i; }
    bool u_interior(int i) const { return i >= 1 && i <= grid.nx - 1; }
    bool v_interior(int j) const { return j >= 1 && j <= grid.ny - 1; }
};

struct Forcing {
    ScalarField g_phi;
    StaggeredVelocity g_vel;
};

/// Inputs of one linear coupled solve. phi_cv is the phase field used in the
/// (linearized) convection and capillary terms; adv the advecting velocity;
/// both must be ghost-applied. stab multiplies (phi_new - phi_old) in the
/// chemical-potential equation and f_expl carries the fully explicit
/// potential combination, 1/eps scaling included.
struct LinearStepTerms {
    const ScalarField* phi_cv = nullptr;
    const StaggeredVelocity* adv = nullptr;
    double stab = 0.0;
    const ScalarField* f_expl = nullptr;
    const ScalarField* phi_old = nullptr;
    const StaggeredVelocity* vel_old = nullptr;
    const Forcing* forcing = nullptr;
    PhaseConvection phase_conv = PhaseConvection::divergence;
};

namespace detail {

struct CoupledAssembler {
    const DofMap& dm;
    const PhysicalParams& par;
    const BoundaryCondition& bc;
    double dt;
    SparseSystem& sys;
    Eigen::VectorXd& rhs;

    const GridSpec& g() const { return dm.grid; }

    void add(int r, int c, double v) { sys.add(r, c, v); }

    double gx(int i, int j) const { return bc.vel_x(g().xf(i), g().yc(j)); }
    double gy(int i, int j) const { return bc.vel_y(g().xc(i), g().yf(j)); }

    // Coefficient of the unknown u-face (i,j) in row r, or RHS contribution
    // when the face is a boundary face with known Dirichlet value.
    void u_face_term(int r, int i, int j, double coeff) {
        if (dm.u_interior(i))
            add(r, dm.ucol(i, j), coeff);
        else
            rhs[r] -= coeff * gx(i, j);
    }
    void v_face_term(int r, int i, int j, double coeff) {
        if (dm.v_interior(j))
            add(r, dm.vcol(i, j), coeff);
        else
            rhs[r] -= coeff * gy(i, j);
    }

    // Scalar-cell coefficient with Neumann mirror: out-of-range cells fold
    // back onto the in-range neighbor.
    int mirror_i(int i) const { return i < 0 ? 0 : (i >= g().nx ? g().nx - 1 : i); }
    int mirror_j(int j) const { return j < 0 ? 0 : (j >= g().ny ? g().ny - 1 : j); }
    void phi_cell_term(int r, int i, int j, double coeff) {
        add(r, dm.off_phi + dm.cell(mirror_i(i), mirror_j(j)), coeff);
    }
    void mu_cell_term(int r, int i, int j, double coeff) {
        add(r, dm.off_mu + dm.cell(mirror_i(i), mirror_j(j)), coeff);
    }

    // -Laplacian of a cell unknown with mirror closure: per available
    // neighbor, coeff*(center - neighbor)/h^2.
    void minus_laplacian_cell(int r, int i, int j, double coeff, int var_offset) {
        const double ihx2 = 1.0 / (g().hx() * g().hx()), ihy2 = 1.0 / (g().hy() * g().hy());
        auto term = [&](int ii, int jj, double w) {
            if (ii < 0 || ii >= g().nx || jj < 0 || jj >= g().ny) return;  // mirror cancels
            add(r, var_offset + dm.cell(ii, jj), -coeff * w);
            add(r, var_offset + dm.cell(i, j), coeff * w);
        };
        term(i - 1, j, ihx2);
        term(i + 1, j, ihx2);
        term(i, j - 1, ihy2);
        term(i, j + 1, ihy2);
    }
};

}  // namespace detail

/// Assemble the monolithic linear system of one implicit step:
///   phase:      phi/dt + div(u phi_cv) - eps*M*lap(mu)            = phi_old/dt + g_phi
///   potential:  -mu - lambda*lap(phi) + stab*phi                  = stab*phi_old - f_expl
///   momentum:   u/dt - nu*lap(u) + skew(adv,u) + grad(p)
///               - gamma*avg(mu)*dphi_cv                           = vel_old/dt + g_u
///   continuity: div(u)                                            = 0
/// plus the pressure mean-zero gauge. Unknowns are the new (tilde) values.
inline std::pair<SparseSystem, Eigen::VectorXd> assemble_coupled_linear(
    const DofMap& dm, const PhysicalParams& par, const BoundaryCondition& bc, double dt,
    const LinearStepTerms& tm) {
    const GridSpec& g = dm.grid;
    const double hx = g.hx(), hy = g.hy();
    const double ihx = 1.0 / hx, ihy = 1.0 / hy;
    const double ihx2 = ihx * ihx, ihy2 = ihy * ihy;
    const double epsM = par.epsilon * par.mobility;
    const double lam = par.lambda();
    const double nu = par.nu, gam = par.gamma;

    SparseSystem sys(dm.size());
    sys.reserve(static_cast<std::size_t>(dm.size()) * 12);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dm.size());
    detail::CoupledAssembler A{dm, par, bc, dt, sys, rhs};

    const ScalarField& pcv = *tm.phi_cv;
    const StaggeredVelocity& adv = *tm.adv;

    const int r_phase = dm.off_phi, r_chem = dm.off_mu;
    const int r_momx = dm.off_u, r_momy = dm.off_v, r_cont = dm.off_p;

    // Phase and chemical-potential rows, one per cell.
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int c = dm.cell(i, j);
            const int rp = r_phase + c;
            A.add(rp, dm.off_phi + c, 1.0 / dt);
            rhs[rp] += (*tm.phi_old)(i, j) / dt;
            if (tm.forcing) rhs[rp] += tm.forcing->g_phi(i, j);

            if (tm.phase_conv == PhaseConvection::divergence) {
                A.u_face_term(rp, i + 1, j, 0.5 * (pcv(i, j) + pcv(i + 1, j)) * ihx);
                A.u_face_term(rp, i, j, -0.5 * (pcv(i - 1, j) + pcv(i, j)) * ihx);
                A.v_face_term(rp, i, j + 1, 0.5 * (pcv(i, j) + pcv(i, j + 1)) * ihy);
                A.v_face_term(rp, i, j, -0.5 * (pcv(i, j - 1) + pcv(i, j)) * ihy);
            } else {
                const double dpx = 0.5 * (pcv(i + 1, j) - pcv(i - 1, j)) * ihx;
                const double dpy = 0.5 * (pcv(i, j + 1) - pcv(i, j - 1)) * ihy;
                A.u_face_term(rp, i, j, 0.5 * dpx);
                A.u_face_term(rp, i + 1, j, 0.5 * dpx);
                A.v_face_term(rp, i, j, 0.5 * dpy);
                A.v_face_term(rp, i, j + 1, 0.5 * dpy);
            }
            A.minus_laplacian_cell(rp, i, j, epsM, dm.off_mu);

            const int rc = r_chem + c;
            A.add(rc, dm.off_mu + c, -1.0);
            A.minus_laplacian_cell(rc, i, j, lam, dm.off_phi);
            A.add(rc, dm.off_phi + c, tm.stab);
            rhs[rc] += tm.stab * (*tm.phi_old)(i, j) - (*tm.f_expl)(i, j);
        }

    // Momentum-x rows at interior x-faces.
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) {
            const int rr = r_momx + (dm.ucol(i, j) - dm.off_u);
            A.add(rr, dm.ucol(i, j), 1.0 / dt);
            rhs[rr] += (*tm.vel_old).u(i, j) / dt;
            if (tm.forcing) rhs[rr] += tm.forcing->g_vel.u(i, j);

            // viscous -nu*lap(u); tangential walls use the 2g-interior ghost
            A.add(rr, dm.ucol(i, j), 2.0 * nu * ihx2 + 2.0 * nu * ihy2);
            A.u_face_term(rr, i - 1, j, -nu * ihx2);
            A.u_face_term(rr, i + 1, j, -nu * ihx2);
            if (j == 0) {
                A.add(rr, dm.ucol(i, j), nu * ihy2);
                rhs[rr] += 2.0 * nu * ihy2 * bc.vel_x(g.xf(i), g.yf(0));
            } else {
                A.add(rr, dm.ucol(i, j - 1), -nu * ihy2);
            }
            if (j == g.ny - 1) {
                A.add(rr, dm.ucol(i, j), nu * ihy2);
                rhs[rr] += 2.0 * nu * ihy2 * bc.vel_x(g.xf(i), g.yf(g.ny));
            } else {
                A.add(rr, dm.ucol(i, j + 1), -nu * ihy2);
            }

            // skew convection by the known advecting field
            const double axr = 0.5 * (adv.u(i, j) + adv.u(i + 1, j));
            const double axl = 0.5 * (adv.u(i - 1, j) + adv.u(i, j));
            const double ayt = 0.5 * (adv.v(i - 1, j + 1) + adv.v(i, j + 1));
            const double ayb = 0.5 * (adv.v(i - 1, j) + adv.v(i, j));
            A.u_face_term(rr, i + 1, j, axr * 0.5 * ihx);
            A.u_face_term(rr, i - 1, j, -axl * 0.5 * ihx);
            if (j == g.ny - 1) {
                A.add(rr, dm.ucol(i, j), -ayt * 0.5 * ihy);
                rhs[rr] -= ayt * ihy * bc.vel_x(g.xf(i), g.yf(g.ny));
            } else {
                A.add(rr, dm.ucol(i, j + 1), ayt * 0.5 * ihy);
            }
            if (j == 0) {
                A.add(rr, dm.ucol(i, j), ayb * 0.5 * ihy);
                rhs[rr] += ayb * ihy * bc.vel_x(g.xf(i), g.yf(0));
            } else {
                A.add(rr, dm.ucol(i, j - 1), -ayb * 0.5 * ihy);
            }

            // pressure gradient
            A.add(rr, dm.off_p + dm.cell(i, j), ihx);
            A.add(rr, dm.off_p + dm.cell(i - 1, j), -ihx);

            // capillary -gamma * avg(mu) * dphi_cv
            const double dphi = (pcv(i, j) - pcv(i - 1, j)) * ihx;
            A.add(rr, dm.off_mu + dm.cell(i - 1, j), -gam * 0.5 * dphi);
            A.add(rr, dm.off_mu + dm.cell(i, j), -gam * 0.5 * dphi);
        }

    // Momentum-y rows at interior y-faces.
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int rr = r_momy + (dm.vcol(i, j) - dm.off_v);
            A.add(rr, dm.vcol(i, j), 1.0 / dt);
            rhs[rr] += (*tm.vel_old).v(i, j) / dt;
            if (tm.forcing) rhs[rr] += tm.forcing->g_vel.v(i, j);

            A.add(rr, dm.vcol(i, j), 2.0 * nu * ihx2 + 2.0 * nu * ihy2);
            A.v_face_term(rr, i, j - 1, -nu * ihy2);
            A.v_face_term(rr, i, j + 1, -nu * ihy2);
            if (i == 0) {
                A.add(rr, dm.vcol(i, j), nu * ihx2);
                rhs[rr] += 2.0 * nu * ihx2 * bc.vel_y(g.xf(0), g.yf(j));
            } else {
                A.add(rr, dm.vcol(i - 1, j), -nu * ihx2);
            }
            if (i == g.nx - 1) {
                A.add(rr, dm.vcol(i, j), nu * ihx2);
                rhs[rr] += 2.0 * nu * ihx2 * bc.vel_y(g.xf(g.nx), g.yf(j));
            } else {
                A.add(rr, dm.vcol(i + 1, j), -nu * ihx2);
            }

            const double ayt = 0.5 * (adv.v(i, j) + adv.v(i, j + 1));
            const double ayb = 0.5 * (adv.v(i, j - 1) + adv.v(i, j));
            const double axr = 0.5 * (adv.u(i + 1, j - 1) + adv.u(i + 1, j));
            const double axl = 0.5 * (adv.u(i, j - 1) + adv.u(i, j));
            A.v_face_term(rr, i, j + 1, ayt * 0.5 * ihy);
            A.v_face_term(rr, i, j - 1, -ayb * 0.5 * ihy);
            if (i == g.nx - 1) {
                A.add(rr, dm.vcol(i, j), -axr * 0.5 * ihx);
                rhs[rr] -= axr * ihx * bc.vel_y(g.xf(g.nx), g.yf(j));
            } else {
                A.add(rr, dm.vcol(i + 1, j), axr * 0.5 * ihx);
            }
            if (i == 0) {
                A.add(rr, dm.vcol(i, j), axl * 0.5 * ihx);
                rhs[rr] += axl * ihx * bc.vel_y(g.xf(0), g.yf(j));
            } else {
                A.add(rr, dm.vcol(i - 1, j), -axl * 0.5 * ihx);
            }

            A.add(rr, dm.off_p + dm.cell(i, j), ihy);
            A.add(rr, dm.off_p + dm.cell(i, j - 1), -ihy);

            const double dphi = (pcv(i, j) - pcv(i, j - 1)) * ihy;
            A.add(rr, dm.off_mu + dm.cell(i, j - 1), -gam * 0.5 * dphi);
            A.add(rr, dm.off_mu + dm.cell(i, j), -gam * 0.5 * dphi);
        }

    // Continuity rows, one per cell.
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int rr = r_cont + dm.cell(i, j);
            A.u_face_term(rr, i + 1, j, ihx);
            A.u_face_term(rr, i, j, -ihx);
            A.v_face_term(rr, i, j + 1, ihy);
            A.v_face_term(rr, i, j, -ihy);
        }

    return {std::move(sys), std::move(rhs)};
}

/// Scatter a solution vector into a ghost-applied flow state.
inline FlowState vec_to_state(const DofMap& dm, const BoundaryCondition& bc,
                              const Eigen::VectorXd& x) {
    const GridSpec& g = dm.grid;
    FlowState st{ScalarField(g), ScalarField(g), ScalarField(g), StaggeredVelocity(g)};
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int c = dm.cell(i, j);
            st.phi(i, j) = x[dm.off_phi + c];
            st.mu(i, j) = x[dm.off_mu + c];
            st.p(i, j) = x[dm.off_p + c];
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) st.vel.u(i, j) = x[dm.ucol(i, j)];
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) st.vel.v(i, j) = x[dm.vcol(i, j)];
    st.phi.apply_neumann_ghosts();
    st.mu.apply_neumann_ghosts();
    st.p.apply_neumann_ghosts();
    st.vel.apply_dirichlet(bc);
    return st;
}

/// Gather interior unknowns of a state into a vector of DofMap layout
/// (gauge entry excluded).
inline Eigen::VectorXd state_to_vec(const DofMap& dm, const FlowState& st) {
    const GridSpec& g = dm.grid;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dm.size());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int c = dm.cell(i, j);
            x[dm.off_phi + c] = st.phi(i, j);
            x[dm.off_mu + c] = st.mu(i, j);
            x[dm.off_p + c] = st.p(i, j);
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) x[dm.ucol(i, j)] = st.vel.u(i, j);
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) x[dm.vcol(i, j)] = st.vel.v(i, j);
    return x;
}

}  // namespace chns
