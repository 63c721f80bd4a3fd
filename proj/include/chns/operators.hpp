#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "chns/fields.hpp"
#include "chns/params.hpp"
#include "chns/sparse.hpp"

namespace chns {

// All operators assume ghost layers have been applied to their inputs and
// write plain interior values (callers re-apply ghosts as needed).

/// 5-point Laplacian with mirrored (homogeneous Neumann) ghosts.
inline ScalarField laplacian_neumann(const ScalarField& f) {
    const GridSpec& g = f.grid();
    const double ihx2 = 1.0 / (g.hx() * g.hx()), ihy2 = 1.0 / (g.hy() * g.hy());
    ScalarField out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out(i, j) = (f(i + 1, j) - 2.0 * f(i, j) + f(i - 1, j)) * ihx2 +
                        (f(i, j + 1) - 2.0 * f(i, j) + f(i, j - 1)) * ihy2;
    return out;
}

/// Component-wise 5-point Laplacian at interior faces; boundary faces and
/// tangential ghosts carry the Dirichlet closure already.
inline StaggeredVelocity laplacian_velocity(const StaggeredVelocity& w) {
    const GridSpec& g = w.grid();
    const double ihx2 = 1.0 / (g.hx() * g.hx()), ihy2 = 1.0 / (g.hy() * g.hy());
    StaggeredVelocity out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i)
            out.u(i, j) = (w.u(i + 1, j) - 2.0 * w.u(i, j) + w.u(i - 1, j)) * ihx2 +
                          (w.u(i, j + 1) - 2.0 * w.u(i, j) + w.u(i, j - 1)) * ihy2;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out.v(i, j) = (w.v(i + 1, j) - 2.0 * w.v(i, j) + w.v(i - 1, j)) * ihx2 +
                          (w.v(i, j + 1) - 2.0 * w.v(i, j) + w.v(i, j - 1)) * ihy2;
    return out;
}

/// Pressure gradient to faces; zero on boundary faces (no pressure force
/// through Dirichlet walls).
inline StaggeredVelocity gradient_cell_to_face(const ScalarField& p) {
    const GridSpec& g = p.grid();
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    StaggeredVelocity out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) out.u(i, j) = (p(i, j) - p(i - 1, j)) * ihx;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) out.v(i, j) = (p(i, j) - p(i, j - 1)) * ihy;
    return out;
}

inline ScalarField divergence_face_to_cell(const StaggeredVelocity& w) {
    const GridSpec& g = w.grid();
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    ScalarField out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out(i, j) = (w.u(i + 1, j) - w.u(i, j)) * ihx + (w.v(i, j + 1) - w.v(i, j)) * ihy;
    return out;
}

inline double divergence_inf(const StaggeredVelocity& w) {
    ScalarField d = divergence_face_to_cell(w);
    const GridSpec& g = w.grid();
    double m = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) m = std::max(m, std::abs(d(i, j)));
    return m;
}

enum class PhaseConvection { divergence, advective };

/// Conservative form div(w * phi) with centered face averages of phi.
/// Integrates to zero whenever the boundary normal velocity vanishes.
inline ScalarField convect_scalar(const StaggeredVelocity& w, const ScalarField& phi,
                                  PhaseConvection form = PhaseConvection::divergence) {
    const GridSpec& g = phi.grid();
    require_same_grid(g, w.grid());
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    ScalarField out(g);
    if (form == PhaseConvection::divergence) {
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double fe = w.u(i + 1, j) * 0.5 * (phi(i, j) + phi(i + 1, j));
                const double fw = w.u(i, j) * 0.5 * (phi(i - 1, j) + phi(i, j));
                const double fn = w.v(i, j + 1) * 0.5 * (phi(i, j) + phi(i, j + 1));
                const double fs = w.v(i, j) * 0.5 * (phi(i, j - 1) + phi(i, j));
                out(i, j) = (fe - fw) * ihx + (fn - fs) * ihy;
            }
    } else {
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double uc = 0.5 * (w.u(i, j) + w.u(i + 1, j));
                const double vc = 0.5 * (w.v(i, j) + w.v(i, j + 1));
                out(i, j) = uc * (phi(i + 1, j) - phi(i - 1, j)) * 0.5 * ihx +
                            vc * (phi(i, j + 1) - phi(i, j - 1)) * 0.5 * ihy;
            }
    }
    return out;
}

/// Skew-symmetric convection 1/2[(a.grad)w + div(a w)], which telescopes to
/// [a_r w_{+1} - a_l w_{-1}]/(2h) per direction. Its inner product with w
/// vanishes identically when the advecting normal velocity is zero on the
/// boundary.
inline StaggeredVelocity convect_velocity(const StaggeredVelocity& a,
                                          const StaggeredVelocity& w) {
    const GridSpec& g = w.grid();
    require_same_grid(g, a.grid());
    const double i2hx = 0.5 / g.hx(), i2hy = 0.5 / g.hy();
    StaggeredVelocity out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) {
            const double axr = 0.5 * (a.u(i, j) + a.u(i + 1, j));
            const double axl = 0.5 * (a.u(i - 1, j) + a.u(i, j));
            const double ayt = 0.5 * (a.v(i - 1, j + 1) + a.v(i, j + 1));
            const double ayb = 0.5 * (a.v(i - 1, j) + a.v(i, j));
            out.u(i, j) = (axr * w.u(i + 1, j) - axl * w.u(i - 1, j)) * i2hx +
                          (ayt * w.u(i, j + 1) - ayb * w.u(i, j - 1)) * i2hy;
        }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const double ayt = 0.5 * (a.v(i, j) + a.v(i, j + 1));
            const double ayb = 0.5 * (a.v(i, j - 1) + a.v(i, j));
            const double axr = 0.5 * (a.u(i + 1, j - 1) + a.u(i + 1, j));
            const double axl = 0.5 * (a.u(i, j - 1) + a.u(i, j));
            out.v(i, j) = (axr * w.v(i + 1, j) - axl * w.v(i - 1, j)) * i2hx +
                          (ayt * w.v(i, j + 1) - ayb * w.v(i, j - 1)) * i2hy;
        }
    return out;
}

/// mu grad(phi) at faces: two-point average of mu times the face difference
/// of phi. Zero on boundary faces. Paired with the divergence-form phase
/// convection this pairing is energy-neutral for discretely divergence-free
/// velocities.
inline StaggeredVelocity capillary_force(const ScalarField& mu, const ScalarField& phi) {
    const GridSpec& g = mu.grid();
    require_same_grid(g, phi.grid());
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    StaggeredVelocity out(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i)
            out.u(i, j) = 0.5 * (mu(i - 1, j) + mu(i, j)) * (phi(i, j) - phi(i - 1, j)) * ihx;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out.v(i, j) = 0.5 * (mu(i, j - 1) + mu(i, j)) * (phi(i, j) - phi(i, j - 1)) * ihy;
    return out;
}

// ---------------------------------------------------------------------------
// Uniform-coefficient stencil operators on the cell layout, assembled or
// applied matrix-free. Used for the standalone Poisson solves and as the
// reference for assembly-vs-application consistency checks.

struct StencilEntry {
    int di = 0;
    int dj = 0;
    double coeff = 0.0;
};

enum class StencilClosure { neumann_mirror, truncate };

/// Cell-to-cell stencil with a boundary closure rule. neumann_mirror folds
/// out-of-range offsets back to the mirrored interior cell; truncate drops
/// them.
struct StencilOperator {
    GridSpec grid;
    std::vector<StencilEntry> entries;
    StencilClosure closure = StencilClosure::neumann_mirror;

    int mirror(int k, int n) const {
        if (k < 0) return -k - 1;
        if (k >= n) return 2 * n - 1 - k;
        return k;
    }

    ScalarField apply(const ScalarField& f) const {
        ScalarField out(grid);
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                double s = 0.0;
                for (const auto& e : entries) {
                    int ii = i + e.di, jj = j + e.dj;
                    if (closure == StencilClosure::neumann_mirror) {
                        ii = mirror(ii, grid.nx);
                        jj = mirror(jj, grid.ny);
                    } else if (ii < 0 || ii >= grid.nx || jj < 0 || jj >= grid.ny) {
                        continue;
                    }
                    s += e.coeff * f(ii, jj);
                }
                out(i, j) = s;
            }
        return out;
    }
};

/// Sparse rows reproducing the matrix-free action exactly; duplicates (from
/// mirrored offsets) are summed.
inline SparseSystem assemble(const StencilOperator& op) {
    const GridSpec& g = op.grid;
    for (const auto& e : op.entries)
        if (std::abs(e.di) >= g.nx || std::abs(e.dj) >= g.ny)
            throw std::invalid_argument("assemble: stencil offset exceeds grid");
    SparseSystem sys(g.cells());
    sys.reserve(static_cast<std::size_t>(g.cells()) * op.entries.size());
    auto cell = [&](int i, int j) { return j * g.nx + i; };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (const auto& e : op.entries) {
                int ii = i + e.di, jj = j + e.dj;
                if (op.closure == StencilClosure::neumann_mirror) {
                    ii = op.mirror(ii, g.nx);
                    jj = op.mirror(jj, g.ny);
                } else if (ii < 0 || ii >= g.nx || jj < 0 || jj >= g.ny) {
                    continue;
                }
                sys.add(cell(i, j), cell(ii, jj), e.coeff);
            }
    return sys;
}

/// coeff * Laplacian with homogeneous Neumann closure; row sums are exactly 0.
inline StencilOperator laplacian_neumann_op(const GridSpec& g, double coeff = 1.0) {
    const double cx = coeff / (g.hx() * g.hx()), cy = coeff / (g.hy() * g.hy());
    return StencilOperator{
        g,
        {{1, 0, cx}, {-1, 0, cx}, {0, 1, cy}, {0, -1, cy}, {0, 0, -2.0 * (cx + cy)}},
        StencilClosure::neumann_mirror};
}

inline StencilOperator identity_op(const GridSpec& g) {
    return StencilOperator{g, {{0, 0, 1.0}}, StencilClosure::truncate};
}

}  // namespace chns
