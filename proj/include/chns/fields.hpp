#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chns/params.hpp"

namespace chns {

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("field grids do not match");
}

/// Cell-centered scalar samples with one ghost layer per side.
/// Valid indices: i in [-1, nx], j in [-1, ny]; ghosts are derived data.
class ScalarField {
  public:
    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double fill = 0.0)
        : grid_(g), data_((g.nx + 2) * (g.ny + 2), fill) {}

    const GridSpec& grid() const { return grid_; }

    double& operator()(int i, int j) { return data_[idx(i, j)]; }
    double operator()(int i, int j) const { return data_[idx(i, j)]; }

    /// Dirichlet-free Neumann closure: ghosts mirror the first interior cell,
    /// so the normal difference across every boundary face is exactly zero.
    void apply_neumann_ghosts() {
        const int nx = grid_.nx, ny = grid_.ny;
        for (int j = 0; j < ny; ++j) {
            (*this)(-1, j) = (*this)(0, j);
            (*this)(nx, j) = (*this)(nx - 1, j);
        }
        for (int i = -1; i <= nx; ++i) {
            (*this)(i, -1) = (*this)(i, 0);
            (*this)(i, ny) = (*this)(i, ny - 1);
        }
    }

    template <class Fn>
    void fill_from(Fn&& fn) {
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) (*this)(i, j) = fn(grid_.xc(i), grid_.yc(j));
        apply_neumann_ghosts();
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

  private:
    int idx(int i, int j) const { return (j + 1) * (grid_.nx + 2) + (i + 1); }

    GridSpec grid_{};
    std::vector<double> data_{};
};

/// Dirichlet data for the velocity; phase and chemical potential are always
/// homogeneous Neumann and the pressure carries the zero-mean gauge.
struct BoundaryCondition {
    std::function<double(double, double)> vel_x;
    std::function<double(double, double)> vel_y;

    static BoundaryCondition homogeneous() {
        return {[](double, double) { return 0.0; }, [](double, double) { return 0.0; }};
    }

    static BoundaryCondition rotational(double cx, double cy) {
        return {[cy](double, double y) { return y - cy; }, [cx](double x, double) { return -(x - cx); }};
    }
};

/// MAC-staggered velocity: u on x-faces ((nx+1) x ny), v on y-faces
/// (nx x (ny+1)). Tangential ghost rows/columns use the linear-extrapolation
/// closure 2g - interior through the wall value.
class StaggeredVelocity {
  public:
    StaggeredVelocity() = default;
    explicit StaggeredVelocity(const GridSpec& g, double fill = 0.0)
        : grid_(g),
          u_((g.nx + 1) * (g.ny + 2), fill),
          v_((g.nx + 2) * (g.ny + 1), fill) {}

    const GridSpec& grid() const { return grid_; }

    // u: i in [0, nx], j in [-1, ny]
    double& u(int i, int j) { return u_[uidx(i, j)]; }
    double u(int i, int j) const { return u_[uidx(i, j)]; }
    // v: i in [-1, nx], j in [0, ny]
    double& v(int i, int j) { return v_[vidx(i, j)]; }
    double v(int i, int j) const { return v_[vidx(i, j)]; }

    void apply_dirichlet(const BoundaryCondition& bc) {
        const int nx = grid_.nx, ny = grid_.ny;
        for (int j = 0; j < ny; ++j) {
            u(0, j) = bc.vel_x(grid_.xf(0), grid_.yc(j));
            u(nx, j) = bc.vel_x(grid_.xf(nx), grid_.yc(j));
        }
        for (int i = 0; i <= nx; ++i) {
            const double x = grid_.xf(i);
            u(i, -1) = 2.0 * bc.vel_x(x, grid_.yf(0)) - u(i, 0);
            u(i, ny) = 2.0 * bc.vel_x(x, grid_.yf(ny)) - u(i, ny - 1);
        }
        for (int i = 0; i < nx; ++i) {
            v(i, 0) = bc.vel_y(grid_.xc(i), grid_.yf(0));
            v(i, ny) = bc.vel_y(grid_.xc(i), grid_.yf(ny));
        }
        for (int j = 0; j <= ny; ++j) {
            const double y = grid_.yf(j);
            v(-1, j) = 2.0 * bc.vel_y(grid_.xf(0), y) - v(0, j);
            v(nx, j) = 2.0 * bc.vel_y(grid_.xf(nx), y) - v(nx - 1, j);
        }
    }

    template <class FnX, class FnY>
    void fill_from(FnX&& fx, FnY&& fy) {
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i <= grid_.nx; ++i) u(i, j) = fx(grid_.xf(i), grid_.yc(j));
        for (int j = 0; j <= grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) v(i, j) = fy(grid_.xc(i), grid_.yf(j));
    }

    std::vector<double>& raw_u() { return u_; }
    std::vector<double>& raw_v() { return v_; }
    const std::vector<double>& raw_u() const { return u_; }
    const std::vector<double>& raw_v() const { return v_; }

  private:
    int uidx(int i, int j) const { return (j + 1) * (grid_.nx + 1) + i; }
    int vidx(int i, int j) const { return j * (grid_.nx + 2) + (i + 1); }

    GridSpec grid_{};
    std::vector<double> u_{};
    std::vector<double> v_{};
};

// ---------------------------------------------------------------------------
// Quadrature and norms (midpoint rule throughout).

inline double integrate(const ScalarField& f) {
    const GridSpec& g = f.grid();
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) s += f(i, j);
    return s * g.cell_area();
}

inline double inner(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid());
    const GridSpec& g = a.grid();
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) s += a(i, j) * b(i, j);
    return s * g.cell_area();
}

inline double norm_l2(const ScalarField& f) { return std::sqrt(inner(f, f)); }

/// H1 seminorm squared from interior face differences. This is exactly the
/// Gram form of the mirrored-ghost Neumann Laplacian.
inline double h1semi_sq(const ScalarField& f) {
    const GridSpec& g = f.grid();
    const double hx = g.hx(), hy = g.hy(), w = g.cell_area();
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) {
            const double d = (f(i, j) - f(i - 1, j)) / hx;
            s += d * d;
        }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const double d = (f(i, j) - f(i, j - 1)) / hy;
            s += d * d;
        }
    return s * w;
}

inline double norm_h1semi(const ScalarField& f) { return std::sqrt(h1semi_sq(f)); }

/// Face quadrature weight; boundary faces own half a cell.
inline double uface_weight(const GridSpec& g, int i) {
    return (i == 0 || i == g.nx) ? 0.5 * g.cell_area() : g.cell_area();
}
inline double vface_weight(const GridSpec& g, int j) {
    return (j == 0 || j == g.ny) ? 0.5 * g.cell_area() : g.cell_area();
}

inline double inner(const StaggeredVelocity& a, const StaggeredVelocity& b) {
    require_same_grid(a.grid(), b.grid());
    const GridSpec& g = a.grid();
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) s += uface_weight(g, i) * a.u(i, j) * b.u(i, j);
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) s += vface_weight(g, j) * a.v(i, j) * b.v(i, j);
    return s;
}

inline double norm_l2(const StaggeredVelocity& a) { return std::sqrt(inner(a, a)); }

// ---------------------------------------------------------------------------
// Field arithmetic used by the time filter and extrapolation.

inline ScalarField combine(double ca, const ScalarField& a, double cb, const ScalarField& b) {
    require_same_grid(a.grid(), b.grid());
    ScalarField r(a.grid());
    const auto& ra = a.raw();
    const auto& rb = b.raw();
    auto& rr = r.raw();
    for (std::size_t k = 0; k < rr.size(); ++k) rr[k] = ca * ra[k] + cb * rb[k];
    return r;
}

inline StaggeredVelocity combine(double ca, const StaggeredVelocity& a, double cb,
                                 const StaggeredVelocity& b) {
    require_same_grid(a.grid(), b.grid());
    StaggeredVelocity r(a.grid());
    for (std::size_t k = 0; k < r.raw_u().size(); ++k)
        r.raw_u()[k] = ca * a.raw_u()[k] + cb * b.raw_u()[k];
    for (std::size_t k = 0; k < r.raw_v().size(); ++k)
        r.raw_v()[k] = ca * a.raw_v()[k] + cb * b.raw_v()[k];
    return r;
}

// ---------------------------------------------------------------------------
// State containers.

struct FlowState {
    ScalarField phi;
    ScalarField mu;
    ScalarField p;
    StaggeredVelocity vel;
};

/// Two consecutive time levels; after startup, level n-1 always holds the
/// filtered (not tilde) state.
struct StateHistory {
    FlowState level_n;
    FlowState level_nm1;
    double t = 0.0;
    long step = 0;
};

// ---------------------------------------------------------------------------
// Snapshot dump: header "# nx ny hx hy t", then one value per line with 17
// significant digits, rows of j from bottom to top, i fastest.

inline void write_snapshot(const ScalarField& f, const std::filesystem::path& path, double t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open snapshot file " + path.string());
    const GridSpec& g = f.grid();
    char buf[128];
    std::snprintf(buf, sizeof buf, "# %d %d %.17g %.17g %.17g\n", g.nx, g.ny, g.hx(), g.hy(), t);
    out << buf;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g\n", f(i, j));
            out << buf;
        }
}

}  // namespace chns
