#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace chns {

/// Double-well potential F(phi) = (phi^2 - 1)^2 / 4 and its derivatives.
inline double f_potential(double phi) { return phi * phi * phi - phi; }

inline double F_potential(double phi) {
    const double q = phi * phi - 1.0;
    return 0.25 * q * q;
}

inline double fprime_potential(double phi) { return 3.0 * phi * phi - 1.0; }

/// Physical parameters of the coupled phase-field / flow system.
///
/// lambda_mix is the coefficient of the Laplacian in the chemical-potential
/// equation. Left unset it equals epsilon, which keeps the scheme consistent
/// with mu = -eps*lap(phi) + f(phi)/eps.
struct PhysicalParams {
    double epsilon = 0.2;
    double mobility = 0.01;
    double gamma = 0.01;
    double nu = 1.0;
    std::optional<double> lambda_mix{};
    double lipschitz_L = 1.0;
    double stab_S = 1.0;

    double lambda() const { return lambda_mix ? *lambda_mix : epsilon; }

    void validate() const {
        if (!(epsilon > 0.0)) throw std::invalid_argument("params.epsilon must be > 0");
        if (!(mobility > 0.0)) throw std::invalid_argument("params.mobility must be > 0");
        if (!(nu > 0.0)) throw std::invalid_argument("params.nu must be > 0");
        if (!(gamma >= 0.0)) throw std::invalid_argument("params.gamma must be >= 0");
        if (!(lambda() > 0.0)) throw std::invalid_argument("params.lambda must be > 0");
        if (!(lipschitz_L > 0.0)) throw std::invalid_argument("params.lipschitz_L must be > 0");
        if (!std::isfinite(stab_S)) throw std::invalid_argument("params.stabilization must be finite");
    }

    /// Energy-law guarantee requires S*dt >= 3L.
    bool satisfies_energy_condition(double dt) const {
        return stab_S * dt >= 3.0 * lipschitz_L * (1.0 - 1e-12);
    }
};

/// Uniform cell-centered grid on [x0, x0+Lx] x [y0, y0+Ly].
///
/// Cell centers at (x0+(i+1/2)hx, y0+(j+1/2)hy); x-faces at x0+i*hx,
/// y-faces at y0+j*hy.
struct GridSpec {
    int nx = 0;
    int ny = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double Lx = 1.0;
    double Ly = 1.0;

    double hx() const { return Lx / nx; }
    double hy() const { return Ly / ny; }
    double cell_area() const { return hx() * hy(); }
    double area() const { return Lx * Ly; }

    double xc(int i) const { return x0 + (i + 0.5) * hx(); }
    double yc(int j) const { return y0 + (j + 0.5) * hy(); }
    double xf(int i) const { return x0 + i * hx(); }
    double yf(int j) const { return y0 + j * hy(); }

    int cells() const { return nx * ny; }

    bool isotropic() const {
        return std::abs(hx() - hy()) <= 1e-12 * (std::abs(hx()) + std::abs(hy()));
    }

    void validate() const {
        if (nx < 4 || ny < 4) throw std::invalid_argument("grid: nx and ny must be >= 4");
        if (!(Lx > 0.0) || !(Ly > 0.0)) throw std::invalid_argument("grid: extents must be > 0");
        if (!isotropic()) throw std::invalid_argument("grid: hx != hy is not supported");
    }

    bool same_shape(const GridSpec& o) const {
        return nx == o.nx && ny == o.ny && x0 == o.x0 && y0 == o.y0 && Lx == o.Lx && Ly == o.Ly;
    }
};

}  // namespace chns
