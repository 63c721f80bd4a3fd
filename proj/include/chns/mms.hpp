#pragma once

#include <cmath>
#include <functional>

#include "chns/assembly.hpp"
#include "chns/fields.hpp"
#include "chns/params.hpp"

namespace chns {

/// Closed-form reference solution on the unit square:
///   phi = 2 + sin(t) cos(pi x) cos(pi y)
///   u   = ( pi sin^2(pi x) sin(2 pi y) sin t, -pi sin^2(pi y) sin(2 pi x) sin t )
///   p   = cos(pi x) sin(pi y) sin t
/// with mu from its constitutive definition, and the source terms that make
/// this an exact solution of the forced system. All derivatives were derived
/// symbolically offline; tests cross-check them by finite differences.
class ManufacturedSolution {
  public:
    ManufacturedSolution(const GridSpec& grid, const PhysicalParams& params)
        : grid_(grid), par_(params) {}

    const GridSpec& grid() const { return grid_; }

    double phi(double t, double x, double y) const {
        return 2.0 + std::sin(t) * std::cos(kPi * x) * std::cos(kPi * y);
    }

    double mu(double t, double x, double y) const {
        const double eps = par_.epsilon;
        const double s = std::sin(t) * std::cos(kPi * x) * std::cos(kPi * y);
        const double ph = 2.0 + s;
        return 2.0 * eps * kPi * kPi * s + (ph * ph * ph - ph) / eps;
    }

    double ux(double t, double x, double y) const {
        const double sx = std::sin(kPi * x);
        return kPi * sx * sx * std::sin(2.0 * kPi * y) * std::sin(t);
    }

    double uy(double t, double x, double y) const {
        const double sy = std::sin(kPi * y);
        return -kPi * sy * sy * std::sin(2.0 * kPi * x) * std::sin(t);
    }

    double pressure(double t, double x, double y) const {
        return std::cos(kPi * x) * std::sin(kPi * y) * std::sin(t);
    }

    double g_phi(double t, double x, double y) const {
        Trig w(t, x, y);
        const double phit = w.ct * w.cx * w.cy;
        return phit + ux(t, x, y) * phi_x(w) + uy(t, x, y) * phi_y(w) -
               par_.epsilon * par_.mobility * lap_mu(w);
    }

    double g_ux(double t, double x, double y) const {
        Trig w(t, x, y);
        const double uxt = kPi * w.sx * w.sx * w.s2y * w.ct;
        const double lap = 2.0 * kPi * kPi * kPi * w.st * w.s2y * (w.c2x - 2.0 * w.sx * w.sx);
        const double dux_dx = kPi * kPi * w.st * w.s2x * w.s2y;
        const double dux_dy = 2.0 * kPi * kPi * w.st * w.sx * w.sx * w.c2y;
        const double px = -kPi * w.sx * w.sy * w.st;
        return uxt - par_.nu * lap + ux(t, x, y) * dux_dx + uy(t, x, y) * dux_dy + px -
               par_.gamma * mu(t, x, y) * phi_x(w);
    }

    double g_uy(double t, double x, double y) const {
        Trig w(t, x, y);
        const double uyt = -kPi * w.sy * w.sy * w.s2x * w.ct;
        const double lap = -2.0 * kPi * kPi * kPi * w.st * w.s2x * (w.c2y - 2.0 * w.sy * w.sy);
        const double duy_dx = -2.0 * kPi * kPi * w.st * w.sy * w.sy * w.c2x;
        const double duy_dy = -kPi * kPi * w.st * w.s2x * w.s2y;
        const double py = kPi * w.cx * w.cy * w.st;
        return uyt - par_.nu * lap + ux(t, x, y) * duy_dx + uy(t, x, y) * duy_dy + py -
               par_.gamma * mu(t, x, y) * phi_y(w);
    }

    /// Sample the exact state at its native grid locations.
    FlowState eval_state(double t) const {
        FlowState st{ScalarField(grid_), ScalarField(grid_), ScalarField(grid_),
                     StaggeredVelocity(grid_)};
        st.phi.fill_from([&](double x, double y) { return phi(t, x, y); });
        st.mu.fill_from([&](double x, double y) { return mu(t, x, y); });
        st.p.fill_from([&](double x, double y) { return pressure(t, x, y); });
        st.vel.fill_from([&](double x, double y) { return ux(t, x, y); },
                         [&](double x, double y) { return uy(t, x, y); });
        return st;
    }

    /// Source terms at one time level, sampled at cells / faces.
    Forcing forcing_at(double t) const {
        Forcing f{ScalarField(grid_), StaggeredVelocity(grid_)};
        f.g_phi.fill_from([&](double x, double y) { return g_phi(t, x, y); });
        f.g_vel.fill_from([&](double x, double y) { return g_ux(t, x, y); },
                          [&](double x, double y) { return g_uy(t, x, y); });
        return f;
    }

    std::function<FlowState(double)> state_sampler() const {
        return [self = *this](double t) { return self.eval_state(t); };
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;

    struct Trig {
        double st, ct, sx, cx, sy, cy, s2x, c2x, s2y, c2y;
        Trig(double t, double x, double y) {
            st = std::sin(t);
            ct = std::cos(t);
            sx = std::sin(kPi * x);
            cx = std::cos(kPi * x);
            sy = std::sin(kPi * y);
            cy = std::cos(kPi * y);
            s2x = std::sin(2.0 * kPi * x);
            c2x = std::cos(2.0 * kPi * x);
            s2y = std::sin(2.0 * kPi * y);
            c2y = std::cos(2.0 * kPi * y);
        }
    };

    double phi_x(const Trig& w) const { return -kPi * w.st * w.sx * w.cy; }
    double phi_y(const Trig& w) const { return -kPi * w.st * w.cx * w.sy; }

    /// lap(mu) through the chain rule in s = sin(t)cos(pi x)cos(pi y):
    /// lap(mu) = A'(s) lap(s) + A''(s) |grad s|^2 with A the scalar profile.
    double lap_mu(const Trig& w) const {
        const double eps = par_.epsilon;
        const double s = w.st * w.cx * w.cy;
        const double ph = 2.0 + s;
        const double lap_s = -2.0 * kPi * kPi * s;
        const double grad_s2 =
            kPi * kPi * w.st * w.st * (w.sx * w.sx * w.cy * w.cy + w.cx * w.cx * w.sy * w.sy);
        const double ap = 2.0 * eps * kPi * kPi + (3.0 * ph * ph - 1.0) / eps;
        const double app = 6.0 * ph / eps;
        return ap * lap_s + app * grad_s2;
    }

    GridSpec grid_;
    PhysicalParams par_;
};

// ---------------------------------------------------------------------------
// Initial data of the physical experiments.

struct CrossShape {
    double arm_width = 0.2;
    double arm_length = 0.7;
};

/// Plus-shaped region of phi = +1 (union of two centered axis-aligned
/// rectangles) in a phi = -1 background, with the rigid-rotation velocity
/// about the domain center.
inline std::pair<ScalarField, StaggeredVelocity> initial_shape_relaxation(
    const GridSpec& g, const CrossShape& shape = {}) {
    const double cx = g.x0 + 0.5 * g.Lx, cy = g.y0 + 0.5 * g.Ly;
    const double hw = 0.5 * shape.arm_width, hl = 0.5 * shape.arm_length;
    ScalarField phi(g);
    phi.fill_from([&](double x, double y) {
        const double dx = std::abs(x - cx), dy = std::abs(y - cy);
        const bool horizontal = dx <= hl && dy <= hw;
        const bool vertical = dx <= hw && dy <= hl;
        return (horizontal || vertical) ? 1.0 : -1.0;
    });
    StaggeredVelocity vel(g);
    vel.fill_from([&](double x, double y) {
        (void)x;
        return y - cy;
    },
                  [&](double x, double y) {
                      (void)y;
                      return -(x - cx);
                  });
    return {std::move(phi), std::move(vel)};
}

/// Two-bubble profile on [0,2pi]^2, sampled exactly as printed (the two tanh
/// arguments scale their length differently); u0 = 0, p0 = 0.
inline ScalarField initial_shrinking_bubble(const GridSpec& g, double eps) {
    const double pi = 3.14159265358979323846;
    ScalarField phi(g);
    phi.fill_from([&](double x, double y) {
        const double r1 = std::hypot(x + 0.8 - pi, y - pi);
        const double r2 = std::hypot(x - 1.7 - pi, y - pi);
        return 1.0 + std::tanh((1.4 - r1) / (1.5 * eps)) + std::tanh(0.5 - r2 / (1.5 * eps));
    });
    return phi;
}

}  // namespace chns
