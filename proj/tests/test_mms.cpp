#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "chns/mms.hpp"
#include "chns/operators.hpp"
#include "chns/schemes.hpp"

using namespace chns;

namespace {
constexpr double kPi = 3.14159265358979323846;

GridSpec unit_grid(int n) { return GridSpec{n, n, 0.0, 0.0, 1.0, 1.0}; }

PhysicalParams paper_params() {
    PhysicalParams p;
    p.epsilon = 0.2;
    p.mobility = 0.01;
    p.gamma = 0.01;
    p.nu = 1.0;
    return p;
}
}  // namespace

TEST_CASE("reference state at t = 0") {
    GridSpec g = unit_grid(16);
    PhysicalParams par = paper_params();
    ManufacturedSolution mms(g, par);
    FlowState st = mms.eval_state(0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            CHECK(st.phi(i, j) == 2.0);
            CHECK(st.p(i, j) == 0.0);
            CHECK(st.mu(i, j) == Catch::Approx(6.0 / par.epsilon));  // = 30
        }
    CHECK(norm_l2(st.vel) == 0.0);
    CHECK(mms.phi(0.5 * kPi, 0.0, 0.0) == Catch::Approx(3.0));
}

TEST_CASE("forcing terms at t = 0 match the closed forms") {
    GridSpec g = unit_grid(16);
    ManufacturedSolution mms(g, paper_params());
    Forcing f = mms.forcing_at(0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const double expect = std::cos(kPi * g.xc(i)) * std::cos(kPi * g.yc(j));
            CHECK(f.g_phi(i, j) == Catch::Approx(expect).margin(1e-14));
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) {
            const double sx = std::sin(kPi * g.xf(i));
            const double expect = kPi * sx * sx * std::sin(2.0 * kPi * g.yc(j));
            CHECK(f.g_vel.u(i, j) == Catch::Approx(expect).margin(1e-13));
        }
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const double sy = std::sin(kPi * g.yf(j));
            const double expect = -kPi * sy * sy * std::sin(2.0 * kPi * g.xc(i));
            CHECK(f.g_vel.v(i, j) == Catch::Approx(expect).margin(1e-13));
        }
}

TEST_CASE("closed-form derivatives cross-checked by finite differences") {
    PhysicalParams par = paper_params();
    par.gamma = 0.7;  // exercise all parameter paths
    par.mobility = 0.3;
    par.nu = 0.4;
    GridSpec g = unit_grid(8);
    ManufacturedSolution mms(g, par);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dx(0.05, 0.95), dts(0.1, 2.5);
    const double d = 1e-4;
    for (int trial = 0; trial < 50; ++trial) {
        const double t = dts(rng), x = dx(rng), y = dx(rng);

        // mu equals its definition with a finite-difference laplacian of phi
        const double lap_phi_fd =
            (mms.phi(t, x + d, y) + mms.phi(t, x - d, y) + mms.phi(t, x, y + d) +
             mms.phi(t, x, y - d) - 4.0 * mms.phi(t, x, y)) /
            (d * d);
        const double mu_fd =
            -par.epsilon * lap_phi_fd + f_potential(mms.phi(t, x, y)) / par.epsilon;
        CHECK(mms.mu(t, x, y) == Catch::Approx(mu_fd).margin(5e-5));

        // g_phi = phi_t + u . grad(phi) - eps*M*lap(mu), all by differences
        const double phi_t = (mms.phi(t + d, x, y) - mms.phi(t - d, x, y)) / (2 * d);
        const double phi_x = (mms.phi(t, x + d, y) - mms.phi(t, x - d, y)) / (2 * d);
        const double phi_y = (mms.phi(t, x, y + d) - mms.phi(t, x, y - d)) / (2 * d);
        const double lap_mu_fd =
            (mms.mu(t, x + d, y) + mms.mu(t, x - d, y) + mms.mu(t, x, y + d) +
             mms.mu(t, x, y - d) - 4.0 * mms.mu(t, x, y)) /
            (d * d);
        const double gphi_fd = phi_t + mms.ux(t, x, y) * phi_x + mms.uy(t, x, y) * phi_y -
                               par.epsilon * par.mobility * lap_mu_fd;
        CHECK(mms.g_phi(t, x, y) == Catch::Approx(gphi_fd).margin(5e-4));

        // g_u by the same recipe
        const double ux_t = (mms.ux(t + d, x, y) - mms.ux(t - d, x, y)) / (2 * d);
        const double ux_x = (mms.ux(t, x + d, y) - mms.ux(t, x - d, y)) / (2 * d);
        const double ux_y = (mms.ux(t, x, y + d) - mms.ux(t, x, y - d)) / (2 * d);
        const double lap_ux_fd =
            (mms.ux(t, x + d, y) + mms.ux(t, x - d, y) + mms.ux(t, x, y + d) +
             mms.ux(t, x, y - d) - 4.0 * mms.ux(t, x, y)) /
            (d * d);
        const double p_x = (mms.pressure(t, x + d, y) - mms.pressure(t, x - d, y)) / (2 * d);
        const double gux_fd = ux_t - par.nu * lap_ux_fd + mms.ux(t, x, y) * ux_x +
                              mms.uy(t, x, y) * ux_y + p_x -
                              par.gamma * mms.mu(t, x, y) * phi_x;
        CHECK(mms.g_ux(t, x, y) == Catch::Approx(gux_fd).margin(5e-3));

        const double uy_t = (mms.uy(t + d, x, y) - mms.uy(t - d, x, y)) / (2 * d);
        const double uy_x = (mms.uy(t, x + d, y) - mms.uy(t, x - d, y)) / (2 * d);
        const double uy_y = (mms.uy(t, x, y + d) - mms.uy(t, x, y - d)) / (2 * d);
        const double lap_uy_fd =
            (mms.uy(t, x + d, y) + mms.uy(t, x - d, y) + mms.uy(t, x, y + d) +
             mms.uy(t, x, y - d) - 4.0 * mms.uy(t, x, y)) /
            (d * d);
        const double p_y = (mms.pressure(t, x, y + d) - mms.pressure(t, x, y - d)) / (2 * d);
        const double guy_fd = uy_t - par.nu * lap_uy_fd + mms.ux(t, x, y) * uy_x +
                              mms.uy(t, x, y) * uy_y + p_y -
                              par.gamma * mms.mu(t, x, y) * phi_y;
        CHECK(mms.g_uy(t, x, y) == Catch::Approx(guy_fd).margin(5e-3));
    }
}

TEST_CASE("exact velocity samples are discretely divergence free") {
    // For this field u_xxx + v_yyy vanishes identically, so the O(h^2)
    // truncation of the face-difference divergence cancels; round-off remains.
    PhysicalParams par = paper_params();
    for (int n : {32, 64}) {
        GridSpec g = unit_grid(n);
        ManufacturedSolution mms(g, par);
        StaggeredVelocity u = mms.eval_state(0.8).vel;
        CHECK(divergence_inf(u) <= 1e-11);
    }
}

TEST_CASE("mu samples match the discrete constitutive relation at second order") {
    PhysicalParams par = paper_params();
    double err[2];
    int k = 0;
    for (int n : {32, 64}) {
        GridSpec g = unit_grid(n);
        ManufacturedSolution mms(g, par);
        FlowState st = mms.eval_state(0.8);
        ScalarField mu_h = mu_from_phi(par, st.phi);
        double e = 0.0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) e = std::max(e, std::abs(mu_h(i, j) - st.mu(i, j)));
        err[k++] = e;
    }
    const double order = std::log2(err[0] / err[1]);
    CHECK(order > 1.9);
    CHECK(order < 2.1);
}

TEST_CASE("exact state plus forcing satisfies the discrete equations at O(h^2)") {
    PhysicalParams par = paper_params();
    const double t = 0.7, d = 1e-6;
    double err_phase[2], err_mom[2];
    int k = 0;
    for (int n : {32, 64}) {
        GridSpec g = unit_grid(n);
        ManufacturedSolution mms(g, par);
        FlowState st = mms.eval_state(t);
        st.vel.apply_dirichlet(BoundaryCondition::homogeneous());
        Forcing fc = mms.forcing_at(t);

        ScalarField conv = convect_scalar(st.vel, st.phi);
        ScalarField lapmu = laplacian_neumann(st.mu);
        double e = 0.0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double phi_t =
                    (mms.phi(t + d, g.xc(i), g.yc(j)) - mms.phi(t - d, g.xc(i), g.yc(j))) /
                    (2 * d);
                const double r = phi_t + conv(i, j) -
                                 par.epsilon * par.mobility * lapmu(i, j) - fc.g_phi(i, j);
                e = std::max(e, std::abs(r));
            }
        err_phase[k] = e;

        StaggeredVelocity lapu = laplacian_velocity(st.vel);
        StaggeredVelocity skew = convect_velocity(st.vel, st.vel);
        StaggeredVelocity gradp = gradient_cell_to_face(st.p);
        StaggeredVelocity cap = capillary_force(st.mu, st.phi);
        e = 0.0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 1; i < g.nx; ++i) {
                const double u_t =
                    (mms.ux(t + d, g.xf(i), g.yc(j)) - mms.ux(t - d, g.xf(i), g.yc(j))) / (2 * d);
                const double r = u_t - par.nu * lapu.u(i, j) + skew.u(i, j) + gradp.u(i, j) -
                                 par.gamma * cap.u(i, j) - fc.g_vel.u(i, j);
                e = std::max(e, std::abs(r));
            }
        err_mom[k] = e;
        ++k;
    }
    CHECK(std::log2(err_phase[0] / err_phase[1]) > 1.8);
    CHECK(std::log2(err_mom[0] / err_mom[1]) > 1.8);
}

TEST_CASE("shape-relaxation initial data") {
    GridSpec g = unit_grid(64);
    auto [phi, vel] = initial_shape_relaxation(g);
    // domain center lies inside the cross, corners outside
    CHECK(phi(32, 32) == 1.0);
    CHECK(phi(0, 0) == -1.0);

    // rotational initial velocity sampled at faces
    CHECK(vel.u(0, 0) == Catch::Approx(g.yc(0) - 0.5));
    CHECK(vel.v(5, 0) == Catch::Approx(0.5 - g.xc(5)));

    // default arms: area 2*w*l - w^2; mass 2*area - 1 within a one-cell band
    const double area = 2.0 * 0.2 * 0.7 - 0.2 * 0.2;
    const double perimeter = 4.0 * 0.7 + 4.0 * 0.2;  // upper bound
    CHECK(std::abs(integrate(phi) - (2.0 * area - 1.0)) <= 2.0 * perimeter * g.hx());

    // arm sizes aligned with cell boundaries: the sampled mass is exact
    CrossShape aligned{0.25, 0.75};
    auto [phi2, vel2] = initial_shape_relaxation(g, aligned);
    const double area2 = 2.0 * 0.25 * 0.75 - 0.25 * 0.25;
    CHECK(integrate(phi2) == Catch::Approx(2.0 * area2 - 1.0).margin(1e-12));
}

TEST_CASE("shrinking-bubble initial data") {
    const double two_pi = 2.0 * kPi;
    GridSpec g{64, 64, 0.0, 0.0, two_pi, two_pi};
    const double eps = 0.15;
    ScalarField phi = initial_shrinking_bubble(g, eps);

    // pinned by direct evaluation of the printed formula
    CHECK(phi(0, 0) == Catch::Approx(-0.9999999993005909).margin(1e-12));
    CHECK(phi(23, 32) == Catch::Approx(0.9999865714027505).margin(1e-12));

    // u0 = 0, p0 = 0 by construction in the experiment plans
    StaggeredVelocity u0(g);
    CHECK(norm_l2(u0) == 0.0);
}
