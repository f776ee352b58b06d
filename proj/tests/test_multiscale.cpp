#include "kpz/multiscale.hpp"
#include "kpz/quadrature.hpp"

#include <doctest.h>

#include <cmath>

using namespace kpz;

TEST_CASE("smooth step")
{
    CHECK(smooth_step(-0.5) == 0.0);
    CHECK(smooth_step(0.0) == 0.0);
    CHECK(smooth_step(1.0) == 1.0);
    CHECK(smooth_step(1.7) == 1.0);
    CHECK(smooth_step(0.5) == doctest::Approx(0.5));
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
        const double v = smooth_step(i / 100.0);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("partition of unity in time")
{
    ScalePartition P(8);
    for (double tau : {1e-3, 0.3, 1.0, 2.5, 7.0, 33.0, 400.0}) {
        double s = 0.0;
        for (int j = 0; j <= P.jmax(); ++j) s += P.weight(j, tau);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (int j = 1; j <= P.jmax(); ++j) {
        CHECK(P.weight(j, 0.99 * P.support_lo(j)) == 0.0);
        CHECK(P.weight(j, 1.01 * P.support_hi(j)) == 0.0);
    }
    CHECK(P.weight(0, 1.0) == 1.0);
    CHECK(P.weight_ir(8.0) == doctest::Approx(1.0 - P.weight(0, 8.0)));

    const auto t = P.tabulate();
    CHECK(t.s_min >= 0.5 - 1e-12);
    CHECK(t.s_max <= 2.0);
    CHECK(t.max_reconstruction_error < 1e-8);
}

TEST_CASE("heat kernel normalization and scale sum")
{
    for (int d : {1, 3}) {
        const double mass = sphere_area(d) * integrate_panels([&](double r) { return std::pow(r, d - 1) * heat_kernel(1.3, d, 0.7, r); },
                                                              0.0, 12.0, 24, 16);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    }
    ScalePartition P(8);
    for (double k : {0.0, 0.4, 2.0})
        for (double tau : {0.2, 3.0, 40.0}) {
            double s = 0.0;
            for (int j = 0; j <= P.jmax(); ++j) s += P.G_hat(j, 1.0, tau, k);
            CHECK(s == doctest::Approx(std::exp(-k * k * tau)).epsilon(1e-10));
        }
}

TEST_CASE("single-scale constants do not drift with j")
{
    ScalePartition P(8);
    double lo = 1e300, hi = 0.0;
    for (int j = 1; j <= 6; ++j) {
        const auto r = check_single_scale(P, j, 0, 1, 3);
        lo = std::min(lo, r.sup_constant);
        hi = std::max(hi, r.sup_constant);
        CHECK(r.mass_constant > 0);
    }
    CHECK(hi < 2.0 * lo);
}

TEST_CASE("PW2 volume inequality")
{
    for (int d : {3, 4, 5})
        for (int j2 = 1; j2 <= 12; ++j2)
            for (int j1 = 1; j1 <= j2; ++j1) CHECK(check_pw2(d, j1, j2).holds);
    CHECK_THROWS(check_pw2(2, 1, 2));
    CHECK_THROWS(check_pw2(3, 3, 2));
}

TEST_CASE("gradient bound needs the viscosity shift")
{
    const auto shifted = gradient_bound_check(1.0, 0.2, {2, 1, 0, 0}, 3, 160, true);
    CHECK(shifted.bounded);
    CHECK(shifted.nu_shift > 0);
    const auto bare = gradient_bound_check(1.0, 0.2, {2, 1, 0, 0}, 3, 160, false);
    CHECK_FALSE(bare.bounded);
}

TEST_CASE("effective propagator")
{
    CHECK(radial_bump_fourier(3, 0.5, 0.0) == doctest::Approx(1.0));
    CHECK(radial_bump_fourier(3, 0.5, 10.0) < 0.5);

    ScalePartition P(8);
    EffectivePropagator one(P, 1.0, 0.1, 3, PropagatorMode::one_eff);
    for (double tau : {1.0, 5.0})
        for (double k : {0.2, 1.0}) CHECK(std::abs(one.fourier(tau, k) - one.fourier_closed(tau, k)) < 1e-5);

    // with no viscosity shift the effective kernel is the heat kernel itself
    EffectivePropagator eff(P, 1.0, 0.0, 3, PropagatorMode::eff);
    CHECK(eff.fourier(2.0, 0.7) == doctest::Approx(std::exp(-0.49 * 2.0)).epsilon(1e-8));
}

TEST_CASE("vertex expansion against the SHE step")
{
    SimConfig c;
    c.d = 1;
    c.L = 16;
    c.dt = 0.05;
    c.T = 1.0;
    c.lambda = 0.05;
    c.noise = NoiseKind::kick;
    auto n1 = make_noise(c.noise, nullptr, c.lattice(), c.dt, 3);
    auto nr = vertex_neumann(*n1, c, 6);
    REQUIRE(nr.ratios.size() >= 1);
    for (double r : nr.ratios) CHECK(r < 1.0);
    auto n2 = make_noise(c.noise, nullptr, c.lattice(), c.dt, 3);
    const auto w = run_trajectory(c, Equation::she, *n2);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(nr.w[i] - w[i]) < 1e-3);

    ZeroNoise z;
    auto flat = vertex_neumann(z, c, 3);
    for (double w : flat.w) CHECK(w == doctest::Approx(1.0));
    CHECK_THROWS(vertex_neumann(z, c, 9));
}
