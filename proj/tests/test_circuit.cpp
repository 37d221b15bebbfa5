#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "jpa/circuit.hpp"
#include "jpa/errors.hpp"
#include "jpa/units.hpp"

using namespace jpa;
using std::numbers::pi;

namespace {

CircuitParams fig_a2(double c_pf = 2.0) {
    return CircuitParams(25, 15e-12, 60e-12, c_pf * 1e-12, 50.0);
}

// plain bisection, independent of the library's solver
double bisect(auto f, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (lo + hi);
        ((f(lo) < 0) == (f(m) < 0) ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(CircuitParams(0, 15e-12, 60e-12, 2e-12, 50), InvalidParameter);
    CHECK_THROWS_AS(CircuitParams(25, -15e-12, 60e-12, 2e-12, 50), InvalidParameter);
    CHECK_THROWS_AS(CircuitParams(25, 15e-12, 60e-12, 0.0, 50), InvalidParameter);
    CHECK_THROWS_AS(CircuitParams(25, 15e-12, 60e-12, 2e-12, -1), InvalidParameter);
    const CircuitParams hysteretic(25, 60e-12, 60e-12, 2e-12, 50);
    CHECK_THROWS_AS((void)solve_dc_phase(hysteretic, 1.0), BetaHysteretic);
    CHECK_THROWS_AS((void)max_c3_bias(hysteretic), BetaHysteretic);
}

TEST_CASE("derived quantities") {
    const auto p = fig_a2();
    CHECK(p.beta() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p.gamma() == doctest::Approx(1.0 / (2e-12 * 50.0)).epsilon(1e-12));
    CHECK(p.omega_l_sq() == doctest::Approx(1.0 / (2e-12 * 15e-12 * 25)).epsilon(1e-12));
    CHECK(p.omega_j_sq() == doctest::Approx(1.0 / (2e-12 * 60e-12)).epsilon(1e-12));
    const auto q = p.with_c_main(3e-12);
    CHECK(q.omega_j_sq() == doctest::Approx(1.0 / (3e-12 * 60e-12)).epsilon(1e-12));
}

TEST_CASE("DC solve: fixed points and the pi/2 example") {
    const auto p = fig_a2();
    const auto zero = solve_dc_phase(p, 0.0);
    CHECK(zero.phi_dc == 0.0);
    CHECK(zero.junction_phase(25) == 0.0);

    const auto at_pi = solve_dc_phase(p, pi);
    CHECK(std::abs(at_pi.phi_dc) < 1e-10);
    CHECK(at_pi.junction_phase(25) == doctest::Approx(pi).epsilon(1e-12));

    // y = pi/2 + x with 4x + cos x = 0
    const double x = bisect([](double v) { return 4 * v + std::cos(v); }, -1.0, 0.0);
    const auto b = solve_dc_phase(p, pi / 2);
    CHECK(b.phi_dc / 25 == doctest::Approx(x).epsilon(1e-10));
    CHECK(b.phi_dc / 25 == doctest::Approx(-0.2427).epsilon(1e-3));
    CHECK(b.phi_dc == doctest::Approx(-6.067).epsilon(1e-3));
    CHECK(b.junction_phase(25) == doctest::Approx(1.3281).epsilon(1e-4));
    CHECK(std::abs(dc_residual(p, b)) < 1e-12);
}

TEST_CASE("DC solve is odd and agrees with fixed-point iteration") {
    const auto p = fig_a2();
    for (double phi_e : {0.1, 0.7, 1.3, 2.2, 2.9, 3.1}) {
        const auto plus = solve_dc_phase(p, phi_e);
        const auto minus = solve_dc_phase(p, -phi_e);
        CHECK(minus.phi_dc == doctest::Approx(-plus.phi_dc).epsilon(1e-12));
        double y = phi_e;
        for (int i = 0; i < 500; ++i) y = phi_e - 0.25 * std::sin(y);
        CHECK(std::abs(plus.junction_phase(25) - y) < 1e-10);
        CHECK(std::abs(dc_residual(p, plus)) < 1e-12);
    }
}

TEST_CASE("resonance and array inductance") {
    const auto p = fig_a2();
    const auto b0 = solve_dc_phase(p, 0.0);
    const double l0 = 25.0 / (1.0 / 15e-12 + 1.0 / 60e-12);
    CHECK(array_inductance(p, b0) == doctest::Approx(l0).epsilon(1e-12));
    CHECK(resonant_frequency(p, b0) / kTwoPi / 1e9 == doctest::Approx(6.497).epsilon(2e-4));

    const auto bpi = solve_dc_phase(p, pi);
    CHECK(array_inductance(p, bpi) == doctest::Approx(500e-12).epsilon(1e-9));
    CHECK(resonant_frequency(p, bpi) / kTwoPi / 1e9 == doctest::Approx(5.033).epsilon(2e-4));

    // omega0^2 from the two-term form
    for (double phi_e : {0.0, 0.5, 1.8, 2.6}) {
        const auto b = solve_dc_phase(p, phi_e);
        const double w2 = p.omega_l_sq() + p.omega_j_sq() / 25 * std::cos(b.junction_phase(25));
        const double w = resonant_frequency(p, b);
        CHECK(w * w == doctest::Approx(w2).epsilon(1e-12));
        CHECK(b.omega0 == doctest::Approx(w).epsilon(1e-15));
    }

    const CircuitParams paper(25, 14.5e-12, 60e-12, 2e-12, 50);
    CHECK(ph_from_henries(array_inductance(paper, solve_dc_phase(paper, 0.0))) ==
          doctest::Approx(292).epsilon(2e-3));
}

TEST_CASE("quality factor bookkeeping") {
    const CircuitParams p(25, 15e-12, 60e-12, 2e-12, 50);
    const auto b0 = solve_dc_phase(p, 0.0);
    const double l = array_inductance(p, b0);
    CHECK(quality_factor(p, b0) == doctest::Approx(50 * std::sqrt(2e-12 / l)).epsilon(1e-12));
    // 50 ohm, 2 pF, 300 pH zero-bias array: Q near 4
    CHECK(quality_factor(p, b0) == doctest::Approx(4.08).epsilon(0.01));
}

TEST_CASE("Taylor coefficients") {
    const auto p = fig_a2();
    CHECK(taylor_coefficients(p, solve_dc_phase(p, 0.0)).c3 == 0.0);
    const auto star = max_c3_bias(p);
    const auto t = taylor_coefficients(p, star);
    CHECK(std::abs(t.c4) <= 1e-12 * std::abs(t.c3));
    const double wj2 = 1.0 / (2e-12 * 60e-12);
    CHECK(t.c3 == doctest::Approx(-wj2 / (2.0 * 625.0)).epsilon(1e-12));
    // finite-difference cross-check of c2 at a generic bias
    const auto b = solve_dc_phase(p, 1.0);
    const double y = b.junction_phase(25);
    const double h = 1e-4;
    const double fd = wj2 * (std::sin((h) / 25 + y) - std::sin(-h / 25 + y)) / (2 * h);
    CHECK(taylor_coefficients(p, b).c2 == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("max-c3 bias: closed form and numeric search") {
    for (double beta : {0.01, 0.1, 0.25, 0.5, 0.9}) {
        const CircuitParams p(25, beta * 60e-12, 60e-12, 2e-12, 50);
        const auto b = max_c3_bias(p);
        CHECK(std::abs(b.phi_e - (pi / 2 + beta)) < 1e-9);
        CHECK(std::abs(max_c3_phi_e_numeric(p) - (pi / 2 + beta)) < 1e-9);
        CHECK(b.junction_phase(25) == doctest::Approx(pi / 2).epsilon(1e-12));
        CHECK(array_inductance(p, b) == doctest::Approx(25 * beta * 60e-12).epsilon(1e-12));
    }
    const auto p = fig_a2();
    const auto b = max_c3_bias(p);
    CHECK(b.phi_e / (2 * pi) == doctest::Approx(0.2898).epsilon(1e-3));
    CHECK(resonant_frequency(p, b) / kTwoPi / 1e9 == doctest::Approx(5.81).epsilon(1e-3));
}

TEST_CASE("tunability") {
    const auto p = fig_a2();
    std::vector<double> grid;
    for (int i = 0; i <= 40; ++i) grid.push_back(pi * i / 40);
    const auto curve = tunability_curve(p, grid);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].f0_hz <= curve[i - 1].f0_hz);
    const double depth = curve.front().f0_hz - curve.back().f0_hz;
    CHECK(depth / 1e9 == doctest::Approx(1.46).epsilon(0.01));

    const CircuitParams weak(25, 6e-12, 60e-12, 2e-12, 50);
    const std::vector<double> ends{0.0, pi};
    const auto w = tunability_curve(weak, ends);
    CHECK(w[0].f0_hz - w[1].f0_hz < depth);

    const std::vector<double> sym{-1.1, 1.1};
    const auto s = tunability_curve(p, sym);
    CHECK(s[0].f0_hz == doctest::Approx(s[1].f0_hz).epsilon(1e-13));
}

TEST_CASE("effective environment") {
    const double w = kTwoPi * 5.81e9;
    const auto e = effective_environment(50, 0.26e-12, w);
    CHECK(e.r_parallel == doctest::Approx(272).epsilon(0.01));
    CHECK(e.c_parallel * 1e12 == doctest::Approx(0.212).epsilon(0.01));
    // back to series: Z = (R || 1/(jwC)) must equal 50 + 1/(jwCc)
    const std::complex<double> yp(1.0 / e.r_parallel, w * e.c_parallel);
    const std::complex<double> z = 1.0 / yp;
    CHECK(z.real() == doctest::Approx(50).epsilon(1e-12));
    CHECK(z.imag() == doctest::Approx(-1.0 / (w * 0.26e-12)).epsilon(1e-12));
    CHECK(effective_environment(50, 1.0, w).r_parallel == doctest::Approx(50).epsilon(1e-9));
    CHECK(effective_environment(50, 0.26e-12, 1.0).r_parallel > 1e20);
}
