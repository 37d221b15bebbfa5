#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "jpa/circuit.hpp"
#include "jpa/design_space.hpp"
#include "jpa/dynamics.hpp"
#include "jpa/errors.hpp"
#include "jpa/units.hpp"

using namespace jpa;

namespace {

DesignFamily device_a() { return build_family(15e-12, 8.1, FamilySpec{}); }

SolverOptions probe_only() {
    SolverOptions s;
    s.target_gain_db = 0.0;
    return s;
}

// Linear one-port: phi'' + g phi' + w0^2 phi = 2 g phi_in'.
Complex linear_reflection(double w, double w0, double g) {
    const Complex den(w0 * w0 - w * w, g * w);
    return Complex(-(w0 * w0 - w * w), g * w) / den;
}

}  // namespace

TEST_CASE("equation of motion at the DC point") {
    const auto d = device_a();
    const auto r = eom_rhs(d.params, d.bias, {0.0, 0.0}, 0.0);
    CHECK(r.dphi == 0.0);
    CHECK(r.ddphi == 0.0);
    const auto drive = eom_rhs(d.params, d.bias, {0.0, 0.0}, 3.0);
    CHECK(drive.ddphi == doctest::Approx(2.0 * d.params.gamma() * 3.0).epsilon(1e-14));
}

TEST_CASE("nonlinear bracket: small-phase bound and series remainder") {
    const int n = 25;
    for (double y : {0.3, 1.0, std::numbers::pi / 2, 2.5}) {
        const double phi = 1e-6;
        const double b = nonlinear_bracket(phi, y, n);
        const double u = phi / n;
        CHECK(std::abs(b) <= u * u / 2.0 + u * u * u);
        CHECK(b == doctest::Approx(-std::sin(y) * u * u / 2 - std::cos(y) * u * u * u / 6).epsilon(1e-8));

        // full minus cubic = sum_{k>=4} u^k/k! sin(y + k pi/2)
        const double phi_big = 0.5 * n;
        const double ub = 0.5;
        long double tail = 0.0L, term = 1.0L;
        for (int k = 1; k <= 40; ++k) {
            term *= ub / k;
            if (k >= 4) tail += term * std::sin(y + k * std::numbers::pi / 2);
        }
        const double diff = nonlinear_bracket(phi_big, y, n) -
                            nonlinear_bracket(phi_big, y, n, Nonlinearity::cubic);
        CHECK(diff == doctest::Approx(static_cast<double>(tail)).epsilon(1e-9));
    }
    CHECK(nonlinear_bracket(0.7, 1.0, 25, Nonlinearity::linear) == 0.0);
}

TEST_CASE("RK4 is fourth order") {
    // x'' = -x from (1, 0); exact x(1) = cos 1
    auto err = [](int steps) {
        const double h = 1.0 / steps;
        PhaseState s{1.0, 0.0};
        for (int i = 0; i < steps; ++i) {
            s = rk4_step([](double, double x, double) { return -x; }, s, i * h, h);
        }
        return std::abs(s.phi - std::cos(1.0));
    };
    const double e1 = err(20), e2 = err(40), e3 = err(80);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    CHECK(p1 == doctest::Approx(4.0).epsilon(0.05));
    CHECK(p2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("two-tone construction") {
    const auto d = make_two_tone(12e9, 1e6, 1e6, 0.1, 0.01);
    REQUIRE(d.pump());
    REQUIRE(d.probe());
    CHECK(d.pump()->frequency_hz == 12e9);
    CHECK(d.probe()->frequency_hz == 6.001e9);
    CHECK(grid_multiple(12e9 - 6.001e9, 1e6) == 5999);
    CHECK_THROWS_AS((void)make_two_tone(12e9, 0.5e6, 1e6, 0.1, 0.01), IncommensurateDrive);
    const auto a = make_two_tone(11.62e9, 1e6, 1e6, 0.1, 0.01);
    CHECK(a.probe()->frequency_hz == doctest::Approx(5.811e9).epsilon(1e-15));
    CHECK_THROWS_AS((void)make_two_tone(11.62e9, 1e6, 1e6, -0.1, 0.01), InvalidParameter);
}

TEST_CASE("wave power") {
    const double w = kTwoPi * 6e9;
    CHECK(wave_power(1e-3, w, 50) == doctest::Approx(1.539e-18).epsilon(1e-3));
    CHECK(wave_power_dbm(1e-3, w, 50) == doctest::Approx(-148.1).epsilon(1e-3));
    CHECK(wave_power(0.0, w, 50) == 0.0);
    for (double a : {1e-7, 3e-3, 0.5}) {
        CHECK(amplitude_for_power(wave_power(a, w, 50), w, 50) == doctest::Approx(a).epsilon(1e-12));
        CHECK(amplitude_for_power_dbm(wave_power_dbm(a, w, 114.5), w, 114.5) ==
              doctest::Approx(a).epsilon(1e-12));
    }
}

TEST_CASE("linear model matches the closed-form reflection") {
    const auto d = device_a();
    SolverOptions s = probe_only();
    s.nonlinearity = Nonlinearity::linear;
    const double w0 = d.bias.omega0;
    const double g = d.params.gamma();
    const double kappa_hz = g / kTwoPi;
    for (int i = -4; i <= 4; ++i) {
        const double f = std::round((w0 / kTwoPi + i * 0.75 * kappa_hz) / 1e6) * 1e6;
        const DriveSpec drive(1e6, {Tone{f, 1e-3, 0.3, ToneRole::probe}});
        const auto sol = integrate_to_steady_state(d.params, d.bias, drive, s);
        CHECK(sol.converged);
        const auto& h = sol.at(f);
        const Complex r = h.outgoing / h.incoming;
        const Complex expect = linear_reflection(kTwoPi * f, w0, g);
        CHECK(std::abs(r - expect) < 1e-6);
        CHECK(h.outgoing == h.node - h.incoming);
    }
}

TEST_CASE("pump off: unity reflection with the full nonlinearity") {
    const auto d = device_a();
    const double f0 = d.bias.omega0 / kTwoPi;
    const double kappa_hz = d.params.gamma() / kTwoPi;
    for (int i = -10; i <= 10; ++i) {
        const double f = std::round((f0 + i * 0.3 * kappa_hz) / 1e6) * 1e6;
        const double a = amplitude_for_power_dbm(-140, kTwoPi * f, d.params.r_env());
        const DriveSpec drive(1e6, {Tone{f, a, 0.0, ToneRole::probe}});
        const auto sol = integrate_to_steady_state(d.params, d.bias, drive, probe_only());
        REQUIRE(sol.converged);
        const auto& h = sol.at(f);
        CHECK(std::abs(std::abs(h.outgoing) / std::abs(h.incoming) - 1.0) < 1e-6);
        CHECK(sol.power_imbalance() < 1e-2);
    }
}

TEST_CASE("pumped run: power balance, determinism and initial conditions") {
    const auto d = device_a();
    const double fp = 2 * std::round(d.bias.omega0 / kTwoPi / 1e6) * 1e6;
    const double r = d.params.r_env();
    // a few dB below the threshold estimate: moderate gain, fast settling
    const double pump = amplitude_for_power_dbm(-88.0, kTwoPi * fp, r);
    const double probe = amplitude_for_power_dbm(-140.0, kTwoPi * (fp / 2 + 1e6), r);
    const auto drive = make_two_tone(fp, 1e6, 1e6, pump, probe);
    SolverOptions s;
    s.target_gain_db = 10.0;
    const auto a = integrate_to_steady_state(d.params, d.bias, drive, s);
    const auto b = integrate_to_steady_state(d.params, d.bias, drive, s);
    REQUIRE(a.converged);
    CHECK(a.power_imbalance() < 1e-2);
    REQUIRE(a.harmonics.size() == b.harmonics.size());
    for (std::size_t i = 0; i < a.harmonics.size(); ++i) {
        CHECK(a.harmonics[i].node == b.harmonics[i].node);
        CHECK(a.harmonics[i].outgoing == b.harmonics[i].outgoing);
    }
    // tracked set: DC, idler, signal, pump, 2 pump
    CHECK(a.find(0.0) != nullptr);
    CHECK(a.find(fp / 2 - 1e6) != nullptr);
    CHECK(a.find(2 * fp) != nullptr);

    SolverOptions kicked = s;
    kicked.initial = {1e-3, 1e5};
    const auto c = integrate_to_steady_state(d.params, d.bias, drive, kicked);
    const Complex sa = a.at(fp / 2 + 1e6).outgoing;
    const Complex sc = c.at(fp / 2 + 1e6).outgoing;
    CHECK(std::abs(sc - sa) / std::abs(sa) < 1e-4);
}

TEST_CASE("convergence failures") {
    const auto d = device_a();
    const double fp = 2 * std::round(d.bias.omega0 / kTwoPi / 1e6) * 1e6;
    const auto drive = make_two_tone(fp, 1e6, 1e6, 1e-3, 1e-4);
    SolverOptions s;
    s.warmup_periods = 0;
    s.tolerance = 1e-30;
    s.max_common_periods = 2;
    CHECK_THROWS_AS((void)integrate_to_steady_state(d.params, d.bias, drive, s), NoConvergence);
    s.allow_unconverged = true;
    const auto sol = integrate_to_steady_state(d.params, d.bias, drive, s);
    CHECK_FALSE(sol.converged);
    CHECK(sol.periods_integrated == 2);

    SolverOptions bad;
    bad.min_common_periods = 1;
    CHECK_THROWS_AS((void)integrate_to_steady_state(d.params, d.bias, drive, bad), InvalidParameter);
}

TEST_CASE("trajectory dump") {
    const auto d = device_a();
    const auto path = std::filesystem::temp_directory_path() / "jpa_trajectory_test.csv";
    SolverOptions s = probe_only();
    s.warmup_periods = 2;
    s.trajectory_csv = path;
    s.trajectory_stride = 64;
    s.allow_unconverged = true;
    const DriveSpec drive(1e6, {Tone{5.8e9, 1e-3, 0.0, ToneRole::probe}});
    (void)integrate_to_steady_state(d.params, d.bias, drive, s);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "time_s,phi_rad,dphi_rad_per_s");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows > 8);
    std::filesystem::remove(path);
}
