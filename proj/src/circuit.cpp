#include "jpa/circuit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "jpa/errors.hpp"
#include "jpa/units.hpp"

namespace jpa {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidParameter(std::string(name) + " must be finite and > 0");
    }
}

// Root of g(y) = y + beta sin y - phi_e for phi_e >= 0. g' = 1 + beta cos y > 0, so the
// root is unique and lies in [phi_e - beta, phi_e + beta].
double solve_junction_phase(double beta, double phi_e) {
    double lo = phi_e - beta;
    double hi = phi_e + beta;
    double y = phi_e - beta * std::sin(phi_e);
    for (int iter = 0; iter < 200; ++iter) {
        const double g = y + beta * std::sin(y) - phi_e;
        if (g == 0.0) break;
        if (g > 0.0) hi = y; else lo = y;
        const double dg = 1.0 + beta * std::cos(y);
        double next = y - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - y) <= 1e-16 * std::max(1.0, std::abs(y))) {
            y = next;
            break;
        }
        y = next;
    }
    return y;
}

}  // namespace

CircuitParams::CircuitParams(int n_squids, double l_shunt, double l_junction, double c_main,
                             double r_env, std::optional<double> c_coupling)
    : n_squids_(n_squids),
      l_shunt_(l_shunt),
      l_junction_(l_junction),
      c_main_(c_main),
      r_env_(r_env),
      c_coupling_(c_coupling) {
    if (n_squids < 1) throw InvalidParameter("n_squids must be >= 1");
    require_positive(l_shunt, "l_shunt");
    require_positive(l_junction, "l_junction");
    require_positive(c_main, "c_main");
    require_positive(r_env, "r_env");
    if (c_coupling) require_positive(*c_coupling, "c_coupling");
}

CircuitParams CircuitParams::with_c_main(double c) const {
    return {n_squids_, l_shunt_, l_junction_, c, r_env_, c_coupling_};
}

CircuitParams CircuitParams::with_r_env(double r) const {
    return {n_squids_, l_shunt_, l_junction_, c_main_, r, c_coupling_};
}

double dc_residual(const CircuitParams& params, const FluxBias& bias) {
    const int n = params.n_squids();
    return bias.phi_dc / n + params.beta() * std::sin(bias.delta_phi / n);
}

FluxBias solve_dc_phase(const CircuitParams& params, double phi_e) {
    const double beta = params.beta();
    if (beta >= 1.0) throw BetaHysteretic(beta);
    if (!std::isfinite(phi_e)) throw InvalidParameter("phi_e must be finite");

    // Solve for |phi_e| and mirror, so the solution is odd to the last bit.
    const double y_abs = solve_junction_phase(beta, std::abs(phi_e));
    const double y = std::signbit(phi_e) ? -y_abs : y_abs;
    const int n = params.n_squids();

    FluxBias bias;
    bias.phi_e = phi_e;
    bias.phi_ext_total = n * phi_e;
    bias.phi_dc = n * (y - phi_e);
    bias.delta_phi = n * y;
    bias.omega0 = resonant_frequency(params, bias);
    return bias;
}

double array_inductance(const CircuitParams& params, const FluxBias& bias) {
    const double inv = 1.0 / params.l_shunt() +
                       std::cos(bias.junction_phase(params.n_squids())) / params.l_junction();
    if (!(inv > 0.0)) {
        throw NegativeStiffness("array inverse inductance is not positive at this bias");
    }
    return params.n_squids() / inv;
}

double resonant_frequency(const CircuitParams& params, const FluxBias& bias) {
    return 1.0 / std::sqrt(array_inductance(params, bias) * params.c_main());
}

double quality_factor(const CircuitParams& params, const FluxBias& bias) {
    return params.r_env() * std::sqrt(params.c_main() / array_inductance(params, bias));
}

TaylorCoefficients taylor_coefficients(const CircuitParams& params, const FluxBias& bias) {
    const double n = params.n_squids();
    const double wj2 = params.omega_j_sq();
    const double y = bias.delta_phi / n;
    return {wj2 / n * std::cos(y), -wj2 / (2.0 * n * n) * std::sin(y),
            -wj2 / (6.0 * n * n * n) * std::cos(y)};
}

FluxBias max_c3_bias(const CircuitParams& params) {
    if (params.beta() >= 1.0) throw BetaHysteretic(params.beta());
    return solve_dc_phase(params, std::numbers::pi / 2.0 + params.beta());
}

double max_c3_phi_e_numeric(const CircuitParams& params) {
    // |c3| ~ sin(y(phi_e)) with y increasing in phi_e: bisect on the sign of cos(y).
    double lo = 0.0;
    double hi = std::numbers::pi;
    auto slope_sign = [&](double phi_e) {
        return std::cos(solve_dc_phase(params, phi_e).junction_phase(params.n_squids()));
    };
    for (int iter = 0; iter < 200 && hi - lo > 1e-15; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (slope_sign(mid) > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<TunabilityPoint> tunability_curve(const CircuitParams& params,
                                              std::span<const double> phi_e_grid) {
    std::vector<TunabilityPoint> out;
    out.reserve(phi_e_grid.size());
    for (double phi_e : phi_e_grid) {
        const FluxBias bias = solve_dc_phase(params, phi_e);
        out.push_back({phi_e, bias.omega0 / kTwoPi, array_inductance(params, bias)});
    }
    return out;
}

ParallelEquivalent effective_environment(double z0, double c_coupling, double omega) {
    require_positive(z0, "z0");
    require_positive(c_coupling, "c_coupling");
    require_positive(omega, "omega");
    const double xc = 1.0 / (omega * c_coupling);
    const double ratio = xc / z0;
    return {z0 * (1.0 + ratio * ratio), c_coupling / (1.0 + 1.0 / (ratio * ratio))};
}

}  // namespace jpa
