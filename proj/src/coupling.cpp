#include "jpa/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>

#include "jpa/errors.hpp"
#include "jpa/format.hpp"
#include "jpa/units.hpp"

namespace jpa {

double ReactiveNetwork::alpha() const {
    return kFluxQuantum * kFluxQuantum / (2.0 * r_source * kTwoPi * kTwoPi);
}

ReactiveNetwork capacitive_network(double c_coupling, double c_main, double l_array, double z0) {
    if (!(c_coupling > 0.0) || !(c_main > 0.0) || !(l_array > 0.0) || !(z0 > 0.0)) {
        throw InvalidParameter("capacitive network needs positive C_c, C, L_arr and Z0");
    }
    ReactiveNetwork net;
    net.coupler_reactance = [c_coupling](double w) { return -1.0 / (w * c_coupling); };
    net.load_reactance = [c_main, l_array](double w) {
        return -1.0 / (w * c_main - 1.0 / (w * l_array));
    };
    net.r_source = z0;
    net.poles = {1.0 / std::sqrt(l_array * (c_main + c_coupling))};
    return net;
}

ReactiveNetwork make_network(std::function<double(double)> coupler,
                             std::function<double(double)> load, double r_source,
                             double omega_lo, double omega_hi, int scan_points) {
    if (!(omega_lo > 0.0 && omega_hi > omega_lo) || scan_points < 2 || !(r_source > 0.0)) {
        throw InvalidParameter("pole scan needs 0 < omega_lo < omega_hi and >= 2 points");
    }
    ReactiveNetwork net{std::move(coupler), std::move(load), r_source, {}};
    auto sum = [&](double w) { return net.coupler_reactance(w) + net.load_reactance(w); };
    // Log-spaced scan; reactances vary over decades.
    const double ratio = std::pow(omega_hi / omega_lo, 1.0 / (scan_points - 1));
    double w_prev = omega_lo;
    double s_prev = sum(w_prev);
    for (int i = 1; i < scan_points; ++i) {
        const double w = omega_lo * std::pow(ratio, i);
        const double s = sum(w);
        if (std::isfinite(s) && std::isfinite(s_prev) && (s_prev < 0.0) != (s < 0.0)) {
            double a = w_prev;
            double b = w;
            double sa = s_prev;
            for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
                const double m = 0.5 * (a + b);
                const double sm = sum(m);
                if ((sa < 0.0) == (sm < 0.0)) {
                    a = m;
                    sa = sm;
                } else {
                    b = m;
                }
            }
            const double root = 0.5 * (a + b);
            // A true zero has a small sum next to it; a reactance pole flips sign through infinity.
            const double scale = std::abs(net.coupler_reactance(root)) + std::abs(net.load_reactance(root));
            if (std::abs(sum(root)) <= 1e-6 * scale) net.poles.push_back(root);
        }
        w_prev = w;
        s_prev = s;
    }
    return net;
}

namespace {

void check_pole(const ReactiveNetwork& net, double omega, double guard) {
    if (!(omega > 0.0)) throw InvalidParameter("omega must be > 0");
    for (double p : net.poles) {
        if (std::abs(omega - p) <= guard * p) throw NearPole(omega);
    }
}

}  // namespace

double pce(const ReactiveNetwork& net, double omega, double guard) {
    check_pole(net, omega, guard);
    const double x = net.coupler_reactance(omega);
    const double xl = net.load_reactance(omega);
    const double r = xl / (x + xl);
    return r * r;
}

double pce_from_power(const ReactiveNetwork& net, double omega, double phi_p, double guard) {
    check_pole(net, omega, guard);
    const std::complex<double> z(0.0, net.coupler_reactance(omega));
    const std::complex<double> zl(0.0, net.load_reactance(omega));
    const std::complex<double> v = phi_p * kReducedFluxQuantum * std::complex<double>(0.0, omega) * (1.0 + z / zl);
    const double p_a = std::norm(v) / (2.0 * net.r_source);
    return net.alpha() * omega * omega * phi_p * phi_p / p_a;
}

double capacitive_pce_limit(double c_coupling, double c_main) {
    const double r = c_coupling / (c_main + c_coupling);
    return r * r;
}

std::vector<PceSample> pce_spectrum(const ReactiveNetwork& net, std::span<const double> omega_grid,
                                    double guard) {
    std::vector<PceSample> out;
    out.reserve(omega_grid.size());
    for (double w : omega_grid) {
        try {
            out.push_back({w, pce(net, w, guard)});
        } catch (const NearPole&) {
            out.push_back({w, std::nullopt});
        }
    }
    return out;
}

void write_pce_csv(std::ostream& os, std::span<const PceSample> spectrum) {
    os << "frequency_hz,eta_pce,eta_pce_db,near_pole_flag\n";
    for (const PceSample& s : spectrum) {
        os << format_number(s.omega / kTwoPi) << ',' << format_number(s.eta) << ','
           << (s.eta ? format_number(db_from_ratio(*s.eta)) : std::string()) << ','
           << (s.eta ? 0 : 1) << '\n';
    }
}

double total_efficiency(double eta_pce, double eta_pae) {
    if (!(eta_pce >= 0.0 && eta_pce <= 1.0) || !(eta_pae >= 0.0 && eta_pae <= 1.0)) {
        throw InvalidParameter("efficiencies must lie in [0, 1]");
    }
    return eta_pce * eta_pae;
}

}  // namespace jpa
