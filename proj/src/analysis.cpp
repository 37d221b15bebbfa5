#include "jpa/analysis.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <istream>
#include <optional>
#include <sstream>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>

#include "jpa/errors.hpp"
#include "jpa/format.hpp"
#include "jpa/units.hpp"

namespace jpa {

namespace {

using C = std::complex<double>;

// ---------------------------------------------------------------- reflection fit

struct NormalizedTrace {
    double center = 0.0;
    double span = 0.0;
    std::vector<double> u;
    std::vector<C> y;
};

C unit_model(double u, double u0, double k, double t) {
    const double half = 0.5 * std::exp(k);
    return std::polar(1.0, -kTwoPi * u * t) * C(u - u0, -half) / C(u - u0, half);
}

// Residuals with the complex scale projected out; |model| = 1, so a = mean(conj(m) y).
struct Projection {
    C scale;
    Eigen::VectorXd r;
    double cost = 0.0;
};

Projection project(const NormalizedTrace& tr, const Eigen::Vector3d& p) {
    const std::size_t n = tr.u.size();
    std::vector<C> m(n);
    C acc{};
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = unit_model(tr.u[i], p[0], p[1], p[2]);
        acc += std::conj(m[i]) * tr.y[i];
    }
    Projection out;
    out.scale = acc / static_cast<double>(n);
    out.r.resize(static_cast<Eigen::Index>(2 * n));
    for (std::size_t i = 0; i < n; ++i) {
        const C d = tr.y[i] - out.scale * m[i];
        out.r[static_cast<Eigen::Index>(2 * i)] = d.real();
        out.r[static_cast<Eigen::Index>(2 * i + 1)] = d.imag();
    }
    out.cost = out.r.squaredNorm();
    return out;
}

double edge_slope(const NormalizedTrace& tr, std::span<const double> phase, std::size_t lo,
                  std::size_t hi) {
    const std::size_t n = hi - lo;
    if (n < 2) return 0.0;
    double su = 0.0, sp = 0.0, suu = 0.0, sup = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        su += tr.u[i];
        sp += phase[i];
        suu += tr.u[i] * tr.u[i];
        sup += tr.u[i] * phase[i];
    }
    const double den = n * suu - su * su;
    return den != 0.0 ? (n * sup - su * sp) / den : 0.0;
}

// ---------------------------------------------------------------- DCT

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<double> r2r(std::span<const double> in, fftw_r2r_kind kind) {
    const int n = static_cast<int>(in.size());
    std::vector<double> a(in.begin(), in.end());
    std::vector<double> b(in.size());
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_r2r_1d(n, a.data(), b.data(), kind, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    return b;
}

}  // namespace

std::complex<double> reflection_model(double f, double f0, double kappa, double delay,
                                      std::complex<double> scale) {
    return scale * std::polar(1.0, -kTwoPi * f * delay) * C(f - f0, -0.5 * kappa) /
           C(f - f0, 0.5 * kappa);
}

ReflectionFit fit_reflection(std::span<const ReflectionPoint> trace) {
    if (trace.size() < 5) throw FitDiverged("reflection fit needs at least 5 points", 0.0);
    NormalizedTrace tr;
    auto [fmin, fmax] = std::minmax_element(trace.begin(), trace.end(), [](const auto& a, const auto& b) {
        return a.frequency_hz < b.frequency_hz;
    });
    tr.center = 0.5 * (fmin->frequency_hz + fmax->frequency_hz);
    tr.span = fmax->frequency_hz - fmin->frequency_hz;
    if (!(tr.span > 0.0)) throw FitDiverged("reflection trace has zero span", 0.0);
    std::vector<ReflectionPoint> sorted(trace.begin(), trace.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.frequency_hz < b.frequency_hz;
    });
    for (const ReflectionPoint& p : sorted) {
        tr.u.push_back((p.frequency_hz - tr.center) / tr.span);
        tr.y.push_back(p.s11);
    }
    const std::size_t n = tr.u.size();

    // Delay estimate from the phase slope at both edges, away from the resonance.
    std::vector<double> phase(n);
    phase[0] = std::arg(tr.y[0]);
    for (std::size_t i = 1; i < n; ++i) {
        double d = std::arg(tr.y[i]) - std::arg(tr.y[i - 1]);
        d -= kTwoPi * std::round(d / kTwoPi);
        phase[i] = phase[i - 1] + d;
    }
    const std::size_t edge = std::max<std::size_t>(2, n * 15 / 100);
    const double slope = 0.5 * (edge_slope(tr, phase, 0, edge) + edge_slope(tr, phase, n - edge, n));
    const double t_est = -slope / kTwoPi;

    // Coarse grid for a starting point, then Levenberg-Marquardt. With the scale projected
    // out the cost is sum|y|^2 - n |mean(conj(m) y)|^2, so only the overlap is needed.
    double y_sq = 0.0;
    for (const C& v : tr.y) y_sq += std::norm(v);
    Eigen::Vector3d best(0.0, std::log(0.1), t_est);
    double best_cost = project(tr, best).cost;
    std::vector<C> derotated(n);
    for (int it = -10; it <= 10; ++it) {
        const double t = t_est + 0.05 * it;
        for (std::size_t i = 0; i < n; ++i) derotated[i] = tr.y[i] * std::polar(1.0, kTwoPi * tr.u[i] * t);
        for (int iu = 0; iu <= 60; ++iu) {
            const double u0 = -0.5 + iu / 60.0;
            for (int ik = 0; ik < 30; ++ik) {
                const double k = std::log(1e-3) + ik * (std::log(2.0) - std::log(1e-3)) / 29.0;
                const double half = 0.5 * std::exp(k);
                C acc{};
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = tr.u[i] - u0;
                    acc += derotated[i] * C(d, half) / C(d, -half);
                }
                const double c = y_sq - std::norm(acc) / static_cast<double>(n);
                if (c < best_cost) {
                    best_cost = c;
                    best = Eigen::Vector3d(u0, k, t);
                }
            }
        }
    }
    best_cost = project(tr, best).cost;

    Eigen::Vector3d p = best;
    Projection cur = project(tr, p);
    double lambda = 1e-3;
    int iter = 0;
    bool converged = false;
    for (; iter < 200; ++iter) {
        Eigen::MatrixXd jac(cur.r.size(), 3);
        for (int j = 0; j < 3; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(p[j]));
            Eigen::Vector3d pp = p;
            Eigen::Vector3d pm = p;
            pp[j] += h;
            pm[j] -= h;
            jac.col(j) = (project(tr, pp).r - project(tr, pm).r) / (2.0 * h);
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d g = jac.transpose() * cur.r;
        bool stepped = false;
        for (int tries = 0; tries < 20; ++tries) {
            Eigen::Matrix3d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Vector3d step = a.ldlt().solve(-g);
            const Eigen::Vector3d next = p + step;
            const Projection trial = project(tr, next);
            if (std::isfinite(trial.cost) && trial.cost <= cur.cost) {
                const double gain = cur.cost - trial.cost;
                p = next;
                cur = trial;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (step.norm() < 1e-12 * (1.0 + p.norm()) || gain <= 1e-15 * (cur.cost + 1e-300)) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!stepped) {
            converged = true;  // no descent direction left: at a minimum to rounding
            break;
        }
        if (converged) break;
    }
    const double rms = std::sqrt(cur.cost / static_cast<double>(n));
    if (!converged || !p.allFinite()) {
        throw FitDiverged("reflection fit did not converge", rms);
    }

    ReflectionFit fit;
    fit.f0_hz = tr.center + p[0] * tr.span;
    fit.kappa_hz = std::exp(p[1]) * tr.span;
    fit.q_total = fit.f0_hz / fit.kappa_hz;
    fit.delay_s = p[2] / tr.span;
    // Scale absorbs exp(-2 pi i f_c tau) from centring the frequency axis.
    fit.scale = cur.scale * std::polar(1.0, kTwoPi * tr.center * fit.delay_s);
    fit.rms_residual = rms;
    fit.iterations = iter;
    if (tr.span < fit.kappa_hz) {
        throw FitDiverged("trace spans " + std::to_string(tr.span / fit.kappa_hz) +
                              " linewidths; the resonance is not resolved",
                          rms);
    }
    return fit;
}

std::vector<double> dct2(std::span<const double> x) {
    if (x.empty()) return {};
    std::vector<double> y = r2r(x, FFTW_REDFT10);
    const double m = static_cast<double>(x.size());
    const double s0 = std::sqrt(1.0 / (4.0 * m));
    const double s = std::sqrt(1.0 / (2.0 * m));
    y[0] *= s0;
    for (std::size_t k = 1; k < y.size(); ++k) y[k] *= s;
    return y;
}

std::vector<double> idct2(std::span<const double> coeffs) {
    if (coeffs.empty()) return {};
    const double m = static_cast<double>(coeffs.size());
    std::vector<double> c(coeffs.begin(), coeffs.end());
    // REDFT01 computes c0 + 2 sum c_k cos(...); undo the orthonormal scaling first.
    c[0] *= std::sqrt(1.0 / m);
    for (std::size_t k = 1; k < c.size(); ++k) c[k] *= std::sqrt(1.0 / (2.0 * m));
    return r2r(c, FFTW_REDFT01);
}

std::vector<double> blackman(int length) {
    if (length < 1) throw InvalidParameter("window length must be >= 1");
    if (length == 1) return {1.0};
    std::vector<double> w(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        const double a = kTwoPi * i / (length - 1);
        w[static_cast<std::size_t>(i)] = 0.42 - 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
    }
    return w;
}

FluxSpectrum flux_modulation_spectrum(const FluxSweepRecord& record,
                                      const FluxSpectrumOptions& opts) {
    const std::size_t m = record.bias_values.size();
    if (m != record.f0_values.size() ||
        (!record.q_values.empty() && record.q_values.size() != m)) {
        throw InvalidParameter("flux sweep columns must have equal lengths");
    }
    if (m < 4) throw InvalidParameter("flux sweep needs at least 4 samples");

    std::vector<double> bias = record.bias_values;
    std::vector<double> f0 = record.f0_values;
    if (bias.back() < bias.front()) {
        std::reverse(bias.begin(), bias.end());
        std::reverse(f0.begin(), f0.end());
    }
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t i = 1; i < m; ++i) {
        const double d = bias[i] - bias[i - 1];
        if (!(d > 0.0)) throw InvalidParameter("bias values must be strictly monotone");
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }

    FluxSpectrum out;
    const double step = (bias.back() - bias.front()) / static_cast<double>(m - 1);
    out.bias_step = step;
    if (dmax - dmin > opts.uniform_tolerance * step) {
        if (dmax / dmin > opts.max_spacing_ratio) {
            throw NonUniformGrid("bias spacing varies by a factor " + std::to_string(dmax / dmin) +
                                 "; refusing to resample");
        }
        // Linear resampling onto the uniform grid with the same end points and count.
        std::vector<double> g(m);
        std::size_t j = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = bias.front() + static_cast<double>(i) * step;
            while (j + 2 < m && bias[j + 1] < x) ++j;
            const double t = (x - bias[j]) / (bias[j + 1] - bias[j]);
            g[i] = f0[j] + t * (f0[j + 1] - f0[j]);
        }
        for (std::size_t i = 0; i < m; ++i) bias[i] = bias.front() + static_cast<double>(i) * step;
        f0 = std::move(g);
        out.resampled = true;
    }
    out.bias_values = bias;
    out.f0_values = f0;

    const std::vector<double> coeffs = dct2(f0);
    out.spectrum.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        out.spectrum[k] = {static_cast<int>(k), static_cast<double>(k) / (2.0 * m * step),
                           std::abs(coeffs[k])};
    }

    // Truncate below the largest non-DC coefficient, ignoring transform round-off.
    double peak = 0.0;
    for (std::size_t k = 1; k < m; ++k) peak = std::max(peak, std::abs(coeffs[k]));
    double norm = 0.0;
    for (double v : f0) norm += v * v;
    const double floor = 1e-9 * std::sqrt(norm);
    const bool modulated = peak > floor;
    const double threshold = peak * std::pow(10.0, -opts.truncation_db / 20.0);

    std::vector<double> kept(m, 0.0);
    kept[0] = coeffs[0];
    if (modulated) {
        for (std::size_t k = 1; k < m; ++k) {
            if (std::abs(coeffs[k]) >= threshold) kept[k] = coeffs[k];
        }
    }
    const std::vector<double> w = blackman(opts.window_length);
    const int half = opts.window_length / 2;
    out.filtered.assign(m, 0.0);
    out.filtered[0] = kept[0];  // the mean is not part of the modulation spectrum
    for (std::size_t k = 1; k < m; ++k) {
        double acc = 0.0;
        for (int j = 0; j < opts.window_length; ++j) {
            const long src = static_cast<long>(k) + j - half;
            if (src >= 1 && src < static_cast<long>(m)) acc += w[static_cast<std::size_t>(j)] * kept[static_cast<std::size_t>(src)];
        }
        out.filtered[k] = acc;
    }

    if (modulated) {
        for (std::size_t k = 1; k < m; ++k) {
            const double v = std::abs(out.filtered[k]);
            const double left = k > 1 ? std::abs(out.filtered[k - 1]) : 0.0;
            const double right = k + 1 < m ? std::abs(out.filtered[k + 1]) : 0.0;
            if (v >= threshold && v >= left && v > right) {
                double band = 0.0;
                for (std::size_t j = std::max<std::size_t>(1, k - 1); j <= std::min(m - 1, k + 1); ++j) {
                    band += coeffs[j] * coeffs[j];
                }
                const double freq = out.spectrum[k].frequency;
                out.peaks.push_back({static_cast<int>(k), freq, 1.0 / freq, v, std::sqrt(band)});
            }
        }
        std::stable_sort(out.peaks.begin(), out.peaks.end(),
                         [](const auto& a, const auto& b) { return a.magnitude > b.magnitude; });
    }

    out.reconstruction = idct2(out.filtered);
    const double mean = std::accumulate(f0.begin(), f0.end(), 0.0) / static_cast<double>(m);
    double err = 0.0;
    double ac = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        err += (out.reconstruction[i] - f0[i]) * (out.reconstruction[i] - f0[i]);
        ac += (f0[i] - mean) * (f0[i] - mean);
    }
    out.rms_error = std::sqrt(err / static_cast<double>(m));
    out.relative_rms_error = ac > 0.0 ? std::sqrt(err / ac) : (err > 0.0 ? 1.0 : 0.0);
    return out;
}

void write_spectrum_csv(std::ostream& os, const FluxSpectrum& s) {
    os << "bin,frequency_per_bias,magnitude,filtered\n";
    for (std::size_t k = 0; k < s.spectrum.size(); ++k) {
        os << s.spectrum[k].bin << ',' << format_number(s.spectrum[k].frequency) << ','
           << format_number(s.spectrum[k].magnitude) << ',' << format_number(s.filtered[k]) << '\n';
    }
}

void validate(const StarkCalibration& cal) {
    if (!(cal.two_chi_hz > 0.0) || !(cal.kappa_hz > 0.0) || !(cal.readout_frequency_hz > 0.0)) {
        throw InvalidParameter("Stark calibration needs positive 2chi, kappa and readout frequency");
    }
}

double photons_from_stark(const StarkCalibration& cal, double qubit_shift_hz) {
    if (!(cal.two_chi_hz > 0.0)) throw InvalidParameter("2chi must be > 0");
    return std::abs(qubit_shift_hz) / cal.two_chi_hz;
}

double input_power_for_photons(const StarkCalibration& cal, double photons) {
    validate(cal);
    return photons * kHbar * kTwoPi * cal.readout_frequency_hz * kTwoPi * cal.kappa_hz / 4.0;
}

double DriveCalibration::input_power_w(double amplitude) const {
    return watts_per_v2 * amplitude * amplitude;
}

double DriveCalibration::input_power_dbm(double amplitude) const {
    return dbm_from_watts(input_power_w(amplitude));
}

DriveCalibration drive_power_calibration(std::span<const DrivePoint> points,
                                         const StarkCalibration& cal) {
    validate(cal);
    if (points.size() < 5) throw InvalidParameter("drive calibration needs at least 5 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, offset = 0.0;
    for (const DrivePoint& p : points) {
        if (!(p.amplitude > 0.0) || !(p.photons > 0.0)) {
            throw InvalidParameter("drive amplitudes and photon numbers must be > 0");
        }
        const double x = std::log(p.amplitude);
        const double y = std::log(p.photons);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        offset += y - 2.0 * x;
    }
    const double n = static_cast<double>(points.size());
    const double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw InvalidParameter("drive amplitudes must not all be equal");

    DriveCalibration out;
    out.cal = cal;
    out.exponent = (n * sxy - sx * sy) / den;
    out.log_intercept = (sy - out.exponent * sx) / n;
    if (!(out.exponent >= 1.8 && out.exponent <= 2.2)) {
        throw BadFit("photon number scales as amplitude^" + std::to_string(out.exponent) +
                         "; expected 2",
                     out.exponent);
    }
    out.photons_per_v2 = std::exp(offset / n);
    out.watts_per_v2 = input_power_for_photons(cal, out.photons_per_v2);
    return out;
}

// ---- CSV input

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<int> line_numbers;

    [[nodiscard]] std::optional<std::size_t> column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    }
};

bool skip_line(const std::string& line) {
    const auto b = line.find_first_not_of(" \t\r");
    return b == std::string::npos || line[b] == '#';
}

CsvTable read_table(std::istream& is, const std::string& source) {
    CsvTable t;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (skip_line(line)) continue;
        if (t.header.empty()) {
            t.header = split_csv(line);
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != t.header.size()) {
            throw IoError(source, "line " + std::to_string(n) + ": expected " +
                                      std::to_string(t.header.size()) + " fields");
        }
        std::vector<double> row;
        for (const std::string& c : cells) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (ec != std::errc() || ptr != c.data() + c.size()) {
                throw IoError(source, "line " + std::to_string(n) + ": '" + c + "' is not a number");
            }
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
        t.line_numbers.push_back(n);
    }
    if (t.header.empty()) throw IoError(source, "empty file");
    return t;
}

std::size_t require_column(const CsvTable& t, const std::string& name, const std::string& source) {
    const auto c = t.column(name);
    if (!c) throw IoError(source, "missing column '" + name + "'");
    return *c;
}

}  // namespace

FluxSweepRecord read_flux_sweep_csv(std::istream& is, const std::string& source) {
    const CsvTable t = read_table(is, source);
    const std::size_t cb = require_column(t, "bias", source);
    const std::size_t cf = require_column(t, "f0_hz", source);
    const auto cq = t.column("q");
    FluxSweepRecord r;
    for (const auto& row : t.rows) {
        r.bias_values.push_back(row[cb]);
        r.f0_values.push_back(row[cf]);
        if (cq) r.q_values.push_back(row[*cq]);
    }
    return r;
}

bool is_reflection_trace_header(const std::string& header_line) {
    const auto h = split_csv(header_line);
    auto has = [&](const char* name) { return std::find(h.begin(), h.end(), name) != h.end(); };
    return has("bias") && has("frequency_hz") && has("s11_re") && has("s11_im");
}

std::vector<BiasTrace> read_reflection_traces_csv(std::istream& is, const std::string& source) {
    const CsvTable t = read_table(is, source);
    const std::size_t cb = require_column(t, "bias", source);
    const std::size_t cf = require_column(t, "frequency_hz", source);
    const std::size_t cr = require_column(t, "s11_re", source);
    const std::size_t ci = require_column(t, "s11_im", source);
    std::vector<BiasTrace> out;
    for (const auto& row : t.rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const BiasTrace& b) { return b.bias == row[cb]; });
        if (it == out.end()) {
            out.push_back({row[cb], {}});
            it = std::prev(out.end());
        }
        it->trace.push_back({row[cf], {row[cr], row[ci]}});
    }
    return out;
}

FluxSweepRecord sweep_from_traces(std::span<const BiasTrace> traces,
                                  std::vector<ReflectionFit>* fits) {
    FluxSweepRecord r;
    for (const BiasTrace& b : traces) {
        const ReflectionFit fit = fit_reflection(b.trace);
        r.bias_values.push_back(b.bias);
        r.f0_values.push_back(fit.f0_hz);
        r.q_values.push_back(fit.q_total);
        if (fits) fits->push_back(fit);
    }
    return r;
}

}  // namespace jpa
