#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace jpa {

// ---- one-port reflection fit ----

struct ReflectionPoint {
    double frequency_hz = 0.0;
    std::complex<double> s11;
};

/// S11(f) = a exp(-2 pi i f tau) (f - f0 - i kappa/2) / (f - f0 + i kappa/2), a complex.
struct ReflectionFit {
    double f0_hz = 0.0;
    double kappa_hz = 0.0;  ///< full linewidth
    double q_total = 0.0;   ///< f0 / kappa
    double delay_s = 0.0;
    std::complex<double> scale;
    double rms_residual = 0.0;
    int iterations = 0;
};

[[nodiscard]] std::complex<double> reflection_model(double f, double f0, double kappa,
                                                    double delay, std::complex<double> scale);

/// Least-squares fit with the complex scale projected out in closed form; Levenberg-Marquardt
/// over (f0, kappa, delay). Throws FitDiverged when the resonance is not resolved (trace
/// narrower than one fitted linewidth) or the iteration fails.
[[nodiscard]] ReflectionFit fit_reflection(std::span<const ReflectionPoint> trace);

// ---- flux modulation spectrum ----

struct FluxSweepRecord {
    std::vector<double> bias_values;
    std::vector<double> f0_values;
    std::vector<double> q_values;  ///< optional; empty or same length
};

/// Orthonormal type-II DCT and its inverse.
[[nodiscard]] std::vector<double> dct2(std::span<const double> x);
[[nodiscard]] std::vector<double> idct2(std::span<const double> coeffs);

/// Symmetric Blackman window of the given length.
[[nodiscard]] std::vector<double> blackman(int length);

struct SpectrumPoint {
    int bin = 0;
    double frequency = 0.0;  ///< cycles per unit bias: bin / (2 M delta)
    double magnitude = 0.0;  ///< |X_k| of the raw transform
};

struct SpectrumPeak {
    int bin = 0;
    double frequency = 0.0;
    double period = 0.0;  ///< 1 / frequency, in bias units
    double magnitude = 0.0;
    double band_magnitude = 0.0;  ///< sqrt of the raw energy in bins k-1..k+1
};

struct FluxSpectrumOptions {
    double truncation_db = 20.0;  ///< amplitude dB below the largest non-DC coefficient
    int window_length = 3;
    double uniform_tolerance = 1e-6;  ///< relative spacing deviation treated as uniform
    double max_spacing_ratio = 2.0;   ///< beyond this max/min spacing, refuse to resample
};

struct FluxSpectrum {
    double bias_step = 0.0;
    bool resampled = false;
    std::vector<double> bias_values;  ///< the uniform grid actually transformed
    std::vector<double> f0_values;
    std::vector<SpectrumPoint> spectrum;
    std::vector<double> filtered;  ///< truncated and windowed coefficients
    std::vector<SpectrumPeak> peaks;  ///< by descending magnitude
    std::vector<double> reconstruction;
    double rms_error = 0.0;           ///< same units as f0
    double relative_rms_error = 0.0;  ///< over the rms of f0 minus its mean
};

[[nodiscard]] FluxSpectrum flux_modulation_spectrum(const FluxSweepRecord& record,
                                                    const FluxSpectrumOptions& opts = {});

void write_spectrum_csv(std::ostream& os, const FluxSpectrum& s);

/// Columns `bias`, `f0_hz` and optionally `q`, in any order; extra columns are ignored.
/// Throws IoError (with `source` as the path) on malformed input.
[[nodiscard]] FluxSweepRecord read_flux_sweep_csv(std::istream& is, const std::string& source);

struct BiasTrace {
    double bias = 0.0;
    std::vector<ReflectionPoint> trace;
};

/// Long format: `bias`, `frequency_hz`, `s11_re`, `s11_im`; rows grouped by bias in order of
/// first appearance.
[[nodiscard]] std::vector<BiasTrace> read_reflection_traces_csv(std::istream& is,
                                                                const std::string& source);

/// True when the header names the columns of read_reflection_traces_csv.
[[nodiscard]] bool is_reflection_trace_header(const std::string& header_line);

/// Fits every trace; the resulting f0 and Q form the sweep record.
[[nodiscard]] FluxSweepRecord sweep_from_traces(std::span<const BiasTrace> traces,
                                                std::vector<ReflectionFit>* fits = nullptr);

// ---- Stark-shift power calibration ----

struct StarkCalibration {
    double two_chi_hz = 0.0;
    double kappa_hz = 0.0;
    double readout_frequency_hz = 0.0;

    [[nodiscard]] double chi_ratio() const { return two_chi_hz / kappa_hz; }
};

void validate(const StarkCalibration& cal);

/// n = |shift| / 2 chi.
[[nodiscard]] double photons_from_stark(const StarkCalibration& cal, double qubit_shift_hz);

/// Power entering a one-port cavity driven on resonance with n photons: n hbar w kappa / 4,
/// both rates in rad/s.
[[nodiscard]] double input_power_for_photons(const StarkCalibration& cal, double photons);

struct DrivePoint {
    double amplitude = 0.0;  ///< drive amplitude, e.g. DAC volts
    double photons = 0.0;
};

struct DriveCalibration {
    double exponent = 0.0;     ///< free log-log slope
    double log_intercept = 0.0;
    double photons_per_v2 = 0.0;  ///< with the exponent pinned to 2
    double watts_per_v2 = 0.0;
    StarkCalibration cal;

    [[nodiscard]] double input_power_w(double amplitude) const;
    [[nodiscard]] double input_power_dbm(double amplitude) const;
};

/// Log-log fit of photons vs amplitude. Throws BadFit when the exponent leaves [1.8, 2.2].
[[nodiscard]] DriveCalibration drive_power_calibration(std::span<const DrivePoint> points,
                                                       const StarkCalibration& cal);

}  // namespace jpa
