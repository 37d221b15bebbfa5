#pragma once

#include <stdexcept>
#include <string>

namespace jpa {

/// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// beta >= 1 admits several DC branches; we refuse instead of picking one.
class BetaHysteretic : public Error {
public:
    explicit BetaHysteretic(double beta)
        : Error("shunting ratio beta = " + std::to_string(beta) +
                " >= 1: DC flux solution is not unique"),
          beta_(beta) {}
    [[nodiscard]] double beta() const noexcept { return beta_; }

private:
    double beta_;
};

class NegativeStiffness : public Error {
public:
    using Error::Error;
};

class IncommensurateDrive : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    NoConvergence(std::string what, double residual, long periods)
        : Error(std::move(what)), residual_(residual), periods_(periods) {}
    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] long periods() const noexcept { return periods_; }

private:
    double residual_;
    long periods_;
};

/// NaN or overflow in the trajectory; usually a pump far past the instability.
class DivergedTrajectory : public Error {
public:
    explicit DivergedTrajectory(std::string what, double pump_power_dbm = 0.0)
        : Error(std::move(what)), pump_power_dbm_(pump_power_dbm) {}
    [[nodiscard]] double pump_power_dbm() const noexcept { return pump_power_dbm_; }

private:
    double pump_power_dbm_;
};

class MaxGainBelowTarget : public Error {
public:
    MaxGainBelowTarget(double max_gain_db, double at_pump_dbm)
        : Error("maximum gain " + std::to_string(max_gain_db) + " dB (at pump " +
                std::to_string(at_pump_dbm) + " dBm) is below the target"),
          max_gain_db_(max_gain_db),
          at_pump_dbm_(at_pump_dbm) {}
    [[nodiscard]] double max_gain_db() const noexcept { return max_gain_db_; }
    [[nodiscard]] double at_pump_dbm() const noexcept { return at_pump_dbm_; }

private:
    double max_gain_db_;
    double at_pump_dbm_;
};

class NoCompressionInRange : public Error {
public:
    explicit NoCompressionInRange(double highest_power_dbm)
        : Error("gain did not compress by 1 dB up to " + std::to_string(highest_power_dbm) +
                " dBm"),
          highest_power_dbm_(highest_power_dbm) {}
    [[nodiscard]] double highest_power_dbm() const noexcept { return highest_power_dbm_; }

private:
    double highest_power_dbm_;
};

class NearPole : public Error {
public:
    explicit NearPole(double omega)
        : Error("evaluation frequency " + std::to_string(omega) +
                " rad/s is inside the guard band of a coupling pole"),
          omega_(omega) {}
    [[nodiscard]] double omega() const noexcept { return omega_; }

private:
    double omega_;
};

class FitDiverged : public Error {
public:
    FitDiverged(std::string what, double residual) : Error(std::move(what)), residual_(residual) {}
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class NonUniformGrid : public Error {
public:
    using Error::Error;
};

class BadFit : public Error {
public:
    BadFit(std::string what, double exponent) : Error(std::move(what)), exponent_(exponent) {}
    [[nodiscard]] double exponent() const noexcept { return exponent_; }

private:
    double exponent_;
};

/// File could not be read, parsed or written.
class IoError : public Error {
public:
    IoError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace jpa
