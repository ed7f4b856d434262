#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace complora {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SvdError : public std::runtime_error {
public:
    SvdError(int sweeps, double residual);

    int sweeps() const noexcept { return sweeps_; }
    double residual() const noexcept { return residual_; }

private:
    int sweeps_;
    double residual_;
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, long step);

    long step() const noexcept { return step_; }

private:
    long step_;
};

class PretrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& message);

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// "2x3" style shape string used in diagnostics.
std::string shape_str(std::size_t rows, std::size_t cols);

}  // namespace complora
