#include "complora/errors.hpp"

namespace complora {

SvdError::SvdError(int sweeps, double residual)
    : std::runtime_error("svd did not converge after " + std::to_string(sweeps) +
                         " sweeps (off-diagonal residual " + std::to_string(residual) + ")"),
      sweeps_(sweeps),
      residual_(residual) {}

TrainingError::TrainingError(const std::string& what, long step)
    : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}

ConfigError::ConfigError(const std::string& field, const std::string& message)
    : std::runtime_error("config field '" + field + "': " + message), field_(field) {}

std::string shape_str(std::size_t rows, std::size_t cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace complora
