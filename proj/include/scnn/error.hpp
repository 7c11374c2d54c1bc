#ifndef SCNN_ERROR_HPP
#define SCNN_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad topology, bad config, schema violations, out-of-range values.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// The steady-state iteration hit its iteration cap before reaching tolerance.
class NonConvergence : public Error {
public:
    NonConvergence(std::size_t iterations, double residual, const std::string& context = {})
        : Error((context.empty() ? std::string() : context + ": ") + "steady state did not converge after " +
                std::to_string(iterations) + " iterations (residual " + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}

    std::size_t iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

/// Gradient requested at a steady state where some neuron is clamped at q = 1.
class SaturationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace scnn

#endif // SCNN_ERROR_HPP
