#pragma once

#include <stdexcept>
#include <string>

namespace dipmatte {

/// Tensor shapes that do not line up for an operation.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Misuse of the autodiff tape or optimizer (double backward, non-scalar loss, ...).
class AutodiffError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Invalid configuration: bad network config, degenerate trimap, mismatched snapshots.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// File could not be read, decoded or written.
class IoError : public std::runtime_error {
  public:
    IoError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

/// A loss term became non-finite or exceeded the divergence bound.
class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(std::string term, int iteration, double value)
        : std::runtime_error("loss term " + term + " diverged at iteration " +
                             std::to_string(iteration) + " (value " + std::to_string(value) + ")"),
          term_(std::move(term)), iteration_(iteration), value_(value) {}

    const std::string& term() const { return term_; }
    int iteration() const { return iteration_; }
    double value() const { return value_; }

  private:
    std::string term_;
    int iteration_;
    double value_;
};

} // namespace dipmatte
