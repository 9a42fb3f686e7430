#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xtalk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimensionError : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A dressed level could not be assigned to its bare label with overlap > 0.5.
class HybridizationError : public Error {
 public:
  HybridizationError(std::string label, double overlap)
      : Error("hybridization: dressed state for |" + label + "> has max overlap " +
              std::to_string(overlap) + " (frequency collision?)"),
        label_(std::move(label)),
        overlap_(overlap) {}

  const std::string& label() const noexcept { return label_; }
  double overlap() const noexcept { return overlap_; }

 private:
  std::string label_;
  double overlap_;
};

class DivisionError : public Error {
 public:
  using Error::Error;
};

/// Step-halving self-check of the integrator failed.
class AccuracyError : public Error {
 public:
  AccuracyError(const std::string& what, double difference)
      : Error(what), difference_(difference) {}
  double difference() const noexcept { return difference_; }

 private:
  double difference_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Output could not be written.
class IoError : public Error {
 public:
  using Error::Error;
};

class NonFiniteObjective : public Error {
 public:
  NonFiniteObjective(const std::string& what, std::vector<double> point)
      : Error(what), point_(std::move(point)) {}
  const std::vector<double>& point() const noexcept { return point_; }

 private:
  std::vector<double> point_;
};

}  // namespace xtalk
