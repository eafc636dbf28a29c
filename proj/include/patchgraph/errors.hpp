#pragma once

#include <stdexcept>
#include <string>

namespace patchgraph {

// Bad arguments, malformed configuration, violated contracts. Exit code 1 in the CLI.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Missing, unreadable or malformed files. Exit code 2 in the CLI.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A patch grid with no retained tiles.
class EmptySlideError : public ValidationError {
 public:
  explicit EmptySlideError(const std::string& what) : ValidationError(what) {}
};

// A metric that cannot be computed on the given predictions (e.g. a class is
// absent from a bootstrap resample). The bootstrap redraws on these.
class UndefinedMetricError : public ValidationError {
 public:
  explicit UndefinedMetricError(const std::string& what) : ValidationError(what) {}
};

// Non-finite loss during training.
class TrainingDivergedError : public ValidationError {
 public:
  explicit TrainingDivergedError(const std::string& what) : ValidationError(what) {}
};

}  // namespace patchgraph
