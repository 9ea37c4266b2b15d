#pragma once

#include <stdexcept>
#include <string>

namespace itd {

enum class ErrorKind {
  MissingColumn,
  EmptyInput,
  CatalogMismatch,
  EmptyTrainingSet,
  TooFewInstances,
  DegenerateTransformSet,
  InsufficientData,
  ShapeMismatch,
  UnsupportedSide,
  EmptyTrainSet,
  EmptyScores,
  MismatchedK,
  EmptyWindow,
  LengthMismatch,
  SingleClass,
  MissingLabels,
  InvalidPlan,
  NoScores,
  ConfigError,
  DataError,
  TrainingError,
};

// Coarse category; the CLI maps these to exit codes (2 config, 3 data, 4 training).
enum class ErrorCategory { Config, Data, Training };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  ErrorCategory category() const {
    switch (kind_) {
      case ErrorKind::MissingColumn:
      case ErrorKind::CatalogMismatch:
      case ErrorKind::InvalidPlan:
      case ErrorKind::NoScores:
      case ErrorKind::ConfigError:
        return ErrorCategory::Config;
      case ErrorKind::ShapeMismatch:
      case ErrorKind::UnsupportedSide:
      case ErrorKind::TrainingError:
        return ErrorCategory::Training;
      default:
        return ErrorCategory::Data;
    }
  }

  static const char* kind_name(ErrorKind k) {
    switch (k) {
      case ErrorKind::MissingColumn: return "MissingColumn";
      case ErrorKind::EmptyInput: return "EmptyInput";
      case ErrorKind::CatalogMismatch: return "CatalogMismatch";
      case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
      case ErrorKind::TooFewInstances: return "TooFewInstances";
      case ErrorKind::DegenerateTransformSet: return "DegenerateTransformSet";
      case ErrorKind::InsufficientData: return "InsufficientData";
      case ErrorKind::ShapeMismatch: return "ShapeMismatch";
      case ErrorKind::UnsupportedSide: return "UnsupportedSide";
      case ErrorKind::EmptyTrainSet: return "EmptyTrainSet";
      case ErrorKind::EmptyScores: return "EmptyScores";
      case ErrorKind::MismatchedK: return "MismatchedK";
      case ErrorKind::EmptyWindow: return "EmptyWindow";
      case ErrorKind::LengthMismatch: return "LengthMismatch";
      case ErrorKind::SingleClass: return "SingleClass";
      case ErrorKind::MissingLabels: return "MissingLabels";
      case ErrorKind::InvalidPlan: return "InvalidPlan";
      case ErrorKind::NoScores: return "NoScores";
      case ErrorKind::ConfigError: return "ConfigError";
      case ErrorKind::DataError: return "DataError";
      case ErrorKind::TrainingError: return "TrainingError";
    }
    return "Error";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace itd
