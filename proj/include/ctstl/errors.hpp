#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctstl {

// Base of every error raised by the library. `stage()` names the pipeline
// stage that produced it so the CLI can tag failures.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class InvalidSystem : public Error {
 public:
  explicit InvalidSystem(const std::string& what) : Error("dynamics", what) {}
};

class ComplexModesUnsupported : public Error {
 public:
  explicit ComplexModesUnsupported(const std::string& what)
      : Error("dynamics", what) {}
};

class DecompositionUnstable : public Error {
 public:
  explicit DecompositionUnstable(const std::string& what)
      : Error("dynamics", what) {}
};

class OutOfWindow : public Error {
 public:
  explicit OutOfWindow(const std::string& what) : Error("dynamics", what) {}
};

class InvalidGrid : public Error {
 public:
  explicit InvalidGrid(const std::string& what) : Error("grid", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error("parse", what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UnknownStateIndex : public Error {
 public:
  UnknownStateIndex(int index, std::size_t position)
      : Error("parse", "unknown state index x" + std::to_string(index) +
                           " at position " + std::to_string(position)),
        index_(index) {}
  int index() const noexcept { return index_; }

 private:
  int index_;
};

class HorizonExceeded : public Error {
 public:
  explicit HorizonExceeded(const std::string& what) : Error("ground", what) {}
};

class UnalignedInterval : public Error {
 public:
  explicit UnalignedInterval(std::vector<double> endpoints);
  const std::vector<double>& endpoints() const noexcept { return endpoints_; }

 private:
  std::vector<double> endpoints_;
};

class EndpointOutOfRange : public Error {
 public:
  explicit EndpointOutOfRange(const std::string& what) : Error("align", what) {}
};

class InsufficientTrace : public Error {
 public:
  explicit InsufficientTrace(const std::string& what) : Error("monitor", what) {}
};

class NoRelativeDegree : public Error {
 public:
  explicit NoRelativeDegree(const std::string& what) : Error("encode", what) {}
};

class InvalidConfig : public Error {
 public:
  explicit InvalidConfig(const std::string& what) : Error("config", what) {}
};

class InvalidModel : public Error {
 public:
  explicit InvalidModel(const std::string& what) : Error("miqp", what) {}
};

class BoundViolation : public Error {
 public:
  explicit BoundViolation(const std::string& what) : Error("audit", what) {}
};

class InvalidScenario : public Error {
 public:
  explicit InvalidScenario(const std::string& what) : Error("scenario", what) {}
};

class MalformedTrace : public Error {
 public:
  explicit MalformedTrace(const std::string& what) : Error("trace", what) {}
};

}  // namespace ctstl
