#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace collapse {

/// Base of every error raised by the simulator.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define COLLAPSE_DECLARE_ERROR(Name)  \
    class Name : public Error {       \
      public:                         \
        using Error::Error;           \
    }

// pathspace
COLLAPSE_DECLARE_ERROR(AllAmplitudesZero);
COLLAPSE_DECLARE_ERROR(StaleCollection);
COLLAPSE_DECLARE_ERROR(StaleParticle);
COLLAPSE_DECLARE_ERROR(ShapeMismatch);
COLLAPSE_DECLARE_ERROR(MemberAlreadyEntangled);
COLLAPSE_DECLARE_ERROR(UnknownComponentKind);
COLLAPSE_DECLARE_ERROR(RegistryIncoherent);

// qft
COLLAPSE_DECLARE_ERROR(OffShell);
COLLAPSE_DECLARE_ERROR(PropagatorPole);
COLLAPSE_DECLARE_ERROR(BelowThreshold);

// engine
COLLAPSE_DECLARE_ERROR(EmptySupport);
COLLAPSE_DECLARE_ERROR(NoOpenExitStates);
COLLAPSE_DECLARE_ERROR(ForceMismatch);
COLLAPSE_DECLARE_ERROR(InvalidInteraction);

// pipeline
COLLAPSE_DECLARE_ERROR(DetectorMiss);
COLLAPSE_DECLARE_ERROR(NoInteraction);

// harness
COLLAPSE_DECLARE_ERROR(UnknownScenario);
COLLAPSE_DECLARE_ERROR(InsufficientCounts);

// input
COLLAPSE_DECLARE_ERROR(ValidationError);

#undef COLLAPSE_DECLARE_ERROR

/// Syntax error in a scenario file, tagged with a 1-based line and column.
class ParseError : public Error {
  public:
    ParseError(std::size_t line, std::size_t column, const std::string &message)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {
    }

    std::size_t line() const {
        return line_;
    }
    std::size_t column() const {
        return column_;
    }

  private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace collapse
