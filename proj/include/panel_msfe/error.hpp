#pragma once

#include <stdexcept>
#include <string>

namespace panel_msfe {

/// Base of every error raised by the library. `code()` is a stable,
/// machine-parsable identifier (the CLI prints it verbatim).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Sentinel index used by SingularGram for the pooled Gram matrix.
inline constexpr long kPooledIndex = -1;

class SingularGram : public Error {
 public:
  explicit SingularGram(long individual)
      : Error("SingularGram",
              individual == kPooledIndex
                  ? std::string("pooled Gram matrix is numerically singular")
                  : "Gram matrix of individual " + std::to_string(individual) +
                        " is numerically singular"),
        individual_(individual) {}

  long individual() const noexcept { return individual_; }

 private:
  long individual_;
};

#define PANEL_MSFE_SIMPLE_ERROR(Name)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(#Name, what) {}      \
  };

PANEL_MSFE_SIMPLE_ERROR(InvalidPanel)
PANEL_MSFE_SIMPLE_ERROR(ShapeMismatch)
PANEL_MSFE_SIMPLE_ERROR(AlreadyDemeaned)
PANEL_MSFE_SIMPLE_ERROR(DegenerateVariance)
PANEL_MSFE_SIMPLE_ERROR(NonpositiveVariance)
PANEL_MSFE_SIMPLE_ERROR(LagTooLarge)
PANEL_MSFE_SIMPLE_ERROR(ZeroScale)
PANEL_MSFE_SIMPLE_ERROR(InvalidBandwidth)
PANEL_MSFE_SIMPLE_ERROR(OutOfRange)
PANEL_MSFE_SIMPLE_ERROR(InvalidModel)
PANEL_MSFE_SIMPLE_ERROR(ParseError)
PANEL_MSFE_SIMPLE_ERROR(ValidationError)
PANEL_MSFE_SIMPLE_ERROR(UnbalancedPanel)
PANEL_MSFE_SIMPLE_ERROR(MissingPrediction)
PANEL_MSFE_SIMPLE_ERROR(NonNumericCell)
PANEL_MSFE_SIMPLE_ERROR(UnknownTable)
PANEL_MSFE_SIMPLE_ERROR(IoError)

#undef PANEL_MSFE_SIMPLE_ERROR

}  // namespace panel_msfe
