#pragma once

#include <stdexcept>
#include <string>

namespace kinspec {

enum class ErrorKind { Config, Precondition, Singular, Quadrature, Divergence, Tolerance, Io };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

// Non-convergent quadrature keeps the two last refinement levels.
class QuadratureError : public Error {
public:
  QuadratureError(const std::string& where, double coarse, double fine)
      : Error(ErrorKind::Quadrature, where + ": refinements disagree (" + std::to_string(coarse) + " vs " +
                                         std::to_string(fine) + ")"),
        coarse(coarse), fine(fine) {}
  double coarse, fine;
};

int exit_code(ErrorKind kind);

}  // namespace kinspec
