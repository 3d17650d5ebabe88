#include "kinspec/errors.hpp"

namespace kinspec {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Io:
      return 2;
    case ErrorKind::Precondition:
    case ErrorKind::Singular:
      return 3;
    case ErrorKind::Divergence:
    case ErrorKind::Quadrature:
      return 4;
    case ErrorKind::Tolerance:
      return 5;
  }
  return 1;
}

}  // namespace kinspec
