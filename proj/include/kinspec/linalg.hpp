#pragma once

#include <complex>

#include <Eigen/Dense>

namespace kinspec {

struct ComplexEig {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // right eigenvectors, unit 2-norm columns (empty if not requested)
};

// General dense complex eigensolver (LAPACK zgeev).
ComplexEig eig_complex(const Eigen::MatrixXcd& A, bool vectors);

// Sets the worker thread count from KINSPEC_THREADS (falls back to the runtime default).
int configure_threads();

}  // namespace kinspec
