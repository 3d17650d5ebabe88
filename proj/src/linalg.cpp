#include "kinspec/linalg.hpp"

#include <cstdlib>
#include <string>

#include <lapacke.h>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "kinspec/errors.hpp"

namespace kinspec {

ComplexEig eig_complex(const Eigen::MatrixXcd& A, bool vectors) {
  const lapack_int n = lapack_int(A.rows());
  Eigen::MatrixXcd a = A;  // column-major copy, overwritten by zgeev
  ComplexEig out;
  out.values.resize(n);
  if (vectors) out.vectors.resize(n, n);
  lapack_complex_double dummy;
  lapack_int info = LAPACKE_zgeev(
      LAPACK_COL_MAJOR, 'N', vectors ? 'V' : 'N', n, reinterpret_cast<lapack_complex_double*>(a.data()), n,
      reinterpret_cast<lapack_complex_double*>(out.values.data()), &dummy, 1,
      vectors ? reinterpret_cast<lapack_complex_double*>(out.vectors.data()) : &dummy, vectors ? n : 1);
  if (info != 0) throw Error(ErrorKind::Divergence, "eig_complex: zgeev failed with info=" + std::to_string(info));
  return out;
}

int configure_threads() {
  int n = 0;
  if (const char* s = std::getenv("KINSPEC_THREADS")) n = std::atoi(s);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
  return omp_get_max_threads();
#else
  return n > 0 ? n : 1;
#endif
}

}  // namespace kinspec
