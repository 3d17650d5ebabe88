#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "kinspec/operators.hpp"

namespace kinspec::test {

// Systems are expensive to assemble; tests share them per (gamma, per_axis).
inline const LinearSystem& shared_system(double gamma = 0.5, int per_axis = 8, int d = 3) {
  static std::map<std::tuple<double, int, int>, std::unique_ptr<LinearSystem>> cache;
  auto& slot = cache[{gamma, per_axis, d}];
  if (!slot) {
    KernelParams p;
    p.d = d;
    p.gamma = gamma;
    slot = std::make_unique<LinearSystem>(build_system(build_grid(d, GridScheme::GaussHermite, per_axis), p));
  }
  return *slot;
}

}  // namespace kinspec::test
