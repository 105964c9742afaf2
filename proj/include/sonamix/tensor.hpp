// Copyright 2026 Sonamix Authors
// Matrix aliases and parameter initialization.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "sonamix/rng.hpp"

namespace sonamix {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

// Xavier-uniform: entries drawn from U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename S>
Mat<S> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                      Eigen::Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<S>(rng.uniform(-a, a));
  return m;
}

template <typename S>
Mat<S> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.normal());
  return m;
}

}  // namespace sonamix
