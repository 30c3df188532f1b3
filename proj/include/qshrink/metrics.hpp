#pragma once

#include <cmath>

#include "qshrink/dataset.hpp"
#include "qshrink/error.hpp"

namespace qshrink {

/// Prediction mean absolute deviation (1/n) sum |y_i - yhat_i|.
inline double pmad(const VectorXd& y, const VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DataError("prediction length does not match response");
  if (y.size() == 0) throw DataError("cannot evaluate prediction error on an empty set");
  return (y - yhat).cwiseAbs().mean();
}

inline double pmad(const Dataset& data, const VectorXd& beta) { return pmad(data.y, predict(data, beta)); }

/// Mean absolute coefficient error over the given positions.
inline double coef_mad(const VectorXd& beta_hat, const VectorXd& beta_true, std::span<const Index> positions) {
  if (positions.empty()) throw DataError("no coefficient positions to compare");
  double s = 0.0;
  for (Index j : positions) s += std::abs(beta_hat(j) - beta_true(j));
  return s / static_cast<double>(positions.size());
}

}  // namespace qshrink
