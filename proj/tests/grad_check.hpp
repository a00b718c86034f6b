#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fewtopics/common.hpp"

// Central finite differences as the reference for analytic gradients.
// f re-evaluates the full forward pass from the given parameter tensors.

namespace gradcheck {

using fewtopics::Matrix;
using fewtopics::Scalar;

struct Report {
  Scalar max_rel_err = 0;
  Scalar max_abs_err = 0;
  long entries = 0;
};

inline Matrix numeric_gradient(const std::function<Scalar(const std::vector<Matrix>&)>& f,
                               std::vector<Matrix> params, size_t which, Scalar h = 1e-5) {
  Matrix g(params[which].rows(), params[which].cols());
  for (long r = 0; r < g.rows(); ++r) {
    for (long c = 0; c < g.cols(); ++c) {
      Scalar keep = params[which](r, c);
      params[which](r, c) = keep + h;
      Scalar up = f(params);
      params[which](r, c) = keep - h;
      Scalar down = f(params);
      params[which](r, c) = keep;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Relative error with a floor on the denominator: entries smaller than the
// floor are compared absolutely, since central differences bottom out at
// roundoff ~eps*|f|/h there.
inline Report compare(const Matrix& analytic, const Matrix& numeric, Scalar floor) {
  Report rep;
  for (long r = 0; r < analytic.rows(); ++r) {
    for (long c = 0; c < analytic.cols(); ++c) {
      Scalar a = analytic(r, c), n = numeric(r, c);
      Scalar abs_err = std::abs(a - n);
      Scalar rel = abs_err / std::max({std::abs(a), std::abs(n), floor});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      ++rep.entries;
    }
  }
  return rep;
}

inline Report check_all(const std::function<Scalar(const std::vector<Matrix>&)>& f,
                        const std::vector<Matrix>& params,
                        const std::vector<Matrix>& analytic, Scalar floor, Scalar h = 1e-5) {
  Report worst;
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix num = numeric_gradient(f, params, i, h);
    Report rep = compare(analytic[i], num, floor);
    worst.max_rel_err = std::max(worst.max_rel_err, rep.max_rel_err);
    worst.max_abs_err = std::max(worst.max_abs_err, rep.max_abs_err);
    worst.entries += rep.entries;
  }
  return worst;
}

}  // namespace gradcheck
