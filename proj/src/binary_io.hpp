#pragma once

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "fewtopics/common.hpp"

// Row-major little-endian float64 payloads for the model files.

namespace fewtopics::detail {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; add byte swapping for this platform");

inline void write_matrix(std::ostream& out, const Matrix& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      Scalar v = m(r, c);
      char buf[sizeof(Scalar)];
      std::memcpy(buf, &v, sizeof(Scalar));
      out.write(buf, sizeof(Scalar));
    }
}

inline bool read_matrix(std::istream& in, Matrix& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      char buf[sizeof(Scalar)];
      if (!in.read(buf, sizeof(Scalar))) return false;
      Scalar v;
      std::memcpy(&v, buf, sizeof(Scalar));
      m(r, c) = v;
    }
  return true;
}

}  // namespace fewtopics::detail
