#pragma once

#include <span>
#include <vector>

#include "fewtopics/common.hpp"

namespace fewtopics::ad {

struct AdamConfig {
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
};

// First/second moment estimates for one fixed set of parameter tensors.
class AdamState {
 public:
  AdamState(AdamConfig config, std::span<const Matrix* const> params);

  const AdamConfig& config() const { return config_; }
  long step_count() const { return t_; }

  friend void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
                        AdamState& state);

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// One update in place: t is incremented first, then bias-corrected moments
// drive params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace fewtopics::ad
