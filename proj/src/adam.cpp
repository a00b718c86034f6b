#include "fewtopics/adam.hpp"

#include <cmath>
#include <string>

namespace fewtopics::ad {

AdamState::AdamState(AdamConfig config, std::span<const Matrix* const> params)
    : config_(config) {
  if (config_.learning_rate <= 0.0)
    throw ConfigError("adam: learning rate must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Matrix* p : params) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size())
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols())
      throw DimensionError("adam_step: gradient shape mismatch at tensor " + std::to_string(i));
  }
  const AdamConfig& c = state.config_;
  state.t_ += 1;
  Scalar bc1 = 1.0 - std::pow(c.beta1, static_cast<Scalar>(state.t_));
  Scalar bc2 = 1.0 - std::pow(c.beta2, static_cast<Scalar>(state.t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.m_[i];
    Matrix& v = state.v_[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v.array() + (1.0 - c.beta2) * grads[i].array().square();
    *params[i] -= (c.learning_rate * (m / bc1).array() /
                   ((v / bc2).array().sqrt() + c.epsilon))
                      .matrix();
  }
}

}  // namespace fewtopics::ad
