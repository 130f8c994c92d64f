#include "segnn/optim.hpp"

#include <cmath>

#include "segnn/errors.hpp"

namespace segnn {

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& options) {
  if (state.first.empty()) {
    for (const Parameter* p : params) {
      state.first.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw ShapeError("adam_step: gradient " + shape_string(p.grad) + " for parameter " +
                       p.name + " " + shape_string(p.value));
    }
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    m = options.beta1 * m + (1.0 - options.beta1) * p.grad;
    v = options.beta2 * v + (1.0 - options.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= options.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + options.epsilon);
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace segnn
