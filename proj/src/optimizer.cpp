#include "gradmdm/optimizer.hpp"

#include <cmath>

namespace gradmdm {

void Adam::step(Tensor& param, const Tensor& grad) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam: parameter " + shape_string(param.shape()) + " vs gradient " +
                     shape_string(grad.shape()));
  }
  if (m_.empty()) {
    m_.assign(param.size(), 0.0);
    v_.assign(param.size(), 0.0);
  } else if (m_.size() != param.size()) {
    throw ShapeError("adam: parameter size changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    param[i] -= config_.step_size * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

void Adam::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

}  // namespace gradmdm
