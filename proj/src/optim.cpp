#include "celiac/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace celiac {

void rmsprop_step(Tensor& theta, const Tensor& grad, Tensor& accum,
                  const RmsPropOptions& opt) {
  if (!theta.same_shape(grad) || !theta.same_shape(accum))
    throw std::invalid_argument("rmsprop_step: shape mismatch");
  const std::int64_t n = theta.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double g = grad[i];
    accum[i] = opt.rho * accum[i] + (1.0 - opt.rho) * g * g;
    theta[i] -= opt.lr * g / (std::sqrt(accum[i]) + opt.eps);
  }
}

void RmsProp::step(const std::vector<ParamRef>& params, const Tape& tape) {
  for (const ParamRef& p : params) {
    if (!tape.has_param(p.name)) continue;
    auto it = accum_.find(p.name);
    if (it == accum_.end())
      it = accum_.emplace(p.name, Tensor(p.tensor->shape())).first;
    rmsprop_step(*p.tensor, tape.param_grad(p.name), it->second, opt_);
  }
}

const Tensor& RmsProp::accumulator(const std::string& name) const {
  auto it = accum_.find(name);
  if (it == accum_.end()) throw std::invalid_argument("no accumulator for " + name);
  return it->second;
}

}  // namespace celiac
