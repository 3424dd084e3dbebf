#pragma once

#include <map>
#include <string>
#include <vector>

#include "celiac/autodiff.hpp"
#include "celiac/tensor.hpp"

namespace celiac {

// Named view of a trainable tensor owned by a layer.
struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
};

struct RmsPropOptions {
  double lr = 1e-5;
  double rho = 0.9;
  double eps = 1e-8;
};

// One RMSprop update (no momentum):
//   s <- rho*s + (1-rho)*g^2
//   theta <- theta - lr * g / (sqrt(s) + eps)
void rmsprop_step(Tensor& theta, const Tensor& grad, Tensor& accum,
                  const RmsPropOptions& opt);

// Keeps one squared-gradient accumulator per parameter name.
class RmsProp {
 public:
  explicit RmsProp(RmsPropOptions opt) : opt_(opt) {}

  // Applies rmsprop_step to every param whose gradient is on the tape.
  void step(const std::vector<ParamRef>& params, const Tape& tape);

  const RmsPropOptions& options() const { return opt_; }
  const Tensor& accumulator(const std::string& name) const;

 private:
  RmsPropOptions opt_;
  std::map<std::string, Tensor> accum_;
};

}  // namespace celiac
