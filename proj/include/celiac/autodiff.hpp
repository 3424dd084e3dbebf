#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "celiac/rng.hpp"
#include "celiac/tensor.hpp"

namespace celiac {

enum class Mode { kTrain, kEval };

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Per-layer running statistics for batch normalization. Train-mode forward
// updates them in place; eval mode requires them to be initialized.
struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  bool initialized = false;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState create(int channels);
};

// Recorded computation graph for reverse-mode differentiation. Nodes are kept
// in creation order, which is by construction a topological order; backward
// walks them in exact reverse and accumulates gradients additively at
// fan-out. The tape is immutable between backward calls: running backward
// twice yields identical gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var input(Tensor value);
  // Trainable leaf bound to external storage; `name` must be unique per tape.
  Var param(const std::string& name, const Tensor& value);

  // Layer ops.
  Var conv2d(Var in, Var kernel, Var bias, int stride, int pad);
  Var dense(Var in, Var weight, Var bias);
  Var batchnorm(Var in, Var gamma, Var beta, BatchNormState& state, Mode mode);
  Var relu(Var in);
  Var maxpool2x2(Var in);
  Var global_avg_pool(Var in);
  Var dropout(Var in, double p, Mode mode, Rng& rng);
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

  // Structural / elementwise ops.
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var sum(Var a);
  Var mse(Var a, Var b);  // mean((a-b)^2)
  Var reshape(Var a, std::vector<int> shape);
  Var upsample_nearest2x(Var a);
  Var pick(Var a, std::int64_t flat_index);  // scalar selector

  // Reverse sweep from a scalar root. Gradients of every node (parameters
  // and intermediates alike) are available afterwards; intermediates are
  // what Grad-CAM reads.
  void backward(Var root);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool has_param(const std::string& name) const;
  const Tensor& param_grad(const std::string& name) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&, const Tensor&)> backprop;  // empty for leaves
    std::string param_name;
  };

  Var emit(Tensor value, std::function<void(Tape&, const Tensor&)> backprop);
  void accumulate(int id, const Tensor& g);
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<std::string, int> params_;
  bool backward_done_ = false;
};

// Central finite-difference gradient check helper (h = 1e-5 by default).
// `forward` must rebuild the computation from scratch on every call; returns
// the maximum relative error over all parameter entries.
double finite_difference_check(const std::function<double(const std::vector<Tensor*>&)>& forward,
                               const std::vector<Tensor*>& params,
                               const std::vector<Tensor>& analytic_grads,
                               double h = 1e-5);

}  // namespace celiac
