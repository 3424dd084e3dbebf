#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "celiac/autodiff.hpp"
#include "celiac/optim.hpp"
#include "celiac/rng.hpp"
#include "celiac/tensor.hpp"

#include "json.hpp"

namespace celiac {

// He-style init: normal with std sqrt(2 / fan_in).
Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng);

// Layers own their tensors; forward() registers them on the given tape under
// the layer's name so gradients can be routed back by the optimizer.

struct Conv2dLayer {
  std::string name;
  Tensor w;  // [F,C,kh,kw]
  Tensor b;  // [F]
  int stride = 1;
  int pad = 0;

  static Conv2dLayer create(std::string name, int in_ch, int out_ch, int k,
                            int stride, int pad, Rng& rng);
  Var forward(Tape& t, Var in) const;
  void collect(std::vector<ParamRef>& out);
};

struct DenseLayer {
  std::string name;
  Tensor w;  // [D,M]
  Tensor b;  // [M]

  static DenseLayer create(std::string name, int in_dim, int out_dim, Rng& rng);
  Var forward(Tape& t, Var in) const;
  void collect(std::vector<ParamRef>& out);
};

struct BatchNormLayer {
  std::string name;
  Tensor gamma;  // init 1
  Tensor beta;   // init 0
  BatchNormState state;

  static BatchNormLayer create(std::string name, int channels);
  Var forward(Tape& t, Var in, Mode mode);
  void collect(std::vector<ParamRef>& out);
  // running stats, serialized with checkpoints but not optimized
  void collect_buffers(std::vector<ParamRef>& out);
};

// ---------------------------------------------------------------------------
// Checkpoint container: one JSON header line (architecture + ordered tensor
// manifest with element offsets) followed by a little-endian float64 blob.
// ---------------------------------------------------------------------------

struct Checkpoint {
  nlohmann::ordered_json arch;
  std::vector<std::pair<std::string, Tensor>> tensors;  // manifest order

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::ordered_json& arch,
                     const std::vector<ParamRef>& tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into the given refs; throws if a name is missing
// or a shape disagrees.
void restore_tensors(const Checkpoint& ckpt, const std::vector<ParamRef>& refs);

}  // namespace celiac
