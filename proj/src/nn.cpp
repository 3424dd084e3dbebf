#include "celiac/nn.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "celiac/util.hpp"

namespace celiac {

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = std * rng.normal();
  return t;
}

Conv2dLayer Conv2dLayer::create(std::string name, int in_ch, int out_ch, int k,
                                int stride, int pad, Rng& rng) {
  Conv2dLayer l;
  l.name = std::move(name);
  l.w = he_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng);
  l.b = Tensor({out_ch});
  l.stride = stride;
  l.pad = pad;
  return l;
}

Var Conv2dLayer::forward(Tape& t, Var in) const {
  Var wv = t.param(name + ".w", w);
  Var bv = t.param(name + ".b", b);
  return t.conv2d(in, wv, bv, stride, pad);
}

void Conv2dLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({name + ".w", &w});
  out.push_back({name + ".b", &b});
}

DenseLayer DenseLayer::create(std::string name, int in_dim, int out_dim, Rng& rng) {
  DenseLayer l;
  l.name = std::move(name);
  l.w = he_normal({in_dim, out_dim}, in_dim, rng);
  l.b = Tensor({out_dim});
  return l;
}

Var DenseLayer::forward(Tape& t, Var in) const {
  Var wv = t.param(name + ".w", w);
  Var bv = t.param(name + ".b", b);
  return t.dense(in, wv, bv);
}

void DenseLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({name + ".w", &w});
  out.push_back({name + ".b", &b});
}

BatchNormLayer BatchNormLayer::create(std::string name, int channels) {
  BatchNormLayer l;
  l.name = std::move(name);
  l.gamma = Tensor::full({channels}, 1.0);
  l.beta = Tensor({channels});
  l.state = BatchNormState::create(channels);
  return l;
}

Var BatchNormLayer::forward(Tape& t, Var in, Mode mode) {
  Var gv = t.param(name + ".gamma", gamma);
  Var bv = t.param(name + ".beta", beta);
  return t.batchnorm(in, gv, bv, state, mode);
}

void BatchNormLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({name + ".gamma", &gamma});
  out.push_back({name + ".beta", &beta});
}

void BatchNormLayer::collect_buffers(std::vector<ParamRef>& out) {
  out.push_back({name + ".running_mean", &state.running_mean});
  out.push_back({name + ".running_var", &state.running_var});
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

static_assert(sizeof(double) == 8, "checkpoint format assumes 64-bit doubles");

namespace {

void to_little_endian(std::vector<std::uint8_t>& bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 8 <= bytes.size(); i += 8)
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + 8));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::ordered_json& arch,
                     const std::vector<ParamRef>& tensors) {
  nlohmann::ordered_json header;
  header["format"] = "ckpt-v1";
  header["arch"] = arch;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::int64_t offset = 0;  // in float64 elements
  for (const ParamRef& p : tensors) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.tensor->shape();
    e["offset"] = offset;
    manifest.push_back(e);
    offset += p.tensor->size();
  }
  header["tensors"] = manifest;

  std::string head = header.dump();
  std::vector<std::uint8_t> blob(static_cast<std::size_t>(offset) * 8);
  std::size_t pos = 0;
  for (const ParamRef& p : tensors) {
    const std::size_t nbytes = static_cast<std::size_t>(p.tensor->size()) * 8;
    std::memcpy(blob.data() + pos, p.tensor->data(), nbytes);
    pos += nbytes;
  }
  to_little_endian(blob);

  std::string file;
  file.reserve(head.size() + 1 + blob.size());
  file += head;
  file += '\n';
  file.append(reinterpret_cast<const char*>(blob.data()), blob.size());
  atomic_write_file(path, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> raw = read_binary_file(path);
  auto nl = std::find(raw.begin(), raw.end(), static_cast<std::uint8_t>('\n'));
  if (nl == raw.end()) throw PipelineError("corrupt checkpoint (no header): " + path.string());
  const std::size_t head_len = static_cast<std::size_t>(nl - raw.begin());
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(head_len));
  } catch (const std::exception& e) {
    throw PipelineError("corrupt checkpoint header: " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "ckpt-v1")
    throw PipelineError("unsupported checkpoint format: " + path.string());

  std::vector<std::uint8_t> blob(raw.begin() + static_cast<std::ptrdiff_t>(head_len) + 1, raw.end());
  to_little_endian(blob);  // symmetric swap on big-endian hosts

  Checkpoint ckpt;
  ckpt.arch = header["arch"];
  for (const auto& e : header["tensors"]) {
    const std::string name = e["name"].get<std::string>();
    const std::vector<int> shape = e["shape"].get<std::vector<int>>();
    const std::int64_t offset = e["offset"].get<std::int64_t>();
    const std::int64_t count = shape_product(shape);
    if ((offset + count) * 8 > static_cast<std::int64_t>(blob.size()))
      throw PipelineError("checkpoint blob truncated: " + path.string());
    std::vector<double> data(static_cast<std::size_t>(count));
    std::memcpy(data.data(), blob.data() + offset * 8, static_cast<std::size_t>(count) * 8);
    ckpt.tensors.emplace_back(name, Tensor(shape, std::move(data)));
  }
  return ckpt;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw PipelineError("checkpoint is missing tensor: " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void restore_tensors(const Checkpoint& ckpt, const std::vector<ParamRef>& refs) {
  for (const ParamRef& r : refs) {
    const Tensor& src = ckpt.tensor(r.name);
    if (!src.same_shape(*r.tensor))
      throw PipelineError("checkpoint shape mismatch for " + r.name + ": " +
                          src.shape_string() + " vs " + r.tensor->shape_string());
    *r.tensor = src;
  }
}

}  // namespace celiac
