#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/nnet/layers.hpp"
#include "sferic/rng.hpp"

namespace sferic::nn {

/// Named parameter / buffer values at 64 bits; the exchange format between
/// precisions, optimizers and checkpoints.
using StateDict = std::map<std::string, Tensor<double>>;

template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& o) {
    for (const auto& [name, l] : o.layers_) layers_.emplace_back(name, l->clone());
  }
  Sequential& operator=(const Sequential& o) {
    if (this != &o) *this = Sequential(o);
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  // An empty name makes the layer anonymous (it must then own no tensors).
  Layer<T>& add(std::string name, std::unique_ptr<Layer<T>> layer) {
    layers_.emplace_back(std::move(name), std::move(layer));
    return *layers_.back().second;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i).second; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& [_, l] : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
    return g;
  }

  std::vector<NamedTensor<T>> parameters() { return collect(false); }
  std::vector<NamedTensor<T>> buffers() { return collect(true); }

  void zero_grad() {
    for (auto& [_, p] : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& [_, p] : parameters()) n += p->size();
    return n;
  }

  StateDict state() {
    StateDict out;
    auto put = [&](const std::string& name, const Tensor<T>* t) {
      out[name] = Tensor<double>(t->shape, std::vector<double>(t->values.begin(), t->values.end()));
    };
    for (auto& [n, p] : parameters()) put(n, p);
    for (auto& [n, b] : buffers()) put(n, b);
    return out;
  }

  // Every parameter and buffer must be present with a matching shape; extra
  // entries (optimizer moments, say) are ignored.
  void load_state(const StateDict& s) {
    auto get = [&](const std::string& name, Tensor<T>* t) {
      auto it = s.find(name);
      if (it == s.end()) throw DataError("state is missing tensor '" + name + "'");
      if (it->second.shape != t->shape)
        throw DataError("tensor '" + name + "' has shape " + shape_string(it->second.shape) + ", network expects " +
                        shape_string(t->shape));
      for (std::size_t i = 0; i < t->size(); ++i) t->values[i] = static_cast<T>(it->second.values[i]);
    };
    for (auto& [n, p] : parameters()) get(n, p);
    for (auto& [n, b] : buffers()) get(n, b);
  }

 private:
  std::vector<NamedTensor<T>> collect(bool buffers) {
    std::vector<NamedTensor<T>> out;
    for (auto& [name, l] : layers_) {
      auto ts = buffers ? l->buffers() : l->parameters();
      if (!ts.empty() && name.empty()) throw Error("anonymous " + l->kind() + " layer owns tensors");
      for (auto& [n, t] : ts) out.emplace_back(name + "." + n, t);
    }
    return out;
  }

  std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> layers_;
};

struct NetworkConfig {
  std::size_t input_channels = 4;
  std::size_t input_length = 240;
  std::vector<std::size_t> block_widths{64, 128, 256, 512, 512};
  std::size_t convs_per_block = 4;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> fc_widths{256, 128};

  std::size_t pooled_length() const {
    std::size_t l = input_length;
    for (std::size_t i = 0; i < block_widths.size(); ++i) l /= 2;
    return l;
  }

  void validate() const {
    if (input_channels == 0) throw ConfigError("network.input_channels must be >= 1");
    if (block_widths.empty() || convs_per_block == 0) throw ConfigError("network.block_widths must be non-empty");
    for (auto w : block_widths)
      if (w == 0) throw ConfigError("network.block_widths entries must be >= 1");
    for (auto w : fc_widths)
      if (w == 0) throw ConfigError("network.fc_widths entries must be >= 1");
    if (kernel_size % 2 == 0) throw ConfigError("network.kernel_size must be odd");
    if (pooled_length() < 1)
      throw ConfigError("network.input_length " + std::to_string(input_length) + " too short for " +
                        std::to_string(block_widths.size()) + " pooling blocks");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// VGG-style 1-D classifier: conv blocks (conv + ReLU repeated, then 2x max
/// pool), flatten, FC -> BN -> ReLU blocks, one output logit.
template <class T>
Sequential<T> build_vgg1d(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x696e6974ULL));
  Sequential<T> net;
  std::size_t ch = cfg.input_channels;
  for (std::size_t b = 0; b < cfg.block_widths.size(); ++b) {
    for (std::size_t i = 0; i < cfg.convs_per_block; ++i) {
      auto conv = std::make_unique<Conv1d<T>>(ch, cfg.block_widths[b], cfg.kernel_size);
      conv->init(rng);
      net.add("block" + std::to_string(b + 1) + ".conv" + std::to_string(i + 1), std::move(conv));
      net.add("", std::make_unique<ReLU<T>>());
      ch = cfg.block_widths[b];
    }
    net.add("", std::make_unique<MaxPool1d<T>>());
  }
  std::size_t features = ch * cfg.pooled_length();
  for (std::size_t k = 0; k < cfg.fc_widths.size(); ++k) {
    const auto name = "fc" + std::to_string(k + 1);
    auto fc = std::make_unique<Linear<T>>(features, cfg.fc_widths[k]);
    fc->init(rng);
    net.add(name, std::move(fc));
    net.add(name + ".bn", std::make_unique<BatchNorm1d<T>>(cfg.fc_widths[k]));
    net.add("", std::make_unique<ReLU<T>>());
    features = cfg.fc_widths[k];
  }
  auto out = std::make_unique<Linear<T>>(features, 1);
  out->init(rng);
  net.add("out", std::move(out));
  return net;
}

/// A network together with the configuration that built it.
template <class T>
struct Classifier {
  NetworkConfig config;
  Sequential<T> net;

  static Classifier create(const NetworkConfig& cfg, std::uint64_t seed) { return {cfg, build_vgg1d<T>(cfg, seed)}; }

  // Logits for a B x C x n batch.
  std::vector<T> logits(const Tensor<T>& batch, Mode mode) {
    if (batch.rank() != 3 || batch.dim(1) != config.input_channels || batch.dim(2) != config.input_length)
      throw DataError("batch shape " + shape_string(batch.shape) + " does not match network input " +
                      std::to_string(config.input_channels) + " x " + std::to_string(config.input_length));
    return net.forward(batch, mode).values;
  }
};

}  // namespace sferic::nn
