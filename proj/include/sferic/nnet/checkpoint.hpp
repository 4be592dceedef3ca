#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/io.hpp"
#include "sferic/nnet/network.hpp"
#include "sferic/timeseries.hpp"

namespace sferic::nn {

inline constexpr std::string_view kCheckpointMagic = "SFCKPT";
inline constexpr int kCheckpointVersion = 1;

/// Network weights, BN statistics and optimizer state. Tensor names follow
/// the network's parameter names; Adam moments are stored as "adam.m.<name>"
/// and "adam.v.<name>".
struct Checkpoint {
  NetworkConfig config;
  StateDict tensors;
  std::size_t epoch = 0;
  double learning_rate = 1e-3;
  std::uint64_t adam_step = 0;
  double beta = 0.75;
  double val_accuracy = 0.0;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::vector<std::size_t> split_sizes(std::string_view s) {
  std::vector<std::size_t> out;
  while (!s.empty()) {
    auto comma = s.find(',');
    auto tok = s.substr(0, comma);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) throw DataError("checkpoint: bad size list '" + std::string(s) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  using sferic::detail::format_double;
  std::string out = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  const auto& n = c.config;
  out += "network " + std::to_string(n.input_channels) + " " + std::to_string(n.input_length) + " " +
         detail::join_sizes(n.block_widths) + " " + std::to_string(n.convs_per_block) + " " +
         std::to_string(n.kernel_size) + " " + (n.fc_widths.empty() ? "-" : detail::join_sizes(n.fc_widths)) + "\n";
  out += "epoch " + std::to_string(c.epoch) + "\n";
  out += "lr " + format_double(c.learning_rate) + "\n";
  out += "adam_step " + std::to_string(c.adam_step) + "\n";
  out += "beta " + format_double(c.beta) + "\n";
  out += "val_accuracy " + format_double(c.val_accuracy) + "\n";
  out += "tensors " + std::to_string(c.tensors.size()) + "\n";
  for (const auto& [name, t] : c.tensors) {
    out += name + " " + std::to_string(t.shape.size());
    for (auto d : t.shape) out += " " + std::to_string(d);
    out += "\n";
    for (double v : t.values) sferic::detail::put_le64(out, v);
    out += "\n";
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw DataError("checkpoint: truncated header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  auto expect_key = [&](const std::string& key) {
    std::istringstream ls(next_line());
    std::string k;
    ls >> k;
    if (k != key) throw DataError("checkpoint: expected '" + key + "' line, found '" + k + "'");
    std::string rest;
    std::getline(ls >> std::ws, rest);
    return rest;
  };

  {
    std::istringstream ls(next_line());
    std::string magic;
    int version = -1;
    if (!(ls >> magic >> version) || magic != kCheckpointMagic) throw DataError("checkpoint: bad magic");
    if (version != kCheckpointVersion)
      throw DataError("checkpoint: unsupported version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  {
    std::istringstream ls(expect_key("network"));
    std::string widths, fc;
    if (!(ls >> c.config.input_channels >> c.config.input_length >> widths >> c.config.convs_per_block >>
          c.config.kernel_size >> fc))
      throw DataError("checkpoint: malformed network line");
    c.config.block_widths = detail::split_sizes(widths);
    c.config.fc_widths = fc == "-" ? std::vector<std::size_t>{} : detail::split_sizes(fc);
  }
  auto num = [](const std::string& s, auto& v) {
    std::istringstream ls(s);
    if (!(ls >> v)) throw DataError("checkpoint: malformed value '" + s + "'");
  };
  num(expect_key("epoch"), c.epoch);
  {
    auto s = expect_key("lr");
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), c.learning_rate);
    if (ec != std::errc{}) throw DataError("checkpoint: malformed lr");
  }
  num(expect_key("adam_step"), c.adam_step);
  {
    auto s = expect_key("beta");
    std::from_chars(s.data(), s.data() + s.size(), c.beta);
    s = expect_key("val_accuracy");
    std::from_chars(s.data(), s.data() + s.size(), c.val_accuracy);
  }
  std::size_t count = 0;
  num(expect_key("tensors"), count);
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ls(next_line());
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank)) throw DataError("checkpoint: malformed tensor header");
    Shape shape(rank);
    for (auto& d : shape)
      if (!(ls >> d)) throw DataError("checkpoint: malformed shape for '" + name + "'");
    const std::size_t n = shape_size(shape);
    if (bytes.size() < pos + 8 * n + 1) throw DataError("checkpoint: truncated tensor '" + name + "'");
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = sferic::detail::get_le64(bytes.data() + pos + 8 * k);
    pos += 8 * n;
    if (bytes[pos] != '\n') throw DataError("checkpoint: corrupt tensor '" + name + "'");
    ++pos;
    c.tensors.emplace(name, Tensor<double>(std::move(shape), std::move(v)));
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes after tensors");
  c.config.validate();
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <class T>
Classifier<T> restore_classifier(const Checkpoint& c) {
  Classifier<T> m{c.config, build_vgg1d<T>(c.config, 0)};
  m.net.load_state(c.tensors);
  return m;
}

}  // namespace sferic::nn
