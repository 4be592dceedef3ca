#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/io.hpp"

namespace sferic {

// Field channels. Enumerator order is the on-disk channel order.
enum class Channel : std::uint8_t { Ex = 0, Ey = 1, Hx = 2, Hy = 3 };

inline constexpr std::array<Channel, 4> kAllChannels{Channel::Ex, Channel::Ey, Channel::Hx, Channel::Hy};

constexpr std::string_view to_string(Channel c) noexcept {
  switch (c) {
    case Channel::Ex: return "Ex";
    case Channel::Ey: return "Ey";
    case Channel::Hx: return "Hx";
    case Channel::Hy: return "Hy";
  }
  return "?";
}

inline std::optional<Channel> parse_channel(std::string_view s) noexcept {
  for (auto c : kAllChannels)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

/// Synchronized E/H channels at a fixed sample rate. E in mV/km, H in nT.
///
/// Immutable after construction; all channels share one length.
class MultiChannelSeries {
 public:
  using ChannelMap = std::map<Channel, std::vector<double>>;

  MultiChannelSeries() = default;

  MultiChannelSeries(double sample_rate_hz, ChannelMap channels)
      : sample_rate_hz_(sample_rate_hz), channels_(std::move(channels)) {
    if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_))
      throw DataError("sample rate must be positive and finite");
    if (channels_.empty()) throw DataError("series needs at least one channel");
    length_ = channels_.begin()->second.size();
    for (const auto& [id, v] : channels_)
      if (v.size() != length_)
        throw DataError("channel " + std::string(to_string(id)) + " has length " + std::to_string(v.size()) +
                        ", expected " + std::to_string(length_));
  }

  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t length() const noexcept { return length_; }
  double duration_s() const noexcept { return static_cast<double>(length_) / sample_rate_hz_; }
  const ChannelMap& channels() const noexcept { return channels_; }

  bool has(Channel c) const { return channels_.count(c) != 0; }
  bool has_all(std::span<const Channel> cs) const {
    return std::all_of(cs.begin(), cs.end(), [&](Channel c) { return has(c); });
  }

  std::span<const double> operator[](Channel c) const {
    auto it = channels_.find(c);
    if (it == channels_.end()) throw DataError("series has no channel " + std::string(to_string(c)));
    return it->second;
  }

  // Processing entry points need the full tensor channel set.
  void require_full() const {
    if (!has_all(kAllChannels) || channels_.size() != 4)
      throw DataError("processing requires exactly the channels Ex, Ey, Hx, Hy");
  }

  friend bool operator==(const MultiChannelSeries&, const MultiChannelSeries&) = default;

 private:
  double sample_rate_hz_ = 1.0;
  ChannelMap channels_;
  std::size_t length_ = 0;
};

/// Sferic center indices for one series; strictly increasing.
struct SfericCatalog {
  std::string series_id;
  std::vector<std::size_t> centers;

  void validate(std::size_t length) const {
    for (std::size_t i = 0; i < centers.size(); ++i) {
      if (centers[i] >= length)
        throw DataError("catalog center " + std::to_string(centers[i]) + " outside series of length " +
                        std::to_string(length));
      if (i > 0 && centers[i] <= centers[i - 1])
        throw DataError("catalog centers must be strictly increasing (index " + std::to_string(centers[i]) + ")");
    }
  }
};

/// Per-sample binary mask; 1 on the union of [ps - r, ps + r] over all centers.
struct SampleMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  // True if any bit in [start, start + len) is set.
  bool any_in(std::size_t start, std::size_t len) const {
    const auto b = bits.begin() + static_cast<std::ptrdiff_t>(start);
    return std::find(b, b + static_cast<std::ptrdiff_t>(len), std::uint8_t{1}) != b + static_cast<std::ptrdiff_t>(len);
  }
};

// Intervals clamp at the series bounds; near-edge centers are legal.
inline SampleMask build_mask(const SfericCatalog& catalog, std::size_t length, std::size_t r) {
  SampleMask mask{std::vector<std::uint8_t>(length, 0)};
  for (auto ps : catalog.centers) {
    if (ps >= length)
      throw DataError("mask center " + std::to_string(ps) + " outside series of length " + std::to_string(length));
    const std::size_t lo = ps >= r ? ps - r : 0;
    const std::size_t hi = std::min(length - 1, ps + r);
    std::fill(mask.bits.begin() + static_cast<std::ptrdiff_t>(lo), mask.bits.begin() + static_cast<std::ptrdiff_t>(hi) + 1,
              std::uint8_t{1});
  }
  return mask;
}

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

inline void put_le64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char b[8];
  std::memcpy(b, &bits, 8);
  out.append(b, 8);
}

inline double get_le64(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline constexpr std::string_view kSeriesMagic = "SFAMT1";

/// Encodes a series in the SFAMT1 container: one ASCII header line, then
/// little-endian binary64 samples, channel-major in Ex, Ey, Hx, Hy order.
inline std::string encode_series(const MultiChannelSeries& s) {
  std::string out(kSeriesMagic);
  out += ' ' + detail::format_double(s.sample_rate_hz()) + ' ' + std::to_string(s.length()) + ' ' +
         std::to_string(s.channels().size());
  for (const auto& [id, _] : s.channels()) out += ' ' + std::string(to_string(id));
  out += '\n';
  out.reserve(out.size() + 8 * s.length() * s.channels().size());
  for (const auto& [_, v] : s.channels())
    for (double x : v) detail::put_le64(out, x);
  return out;
}

inline MultiChannelSeries decode_series(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw DataError("malformed header: missing newline");
  std::istringstream hdr{std::string(bytes.substr(0, nl))};
  std::string magic, rate_s;
  long long length = -1, n_channels = -1;
  if (!(hdr >> magic >> rate_s >> length >> n_channels) || magic != kSeriesMagic)
    throw DataError("malformed header: expected '" + std::string(kSeriesMagic) +
                    " <sample_rate_hz> <length> <n_channels> <ids...>'");
  double rate = 0.0;
  {
    auto [p, ec] = std::from_chars(rate_s.data(), rate_s.data() + rate_s.size(), rate);
    if (ec != std::errc{} || p != rate_s.data() + rate_s.size())
      throw DataError("malformed header: bad sample rate '" + rate_s + "'");
  }
  if (length < 0 || n_channels <= 0) throw DataError("malformed header: negative length or no channels");
  std::vector<Channel> ids;
  std::string tok;
  while (hdr >> tok) {
    auto c = parse_channel(tok);
    if (!c) throw DataError("malformed header: unknown channel id '" + tok + "'");
    if (!ids.empty() && *c <= ids.back()) throw DataError("malformed header: channels must be unique in Ex, Ey, Hx, Hy order");
    ids.push_back(*c);
  }
  if (static_cast<long long>(ids.size()) != n_channels)
    throw DataError("channel-count mismatch: header declares " + std::to_string(n_channels) + " channels but lists " +
                    std::to_string(ids.size()) + " ids");
  const auto payload = bytes.substr(nl + 1);
  const std::size_t expected = 8 * static_cast<std::size_t>(length) * ids.size();
  if (payload.size() < expected)
    throw DataError("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(payload.size()));
  if (payload.size() > expected)
    throw DataError("payload size mismatch: " + std::to_string(payload.size() - expected) +
                    " bytes beyond the declared channels (channel count disagrees with data)");
  MultiChannelSeries::ChannelMap map;
  const char* p = payload.data();
  for (auto id : ids) {
    std::vector<double> v(static_cast<std::size_t>(length));
    for (auto& x : v) {
      x = detail::get_le64(p);
      p += 8;
    }
    map.emplace(id, std::move(v));
  }
  return MultiChannelSeries(rate, std::move(map));
}

inline void write_series(const MultiChannelSeries& s, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_series(s));
}

inline MultiChannelSeries read_series(const std::filesystem::path& path) {
  try {
    return decode_series(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline std::string encode_catalog(const SfericCatalog& c) {
  std::string out = "# sferic catalog";
  if (!c.series_id.empty()) out += ": " + c.series_id;
  out += '\n';
  for (auto i : c.centers) out += std::to_string(i) + '\n';
  return out;
}

inline SfericCatalog decode_catalog(std::string_view text, std::string series_id = {}) {
  SfericCatalog cat{std::move(series_id), {}};
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc{} || p != line.data() + line.size())
      throw DataError("catalog line " + std::to_string(line_no) + ": not a sample index: '" + std::string(line) + "'");
    if (!cat.centers.empty() && v <= cat.centers.back())
      throw DataError("catalog line " + std::to_string(line_no) + ": centers must be strictly increasing");
    cat.centers.push_back(v);
  }
  return cat;
}

inline void write_catalog(const SfericCatalog& c, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_catalog(c));
}

inline SfericCatalog read_catalog(const std::filesystem::path& path) {
  return decode_catalog(io::read_file(path), path.stem().string());
}

}  // namespace sferic
