#ifndef SHADE_CHECKPOINT_HPP
#define SHADE_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shade/network.hpp"
#include "shade/shade_regularizer.hpp"

namespace shade {

/// Network + regularizer state + free-form metadata.
///
/// File layout (all integers little-endian):
///   "SHADECKP" | u32 version | u64 header bytes | JSON header |
///   f64 payload: every parameter tensor in layer order, then for each
///   SHADE layer the unit statistics as (mu0, mu1, p0, p1) per unit.
struct Checkpoint {
  Network network;
  std::optional<ShadeState> shade;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'A', 'D', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::vector<char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw std::runtime_error("checkpoint: " + path_ + " truncated at offset " + std::to_string(pos_));
    }
  }

  const std::vector<char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline nlohmann::json describe_layer(const Layer& layer) {
  nlohmann::json j;
  j["kind"] = layer_kind(layer);
  if (const auto* d = std::get_if<Dense>(&layer)) {
    j["in"] = d->in;
    j["out"] = d->out;
  } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["padding"] = c->padding;
    j["stride"] = c->stride;
  } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
    j["size"] = p->size;
  } else if (const auto* dr = std::get_if<Dropout>(&layer)) {
    j["rate"] = dr->rate;
  } else if (const auto* b = std::get_if<BinaryActivation>(&layer)) {
    // bit patterns keep the thresholds exact
    std::vector<std::uint64_t> bits;
    for (double t : b->thresholds) bits.push_back(std::bit_cast<std::uint64_t>(t));
    j["threshold_bits"] = bits;
  }
  return j;
}

inline Layer build_layer(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  if (kind == "dense") return Dense(j.at("in"), j.at("out"));
  if (kind == "conv2d") {
    return Conv2d(j.at("in_channels"), j.at("out_channels"), j.at("kernel"), j.at("padding"),
                  j.at("stride"));
  }
  if (kind == "relu") return Relu{};
  if (kind == "maxpool2d") {
    MaxPool2d p;
    p.size = j.at("size");
    return p;
  }
  if (kind == "flatten") return Flatten{};
  if (kind == "dropout") return Dropout(j.at("rate").get<double>());
  if (kind == "binary") {
    std::vector<double> t;
    for (auto b : j.at("threshold_bits").get<std::vector<std::uint64_t>>()) t.push_back(std::bit_cast<double>(b));
    return BinaryActivation(std::move(t));
  }
  throw std::runtime_error("checkpoint: unknown layer kind '" + kind + "'");
}

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
  Network net = ckpt.network;
  nlohmann::json header;
  header["input_shape"] = net.input_shape();
  header["frozen_through"] = net.frozen_through();
  header["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    header["layers"].push_back(detail::describe_layer(net.layer(i)));
  }
  if (ckpt.shade) {
    nlohmann::json s;
    s["decay_bits"] = std::bit_cast<std::uint64_t>(ckpt.shade->decay());
    std::vector<std::size_t> units;
    for (std::size_t l = 0; l < ckpt.shade->num_layers(); ++l) units.push_back(ckpt.shade->num_units(l));
    s["units"] = units;
    std::vector<std::uint64_t> weights;
    for (double w : ckpt.shade->layer_weights()) weights.push_back(std::bit_cast<std::uint64_t>(w));
    s["layer_weight_bits"] = weights;
    header["shade"] = s;
  }
  header["metadata"] = ckpt.metadata;
  const std::string text = header.dump();

  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : net.all_parameters()) {
    for (double v : p.value->data()) detail::put_f64(out, v);
  }
  if (ckpt.shade) {
    for (std::size_t l = 0; l < ckpt.shade->num_layers(); ++l) {
      for (std::size_t i = 0; i < ckpt.shade->num_units(l); ++i) {
        const auto& u = ckpt.shade->unit(l, i);
        for (double v : {u.mu0, u.mu1, u.p0, u.p1}) detail::put_f64(out, v);
      }
    }
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::vector<char>& buf, const std::string& name = "<memory>") {
  detail::Reader r(buf, name);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) {
    throw std::runtime_error("checkpoint: " + name + " has bad magic at offset 0");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = r.u64();
  const auto header = nlohmann::json::parse(r.bytes(header_len));

  Checkpoint ckpt;
  ckpt.network = Network(header.at("input_shape").get<Shape>());
  for (const auto& lj : header.at("layers")) ckpt.network.add(detail::build_layer(lj));
  ckpt.network.freeze_through(header.at("frozen_through").get<std::size_t>());
  for (const auto& p : ckpt.network.all_parameters()) {
    for (auto& v : p.value->data()) v = r.f64();
  }
  if (header.contains("shade")) {
    const auto& s = header["shade"];
    ShadeState state(s.at("units").get<std::vector<std::size_t>>(),
                     std::bit_cast<double>(s.at("decay_bits").get<std::uint64_t>()));
    std::vector<double> weights;
    for (auto b : s.at("layer_weight_bits").get<std::vector<std::uint64_t>>()) {
      weights.push_back(std::bit_cast<double>(b));
    }
    state.set_layer_weights(std::move(weights));
    for (std::size_t l = 0; l < state.num_layers(); ++l) {
      for (std::size_t i = 0; i < state.num_units(l); ++i) {
        auto& u = state.unit(l, i);
        u.mu0 = r.f64();
        u.mu1 = r.f64();
        u.p0 = r.f64();
        u.p1 = r.f64();
      }
    }
    ckpt.shade = std::move(state);
  }
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  if (!r.at_end()) {
    throw std::runtime_error("checkpoint: " + name + " has trailing bytes at offset " + std::to_string(r.pos()));
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
  return deserialize_checkpoint(buf, path.string());
}

}  // namespace shade

#endif  // SHADE_CHECKPOINT_HPP
