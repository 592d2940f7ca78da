#ifndef SHADE_DATA_IDX_HPP
#define SHADE_DATA_IDX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shade/data/dataset.hpp"

namespace shade::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Byte 0..255 mapped affinely onto [-1, 1].
inline double byte_to_value(std::uint8_t b) { return static_cast<double>(b) / 255.0 * 2.0 - 1.0; }

/// Inverse of byte_to_value, clamped and rounded to the nearest byte.
inline std::uint8_t value_to_byte(double v) {
  const double scaled = std::round((v + 1.0) / 2.0 * 255.0);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

namespace detail {

inline std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset,
                               const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw std::runtime_error("idx: " + path.string() + " truncated at offset " +
                             std::to_string(buf.size()) + " (header needs " +
                             std::to_string(offset + 4) + " bytes)");
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace detail

/// Reads an IDX image file ([N x H x W] unsigned bytes) and its label file.
/// Pixels are rescaled to [-1, 1]; inputs have shape [N x 1 x H x W]. If
/// num_classes is 0 it is inferred as max label + 1.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::size_t num_classes = 0) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  const auto img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != kIdxImagesMagic) {
    throw std::runtime_error("idx: bad image magic " + detail::hex(img_magic) +
                             " at offset 0 of " + images_path.string());
  }
  const auto lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelsMagic) {
    throw std::runtime_error("idx: bad label magic " + detail::hex(lab_magic) +
                             " at offset 0 of " + labels_path.string());
  }
  const std::size_t n = detail::read_be32(img, 4, images_path);
  const std::size_t h = detail::read_be32(img, 8, images_path);
  const std::size_t w = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " +
                             std::to_string(n_labels) + " labels (count at offset 4)");
  }
  constexpr std::size_t img_header = 16, lab_header = 8;
  if (img.size() < img_header + n * h * w) {
    throw std::runtime_error("idx: " + images_path.string() + " truncated at offset " +
                             std::to_string(img.size()) + ", expected " +
                             std::to_string(img_header + n * h * w) + " bytes");
  }
  if (lab.size() < lab_header + n) {
    throw std::runtime_error("idx: " + labels_path.string() + " truncated at offset " +
                             std::to_string(lab.size()) + ", expected " +
                             std::to_string(lab_header + n) + " bytes");
  }

  Dataset d;
  d.inputs = Tensor({n, 1, h, w});
  for (std::size_t i = 0; i < n * h * w; ++i) d.inputs[i] = byte_to_value(img[img_header + i]);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const int l = lab[lab_header + i];
    d.labels.push_back(l);
    max_label = std::max(max_label, l);
  }
  d.num_classes = num_classes ? num_classes : static_cast<std::size_t>(max_label + 1);
  d.validate();
  return d;
}

/// Writes `d` as an IDX image/label pair. Inputs must have H x W trailing
/// extents (rank 3 or 4 with one channel, or rank 2 with a square row size);
/// values are clamped to [-1, 1] and quantized to bytes.
inline void write_idx(const Dataset& d, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  d.validate();
  const std::size_t n = d.size();
  std::size_t h = 0, w = 0;
  const auto& s = d.inputs.shape();
  if (s.size() == 4 && s[1] == 1) {
    h = s[2];
    w = s[3];
  } else if (s.size() == 3) {
    h = s[1];
    w = s[2];
  } else if (s.size() == 2) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(s[1]))));
    if (side * side != s[1]) throw std::invalid_argument("idx: row size is not a square image");
    h = w = side;
  } else {
    throw std::invalid_argument("idx: cannot write inputs of shape " + shape_string(s));
  }
  for (int l : d.labels) {
    if (l > 255) throw std::invalid_argument("idx: label does not fit in a byte");
  }

  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("idx: cannot open output files");
  detail::write_be32(img, kIdxImagesMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(n));
  detail::write_be32(img, static_cast<std::uint32_t>(h));
  detail::write_be32(img, static_cast<std::uint32_t>(w));
  std::vector<char> bytes(d.inputs.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(value_to_byte(d.inputs[i]));
  img.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

  detail::write_be32(lab, kIdxLabelsMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(n));
  for (int l : d.labels) lab.put(static_cast<char>(l));
  if (!img || !lab) throw std::runtime_error("idx: write failed");
}

}  // namespace shade::data

#endif  // SHADE_DATA_IDX_HPP
