#pragma once

// VPEM binary matrix format:
//   bytes 0..3   ASCII "VPEM"
//   bytes 4..7   row count, uint32 little-endian
//   bytes 8..11  column count, uint32 little-endian
//   then rows*cols IEEE-754 binary32 values, little-endian, row-major.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>

#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/matrix.hpp"

namespace vprune {

inline constexpr std::string_view kVpemMagic = "VPEM";
inline constexpr std::size_t kVpemHeaderBytes = 12;

inline std::uint64_t vpem_payload_bytes(std::uint32_t rows, std::uint32_t cols) {
  return std::uint64_t{rows} * cols * sizeof(float);
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in[off + i])} << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_vpem(const MatrixF& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("matrix too large for VPEM");
  }
  std::string out;
  out.reserve(kVpemHeaderBytes + m.data().size() * 4);
  out.append(kVpemMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (float v : m.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

// Validates magic, declared size against actual length, and finiteness.
inline MatrixF decode_vpem(std::string_view bytes) {
  if (bytes.size() < kVpemHeaderBytes) {
    throw FormatError("VPEM: truncated header (" + std::to_string(bytes.size()) +
                      " bytes) at byte offset 0");
  }
  if (bytes.substr(0, 4) != kVpemMagic) throw FormatError("VPEM: bad magic at byte offset 0");
  const std::uint32_t rows = detail::get_u32(bytes, 4);
  const std::uint32_t cols = detail::get_u32(bytes, 8);
  const std::uint64_t expected = vpem_payload_bytes(rows, cols);
  const std::uint64_t actual = bytes.size() - kVpemHeaderBytes;
  if (expected != actual) {
    throw FormatError("VPEM: size mismatch at byte offset " + std::to_string(kVpemHeaderBytes) +
                      ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " (" + std::to_string(expected) + " payload bytes), file has " +
                      std::to_string(actual));
  }
  MatrixF m(rows, cols);
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t off = kVpemHeaderBytes + 4 * i;
    const float v = std::bit_cast<float>(detail::get_u32(bytes, off));
    if (!std::isfinite(v)) {
      throw FormatError("VPEM: non-finite value at byte offset " + std::to_string(off));
    }
    data[i] = v;
  }
  return m;
}

inline void save_embeddings(const MatrixF& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_vpem(m));
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  try {
    return decode_vpem(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vprune
