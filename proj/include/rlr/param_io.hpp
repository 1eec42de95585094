#pragma once

// ParamVector serialisation.
//
// Binary blob, all integers and floats little-endian:
//   [0, 8)   magic "RLRPARAM"
//   [8]      backbone kind (1 = linear-affine, 2 = mlp-tanh)
//   [9]      flags (bit 0: time conditioning)
//   [10, 12) latent dim d, uint16
//   [12, 14) hidden dim m, uint16 (0 for linear-affine)
//   [14, 16) horizon T, uint16 (used by time conditioning)
//   [16, ..) p float64 values, p derived from the header
//
// Text: one value per line, 17 significant digits.

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rlr/diffcore.hpp"

namespace rlr {

inline constexpr std::array<char, 8> kParamMagic{'R', 'L', 'R', 'P', 'A', 'R', 'A', 'M'};
inline constexpr std::size_t kParamHeaderSize = 16;

struct ParamBlob {
  Backbone backbone;
  ParamVector params;
};

namespace detail {

inline void put_u16(std::ostream& os, int v) {
  if (v < 0 || v > 0xffff) throw ContractViolation("param blob: field does not fit in 16 bits");
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline int get_u16(const unsigned char* p) { return int(p[0]) | (int(p[1]) << 8); }

inline void put_f64(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_params_binary(std::ostream& os, const Backbone& bb, const ParamVector& params) {
  if (params.size() != bb.param_count()) throw ContractViolation("param blob: size mismatch");
  os.write(kParamMagic.data(), kParamMagic.size());
  const char kind = static_cast<char>(bb.kind);
  const char flags = bb.time_conditioning ? 1 : 0;
  os.put(kind);
  os.put(flags);
  detail::put_u16(os, bb.latent_dim);
  detail::put_u16(os, bb.hidden_dim);
  detail::put_u16(os, bb.horizon);
  for (Eigen::Index i = 0; i < params.size(); ++i) detail::put_f64(os, params[i]);
}

inline ParamBlob read_params_binary(std::istream& is) {
  unsigned char hdr[kParamHeaderSize];
  if (!is.read(reinterpret_cast<char*>(hdr), kParamHeaderSize))
    throw ContractViolation("param blob: truncated header");
  if (std::memcmp(hdr, kParamMagic.data(), kParamMagic.size()) != 0)
    throw ContractViolation("param blob: bad magic");
  if (hdr[8] != 1 && hdr[8] != 2) throw ContractViolation("param blob: unknown backbone kind");
  if (hdr[9] & ~1u) throw ContractViolation("param blob: unknown flag bits");

  ParamBlob out;
  out.backbone.kind = static_cast<BackboneKind>(hdr[8]);
  out.backbone.time_conditioning = (hdr[9] & 1u) != 0;
  out.backbone.latent_dim = detail::get_u16(hdr + 10);
  out.backbone.hidden_dim = detail::get_u16(hdr + 12);
  out.backbone.horizon = detail::get_u16(hdr + 14);
  out.backbone.validate();

  out.params.resize(out.backbone.param_count());
  unsigned char buf[8];
  for (Eigen::Index i = 0; i < out.params.size(); ++i) {
    if (!is.read(reinterpret_cast<char*>(buf), 8))
      throw ContractViolation("param blob: truncated payload");
    out.params[i] = detail::get_f64(buf);
    if (!std::isfinite(out.params[i])) throw ContractViolation("param blob: non-finite value");
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw ContractViolation("param blob: trailing bytes");
  return out;
}

/// 17 significant digits; parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_params_text(std::ostream& os, const ParamVector& params) {
  for (Eigen::Index i = 0; i < params.size(); ++i) os << format_double(params[i]) << '\n';
}

inline ParamVector read_params_text(std::istream& is) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &pos);
    } catch (const std::exception&) {
      throw ContractViolation("param text: cannot parse '" + line + "'");
    }
    if (line.find_first_not_of(" \t\r", pos) != std::string::npos)
      throw ContractViolation("param text: trailing characters in '" + line + "'");
    vals.push_back(v);
  }
  return Eigen::Map<const ParamVector>(vals.data(), Eigen::Index(vals.size()));
}

}  // namespace rlr
