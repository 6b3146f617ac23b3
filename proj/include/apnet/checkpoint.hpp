#pragma once
// Checkpoint file: little-endian binary, documented in the README.
//   magic "APNETCK1" | u32 version | u32 json_len | config JSON |
//   u32 num_arrays | per array: u32 name_len, name, 4 x u32 dims, f32 data
// Arrays are the named parameter tensors in refs() order, float32.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apnet/model.hpp"

namespace apnet {

inline void to_json(nlohmann::json& j, const ApnetConfig& c) {
  j = nlohmann::json{{"scales", c.scales},
                     {"num_classes", c.num_classes},
                     {"in_channels", c.in_channels},
                     {"backbone_channels", c.backbone_channels},
                     {"dilation_rate", c.dilation_rate},
                     {"spp_levels", c.spp_levels},
                     {"spp_reduced_channels", c.spp_reduced_channels},
                     {"use_spp", c.use_spp},
                     {"input_size", c.input_size}};
}

inline void from_json(const nlohmann::json& j, ApnetConfig& c) {
  ApnetConfig defaults;
  c.scales = j.value("scales", defaults.scales);
  c.num_classes = j.value("num_classes", defaults.num_classes);
  c.in_channels = j.value("in_channels", defaults.in_channels);
  c.backbone_channels = j.value("backbone_channels", defaults.backbone_channels);
  c.dilation_rate = j.value("dilation_rate", defaults.dilation_rate);
  c.spp_levels = j.value("spp_levels", defaults.spp_levels);
  c.spp_reduced_channels =
      j.value("spp_reduced_channels", defaults.spp_reduced_channels);
  c.use_spp = j.value("use_spp", defaults.use_spp);
  c.input_size = j.value("input_size", defaults.input_size);
}

namespace detail {

constexpr char kCkptMagic[8] = {'A', 'P', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("checkpoint: truncated file " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_array(std::ostream& os, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
  }
}

inline void read_f32_array(std::istream& is, std::vector<float>& v,
                           const std::string& path) {
  for (auto& f : v) {
    const std::uint32_t bits = read_u32(is, path);
    std::memcpy(&f, &bits, 4);
  }
}

}  // namespace detail

struct Checkpoint {
  ApnetConfig config;
  ApnetParams<float> params;
};

inline void save_checkpoint(const std::string& path, const ApnetConfig& cfg,
                            ApnetParams<float>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(detail::kCkptMagic, 8);
  detail::write_u32(os, detail::kCkptVersion);
  const std::string json = nlohmann::json(cfg).dump();
  detail::write_u32(os, static_cast<std::uint32_t>(json.size()));
  os.write(json.data(), static_cast<std::streamsize>(json.size()));

  auto refs = params.refs();
  detail::write_u32(os, static_cast<std::uint32_t>(refs.size()));
  for (auto& r : refs) {
    detail::write_u32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    const auto& t = *r.tensor;
    detail::write_u32(os, static_cast<std::uint32_t>(t.n));
    detail::write_u32(os, static_cast<std::uint32_t>(t.c));
    detail::write_u32(os, static_cast<std::uint32_t>(t.h));
    detail::write_u32(os, static_cast<std::uint32_t>(t.w));
    detail::write_f32_array(os, t.data);
  }
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::read_u32(is, path);
  if (version != detail::kCkptVersion)
    throw IoError("checkpoint: unsupported version " +
                  std::to_string(version) + " in " + path);
  const std::uint32_t json_len = detail::read_u32(is, path);
  std::string json(json_len, '\0');
  if (!is.read(json.data(), json_len))
    throw IoError("checkpoint: truncated config in " + path);

  Checkpoint ck;
  try {
    ck.config = nlohmann::json::parse(json).get<ApnetConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: bad config JSON in " + path + ": " + e.what());
  }
  validate_model_config(ck.config);
  ck.params = init_params<float>(ck.config, 0);

  auto refs = ck.params.refs();
  const std::uint32_t count = detail::read_u32(is, path);
  if (count != refs.size())
    throw IoError("checkpoint: " + std::to_string(count) + " arrays, expected " +
                  std::to_string(refs.size()) + " in " + path);
  for (auto& r : refs) {
    const std::uint32_t name_len = detail::read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw IoError("checkpoint: truncated array name in " + path);
    if (name != r.name)
      throw IoError("checkpoint: array '" + name + "' where '" + r.name +
                    "' expected in " + path);
    int dims[4];
    for (auto& d : dims) d = static_cast<int>(detail::read_u32(is, path));
    auto& t = *r.tensor;
    if (dims[0] != t.n || dims[1] != t.c || dims[2] != t.h || dims[3] != t.w)
      throw IoError("checkpoint: shape mismatch for '" + name + "' in " + path);
    detail::read_f32_array(is, t.data, path);
  }
  return ck;
}

}  // namespace apnet
