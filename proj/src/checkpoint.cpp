#include "pinet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace pinet {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'N', 'E', 'T', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(path.string() + ": truncated checkpoint");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const NetworkParams<float>& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  const NetworkConfig& c = params.config;
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.channels.size()));
  for (int ch : c.channels) put<std::uint32_t>(out, static_cast<std::uint32_t>(ch));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_classes));
  put<std::uint64_t>(out, c.seed);
  put<std::uint64_t>(out, params.parameter_count());
  for (auto view : params.views()) {
    for (float x : view) put<float>(out, x);
  }
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

NetworkParams<float> load_checkpoint(const std::filesystem::path& path,
                                     const std::optional<NetworkConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  NetworkConfig cfg;
  cfg.input_width = static_cast<int>(get<std::uint32_t>(in, path));
  cfg.input_height = static_cast<int>(get<std::uint32_t>(in, path));
  const auto layers = get<std::uint32_t>(in, path);
  if (layers == 0 || layers > 64) throw FormatError(path.string() + ": implausible layer count");
  cfg.channels.clear();
  for (std::uint32_t l = 0; l < layers; ++l) cfg.channels.push_back(static_cast<int>(get<std::uint32_t>(in, path)));
  cfg.hidden = static_cast<int>(get<std::uint32_t>(in, path));
  cfg.num_classes = static_cast<int>(get<std::uint32_t>(in, path));
  cfg.seed = get<std::uint64_t>(in, path);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": stored config invalid: " + e.what());
  }
  if (expected) {
    NetworkConfig a = cfg, b = *expected;
    a.seed = b.seed = 0;  // the init seed does not change the layout
    if (!(a == b)) throw ConfigError(path.string() + ": checkpoint config does not match the requested network");
  }
  NetworkParams<float> params = NetworkParams<float>::zeros(cfg);
  const auto count = get<std::uint64_t>(in, path);
  if (count != params.parameter_count()) throw FormatError(path.string() + ": parameter count mismatch");
  for (auto view : params.views()) {
    for (float& x : view) x = get<float>(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return params;
}

}  // namespace pinet
