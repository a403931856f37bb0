#include "mugnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mugnet/errors.hpp"

namespace mugnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'U', 'G', 'N', 'E', 'T', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ValidationError(std::string("checkpoint truncated while reading ") + what);
  }
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ull << 32)) throw ValidationError(std::string("checkpoint ") + what + " length is implausible");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ValidationError(std::string("checkpoint truncated while reading ") + what);
  }
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MuGNet& model, const KvConfig& extra) {
  KvConfig echo = model.config().to_config();
  for (const auto& e : extra.entries()) echo.add(e.key, e.value);
  const std::string text = echo.to_string();

  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  const auto& entries = model.params().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(out, e.trainable ? 1 : 0);
    const auto& shape = e.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(out, d);
    const auto data = e.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const MuGNet& model, const std::filesystem::path& path, const KvConfig& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, model, extra);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a mugnet checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text = get_bytes(in, get<std::uint64_t>(in, "config length"), "config");
  KvConfig echo = KvConfig::parse_string(text);
  MuGNet model(ModelConfig::from_config(echo), 0);

  auto& entries = model.params().entries();
  const auto count = get<std::uint64_t>(in, "entry count");
  if (count != entries.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(entries.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = get_bytes(in, get<std::uint32_t>(in, "name length"), "name");
    const bool trainable = get<std::uint8_t>(in, "trainable flag") != 0;
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 8) throw ValidationError("tensor " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, "dims");
    const auto& e = entries[i];
    if (e.name != name || e.trainable != trainable || e.tensor.shape() != shape) {
      throw ValidationError("checkpoint tensor " + name + " " + shape_str(shape) + " does not match expected " +
                            e.name + " " + shape_str(e.tensor.shape()));
    }
    Tensor target = e.tensor;
    auto dst = target.mutable_data();
    if (!in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
      throw ValidationError("checkpoint truncated in tensor " + name);
    }
  }
  KvConfig extra;
  const auto& model_keys = ModelConfig::config_keys();
  for (const auto& e : echo.entries()) {
    if (std::find(model_keys.begin(), model_keys.end(), e.key) == model_keys.end()) extra.add(e.key, e.value);
  }
  return {std::move(model), std::move(echo), std::move(extra)};
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace mugnet
