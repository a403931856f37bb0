#pragma once

#include <filesystem>
#include <iosfwd>

#include "mugnet/kv_config.hpp"
#include "mugnet/model.hpp"

namespace mugnet {

// Binary layout, little-endian:
//   "MUGNETCK" u32 version
//   u64 config length, config text (KvConfig form)
//   u64 entry count, then per entry:
//     u32 name length, name, u8 trainable, u32 rank, u64 dims[rank], f64 data[numel]
constexpr std::uint32_t kCheckpointVersion = 1;

// `extra` is appended to the config echo (training keys, for instance).
void write_checkpoint(std::ostream& out, const MuGNet& model, const KvConfig& extra = {});
void save_checkpoint(const MuGNet& model, const std::filesystem::path& path, const KvConfig& extra = {});

struct LoadedCheckpoint {
  MuGNet model;
  KvConfig config;  // full echo
  KvConfig extra;   // echo keys that are not model keys
};

LoadedCheckpoint read_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mugnet
