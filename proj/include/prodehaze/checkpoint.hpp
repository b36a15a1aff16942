#pragma once

#include <filesystem>

#include <json.hpp>

#include "prodehaze/nn/params.hpp"

namespace prodehaze {

// Layout: 8-byte magic "PDHZCKPT", u64 little-endian header length, UTF-8 JSON
// header, then every tensor's f64 values back to back in name order. The
// header carries caller metadata plus "tensors": [{name, shape, offset}],
// where offset counts doubles from the start of the payload.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  nn::ParamSet params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws kMissingCheckpoint (naming the path) when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prodehaze
