#include "prodehaze/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "prodehaze/error.hpp"

namespace prodehaze {

namespace {
constexpr char kMagic[8] = {'P', 'D', 'H', 'Z', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header = ckpt.meta;
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.params) {
    tensors.push_back({{"name", name}, {"shape", {t.height(), t.width(), t.channels()}}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.params) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) fail(ErrorCode::kUnwritablePath, "checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    fail(ErrorCode::kMissingCheckpoint, "checkpoint not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  std::uint64_t len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0 ||
      !in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1ULL << 30)) {
    fail(ErrorCode::kCorruptHeader, "not a checkpoint file: " + path.string());
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    fail(ErrorCode::kCorruptHeader, "truncated checkpoint header: " + path.string());
  }
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(text);
    const nlohmann::json tensors = ckpt.meta.at("tensors");
    ckpt.meta.erase("tensors");
    for (const auto& entry : tensors) {
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3) fail(ErrorCode::kCorruptHeader, "bad tensor shape in " + path.string());
      std::vector<double> data(shape[0] * shape[1] * shape[2]);
      if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
        fail(ErrorCode::kCorruptPayload, "truncated checkpoint payload: " + path.string());
      }
      ckpt.params.add(entry.at("name").get<std::string>(), ImageTensor(shape[0], shape[1], shape[2], std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptHeader, "malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace prodehaze
