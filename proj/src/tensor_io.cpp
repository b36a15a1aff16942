#include "prodehaze/tensor_io.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "prodehaze/error.hpp"

namespace prodehaze {

namespace fs = std::filesystem;

namespace {
fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return fs::path(stem.string() + suffix);
}
}  // namespace

void write_json_file(const nlohmann::json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) fail(ErrorCode::kUnwritablePath, "write failed: " + path.string());
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptHeader, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_tensor_sidecar(const ImageTensor& t, const fs::path& stem, const nlohmann::json& extra) {
  nlohmann::json header = extra;
  header["h"] = t.height();
  header["w"] = t.width();
  header["c"] = t.channels();
  header["dtype"] = "f64";
  write_json_file(header, with_suffix(stem, ".json"));

  const fs::path bin = with_suffix(stem, ".bin");
  std::ofstream out(bin, std::ios::binary);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + bin.string());
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) fail(ErrorCode::kUnwritablePath, "write failed: " + bin.string());
}

ImageTensor read_tensor_sidecar(const fs::path& stem) {
  const nlohmann::json header = read_json_file(with_suffix(stem, ".json"));
  if (!header.contains("h") || !header.contains("w") || !header.contains("c") ||
      header.value("dtype", "") != "f64") {
    fail(ErrorCode::kCorruptHeader, "sidecar header missing h/w/c/dtype: " + stem.string());
  }
  const auto h = header["h"].get<std::size_t>();
  const auto w = header["w"].get<std::size_t>();
  const auto c = header["c"].get<std::size_t>();
  const fs::path bin = with_suffix(stem, ".bin");
  std::ifstream in(bin, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open " + bin.string());
  std::vector<double> data(h * w * c);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double))) {
    fail(ErrorCode::kCorruptPayload, "truncated sidecar payload: " + bin.string());
  }
  return ImageTensor(h, w, c, std::move(data));
}

}  // namespace prodehaze
