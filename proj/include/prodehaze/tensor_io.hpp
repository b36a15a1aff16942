#pragma once

#include <filesystem>

#include <json.hpp>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

// Raw tensor sidecar: `<stem>.bin` holds little-endian f64 values in row-major
// interleaved order, `<stem>.json` holds {"h":..,"w":..,"c":..,"dtype":"f64"}
// plus any caller-supplied extra keys. Non-finite values (the -inf entries of
// sparse masks) are stored as IEEE bit patterns.
void write_tensor_sidecar(const ImageTensor& t, const std::filesystem::path& stem,
                          const nlohmann::json& extra = nlohmann::json::object());

ImageTensor read_tensor_sidecar(const std::filesystem::path& stem);

// Writes a JSON document with a trailing newline and stable key order.
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace prodehaze
