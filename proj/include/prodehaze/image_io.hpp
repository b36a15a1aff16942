#pragma once

#include <filesystem>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

// Reads an 8-bit PNG or a binary PPM (P6, maxval 255). Values are scaled by
// 1/255 and always returned with 3 channels (grey PNGs are expanded, alpha is
// dropped). Failure classes: kMissingFile, kUnsupportedFormat,
// kCorruptHeader, kCorruptPayload.
ImageTensor load_image(const std::filesystem::path& path);

// Writes PNG or PPM depending on the extension (".png" / ".ppm"). Values are
// clamped to [0,1] and rounded to 8 bits. Only 1- or 3-channel tensors are
// accepted; a 1-channel tensor written as PPM is replicated to grey RGB.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// Min-max stretch to [0,1] for display; constant input maps to 0.
ImageTensor normalize_for_display(const ImageTensor& img);

}  // namespace prodehaze
