#pragma once

#include <cstdint>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze::pipeline {

// Procedural clean scene: a value-graded background and a handful of
// rectangles and discs, some striped. Every colour is fully saturated (one
// channel is zero), so clean images have a dark channel of zero, as the
// prior assumes for haze-free outdoor scenes. Values are 8-bit quantised.
ImageTensor make_scene(std::uint64_t seed, std::size_t height, std::size_t width);

// round(v * 255) / 255 after clamping, matching what save_image stores.
ImageTensor quantize8(ImageTensor img);

}  // namespace prodehaze::pipeline
