#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "txsp/tensor.hpp"

namespace txsp {

/// Decodes PNG or JPEG (sniffed from the file signature) into [1,3,H,W] in
/// [0,1]. Alpha is dropped and grey is replicated to three channels.
Tensorf load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG from [1,3,H,W] (RGB) or [1,1,H,W] (grey). Values are
/// clamped to [0,1] and quantised round-half-up.
void save_png(const std::filesystem::path& path, const Tensorf& img);

/// floor(clamp(v, 0, 1) * 255 + 0.5)
std::uint8_t quantize(float v);

/// The tensor a PNG written by save_png decodes back to.
Tensorf quantized(const Tensorf& img);

}  // namespace txsp
