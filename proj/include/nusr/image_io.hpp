#pragma once

#include <filesystem>

#include "nusr/tensor.hpp"

namespace nusr {

// Raw float grid: magic "FGRD", u32 width, u32 height, then width*height
// little-endian 32-bit floats in row-major order. The lossless interchange
// format of the pipeline; use it whenever values live outside [0, 1].
Tensor read_fgrd(const std::filesystem::path& path);               // -> [1,1,H,W]
void write_fgrd(const Tensor& image, const std::filesystem::path& path);

// 8- or 16-bit single-channel grayscale PNG. Samples map to [0,1] as v/255 or
// v/65535 on read; writes clamp to [0,1] and quantize to the requested depth.
Tensor read_png(const std::filesystem::path& path);                // -> [1,1,H,W]
void write_png(const Tensor& image, const std::filesystem::path& path, int bit_depth = 16);

// Dispatch on extension: ".fgrd" or ".png" (case-insensitive).
Tensor read_image(const std::filesystem::path& path);
void write_image(const Tensor& image, const std::filesystem::path& path);

}  // namespace nusr
