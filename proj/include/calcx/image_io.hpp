#pragma once

#include <filesystem>

#include "calcx/image.hpp"

namespace calcx {

// Grayscale PNG. Pixels map linearly to [0,1] on load; on save they are
// rounded half-up at the requested bit depth (8 or 16).
Image load_png(const std::filesystem::path& file);
void save_png(const Image& img, const std::filesystem::path& file, int bit_depth = 16);

// Binary PGM (P5), maxval up to 65535. Accepted on load for test fixtures.
Image load_pgm(const std::filesystem::path& file);

// Dispatch on magic bytes (PNG signature or "P5").
Image load_image(const std::filesystem::path& file);

// Mask helpers: masks are stored as 8-bit PNGs with 0/255 pixels.
Mask mask_from_image(const Image& img, float threshold = 0.5f);
Image mask_to_image(const Mask& mask);

}  // namespace calcx
