#pragma once

#include "histreg/image.hpp"

#include <filesystem>

namespace histreg {

/// Binary P5. maxval <= 255 is stored as 8 bits, otherwise 16-bit big endian.
/// Values above 65535 are clipped on write.
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// 8/16-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const Image& img);
/// Grayscale PNGs load directly; RGB/RGBA PNGs go through to_grayscale.
Image read_png(const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);

/// Dispatches on extension (.pgm, .png).
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

} // namespace histreg
