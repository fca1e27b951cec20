#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace edgeinfer {

/// 8-bit interleaved RGB image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

enum class ImageFormat { kPng, kJpeg, kUnsupported, kUnknown };

/// Sniffs the container format from magic bytes.
ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

/// Decodes PNG or JPEG into RGB8. Throws undecodable-image for garbage or
/// corrupt data and unsupported-format for recognized-but-unsupported
/// containers (GIF, BMP, TIFF, WebP).
Image decode_image(std::span<const std::uint8_t> bytes);

Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 90);
void write_png(const Image& img, const std::filesystem::path& path);

/// True when the extension is one the loaders accept (.png, .jpg, .jpeg).
bool has_image_extension(const std::filesystem::path& path);

}  // namespace edgeinfer
