#pragma once
// 8-bit raster type and the pixel-exact operations the pipeline depends on.
// These are implemented here (not delegated to an image library) because
// their outputs are part of the deterministic contract: identical inputs
// must produce bit-identical rasters on every run.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "emofuse/domain.hpp"

namespace emofuse {

// Interleaved row-major raster, 1 (gray) or 3 (RGB) channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;

    static Image solid(int w, int h, std::array<uint8_t, 3> rgb);
    static Image solid_gray(int w, int h, uint8_t v);

    bool empty() const { return width == 0 || height == 0; }
    size_t size() const { return pixels.size(); }

    uint8_t at(int x, int y, int c = 0) const {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t& at(int x, int y, int c = 0) {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

// Pixel copy of `box` (must be valid and inside the image). No resampling.
Image crop(const Image& img, const BoundingBox& box);

// Rec.601 luminance, rounded to nearest integer: 0.299R + 0.587G + 0.114B.
// Gray input passes through unchanged.
Image to_luminance(const Image& img);

// Bilinear resampling with half-pixel-center convention. Exact identity
// when output size equals input size; constant images stay constant.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// File codec (OpenCV imgcodecs behind the scenes). Decoded images are RGB.
Image load_image(const std::filesystem::path& path);        // 3-channel RGB
Image load_image_gray(const std::filesystem::path& path);   // 1-channel
void save_png(const Image& img, const std::filesystem::path& path);

}  // namespace emofuse
