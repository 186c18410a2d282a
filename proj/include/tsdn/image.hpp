#pragma once

#include <string>
#include <vector>

#include "tsdn/errors.hpp"

namespace tsdn {

// Planar (C,H,W) image, intensities scaled to [0,1]. Noisy images produced by
// the pipeline may exceed that range; values are only clamped when written to
// an 8-bit file.
struct Image {
    int channels = 0;  // 1 or 3
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // size channels*height*width
    std::string source_path;

    Image() = default;
    Image(int c, int h, int w)
        : channels(c), height(h), width(w),
          pixels(static_cast<std::size_t>(c) * h * w, 0.0f) {}

    std::size_t offset(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * height + h) * width + w;
    }
    float& at(int c, int h, int w) { return pixels[offset(c, h, w)]; }
    float at(int c, int h, int w) const { return pixels[offset(c, h, w)]; }
};

// Reads an 8-bit PNG, PGM, or PPM file (sniffed by content, not extension).
// Throws IoError for a missing/unreadable file, FormatError otherwise.
Image load_image(const std::string& path);

// Writes 8-bit output; format chosen by extension (.png, .pgm, .ppm).
// Values are clamped to [0,1] and quantized.
void save_image(const Image& img, const std::string& path);

// BT.601 luma conversion; throws if the image is already single-channel.
Image to_grayscale(const Image& img);

// Replicates a single channel to three; throws if already three-channel.
Image to_color(const Image& img);

}  // namespace tsdn
