#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace synthpipe::img {

// 8-bit RGB raster, row-major, no padding.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 * width * height bytes

    std::size_t offset(int x, int y) const {
        return 3 * (static_cast<std::size_t>(y) * width + x);
    }
    bool operator==(const Image&) const = default;
};

// Decodes any valid PNG to RGB8 (palette/gray/alpha inputs are converted).
// Throws ValidationError on malformed data.
Image decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Image& image);

// Splits an even-dimensioned composite into its 2x2 grid, row-major:
// top-left, top-right, bottom-left, bottom-right. Each output is
// (width/2) x (height/2). Throws ValidationError on odd dimensions.
std::array<Image, 4> split_quad(const Image& composite);

}  // namespace synthpipe::img
