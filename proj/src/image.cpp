#include "synthpipe/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

#include "synthpipe/error.hpp"

namespace synthpipe::img {

namespace {

struct ReadState {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void read_callback(png_structp png, png_bytep out, png_size_t count) {
    auto* state = static_cast<ReadState*>(png_get_io_ptr(png));
    if (state->pos + count > state->size) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, state->data + state->pos, count);
    state->pos += count;
}

void write_callback(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void flush_callback(png_structp) {}

// Default libpng handlers chatter on stderr; errors already surface through
// the setjmp path.
void error_callback(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void warning_callback(png_structp, png_const_charp) {}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw ValidationError("not a PNG stream");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    if (!png) throw IoError("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: out of memory");
    }

    Image image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("malformed PNG stream");
    }

    ReadState state{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &state, read_callback);
    png_read_info(png, info);

    // Normalize every input layout to 8-bit RGB.
    png_byte color_type = png_get_color_type(png, info);
    png_byte bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
        png_set_interlace_handling(png);
    }
    png_read_update_info(png, info);

    image.width = static_cast<int>(png_get_image_width(png, info));
    image.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(image.width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("PNG did not normalize to RGB8");
    }

    image.rgb.resize(static_cast<std::size_t>(image.width) * image.height * 3);
    rows.resize(image.height);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = image.rgb.data() + image.offset(0, y);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.width <= 0 || image.height <= 0 ||
        image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw ValidationError("image buffer does not match its dimensions");
    }

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    if (!png) throw IoError("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng: out of memory");
    }

    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }

    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.rgb.data() + image.offset(0, y)));
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::array<Image, 4> split_quad(const Image& composite) {
    if (composite.width <= 0 || composite.height <= 0) {
        throw ValidationError("empty image");
    }
    if (composite.width % 2 != 0 || composite.height % 2 != 0) {
        throw ValidationError("composite dimensions must be even, got " +
                              std::to_string(composite.width) + "x" +
                              std::to_string(composite.height));
    }

    const int w = composite.width / 2;
    const int h = composite.height / 2;
    std::array<Image, 4> quads;
    for (int q = 0; q < 4; ++q) {
        const int x0 = (q % 2) * w;
        const int y0 = (q / 2) * h;
        Image& quad = quads[q];
        quad.width = w;
        quad.height = h;
        quad.rgb.resize(static_cast<std::size_t>(w) * h * 3);
        for (int y = 0; y < h; ++y) {
            std::memcpy(quad.rgb.data() + quad.offset(0, y),
                        composite.rgb.data() + composite.offset(x0, y0 + y),
                        static_cast<std::size_t>(w) * 3);
        }
    }
    return quads;
}

}  // namespace synthpipe::img
