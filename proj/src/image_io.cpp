#include "tadoc/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tadoc/errors.hpp"

namespace tadoc {

namespace {

std::uint8_t quantize8(float v) {
    float q = std::floor(v * 255.0f + 0.5f);  // round half up
    return static_cast<std::uint8_t>(std::clamp(q, 0.0f, 255.0f));
}

std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return {};
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RasterImage load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw ParseError("PNG: bad signature in " + path, 0);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("PNG: decode error in " + path, 0);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedFormat("PNG: 16-bit depth not supported: " + path);
    }
    if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedFormat("PNG: unsupported channel count in " + path);
    }

    std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
    RasterImage img(static_cast<int>(h), static_cast<int>(w), channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w * static_cast<png_uint_32>(channels); ++x)
            img.data()[static_cast<std::size_t>(y) * w * channels + x] = row[x] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const RasterImage& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for write: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG: encode error for " + path);
    }
    png_init_io(png, fp.get());
    int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < row.size(); ++x)
            row[x] = quantize8(
                img.data()[static_cast<std::size_t>(y) * img.width() * img.channels() + x]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

// NetPBM token scanner that tracks byte offsets for error reporting.
struct PnmScanner {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            std::uint8_t c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int next_int() {
        skip_space_and_comments();
        if (pos >= bytes.size()) throw ParseError("PNM: unexpected end of header", pos);
        if (!std::isdigit(bytes[pos]))
            throw ParseError("PNM: expected digit", pos);
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 30) throw ParseError("PNM: value out of range", pos);
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

RasterImage load_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError("PNM: expected P5 or P6 magic", 0);
    int channels = bytes[1] == '5' ? 1 : 3;
    PnmScanner sc{bytes, 2};
    int w = sc.next_int();
    int h = sc.next_int();
    int maxval = sc.next_int();
    if (w < 1 || h < 1) throw ParseError("PNM: zero dimension", sc.pos);
    if (maxval != 255)
        throw UnsupportedFormat("PNM: only maxval 255 supported, got " + std::to_string(maxval));
    if (sc.pos >= bytes.size()) throw ParseError("PNM: missing payload", sc.pos);
    ++sc.pos;  // single whitespace after maxval
    std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - sc.pos < need)
        throw ParseError("PNM: truncated payload", bytes.size());
    RasterImage img(h, w, channels);
    for (std::size_t i = 0; i < need; ++i) img.data()[i] = bytes[sc.pos + i] / 255.0f;
    return img;
}

void save_pnm(const RasterImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << (img.channels() == 1 ? "P5" : "P6") << "\n"
      << img.width() << " " << img.height() << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < row.size(); ++x)
            row[x] = static_cast<char>(quantize8(
                img.data()[static_cast<std::size_t>(y) * img.width() * img.channels() + x]));
        f.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

RasterImage load_image(const std::string& path) {
    std::string ext = lower_ext(path);
    RasterImage img;
    if (ext == "png")
        img = load_png(path);
    else if (ext == "pgm" || ext == "ppm" || ext == "pnm")
        img = load_pnm(path);
    else
        throw UnsupportedFormat("unsupported image extension: " + path);
    img.clamp01();
    return img;
}

void save_image(const RasterImage& img, const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "png")
        save_png(img, path);
    else if (ext == "pgm" || ext == "ppm" || ext == "pnm")
        save_pnm(img, path);
    else
        throw UnsupportedFormat("unsupported image extension: " + path);
}

}  // namespace tadoc
