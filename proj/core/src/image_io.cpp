#include "histreg/image_io.hpp"

#include "histreg/error.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace histreg {

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& is) {
    std::string tok;
    int c = is.get();
    for (;;) {
        while (c != EOF && std::isspace(c)) c = is.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
            continue;
        }
        break;
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = is.get();
    }
    // The single whitespace byte after maxval has been consumed here.
    return tok;
}

int parse_positive(const std::string& tok, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size() || v <= 0 || v > 1'000'000) throw Error("");
        return static_cast<int>(v);
    } catch (...) {
        throw Error("malformed PGM header in " + path.string());
    }
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_pgm(const std::filesystem::path& path, const Image& img) {
    if (img.empty()) throw Error("empty image");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    const Intensity maxval = std::clamp<Intensity>(img.max_gray(), 1, 65535);
    os << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
    if (maxval <= 255) {
        std::string buf(img.size(), '\0');
        for (std::size_t i = 0; i < img.size(); ++i) buf[i] = static_cast<char>(img.pixels()[i]);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    } else {
        std::string buf(img.size() * 2, '\0');
        for (std::size_t i = 0; i < img.size(); ++i) {
            const auto v = static_cast<std::uint16_t>(std::min<Intensity>(img.pixels()[i], maxval));
            buf[2 * i] = static_cast<char>(v >> 8);
            buf[2 * i + 1] = static_cast<char>(v & 0xff);
        }
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw Error("write failed for " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("missing file " + path.string());
    if (pnm_token(is) != "P5") throw Error("not a binary PGM: " + path.string());
    const int w = parse_positive(pnm_token(is), path);
    const int h = parse_positive(pnm_token(is), path);
    const int maxval = parse_positive(pnm_token(is), path);
    if (maxval > 65535) throw Error("PGM maxval out of range in " + path.string());
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t bytes = maxval <= 255 ? 1 : 2;
    std::string buf(n * bytes, '\0');
    if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size()))) throw Error("truncated PGM " + path.string());
    std::vector<Intensity> px(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Intensity v = bytes == 1 ? static_cast<unsigned char>(buf[i])
                                       : (static_cast<unsigned char>(buf[2 * i]) << 8) |
                                             static_cast<unsigned char>(buf[2 * i + 1]);
        if (v > maxval) throw Error("PGM sample exceeds maxval in " + path.string());
        px[i] = v;
    }
    return Image(w, h, maxval, std::move(px));
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.empty()) throw Error("empty image");
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw Error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    const bool wide = img.max_gray() > 255;
    const std::size_t stride = static_cast<std::size_t>(img.width()) * (wide ? 2 : 1);
    std::vector<png_byte> row(stride);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
                 wide ? 16 : 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Intensity v = std::min<Intensity>(img.at(x, y), wide ? 65535 : 255);
            if (wide) {
                row[2 * x] = static_cast<png_byte>(v >> 8);
                row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
            } else {
                row[x] = static_cast<png_byte>(v);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 (gray) or 3 (rgb) after transforms
    int depth = 8;
    std::vector<png_byte> data;
};

DecodedPng decode_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw Error("missing file " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    DecodedPng out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("PNG decoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.data.resize(stride * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    if (out.channels != 1 && out.channels != 3) throw Error("unsupported PNG channel layout in " + path.string());
    return out;
}

int sample(const DecodedPng& d, std::size_t i) {
    if (d.depth == 16) return (d.data[2 * i] << 8) | d.data[2 * i + 1];
    return d.data[i];
}

} // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
    const DecodedPng d = decode_png(path);
    if (d.channels != 3 || d.depth != 8) throw Error("expected a 24-bit color PNG: " + path.string());
    RgbImage out{d.width, d.height, std::vector<Rgb>(static_cast<std::size_t>(d.width) * d.height)};
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = {d.data[3 * i], d.data[3 * i + 1], d.data[3 * i + 2]};
    return out;
}

Image read_png(const std::filesystem::path& path) {
    const DecodedPng d = decode_png(path);
    const std::size_t n = static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height);
    if (d.channels == 3) {
        if (d.depth != 8) throw Error("only 24-bit color PNGs are supported: " + path.string());
        RgbImage rgb{d.width, d.height, std::vector<Rgb>(n)};
        for (std::size_t i = 0; i < n; ++i) rgb.pixels[i] = {d.data[3 * i], d.data[3 * i + 1], d.data[3 * i + 2]};
        return to_grayscale(rgb);
    }
    std::vector<Intensity> px(n);
    for (std::size_t i = 0; i < n; ++i) px[i] = sample(d, i);
    return Image(d.width, d.height, d.depth == 16 ? 65535 : 255, std::move(px));
}

namespace {
std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}
} // namespace

Image read_image(const std::filesystem::path& path) {
    const std::string e = lower_ext(path);
    if (e == ".pgm") return read_pgm(path);
    if (e == ".png") return read_png(path);
    throw Error("unsupported image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& img) {
    const std::string e = lower_ext(path);
    if (e == ".pgm") return write_pgm(path, img);
    if (e == ".png") return write_png(path, img);
    throw Error("unsupported image format: " + path.string());
}

} // namespace histreg
