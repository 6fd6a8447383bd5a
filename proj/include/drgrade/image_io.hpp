#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "drgrade/preprocess.hpp"

namespace drgrade {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> to_interleaved_u8(const Image& img)
{
    check_image(img, "write image");
    const std::size_t h = image_height(img), w = image_width(img);
    std::vector<std::uint8_t> px(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                px[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::round(img.at(c, y, x)), 0.0, 255.0));
    return px;
}

inline Image from_interleaved_u8(const std::uint8_t* px, std::size_t h, std::size_t w)
{
    Image img({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = px[(y * w + x) * 3 + c];
    return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB)

inline Image read_png(const fs::path& path)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        fail(ErrorKind::io, "cannot read PNG '" + path.string() + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        fail(ErrorKind::io, "cannot decode PNG '" + path.string() + "': " + image.message);
    }
    return from_interleaved_u8(buffer.data(), image.height, image.width);
}

/// Values are rounded and clamped to [0, 255].
inline void write_png(const fs::path& path, const Image& img)
{
    const auto px = to_interleaved_u8(img);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(image_width(img));
    image.height = static_cast<png_uint_32>(image_height(img));
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
        fail(ErrorKind::io, "cannot write PNG '" + path.string() + "': " + image.message);
}

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255)

inline Image read_ppm(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    auto token = [&]() {
        std::string t;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(ch);
        }
        return t;
    };
    if (token() != "P6") fail(ErrorKind::io, "'" + path.string() + "' is not a binary PPM");
    const std::size_t w = std::stoul(token()), h = std::stoul(token());
    if (std::stoul(token()) != 255) fail(ErrorKind::io, "'" + path.string() + "': only maxval 255 is supported");
    std::vector<std::uint8_t> px(w * h * 3);
    if (!in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size())))
        fail(ErrorKind::io, "'" + path.string() + "': truncated pixel data");
    return from_interleaved_u8(px.data(), h, w);
}

inline void write_ppm(const fs::path& path, const Image& img)
{
    const auto px = to_interleaved_u8(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << "P6\n" << image_width(img) << ' ' << image_height(img) << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline Image read_image(const fs::path& path)
{
    const std::string ext = path.extension().string();
    if (ext == ".ppm" || ext == ".PPM") return read_ppm(path);
    return read_png(path);
}

inline void write_image(const fs::path& path, const Image& img)
{
    const std::string ext = path.extension().string();
    if (ext == ".ppm" || ext == ".PPM") return write_ppm(path, img);
    write_png(path, img);
}

} // namespace drgrade
