// Image representation and PNG I/O.
//
// In memory an image is a [H,W,3] float tensor holding values in [-1,1];
// on disk it is 8-bit RGB PNG. The mapping is u8 -> (v/127.5)-1 and
// float -> round((v+1)*127.5) clamped to [0,255].
#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "aptx/tensor.hpp"

namespace aptx {

using Image = Tensor<float>;

inline std::uint8_t float_to_u8(float v) {
    const float scaled = (v + 1.0f) * 127.5f;
    const long r = std::lround(scaled);
    return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

inline float u8_to_float(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline void encode_png(const std::filesystem::path& path, const Image& img) {
    if (img.ndim() != 3 || img.dim(2) != 3)
        throw ShapeError(cat("encode_png: expects [H,W,3], got ", shape_str(img.shape())));
    const std::int64_t h = img.dim(0), w = img.dim(1);
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError(cat("cannot open for writing: ", path.string()));
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(cat("libpng init failed for ", path.string()));
    }
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t i = 0; i < h * w * 3; ++i)
        bytes[static_cast<std::size_t>(i)] = float_to_u8(img[i]);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (std::int64_t y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = bytes.data() + y * w * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(cat("png write failed: ", path.string()));
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image decode_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError(cat("cannot open image: ", path.string()));
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(cat("libpng init failed for ", path.string()));
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(cat("png decode failed: ", path.string()));
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    // Normalize any input to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const std::int64_t h = png_get_image_height(png, info);
    const std::int64_t w = png_get_image_width(png, info);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w * 3));
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (std::int64_t y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = bytes.data() + y * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    Image img(Shape{h, w, 3});
    for (std::int64_t i = 0; i < h * w * 3; ++i)
        img[i] = u8_to_float(bytes[static_cast<std::size_t>(i)]);
    return img;
}

// [H,W,3] sub-crop at (top, left).
inline Image crop(const Image& img, std::int64_t top, std::int64_t left, std::int64_t size) {
    if (top < 0 || left < 0 || top + size > img.dim(0) || left + size > img.dim(1))
        throw ShapeError(cat("crop: window ", size, "x", size, "@(", top, ",", left,
                             ") exceeds image ", img.dim(0), "x", img.dim(1)));
    Image out(Shape{size, size, 3});
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

// [N,H,W,3] -> [N,3,H,W]
template <class T>
Tensor<T> nhwc_to_nchw(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(3) != 3)
        throw ShapeError(cat("nhwc_to_nchw: expects [N,H,W,3], got ", shape_str(x.shape())));
    const std::int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out(Shape{n, 3, h, w});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx)
                for (std::int64_t c = 0; c < 3; ++c)
                    out.at(i, c, y, xx) = x.at(i, y, xx, c);
    return out;
}

// [N,3,H,W] -> [N,H,W,3]
template <class T>
Tensor<T> nchw_to_nhwc(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 3)
        throw ShapeError(cat("nchw_to_nhwc: expects [N,3,H,W], got ", shape_str(x.shape())));
    const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<T> out(Shape{n, h, w, 3});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx)
                for (std::int64_t c = 0; c < 3; ++c)
                    out.at(i, y, xx, c) = x.at(i, c, y, xx);
    return out;
}

// Single image [H,W,3] -> [1,3,H,W]
template <class T>
Tensor<T> image_to_nchw(const Tensor<T>& img) {
    if (img.ndim() != 3 || img.dim(2) != 3)
        throw ShapeError(cat("image_to_nchw: expects [H,W,3], got ", shape_str(img.shape())));
    const std::int64_t h = img.dim(0), w = img.dim(1);
    Tensor<T> out(Shape{1, 3, h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) out.at(0, c, y, x) = img.at(y, x, c);
    return out;
}

template <class T>
Tensor<T> nchw_to_image(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(0) != 1 || x.dim(1) != 3)
        throw ShapeError(cat("nchw_to_image: expects [1,3,H,W], got ", shape_str(x.shape())));
    const std::int64_t h = x.dim(2), w = x.dim(3);
    Tensor<T> out(Shape{h, w, 3});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx)
            for (std::int64_t c = 0; c < 3; ++c) out.at(y, xx, c) = x.at(0, c, y, xx);
    return out;
}

}  // namespace aptx
