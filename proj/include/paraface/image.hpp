/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/image.hpp
 *
 * Copyright 2026 The paraface authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "paraface/common.hpp"

namespace paraface {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Grayscale raster, row-major, intensities in [0, 1].
struct ImageF {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    ImageF() = default;
    ImageF(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(std::size_t(h) * w, fill) {}

    float& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
    float at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

/// 8-bit quantization used for PNG output and all digest-bearing artifacts.
inline std::vector<std::uint8_t> quantize8(const ImageF& img) {
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
        out[i] = std::uint8_t(std::lround(v * 255.0f));
    }
    return out;
}

inline ImageF from_bytes(const std::vector<std::uint8_t>& bytes, int h, int w) {
    ImageF img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = float(bytes[i]) / 255.0f;
    return img;
}

// --------------------------------------------------------------------------
// PNG I/O (8-bit grayscale)
// --------------------------------------------------------------------------

inline void write_png(const std::string& path, const ImageF& img) {
    const std::vector<std::uint8_t> bytes = quantize8(img);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(bytes.data() + std::size_t(y) * img.width);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline ImageF read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    // Normalize any input to 8-bit grayscale.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int h = int(png_get_image_height(png, info));
    const int w = int(png_get_image_width(png, info));
    std::vector<std::uint8_t> bytes(std::size_t(h) * w);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + std::size_t(y) * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return from_bytes(bytes, h, w);
}

// --------------------------------------------------------------------------
// Sampling and similarity transforms
// --------------------------------------------------------------------------

/// Bilinear sample at (x, y) in pixel-center coordinates; `fill` outside.
inline float sample_bilinear(const ImageF& img, double x, double y, float fill) {
    const int x0 = int(std::floor(x));
    const int y0 = int(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
        if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return fill;
        return img.at(yy, xx);
    };
    const double top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx;
    const double bot = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx;
    return float(top * (1.0 - fy) + bot * fy);
}

/**
 * 2D similarity transform p' = R_s * p + t, stored as the complex
 * multiplication (a + ib); scale = hypot(a, b), rotation = atan2(b, a).
 */
struct Similarity {
    double a = 1.0, b = 0.0;   // complex scale-rotation
    double tx = 0.0, ty = 0.0;

    Point apply(Point p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }

    double scale() const { return std::hypot(a, b); }

    Similarity inverse() const {
        const double d = a * a + b * b;
        Similarity inv;
        inv.a = a / d;
        inv.b = -b / d;
        inv.tx = -(inv.a * tx - inv.b * ty);
        inv.ty = -(inv.b * tx + inv.a * ty);
        return inv;
    }

    static Similarity identity() { return {}; }

    /// Rotation by `radians` about `center`, then translation by `shift`.
    static Similarity rotate_about(Point center, double radians, Point shift) {
        Similarity s;
        s.a = std::cos(radians);
        s.b = std::sin(radians);
        s.tx = center.x - (s.a * center.x - s.b * center.y) + shift.x;
        s.ty = center.y - (s.b * center.x + s.a * center.y) + shift.y;
        return s;
    }

    /// The unique similarity mapping (p1, p2) onto (q1, q2). Throws
    /// GeometryError if p1 == p2.
    static Similarity from_two_points(Point p1, Point p2, Point q1, Point q2) {
        const double dx = p2.x - p1.x;
        const double dy = p2.y - p1.y;
        const double d = dx * dx + dy * dy;
        if (d == 0.0) throw GeometryError("coincident points define no similarity");
        const double ex = q2.x - q1.x;
        const double ey = q2.y - q1.y;
        Similarity s;
        s.a = (ex * dx + ey * dy) / d;
        s.b = (ey * dx - ex * dy) / d;
        s.tx = q1.x - (s.a * p1.x - s.b * p1.y);
        s.ty = q1.y - (s.b * p1.x + s.a * p1.y);
        return s;
    }
};

/// Resamples `src` through the inverse of `transform` into an h x w canvas.
inline ImageF warp_similarity(const ImageF& src, const Similarity& transform, int h, int w,
                              float fill) {
    const Similarity inv = transform.inverse();
    ImageF out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Point q = inv.apply({double(x), double(y)});
            out.at(y, x) = sample_bilinear(src, q.x, q.y, fill);
        }
    }
    return out;
}

/// Bilinear resize to h x w (edge-clamped).
inline ImageF resize_bilinear(const ImageF& src, int h, int w) {
    ImageF out(h, w);
    const double sy = double(src.height) / h;
    const double sx = double(src.width) / w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = (y + 0.5) * sy - 0.5;
            const double u = (x + 0.5) * sx - 0.5;
            const double cv = std::clamp(v, 0.0, double(src.height - 1));
            const double cu = std::clamp(u, 0.0, double(src.width - 1));
            out.at(y, x) = sample_bilinear(src, cu, cv, 0.0f);
        }
    }
    return out;
}

/// Crop [y0, y1) x [x0, x1); bounds must lie inside the image.
inline ImageF crop(const ImageF& src, int y0, int x0, int y1, int x1) {
    if (y0 < 0 || x0 < 0 || y1 > src.height || x1 > src.width || y0 >= y1 || x0 >= x1)
        throw GeometryError("crop rectangle outside image");
    ImageF out(y1 - y0, x1 - x0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.at(y - y0, x - x0) = src.at(y, x);
    return out;
}

inline double mean_abs_diff(const ImageF& a, const ImageF& b) {
    if (a.height != b.height || a.width != b.width)
        throw GeometryError("image size mismatch in diff");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(double(a.pixels[i]) - b.pixels[i]);
    return sum / double(a.size());
}

} // namespace paraface
