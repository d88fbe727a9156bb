/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/render.hpp
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
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "paraface/common.hpp"
#include "paraface/image.hpp"
#include "paraface/recipe.hpp"
#include "paraface/rng.hpp"
#include "paraface/schema.hpp"

namespace paraface {

// --------------------------------------------------------------------------
// Augmentation
// --------------------------------------------------------------------------

/// Fully determines one sample's augmentation; no hidden randomness.
struct AugmentationSpec {
    double background = 0.0;     // canvas fill level in [0, 1]
    double rotation_deg = 0.0;   // in-plane rotation about the canvas center
    double translate_x = 0.0;    // pixels
    double translate_y = 0.0;
    double brightness = 1.0;     // multiplier
    double noise_sigma = 0.0;    // additive Gaussian std in intensity units
    std::uint64_t rng_seed = 0;  // seeds the noise field

    static AugmentationSpec neutral() { return {}; }
};

struct AugmentationRanges {
    double background_min = 0.02, background_max = 0.25;
    double rotation_max_deg = 12.0;  // symmetric
    double translate_max = 3.0;      // symmetric, both axes
    double brightness_min = 0.85, brightness_max = 1.15;
    double noise_sigma_min = 0.0, noise_sigma_max = 0.02;

    AugmentationSpec sample(Rng& rng, std::uint64_t noise_seed) const {
        AugmentationSpec s;
        s.background = rng.uniform(background_min, background_max);
        s.rotation_deg = rng.uniform(-rotation_max_deg, rotation_max_deg);
        s.translate_x = rng.uniform(-translate_max, translate_max);
        s.translate_y = rng.uniform(-translate_max, translate_max);
        s.brightness = rng.uniform(brightness_min, brightness_max);
        s.noise_sigma = rng.uniform(noise_sigma_min, noise_sigma_max);
        s.rng_seed = noise_seed;
        return s;
    }
};

/// Synthetic art style applied between the canonical draw and augmentation.
/// posterize_levels == 0 disables styling (the "clean" domain).
struct StyleSpec {
    int posterize_levels = 0;
};

/// Uniform intensity posterization on the 8-bit band grid. Identity at 256
/// levels on 8-bit data; idempotent at any fixed level count.
inline double posterize_value(double v, int levels) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    int band = int(std::floor(clamped * levels));
    band = std::min(band, levels - 1);
    return double(band) / double(levels - 1);
}

// --------------------------------------------------------------------------
// Toy parametric face schema
// --------------------------------------------------------------------------

inline constexpr const char* kGuidPrefix = "f2c1a9d0-0000-4000-8000-";

/**
 * The reference parametric face: three feature regions (eyes, nose, mouth),
 * each with one discrete shape slot, plus a `head` region carrying the
 * global scale parameter and the overall head size it couples to.
 */
inline ParameterSchema toy_face_schema() {
    auto guid = [](int n) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%012d", n);
        return std::string(kGuidPrefix) + buf;
    };
    ParameterSchema s;
    s.scale_param_name = "head/scale";
    s.scale_gain = 0.2;

    SchemaRegion head;
    head.name = "head";
    head.params = {
        {"scale", -0.4, 0.4, ScaleCoupling::none},
        {"size", -1.5, 1.5, ScaleCoupling::exp_size},
        {"aspect", -1.0, 1.0, ScaleCoupling::none},
    };
    s.regions.push_back(head);

    SchemaRegion eyes;
    eyes.name = "eyes";
    eyes.params = {
        {"spread", -1.0, 1.0, ScaleCoupling::exp_size},
        {"height", -1.5, 1.5, ScaleCoupling::linear_offset},
        {"size", -1.5, 1.5, ScaleCoupling::exp_size},
        {"squint", -1.0, 1.0, ScaleCoupling::none},
        {"brow-tilt", -1.0, 1.0, ScaleCoupling::none},
        {"brow-raise", -1.5, 1.5, ScaleCoupling::linear_offset},
    };
    eyes.slots = {{"eyeshape",
                   {{"disc", guid(100)}, {"ring", guid(101)}, {"almond", guid(102)},
                    {"cross", guid(103)}}}};
    s.regions.push_back(eyes);

    SchemaRegion nose;
    nose.name = "nose";
    nose.params = {
        {"length", -1.5, 1.5, ScaleCoupling::exp_size},
        {"width", -1.5, 1.5, ScaleCoupling::exp_size},
        {"drop", -1.5, 1.5, ScaleCoupling::linear_offset},
        {"bridge", -1.0, 1.0, ScaleCoupling::none},
        {"tone", -1.0, 1.0, ScaleCoupling::none},
    };
    nose.slots = {{"noseshape", {{"wedge", guid(200)}, {"stem", guid(201)}, {"hook", guid(202)}}}};
    s.regions.push_back(nose);

    SchemaRegion mouth;
    mouth.name = "mouth";
    mouth.params = {
        {"width", -1.5, 1.5, ScaleCoupling::exp_size},
        {"fullness", -1.5, 1.5, ScaleCoupling::exp_size},
        {"height", -1.5, 1.5, ScaleCoupling::linear_offset},
        {"curve", -1.0, 1.0, ScaleCoupling::none},
        {"tone", -1.0, 1.0, ScaleCoupling::none},
    };
    mouth.slots = {{"mouthshape",
                    {{"smile", guid(300)}, {"lips", guid(301)}, {"open", guid(302)},
                     {"pout", guid(303)}}}};
    s.regions.push_back(mouth);

    s.validate();
    return s;
}

/// Names of the feature regions the decomposition operates on (the `head`
/// region has no local model; its coordinates belong to the aggregate).
inline std::vector<std::string> feature_regions() { return {"eyes", "nose", "mouth"}; }

struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

/**
 * Conservative canonical-frame pixel box per region: under any valid recipe,
 * the region's primitives stay inside its box. The renderer rasterizes each
 * region strictly inside its box, so region locality holds by construction.
 */
inline PixelBox region_box(const std::string& region, int canvas) {
    const double u = canvas / 64.0;
    auto box = [&](double x0, double y0, double x1, double y1) {
        return PixelBox{int(std::floor(x0 * u)), int(std::floor(y0 * u)),
                        int(std::ceil(x1 * u)), int(std::ceil(y1 * u))};
    };
    if (region == "head") return PixelBox{0, 0, canvas, canvas};
    if (region == "eyes") return box(14, 10, 50, 38);
    if (region == "nose") return box(24, 27, 40, 51);
    if (region == "mouth") return box(20, 34, 44, 59);
    throw LookupError("unknown region: " + region);
}

/**
 * Fixed local-model crop rectangle per feature region, in the *registered*
 * frame (eyes at the canonical positions). Part of the pipeline
 * configuration, identical at train and inference time; sized so the
 * region's primitives stay inside under every valid recipe and every
 * registration rescale the parameter ranges allow.
 */
inline PixelBox crop_rect(const std::string& region, int canvas) {
    const double u = canvas / 64.0;
    auto box = [&](double x0, double y0, double x1, double y1) {
        return PixelBox{int(std::floor(x0 * u)), int(std::floor(y0 * u)),
                        int(std::ceil(x1 * u)), int(std::ceil(y1 * u))};
    };
    if (region == "eyes") return box(12, 6, 52, 32);
    if (region == "nose") return box(19, 17, 45, 58);
    if (region == "mouth") return box(17, 24, 47, 63);
    throw LookupError("no crop rectangle for region: " + region);
}

struct RenderResult {
    ImageF image;
    Point left_eye;
    Point right_eye;
};

namespace detail {

struct Shape {
    double ink = 1.0;
    std::function<double(double, double)> sdf;  // signed distance, px
};

inline double sd_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double pax = px - ax, pay = py - ay;
    const double bax = bx - ax, bay = by - ay;
    const double h = std::clamp((pax * bax + pay * bay) / (bax * bax + bay * bay + 1e-12), 0.0, 1.0);
    return std::hypot(pax - bax * h, pay - bay * h);
}

inline double sd_ellipse(double px, double py, double cx, double cy, double rx, double ry) {
    // Scaled-space approximation; adequate for anti-aliasing purposes.
    const double qx = (px - cx) / rx;
    const double qy = (py - cy) / ry;
    return (std::hypot(qx, qy) - 1.0) * std::min(rx, ry);
}

inline Shape capsule(double ax, double ay, double bx, double by, double half_w, double ink) {
    return {ink, [=](double x, double y) { return sd_segment(x, y, ax, ay, bx, by) - half_w; }};
}

inline Shape disc(double cx, double cy, double rx, double ry, double ink) {
    return {ink, [=](double x, double y) { return sd_ellipse(x, y, cx, cy, rx, ry); }};
}

inline Shape ellipse_ring(double cx, double cy, double rx, double ry, double half_w, double ink) {
    return {ink,
            [=](double x, double y) { return std::abs(sd_ellipse(x, y, cx, cy, rx, ry)) - half_w; }};
}

inline Shape polyline(std::vector<Point> pts, double half_w, double ink) {
    return {ink, [pts = std::move(pts), half_w](double x, double y) {
                double best = 1e30;
                for (std::size_t i = 0; i + 1 < pts.size(); ++i)
                    best = std::min(best, sd_segment(x, y, pts[i].x, pts[i].y, pts[i + 1].x,
                                                     pts[i + 1].y));
                return best - half_w;
            }};
}

inline constexpr double kAaWidth = 1.5;  // edge transition width, px

/// Composites shapes into the canvas, clipped to `box`.
inline void composite(ImageF& canvas, const PixelBox& box, const std::vector<Shape>& shapes) {
    const int y0 = std::max(box.y0, 0), y1 = std::min(box.y1, canvas.height);
    const int x0 = std::max(box.x0, 0), x1 = std::min(box.x1, canvas.width);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            double v = canvas.at(y, x);
            for (const auto& s : shapes) {
                const double sd = s.sdf(double(x), double(y));
                const double alpha = std::clamp(0.5 - sd / kAaWidth, 0.0, 1.0);
                if (alpha > 0.0) v += (s.ink - v) * alpha;
            }
            canvas.at(y, x) = float(v);
        }
    }
}

/// Geometry shared by the renderer and the landmark computation.
struct FaceGeometry {
    double u = 1.0;                 // canvas / 64
    double gain = 0.2;              // schema scale_gain
    double cx = 32, cy = 32;        // face center
    double eye_y = 26, eye_hd = 8;  // eye line and half-distance
    std::map<std::string, double> eff;       // effective continuous values
    std::map<std::string, std::size_t> opt;  // selected option index per slot

    double factor(const std::string& name) const { return std::exp2(gain * eff.at(name)); }
};

inline FaceGeometry face_geometry(const ParameterSchema& schema, const Recipe& recipe,
                                  int canvas) {
    const Recipe r = validate_recipe(recipe, schema);
    FaceGeometry g;
    g.u = canvas / 64.0;
    g.gain = schema.scale_gain;
    const double scale_value = schema.scale_param_name.empty()
                                   ? 0.0
                                   : r.continuous.at(schema.scale_param_name);
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) {
            const std::string full = region.name + "/" + p.name;
            g.eff[full] = resolve_effective_value(r.continuous.at(full), p.coupling, scale_value,
                                                  schema.scale_gain);
        }
        for (const auto& s : region.slots)
            g.opt[s.name] = *schema.option_index(s, r.discrete.at(s.name));
    }
    g.cx = 32 * g.u;
    g.cy = 32 * g.u;
    g.eye_hd = 8 * g.u * g.factor("eyes/spread");
    g.eye_y = 26 * g.u + g.eff.at("eyes/height") * 2.5 * g.u;
    return g;
}

inline std::vector<Shape> region_shapes(const FaceGeometry& g, const std::string& region) {
    const double u = g.u;
    std::vector<Shape> shapes;
    if (region == "head") {
        const double f = g.factor("head/size");
        const double rx = 17 * u * f;
        const double ry = 21 * u * f * (1.0 + 0.08 * g.eff.at("head/aspect"));
        shapes.push_back(ellipse_ring(g.cx, g.cy, rx, ry, 0.8 * u, 0.85));
    } else if (region == "eyes") {
        const double rx = 3 * u * g.factor("eyes/size");
        const double ry = rx * (1.0 + 0.35 * g.eff.at("eyes/squint"));
        const double brow_len = 3.5 * u * g.factor("eyes/size");
        const double brow_y = g.eye_y - 4.5 * u - g.eff.at("eyes/brow-raise") * 1.5 * u;
        const double tilt = g.eff.at("eyes/brow-tilt") * 0.44;
        const std::size_t shape = g.opt.at("eyeshape");
        for (int side = -1; side <= 1; side += 2) {
            const double ex = g.cx + side * g.eye_hd;
            switch (shape) {
                case 0:
                    shapes.push_back(disc(ex, g.eye_y, rx, ry, 0.95));
                    break;
                case 1:
                    shapes.push_back(ellipse_ring(ex, g.eye_y, rx, ry, 0.7 * u, 0.95));
                    shapes.push_back(disc(ex, g.eye_y, 0.9 * u, 0.9 * u, 0.95));
                    break;
                case 2:
                    shapes.push_back(disc(ex, g.eye_y, rx, std::max(0.55 * ry, 0.5 * u), 0.95));
                    shapes.push_back(capsule(ex - rx, g.eye_y - 0.8 * ry, ex + rx,
                                             g.eye_y - 0.8 * ry, 0.4 * u, 0.75));
                    break;
                default:
                    shapes.push_back(capsule(ex - rx, g.eye_y - ry, ex + rx, g.eye_y + ry,
                                             0.45 * u, 0.95));
                    shapes.push_back(capsule(ex - rx, g.eye_y + ry, ex + rx, g.eye_y - ry,
                                             0.45 * u, 0.95));
                    break;
            }
            // Brow tilts mirror left/right.
            const double dx = brow_len * std::cos(tilt);
            const double dy = brow_len * std::sin(tilt) * side;
            shapes.push_back(capsule(ex - dx, brow_y + dy, ex + dx, brow_y - dy, 0.45 * u, 0.8));
        }
    } else if (region == "nose") {
        const double L = 7 * u * g.factor("nose/length");
        const double W = 4 * u * g.factor("nose/width");
        const double ax = g.cx;
        const double ay = 34 * u + g.eff.at("nose/drop") * 2.5 * u;
        const double bend = g.eff.at("nose/bridge");
        const double ink = 0.62 + 0.09 * (g.eff.at("nose/tone") + 1.0);
        const double tip_x = ax + bend * 0.4 * W;
        switch (g.opt.at("noseshape")) {
            case 0:
                shapes.push_back(polyline({{ax - W, ay + L}, {tip_x, ay}, {ax + W, ay + L}},
                                          0.4 * u, ink));
                shapes.push_back(capsule(ax - W, ay + L, ax + W, ay + L, 0.4 * u, ink));
                break;
            case 1:
                shapes.push_back(capsule(ax, ay, tip_x, ay + L, 0.45 * u, ink));
                shapes.push_back(disc(ax - 0.7 * W, ay + L, 0.8 * u, 0.8 * u, ink));
                shapes.push_back(disc(ax + 0.7 * W, ay + L, 0.8 * u, 0.8 * u, ink));
                break;
            default:
                shapes.push_back(polyline({{ax, ay},
                                           {ax + bend * 0.5 * W, ay + 0.6 * L},
                                           {ax - 0.6 * W, ay + L},
                                           {ax + 0.4 * W, ay + L}},
                                          0.4 * u, ink));
                break;
        }
    } else if (region == "mouth") {
        const double HW = 7 * u * g.factor("mouth/width");
        const double TH = 1.5 * u * g.factor("mouth/fullness");
        const double my = 46 * u + g.eff.at("mouth/height") * 2.5 * u;
        const double curve = g.eff.at("mouth/curve");
        const double ink = 0.68 + 0.085 * (g.eff.at("mouth/tone") + 1.0);
        auto arc_points = [&](double y_offset) {
            std::vector<Point> pts;
            const int n = 12;
            for (int i = 0; i <= n; ++i) {
                const double t = -1.0 + 2.0 * i / n;
                pts.push_back({g.cx + t * HW, my + y_offset + curve * 0.4 * HW * (t * t - 0.5)});
            }
            return pts;
        };
        switch (g.opt.at("mouthshape")) {
            case 0:
                shapes.push_back(polyline(arc_points(0.0), 0.5 * TH, ink));
                break;
            case 1:
                shapes.push_back(polyline(arc_points(-0.8 * TH), 0.4 * TH, ink));
                shapes.push_back(polyline(arc_points(0.8 * TH), 0.4 * TH, ink));
                break;
            case 2: {
                const double ry = TH * 1.8 * (1.0 + 0.3 * curve);
                shapes.push_back(disc(g.cx, my, 0.8 * HW, ry, 0.2));
                shapes.push_back(ellipse_ring(g.cx, my, 0.8 * HW, ry, 0.4 * u, ink));
                break;
            }
            default: {
                const double ry = TH * 1.4 * (1.0 + 0.3 * curve);
                shapes.push_back(disc(g.cx, my, 0.45 * HW, ry, ink));
                break;
            }
        }
    } else {
        throw LookupError("unknown region: " + region);
    }
    return shapes;
}

} // namespace detail

inline std::vector<std::string> render_region_order() { return {"head", "eyes", "nose", "mouth"}; }

/// Canonical (pre-augmentation) render on a constant background.
inline ImageF render_canonical(const ParameterSchema& schema, const Recipe& recipe, int canvas,
                               double background) {
    if (canvas < 32) throw GeometryError("canvas too small for canonical layout (min 32)");
    const detail::FaceGeometry g = detail::face_geometry(schema, recipe, canvas);
    ImageF img(canvas, canvas, float(background));
    for (const auto& region : render_region_order())
        detail::composite(img, region_box(region, canvas), detail::region_shapes(g, region));
    return img;
}

/// Coverage mask (alpha-composited ink on black) of a single region's
/// primitives; used by locality and crop-containment checks.
inline ImageF render_region_mask(const ParameterSchema& schema, const Recipe& recipe,
                                 const std::string& region, int canvas) {
    const detail::FaceGeometry g = detail::face_geometry(schema, recipe, canvas);
    ImageF img(canvas, canvas, 0.0f);
    detail::composite(img, region_box(region, canvas), detail::region_shapes(g, region));
    return img;
}

/// Eye centers in the canonical (pre-augmentation) frame.
inline std::pair<Point, Point> canonical_eye_centers(const ParameterSchema& schema,
                                                     const Recipe& recipe, int canvas) {
    const detail::FaceGeometry g = detail::face_geometry(schema, recipe, canvas);
    return {Point{g.cx - g.eye_hd, g.eye_y}, Point{g.cx + g.eye_hd, g.eye_y}};
}

/**
 * Renders a recipe: canonical draw, optional style posterization, similarity
 * augmentation (rotation about the canvas center plus translation),
 * brightness, additive Gaussian noise. Deterministic given
 * (recipe, aug, canvas, style). Landmarks are the true eye centers after the
 * augmentation transform.
 */
inline RenderResult render(const ParameterSchema& schema, const Recipe& recipe,
                           const AugmentationSpec& aug, int canvas,
                           const StyleSpec& style = {}) {
    ImageF img = render_canonical(schema, recipe, canvas, aug.background);
    if (style.posterize_levels >= 2) {
        for (auto& p : img.pixels) p = float(posterize_value(p, style.posterize_levels));
    }
    const Point center{(canvas - 1) / 2.0, (canvas - 1) / 2.0};
    const Similarity t = Similarity::rotate_about(center, aug.rotation_deg * M_PI / 180.0,
                                                  {aug.translate_x, aug.translate_y});
    img = warp_similarity(img, t, canvas, canvas, float(aug.background));
    if (aug.brightness != 1.0) {
        for (auto& p : img.pixels) p = float(std::clamp(double(p) * aug.brightness, 0.0, 1.0));
    }
    if (aug.noise_sigma > 0.0) {
        Rng rng(aug.rng_seed);
        for (auto& p : img.pixels)
            p = float(std::clamp(double(p) + aug.noise_sigma * rng.gaussian(), 0.0, 1.0));
    }
    auto [left, right] = canonical_eye_centers(schema, recipe, canvas);
    RenderResult out;
    out.image = std::move(img);
    out.left_eye = t.apply(left);
    out.right_eye = t.apply(right);
    if (out.left_eye.x < 0 || out.left_eye.x > canvas - 1 || out.left_eye.y < 0 ||
        out.left_eye.y > canvas - 1 || out.right_eye.x < 0 || out.right_eye.x > canvas - 1 ||
        out.right_eye.y < 0 || out.right_eye.y > canvas - 1)
        throw GeometryError("augmentation pushed eye landmarks outside the image");
    return out;
}

} // namespace paraface
