/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tests/test_render.cpp
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
#include <catch2/catch_amalgamated.hpp>

#include "paraface/adapt.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "test_util.hpp"

using namespace paraface;

namespace {

AugmentationSpec mild_aug(Rng& rng) {
    AugmentationRanges ranges;
    return ranges.sample(rng, rng.next_u64());
}

} // namespace

TEST_CASE("render is deterministic") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(11);
    const Recipe r = testutil::random_recipe(schema, rng);
    const AugmentationSpec aug = mild_aug(rng);
    const RenderResult a = render(schema, r, aug, 64);
    const RenderResult b = render(schema, r, aug, 64);
    CHECK(quantize8(a.image) == quantize8(b.image));
    CHECK(a.left_eye.x == b.left_eye.x);
    CHECK(a.right_eye.y == b.right_eye.y);
}

TEST_CASE("region locality: parameter diffs stay inside the region box") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(22);
    for (const std::string region : {"nose", "eyes", "mouth"}) {
        const PixelBox box = region_box(region, 64);
        const int pairs = region == "nose" ? 100 : 30;
        for (int i = 0; i < pairs; ++i) {
            Recipe a = testutil::random_recipe(schema, rng);
            Recipe b = a;
            // Perturb only this region: all continuous params and the slot.
            const SchemaRegion* sr = schema.find_region(region);
            for (const auto& p : sr->params)
                b.continuous[region + "/" + p.name] = rng.uniform(p.min_value, p.max_value);
            for (const auto& s : sr->slots)
                b.discrete[s.name] = s.options[rng.uniform_index(s.options.size())].guid;
            const ImageF ia = render_canonical(schema, a, 64, 0.1);
            const ImageF ib = render_canonical(schema, b, 64, 0.1);
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (ia.at(y, x) != ib.at(y, x)) {
                        INFO(region << " diff at (" << x << "," << y << ")");
                        REQUIRE(box.contains(x, y));
                    }
        }
    }
}

TEST_CASE("region masks stay inside their boxes") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(23);
    for (int i = 0; i < 25; ++i) {
        const Recipe r = testutil::random_recipe(schema, rng);
        for (const std::string region : {"eyes", "nose", "mouth"}) {
            const ImageF mask = render_region_mask(schema, r, region, 64);
            const PixelBox box = region_box(region, 64);
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (mask.at(y, x) > 0.0f) REQUIRE(box.contains(x, y));
        }
    }
}

TEST_CASE("every continuous parameter is visible at its extremes") {
    const ParameterSchema schema = toy_face_schema();
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) {
            const std::string full = region.name + "/" + p.name;
            Recipe lo = default_recipe(schema);
            Recipe hi = default_recipe(schema);
            lo.continuous[full] = p.min_value;
            hi.continuous[full] = p.max_value;
            const ImageF a = render_canonical(schema, lo, 64, 0.1);
            const ImageF b = render_canonical(schema, hi, 64, 0.1);
            INFO("parameter " << full);
            CHECK(mean_abs_diff(a, b) > 0.0);
        }
    }
}

TEST_CASE("every discrete option renders distinctly") {
    const ParameterSchema schema = toy_face_schema();
    for (const auto& region : schema.regions) {
        for (const auto& slot : region.slots) {
            std::vector<std::vector<std::uint8_t>> renders;
            for (const auto& opt : slot.options) {
                Recipe r = default_recipe(schema);
                r.discrete[slot.name] = opt.guid;
                renders.push_back(quantize8(render_canonical(schema, r, 64, 0.1)));
            }
            for (std::size_t i = 0; i < renders.size(); ++i)
                for (std::size_t j = i + 1; j < renders.size(); ++j) {
                    INFO(slot.name << " options " << i << " vs " << j);
                    CHECK(renders[i] != renders[j]);
                }
        }
    }
}

TEST_CASE("scale normalization reproduces the render bit-exactly") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(33);
    for (int i = 0; i < 40; ++i) {
        const Recipe r = testutil::random_normalizable_recipe(schema, rng);
        const Recipe n = normalize_scale(r, schema);
        AugmentationSpec aug = mild_aug(rng);
        const RenderResult a = render(schema, r, aug, 64);
        const RenderResult b = render(schema, n, aug, 64);
        REQUIRE(quantize8(a.image) == quantize8(b.image));
        CHECK(a.left_eye.x == b.left_eye.x);
        CHECK(a.left_eye.y == b.left_eye.y);
    }
}

TEST_CASE("landmarks report the true eye centers") {
    const ParameterSchema schema = toy_face_schema();
    SECTION("default recipe at neutral augmentation sits at the base positions") {
        const RenderResult rr =
            render(schema, default_recipe(schema), AugmentationSpec::neutral(), 64);
        CHECK(rr.left_eye.x == Catch::Approx(24.0));
        CHECK(rr.left_eye.y == Catch::Approx(26.0));
        CHECK(rr.right_eye.x == Catch::Approx(40.0));
        CHECK(rr.right_eye.y == Catch::Approx(26.0));
    }
    SECTION("landmarks track the augmentation transform") {
        Rng rng(44);
        for (int i = 0; i < 20; ++i) {
            const Recipe r = testutil::random_recipe(schema, rng);
            const AugmentationSpec aug = mild_aug(rng);
            const RenderResult rr = render(schema, r, aug, 64);
            const auto [cl, cr] = canonical_eye_centers(schema, r, 64);
            const Similarity t = Similarity::rotate_about(
                {31.5, 31.5}, aug.rotation_deg * M_PI / 180.0, {aug.translate_x, aug.translate_y});
            const Point el = t.apply(cl);
            CHECK(rr.left_eye.x == Catch::Approx(el.x).margin(1e-12));
            CHECK(rr.left_eye.y == Catch::Approx(el.y).margin(1e-12));
            CHECK(rr.left_eye.x >= 0.0);
            CHECK(rr.left_eye.x <= 63.0);
            CHECK(rr.right_eye.y >= 0.0);
            CHECK(rr.right_eye.y <= 63.0);
        }
    }
}

TEST_CASE("canvas too small is a geometry error") {
    const ParameterSchema schema = toy_face_schema();
    CHECK_THROWS_AS(render(schema, default_recipe(schema), AugmentationSpec::neutral(), 16),
                    GeometryError);
}

TEST_CASE("posterization basics") {
    SECTION("256 levels is a no-op on 8-bit data") {
        for (int k = 0; k <= 255; ++k) {
            const double v = k / 255.0;
            CHECK(posterize_value(v, 256) == Catch::Approx(v).margin(1e-12));
        }
    }
    SECTION("idempotent at a fixed level count") {
        for (const int levels : {2, 3, 4, 7, 16}) {
            for (int k = 0; k <= 255; ++k) {
                const double once = posterize_value(k / 255.0, levels);
                CHECK(posterize_value(once, levels) == once);
            }
        }
    }
}

TEST_CASE("crop rectangles contain their regions in the registered frame") {
    const ParameterSchema schema = toy_face_schema();
    const RegistrationConfig reg = RegistrationConfig::for_canvas(64);
    Rng rng(55);
    for (const std::string region : {"eyes", "nose", "mouth"}) {
        const PixelBox rect = crop_rect(region, 64);
        CHECK(rect.x0 >= 0);
        CHECK(rect.y0 >= 0);
        CHECK(rect.x1 <= 64);
        CHECK(rect.y1 <= 64);
        for (int i = 0; i < 100; ++i) {
            const Recipe r = testutil::random_recipe(schema, rng);
            const AugmentationSpec aug = mild_aug(rng);
            // Drawn-pixel positions of this region, mapped into the
            // registered frame, must land inside the fixed crop rectangle.
            const ImageF mask = render_region_mask(schema, r, region, 64);
            const auto [cl, cr] = canonical_eye_centers(schema, r, 64);
            const Similarity t = Similarity::rotate_about(
                {31.5, 31.5}, aug.rotation_deg * M_PI / 180.0, {aug.translate_x, aug.translate_y});
            const Similarity to_canonical = Similarity::from_two_points(
                t.apply(cl), t.apply(cr), reg.left_eye, reg.right_eye);
            for (int y = 0; y < 64; ++y) {
                for (int x = 0; x < 64; ++x) {
                    if (mask.at(y, x) <= 0.02f) continue;
                    const Point q = to_canonical.apply(t.apply({double(x), double(y)}));
                    INFO(region << " pixel (" << x << "," << y << ") -> (" << q.x << "," << q.y
                                << ")");
                    REQUIRE(q.x >= rect.x0 - 1.0);
                    REQUIRE(q.x <= rect.x1 + 0.0);
                    REQUIRE(q.y >= rect.y0 - 1.0);
                    REQUIRE(q.y <= rect.y1 + 0.0);
                }
            }
        }
    }
}

TEST_CASE("cropping is deterministic and bounded") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(66);
    const Recipe r = testutil::random_recipe(schema, rng);
    const RenderResult rr = render(schema, r, mild_aug(rng), 64);
    const RegistrationConfig reg = RegistrationConfig::for_canvas(64);
    const ImageF c1 = crop_region(rr.image, rr.left_eye, rr.right_eye, "nose", reg, 32);
    const ImageF c2 = crop_region(rr.image, rr.left_eye, rr.right_eye, "nose", reg, 32);
    CHECK(quantize8(c1) == quantize8(c2));
    CHECK(c1.width == 32);
    CHECK(c1.height == 32);
    auto [registered, rt] = register_image(rr.image, rr.left_eye, rr.right_eye, reg);
    CHECK_THROWS_AS(crop_region(registered, "chin", 32), LookupError);
}
