/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/dataset.hpp
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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "paraface/common.hpp"
#include "paraface/digest.hpp"
#include "paraface/encoding.hpp"
#include "paraface/image.hpp"
#include "paraface/recipe.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "paraface/schema.hpp"

namespace paraface {

struct SampleMeta {
    std::string id;
    std::string image_path;    // relative to the dataset directory
    std::string image_sha256;
    std::string recipe_text;   // canonical mhm form
    AugmentationSpec augmentation;
    Point left_eye;
    Point right_eye;
};

struct DatasetManifest {
    std::string dir;
    std::string schema_sha256;
    std::uint64_t master_seed = 0;
    int canvas = 64;
    StyleSpec style;
    AugmentationRanges aug_ranges;
    std::string generator;
    std::vector<SampleMeta> samples;
    std::string manifest_sha256;  // digest of manifest.jsonl

    std::string image_file(std::size_t i) const {
        return (std::filesystem::path(dir) / samples[i].image_path).string();
    }
};

/**
 * Draws a recipe with every continuous parameter uniform in its declared
 * range (uniform in [-1, 1] encoded coordinates) and every slot uniform over
 * its options. The scale parameter is drawn at its reference value: the
 * training corpus is scale-normalized.
 */
inline Recipe sample_recipe(const ParameterSchema& schema, Rng& rng) {
    Recipe r;
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) {
            const std::string full = region.name + "/" + p.name;
            if (full == schema.scale_param_name) {
                r.continuous[full] = 0.0;
            } else {
                r.continuous[full] = decode_continuous(rng.uniform(-1.0, 1.0), p);
            }
        }
        for (const auto& s : region.slots)
            r.discrete[s.name] = s.options[rng.uniform_index(s.options.size())].guid;
    }
    return r;
}

namespace detail {

inline nlohmann::json aug_to_json(const AugmentationSpec& a) {
    return {{"background", a.background},   {"rotation_deg", a.rotation_deg},
            {"translate_x", a.translate_x}, {"translate_y", a.translate_y},
            {"brightness", a.brightness},   {"noise_sigma", a.noise_sigma},
            {"rng_seed", a.rng_seed}};
}

inline AugmentationSpec aug_from_json(const nlohmann::json& j) {
    AugmentationSpec a;
    a.background = j.at("background").get<double>();
    a.rotation_deg = j.at("rotation_deg").get<double>();
    a.translate_x = j.at("translate_x").get<double>();
    a.translate_y = j.at("translate_y").get<double>();
    a.brightness = j.at("brightness").get<double>();
    a.noise_sigma = j.at("noise_sigma").get<double>();
    a.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    return a;
}

inline nlohmann::json ranges_to_json(const AugmentationRanges& r) {
    return {{"background_min", r.background_min},   {"background_max", r.background_max},
            {"rotation_max_deg", r.rotation_max_deg}, {"translate_max", r.translate_max},
            {"brightness_min", r.brightness_min},   {"brightness_max", r.brightness_max},
            {"noise_sigma_min", r.noise_sigma_min}, {"noise_sigma_max", r.noise_sigma_max}};
}

inline AugmentationRanges ranges_from_json(const nlohmann::json& j) {
    AugmentationRanges r;
    r.background_min = j.value("background_min", r.background_min);
    r.background_max = j.value("background_max", r.background_max);
    r.rotation_max_deg = j.value("rotation_max_deg", r.rotation_max_deg);
    r.translate_max = j.value("translate_max", r.translate_max);
    r.brightness_min = j.value("brightness_min", r.brightness_min);
    r.brightness_max = j.value("brightness_max", r.brightness_max);
    r.noise_sigma_min = j.value("noise_sigma_min", r.noise_sigma_min);
    r.noise_sigma_max = j.value("noise_sigma_max", r.noise_sigma_max);
    return r;
}

} // namespace detail

/// Builds sample `index` of a run: recipe, augmentation, and rendered image.
/// Depends only on (schema, master_seed, index, ranges, canvas, style), so
/// any sample can be regenerated alone.
inline std::pair<SampleMeta, ImageF> make_sample(const ParameterSchema& schema,
                                                 std::uint64_t master_seed, std::size_t index,
                                                 const AugmentationRanges& ranges, int canvas,
                                                 const StyleSpec& style) {
    const std::uint64_t sample_seed = stable_hash(master_seed, index);
    Rng recipe_rng(stable_hash(sample_seed, 0));
    Rng aug_rng(stable_hash(sample_seed, 1));
    const Recipe recipe = sample_recipe(schema, recipe_rng);
    const AugmentationSpec aug = ranges.sample(aug_rng, stable_hash(sample_seed, 2));
    RenderResult rr = render(schema, recipe, aug, canvas, style);
    SampleMeta meta;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "s%06zu", index);
    meta.id = idbuf;
    meta.image_path = std::string("images/") + idbuf + ".png";
    meta.recipe_text = serialize_mhm(recipe, schema);
    meta.augmentation = aug;
    meta.left_eye = rr.left_eye;
    meta.right_eye = rr.right_eye;
    const std::vector<std::uint8_t> bytes = quantize8(rr.image);
    meta.image_sha256 = sha256_hex(bytes);
    return {std::move(meta), std::move(rr.image)};
}

/**
 * Generates n samples under `out_dir` (images/ plus manifest.jsonl and
 * dataset.json). Per-sample seeds derive from (master_seed, index), so the
 * result is independent of `jobs`. Aborts with a partial-output report on
 * I/O failure.
 */
inline DatasetManifest generate_dataset(const ParameterSchema& schema, std::size_t n,
                                        std::uint64_t master_seed,
                                        const AugmentationRanges& ranges,
                                        const std::string& out_dir, int canvas = 64,
                                        const StyleSpec& style = {}, int jobs = 1) {
    if (n < 1) throw Error("args", "dataset size must be >= 1");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");

    DatasetManifest manifest;
    manifest.dir = out_dir;
    manifest.schema_sha256 = sha256_hex(schema_to_json(schema).dump());
    manifest.master_seed = master_seed;
    manifest.canvas = canvas;
    manifest.style = style;
    manifest.aug_ranges = ranges;
    manifest.generator = std::string("paraface ") + kVersion;
    manifest.samples.resize(n);

    std::vector<std::string> errors(n);
    auto worker = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < n; i += stride) {
            try {
                auto [meta, image] = make_sample(schema, master_seed, i, ranges, canvas, style);
                write_png((fs::path(out_dir) / meta.image_path).string(), image);
                manifest.samples[i] = std::move(meta);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker, std::size_t(t), std::size_t(jobs));
        for (auto& t : threads) t.join();
    }
    std::size_t failed = 0;
    std::string first_error;
    for (const auto& e : errors) {
        if (!e.empty()) {
            if (first_error.empty()) first_error = e;
            ++failed;
        }
    }
    if (failed > 0)
        throw IoError("dataset generation aborted: " + std::to_string(failed) + "/" +
                      std::to_string(n) + " samples failed; first error: " + first_error);

    std::string jsonl;
    for (const auto& s : manifest.samples) {
        nlohmann::json j{{"id", s.id},
                         {"image_path", s.image_path},
                         {"image_sha256", s.image_sha256},
                         {"recipe", s.recipe_text},
                         {"augmentation", detail::aug_to_json(s.augmentation)},
                         {"landmarks",
                          {{"left", {s.left_eye.x, s.left_eye.y}},
                           {"right", {s.right_eye.x, s.right_eye.y}}}}};
        jsonl += j.dump() + "\n";
    }
    write_text_file((fs::path(out_dir) / "manifest.jsonl").string(), jsonl);
    manifest.manifest_sha256 = sha256_hex(jsonl);

    nlohmann::json meta{{"generator", manifest.generator},
                        {"canvas", canvas},
                        {"n", n},
                        {"master_seed", master_seed},
                        {"schema_sha256", manifest.schema_sha256},
                        {"style", {{"posterize_levels", style.posterize_levels}}},
                        {"aug_ranges", detail::ranges_to_json(ranges)},
                        {"manifest_sha256", manifest.manifest_sha256}};
    write_text_file((fs::path(out_dir) / "dataset.json").string(), meta.dump(2) + "\n");
    return manifest;
}

/// Loads a dataset directory written by generate_dataset (or any external
/// generator honoring the same directory contract).
inline DatasetManifest load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string meta_path = (fs::path(dir) / "dataset.json").string();
    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    DatasetManifest m;
    m.dir = dir;
    const nlohmann::json meta = nlohmann::json::parse(read_text_file(meta_path));
    m.generator = meta.value("generator", std::string("unknown"));
    m.canvas = meta.value("canvas", 64);
    m.master_seed = meta.value("master_seed", std::uint64_t(0));
    m.schema_sha256 = meta.value("schema_sha256", std::string());
    m.style.posterize_levels = meta.contains("style")
                                   ? meta["style"].value("posterize_levels", 0)
                                   : 0;
    if (meta.contains("aug_ranges")) m.aug_ranges = detail::ranges_from_json(meta["aug_ranges"]);
    const std::string jsonl = read_text_file(manifest_path);
    m.manifest_sha256 = sha256_hex(jsonl);
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        SampleMeta s;
        s.id = j.at("id").get<std::string>();
        s.image_path = j.at("image_path").get<std::string>();
        s.image_sha256 = j.at("image_sha256").get<std::string>();
        s.recipe_text = j.at("recipe").get<std::string>();
        s.augmentation = detail::aug_from_json(j.at("augmentation"));
        s.left_eye = {j["landmarks"]["left"][0].get<double>(),
                      j["landmarks"]["left"][1].get<double>()};
        s.right_eye = {j["landmarks"]["right"][0].get<double>(),
                       j["landmarks"]["right"][1].get<double>()};
        m.samples.push_back(std::move(s));
    }
    if (m.samples.empty()) throw IoError("empty manifest: " + manifest_path);
    return m;
}

/// Checks that every referenced image exists and hashes to its recorded digest.
inline void verify_dataset_digests(const DatasetManifest& m) {
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const ImageF img = read_png(m.image_file(i));
        const std::string digest = sha256_hex(quantize8(img));
        if (digest != m.samples[i].image_sha256)
            throw IoError("image digest mismatch for " + m.samples[i].id);
    }
}

/// Encoded target matrix (samples x layout.size) in manifest order.
inline std::vector<std::vector<double>> encoded_targets(const DatasetManifest& m,
                                                        const ParameterSchema& schema) {
    std::vector<std::vector<double>> out;
    out.reserve(m.samples.size());
    for (const auto& s : m.samples) {
        const Recipe r = parse_mhm(s.recipe_text, schema);
        out.push_back(encode(r, schema).values);
    }
    return out;
}

} // namespace paraface
