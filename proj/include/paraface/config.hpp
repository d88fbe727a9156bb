/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/config.hpp
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

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "paraface/adapt.hpp"
#include "paraface/common.hpp"
#include "paraface/dataset.hpp"
#include "paraface/digest.hpp"
#include "paraface/render.hpp"
#include "paraface/schema.hpp"
#include "paraface/trainer.hpp"

namespace paraface {

/**
 * One JSON document binding the pipeline stages into reproducible runs.
 * Every seed is explicit; the config digest travels with every artifact the
 * run produces. Crop rectangles default to the built-in geometry and may be
 * overridden per region.
 */
struct PipelineConfig {
    std::string config_path;
    std::string config_sha256;
    ParameterSchema schema;
    std::string schema_sha256;
    int canvas = 64;
    int local_input = 32;
    RegistrationConfig registration;
    std::map<std::string, PixelBox> crop_overrides;
    AugmentationRanges aug_ranges;
    StyleSpec style;
    std::string adapter_spec = "identity";
    std::uint64_t data_seed = 1001;
    std::uint64_t split_seed = 2002;
    std::uint64_t train_seed = 3003;
    double eval_fraction = 0.2;
    std::string fit_split = "train";  // "train" | "eval"
    TrainConfig fe_template;
    TrainConfig ft_template;

    PixelBox crop_box(const std::string& region) const {
        auto it = crop_overrides.find(region);
        return it != crop_overrides.end() ? it->second : crop_rect(region, canvas);
    }
};

inline TrainConfig default_fe_template() {
    TrainConfig c;
    c.mode = TrainMode::feature_extraction;
    c.lr = 0.2;
    c.patience = 5;
    c.decay = 0.3;
    c.stop_lr = 1e-5;
    c.batch_size = 32;
    c.max_epochs = 200;
    return c;
}

inline TrainConfig default_ft_template() {
    TrainConfig c;
    c.mode = TrainMode::fine_tuning;
    c.lr = 0.02;
    c.patience = 2;
    c.decay = 0.3;
    c.stop_lr = 2e-4;
    c.batch_size = 32;
    c.max_epochs = 14;
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    PipelineConfig cfg;
    cfg.config_path = path;
    cfg.config_sha256 = sha256_hex(text);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    if (!j.contains("schema_path")) throw ConfigError("config missing schema_path");
    const std::string schema_path = (base / j["schema_path"].get<std::string>()).string();
    const std::string schema_text = read_text_file(schema_path);
    cfg.schema = schema_from_json(nlohmann::json::parse(schema_text));
    cfg.schema_sha256 = sha256_hex(schema_to_json(cfg.schema).dump());
    cfg.canvas = j.value("canvas", 64);
    cfg.local_input = j.value("local_input", 32);
    cfg.registration = RegistrationConfig::for_canvas(cfg.canvas);
    if (j.contains("registration")) {
        const auto& r = j["registration"];
        if (r.contains("left"))
            cfg.registration.left_eye = {r["left"][0].get<double>(), r["left"][1].get<double>()};
        if (r.contains("right"))
            cfg.registration.right_eye = {r["right"][0].get<double>(),
                                          r["right"][1].get<double>()};
        cfg.registration.fill = r.value("fill", cfg.registration.fill);
    }
    if (j.contains("crop_rects")) {
        for (auto it = j["crop_rects"].begin(); it != j["crop_rects"].end(); ++it) {
            const auto& v = it.value();
            cfg.crop_overrides[it.key()] =
                PixelBox{v[0].get<int>(), v[1].get<int>(), v[2].get<int>(), v[3].get<int>()};
        }
    }
    if (j.contains("aug_ranges")) cfg.aug_ranges = detail::ranges_from_json(j["aug_ranges"]);
    cfg.style.posterize_levels =
        j.contains("style") ? j["style"].value("posterize_levels", 0) : 0;
    cfg.adapter_spec = j.value("adapter", "identity");
    if (j.contains("seeds")) {
        const auto& s = j["seeds"];
        cfg.data_seed = s.value("data", cfg.data_seed);
        cfg.split_seed = s.value("split", cfg.split_seed);
        cfg.train_seed = s.value("train", cfg.train_seed);
    }
    cfg.eval_fraction = j.value("eval_fraction", 0.2);
    cfg.fit_split = j.value("fit_split", "train");
    if (cfg.fit_split != "train" && cfg.fit_split != "eval")
        throw ConfigError("fit_split must be 'train' or 'eval'");
    cfg.fe_template = default_fe_template();
    cfg.ft_template = default_ft_template();
    auto merge_template = [&](TrainConfig& t, const char* key) {
        if (!j.contains("train") || !j["train"].contains(key)) return;
        const auto& s = j["train"][key];
        t.lr = s.value("lr", t.lr);
        t.patience = s.value("patience", t.patience);
        t.decay = s.value("decay", t.decay);
        t.stop_lr = s.value("stop_lr", t.stop_lr);
        t.batch_size = s.value("batch_size", t.batch_size);
        t.max_epochs = s.value("max_epochs", t.max_epochs);
        t.regression_norm = regression_norm_from_string(s.value("regression_norm", "l2"));
    };
    merge_template(cfg.fe_template, "fe");
    merge_template(cfg.ft_template, "ft");
    return cfg;
}

} // namespace paraface
