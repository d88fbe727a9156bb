/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/schema.hpp
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

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "paraface/common.hpp"

namespace paraface {

/**
 * How a continuous parameter couples to the global scale parameter.
 *
 * The renderer consumes parameters only through their *effective* values
 * (see resolve_effective_value), so normalizing the scale away reproduces
 * identical geometry:
 *   - exp_size:      dimension = base * exp2(gain * (scale + value));
 *                    normalization rewrites value <- value + scale.
 *   - linear_offset: offset = (value * exp2(gain * scale)) * unit;
 *                    normalization rewrites value <- value * exp2(gain * scale).
 *   - none:          scale-invariant (angles, ratios, intensities).
 */
enum class ScaleCoupling { none, exp_size, linear_offset };

inline std::string to_string(ScaleCoupling c) {
    switch (c) {
        case ScaleCoupling::exp_size: return "exp_size";
        case ScaleCoupling::linear_offset: return "linear_offset";
        default: return "none";
    }
}

inline ScaleCoupling scale_coupling_from_string(const std::string& s) {
    if (s == "exp_size") return ScaleCoupling::exp_size;
    if (s == "linear_offset") return ScaleCoupling::linear_offset;
    if (s == "none" || s.empty()) return ScaleCoupling::none;
    throw ValidationError("unknown scale_coupling: " + s);
}

struct ContinuousParam {
    std::string name;            // local name; full name is "region/name"
    double min_value = -1.0;
    double max_value = 1.0;
    ScaleCoupling coupling = ScaleCoupling::none;
};

struct DiscreteOption {
    std::string asset;           // human-readable asset name
    std::string guid;            // unique id within the slot
};

struct DiscreteSlot {
    std::string name;            // slot names are global (mhm line prefix)
    std::vector<DiscreteOption> options;
};

struct SchemaRegion {
    std::string name;
    std::vector<ContinuousParam> params;
    std::vector<DiscreteSlot> slots;
};

/**
 * The full description of the parametric target space: ordered regions,
 * continuous parameters with declared ranges, discrete slots with ordered
 * option lists, and the optional global scale parameter used for
 * normalization.
 */
struct ParameterSchema {
    std::vector<SchemaRegion> regions;
    std::string scale_param_name;  // full "region/name", empty if absent
    double scale_gain = 0.2;       // exp2 coefficient shared by coupled params

    const SchemaRegion* find_region(const std::string& name) const {
        for (const auto& r : regions)
            if (r.name == name) return &r;
        return nullptr;
    }

    const ContinuousParam* find_param(const std::string& full_name) const {
        auto slash = full_name.find('/');
        if (slash == std::string::npos) return nullptr;
        const SchemaRegion* r = find_region(full_name.substr(0, slash));
        if (!r) return nullptr;
        const std::string local = full_name.substr(slash + 1);
        for (const auto& p : r->params)
            if (p.name == local) return &p;
        return nullptr;
    }

    /// Finds a slot by its (global) name; returns the owning region too.
    std::pair<const SchemaRegion*, const DiscreteSlot*> find_slot(const std::string& name) const {
        for (const auto& r : regions)
            for (const auto& s : r.slots)
                if (s.name == name) return {&r, &s};
        return {nullptr, nullptr};
    }

    std::optional<std::size_t> option_index(const DiscreteSlot& slot, const std::string& guid) const {
        for (std::size_t i = 0; i < slot.options.size(); ++i)
            if (slot.options[i].guid == guid) return i;
        return std::nullopt;
    }

    /// Checks the structural invariants; throws ValidationError on the first failure.
    void validate() const {
        std::set<std::string> region_names, param_names, slot_names;
        for (const auto& r : regions) {
            if (!region_names.insert(r.name).second)
                throw ValidationError("duplicate region name: " + r.name);
            for (const auto& p : r.params) {
                if (!param_names.insert(r.name + "/" + p.name).second)
                    throw ValidationError("duplicate parameter: " + r.name + "/" + p.name);
                if (!(p.min_value < p.max_value))
                    throw ValidationError("min >= max for " + r.name + "/" + p.name);
            }
            for (const auto& s : r.slots) {
                if (!slot_names.insert(s.name).second)
                    throw ValidationError("duplicate slot name: " + s.name);
                if (s.options.empty())
                    throw ValidationError("slot has no options: " + s.name);
                std::set<std::string> guids;
                for (const auto& o : s.options)
                    if (!guids.insert(o.guid).second)
                        throw ValidationError("duplicate guid in slot " + s.name + ": " + o.guid);
            }
        }
        if (!scale_param_name.empty() && !find_param(scale_param_name))
            throw ValidationError("scale_param_name not in schema: " + scale_param_name);
    }
};

/// Half-open index range into a target vector.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

struct SlotSlice {
    std::string slot_name;
    IndexRange range;
};

struct RegionSlices {
    std::string region_name;
    IndexRange full;                  // contiguous region slice
    IndexRange continuous;            // continuous sub-slice
    std::vector<SlotSlice> slots;     // one-hot sub-slices
};

/**
 * Index map from schema to flat target vector. Layout is region by region in
 * schema order; within a region, continuous parameters first, then each
 * discrete slot's one-hot slice.
 */
struct TargetLayout {
    std::size_t size = 0;
    std::vector<RegionSlices> regions;
    std::vector<std::string> coordinate_names;  // "region/param" or "slot=asset"

    const RegionSlices& region(const std::string& name) const {
        for (const auto& r : regions)
            if (r.region_name == name) return r;
        throw LookupError("unknown region: " + name);
    }
};

inline TargetLayout make_layout(const ParameterSchema& schema) {
    TargetLayout layout;
    std::size_t cursor = 0;
    for (const auto& r : schema.regions) {
        RegionSlices rs;
        rs.region_name = r.name;
        rs.full.begin = cursor;
        rs.continuous.begin = cursor;
        for (const auto& p : r.params) {
            layout.coordinate_names.push_back(r.name + "/" + p.name);
            ++cursor;
        }
        rs.continuous.end = cursor;
        for (const auto& s : r.slots) {
            SlotSlice ss;
            ss.slot_name = s.name;
            ss.range.begin = cursor;
            for (const auto& o : s.options) {
                layout.coordinate_names.push_back(s.name + "=" + o.asset);
                ++cursor;
            }
            ss.range.end = cursor;
            rs.slots.push_back(std::move(ss));
        }
        rs.full.end = cursor;
        layout.regions.push_back(std::move(rs));
    }
    layout.size = cursor;
    return layout;
}

/**
 * Number of distinct discrete assignments: the product over all slots of
 * their option counts (options are mutually exclusive within a slot and
 * independent across slots). Throws on uint64 overflow.
 */
inline std::uint64_t combinatorial_complexity(const ParameterSchema& schema) {
    std::uint64_t product = 1;
    for (const auto& r : schema.regions) {
        for (const auto& s : r.slots) {
            const std::uint64_t n = s.options.size();
            if (n != 0 && product > std::numeric_limits<std::uint64_t>::max() / n)
                throw Error("overflow", "combinatorial complexity exceeds uint64 range");
            product *= n;
        }
    }
    return product;
}

/// Target-vector index ranges belonging to one region: (continuous, discrete).
inline std::pair<std::vector<IndexRange>, std::vector<IndexRange>>
group_slices(const ParameterSchema& schema, const std::string& region) {
    if (!schema.find_region(region)) throw LookupError("unknown region: " + region);
    const TargetLayout layout = make_layout(schema);
    const RegionSlices& rs = layout.region(region);
    std::vector<IndexRange> cont, disc;
    if (rs.continuous.size() > 0) cont.push_back(rs.continuous);
    for (const auto& s : rs.slots) disc.push_back(s.range);
    return {cont, disc};
}

// ---------------------------------------------------------------------------
// JSON document form.
//
// {
//   "regions": [
//     {"name": "eyes",
//      "params": [{"name": "spread", "min": -1.5, "max": 1.5,
//                  "scale_coupling": "exp_size"}, ...],
//      "slots": [{"name": "eyeshape",
//                 "options": [{"asset": "disc", "guid": "..."}, ...]}]}
//   ],
//   "scale_param_name": "head/scale",
//   "scale_gain": 0.2
// }
// ---------------------------------------------------------------------------

inline nlohmann::json schema_to_json(const ParameterSchema& schema) {
    nlohmann::json j;
    j["regions"] = nlohmann::json::array();
    for (const auto& r : schema.regions) {
        nlohmann::json jr;
        jr["name"] = r.name;
        jr["params"] = nlohmann::json::array();
        for (const auto& p : r.params) {
            nlohmann::json jp{{"name", p.name}, {"min", p.min_value}, {"max", p.max_value}};
            if (p.coupling != ScaleCoupling::none) jp["scale_coupling"] = to_string(p.coupling);
            jr["params"].push_back(std::move(jp));
        }
        jr["slots"] = nlohmann::json::array();
        for (const auto& s : r.slots) {
            nlohmann::json js{{"name", s.name}, {"options", nlohmann::json::array()}};
            for (const auto& o : s.options)
                js["options"].push_back({{"asset", o.asset}, {"guid", o.guid}});
            jr["slots"].push_back(std::move(js));
        }
        j["regions"].push_back(std::move(jr));
    }
    if (!schema.scale_param_name.empty()) j["scale_param_name"] = schema.scale_param_name;
    j["scale_gain"] = schema.scale_gain;
    return j;
}

inline ParameterSchema schema_from_json(const nlohmann::json& j) {
    ParameterSchema schema;
    if (!j.contains("regions") || !j["regions"].is_array())
        throw ValidationError("schema json: missing 'regions' array");
    for (const auto& jr : j["regions"]) {
        SchemaRegion r;
        r.name = jr.at("name").get<std::string>();
        for (const auto& jp : jr.value("params", nlohmann::json::array())) {
            ContinuousParam p;
            p.name = jp.at("name").get<std::string>();
            p.min_value = jp.value("min", -1.0);
            p.max_value = jp.value("max", 1.0);
            p.coupling = scale_coupling_from_string(jp.value("scale_coupling", "none"));
            r.params.push_back(std::move(p));
        }
        for (const auto& js : jr.value("slots", nlohmann::json::array())) {
            DiscreteSlot s;
            s.name = js.at("name").get<std::string>();
            for (const auto& jo : js.at("options")) {
                s.options.push_back({jo.at("asset").get<std::string>(),
                                     jo.at("guid").get<std::string>()});
            }
            r.slots.push_back(std::move(s));
        }
        schema.regions.push_back(std::move(r));
    }
    schema.scale_param_name = j.value("scale_param_name", std::string());
    schema.scale_gain = j.value("scale_gain", 0.2);
    schema.validate();
    return schema;
}

} // namespace paraface
