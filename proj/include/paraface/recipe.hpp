/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/recipe.hpp
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

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "paraface/common.hpp"
#include "paraface/schema.hpp"

namespace paraface {

/**
 * One character's parameter assignment: continuous values keyed by
 * "region/param", discrete selections keyed by slot name (value = option
 * guid), plus verbatim unrecognized lines preserved in order.
 */
struct Recipe {
    std::map<std::string, double> continuous;
    std::map<std::string, std::string> discrete;
    std::vector<std::string> extras;

    bool operator==(const Recipe& other) const = default;
};

/// Recipe with every schema parameter at its default (0 for continuous,
/// option 0 for every slot).
inline Recipe default_recipe(const ParameterSchema& schema) {
    Recipe r;
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) r.continuous[region.name + "/" + p.name] = 0.0;
        for (const auto& s : region.slots) r.discrete[s.name] = s.options.front().guid;
    }
    return r;
}

/**
 * Checks that every key resolves against the schema, every continuous value
 * lies within its declared range, and fills schema defaults for omissions.
 * Returns the completed recipe; throws ValidationError listing all offending
 * keys otherwise.
 */
inline Recipe validate_recipe(const Recipe& recipe, const ParameterSchema& schema) {
    std::vector<std::string> bad;
    Recipe out = default_recipe(schema);
    for (const auto& [name, value] : recipe.continuous) {
        const ContinuousParam* p = schema.find_param(name);
        if (!p) {
            bad.push_back("unknown parameter: " + name);
            continue;
        }
        if (!std::isfinite(value) || value < p->min_value || value > p->max_value) {
            bad.push_back("out of range [" + std::to_string(p->min_value) + ", " +
                          std::to_string(p->max_value) + "]: " + name + " = " +
                          std::to_string(value));
            continue;
        }
        out.continuous[name] = value;
    }
    for (const auto& [slot_name, guid] : recipe.discrete) {
        auto [region, slot] = schema.find_slot(slot_name);
        if (!slot) {
            bad.push_back("unknown slot: " + slot_name);
            continue;
        }
        if (!schema.option_index(*slot, guid)) {
            bad.push_back("unknown option guid for slot " + slot_name + ": " + guid);
            continue;
        }
        out.discrete[slot_name] = guid;
    }
    if (!bad.empty()) {
        std::string msg = "recipe validation failed:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw ValidationError(msg);
    }
    out.extras = recipe.extras;
    return out;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream in(line);
    std::string t;
    while (in >> t) tokens.push_back(t);
    return tokens;
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

inline std::string format_6dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace detail

/**
 * Parses mhm-style text. Interpreted lines:
 *   modifier <region>/<name> <float>
 *   <slot> <asset_name> <guid>        (for slots declared in the schema)
 * Everything else (camera, material, name, version, out-of-schema modifiers)
 * is preserved verbatim, in order, in Recipe::extras. Omitted parameters and
 * slots take schema defaults.
 *
 * Throws ParseError (with line number) for a modifier line whose value does
 * not parse as a decimal float, and Error("unknown-asset") for a recognized
 * slot whose guid is not in the schema.
 */
inline Recipe parse_mhm(const std::string& text, const ParameterSchema& schema) {
    Recipe r = default_recipe(schema);
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tokens = detail::split_ws(line);
        if (tokens.size() == 3 && tokens[0] == "modifier") {
            if (schema.find_param(tokens[1])) {
                double value = 0.0;
                if (!detail::parse_double(tokens[2], value))
                    throw ParseError("malformed modifier value '" + tokens[2] + "'", line_no);
                r.continuous[tokens[1]] = value;
                continue;
            }
        } else if (tokens.size() == 3) {
            auto [region, slot] = schema.find_slot(tokens[0]);
            if (slot) {
                if (!schema.option_index(*slot, tokens[2]))
                    throw Error("unknown-asset", "line " + std::to_string(line_no) +
                                                     ": slot " + tokens[0] +
                                                     " has no option with guid " + tokens[2]);
                r.discrete[tokens[0]] = tokens[2];
                continue;
            }
        }
        if (!line.empty()) r.extras.push_back(line);
    }
    return r;
}

/**
 * Canonical serialization: modifier lines in schema order (values at 6
 * decimal places), then discrete lines in schema order, then extras
 * verbatim. LF line endings. The recipe is validated first.
 */
inline std::string serialize_mhm(const Recipe& recipe, const ParameterSchema& schema) {
    const Recipe r = validate_recipe(recipe, schema);
    std::string out;
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) {
            const std::string full = region.name + "/" + p.name;
            out += "modifier " + full + " " + detail::format_6dp(r.continuous.at(full)) + "\n";
        }
    }
    for (const auto& region : schema.regions) {
        for (const auto& s : region.slots) {
            const std::string& guid = r.discrete.at(s.name);
            const auto idx = schema.option_index(s, guid);
            out += s.name + " " + s.options[*idx].asset + " " + guid + "\n";
        }
    }
    for (const auto& e : r.extras) out += e + "\n";
    return out;
}

/**
 * Effective value of one parameter with the global scale folded in. The
 * renderer consumes parameters only through this function, and
 * normalize_scale rewrites stored values to exactly these effective values,
 * which is what makes scale normalization render-exact.
 */
inline double resolve_effective_value(double value, ScaleCoupling coupling, double scale_value,
                                      double gain) {
    switch (coupling) {
        case ScaleCoupling::exp_size: return value + scale_value;
        case ScaleCoupling::linear_offset: return value * std::exp2(gain * scale_value);
        default: return value;
    }
}

/**
 * Sets the scale parameter to its reference value (0) and rewrites each
 * scale-coupled parameter to its effective value, leaving the rendered
 * geometry unchanged. Idempotent. Throws if the schema declares no scale
 * parameter, or if a rewritten value leaves its declared range.
 */
inline Recipe normalize_scale(const Recipe& recipe, const ParameterSchema& schema) {
    if (schema.scale_param_name.empty())
        throw Error("unsupported-operation", "schema declares no scale parameter");
    Recipe r = validate_recipe(recipe, schema);
    const double scale_value = r.continuous.at(schema.scale_param_name);
    std::vector<std::string> bad;
    for (const auto& region : schema.regions) {
        for (const auto& p : region.params) {
            if (p.coupling == ScaleCoupling::none) continue;
            const std::string full = region.name + "/" + p.name;
            const double eff = resolve_effective_value(r.continuous.at(full), p.coupling,
                                                       scale_value, schema.scale_gain);
            if (eff < p.min_value || eff > p.max_value)
                bad.push_back(full + " -> " + std::to_string(eff));
            r.continuous[full] = eff;
        }
    }
    if (!bad.empty()) {
        std::string msg = "scale normalization leaves declared range:";
        for (const auto& b : bad) msg += " " + b;
        throw ValidationError(msg);
    }
    r.continuous[schema.scale_param_name] = 0.0;
    return r;
}

} // namespace paraface
