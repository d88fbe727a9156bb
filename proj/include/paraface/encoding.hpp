/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/encoding.hpp
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
#include <vector>

#include "paraface/common.hpp"
#include "paraface/recipe.hpp"
#include "paraface/schema.hpp"

namespace paraface {

/**
 * Flat heterogeneous target vector: continuous coordinates normalized to
 * [-1, 1], discrete slots as one-hot slices, with the layout mapping
 * indices back to the schema.
 */
struct TargetVector {
    std::vector<double> values;
    TargetLayout layout;
};

/// Affine map from declared range to [-1, 1]. Exact identity for [-1, 1].
inline double encode_continuous(double v, const ContinuousParam& p) {
    const double center = 0.5 * (p.min_value + p.max_value);
    const double half = 0.5 * (p.max_value - p.min_value);
    return (v - center) / half;
}

inline double decode_continuous(double x, const ContinuousParam& p) {
    const double center = 0.5 * (p.min_value + p.max_value);
    const double half = 0.5 * (p.max_value - p.min_value);
    return center + std::clamp(x, -1.0, 1.0) * half;
}

inline TargetVector encode(const Recipe& recipe, const ParameterSchema& schema) {
    const Recipe r = validate_recipe(recipe, schema);
    TargetVector t;
    t.layout = make_layout(schema);
    t.values.assign(t.layout.size, 0.0);
    for (std::size_t ri = 0; ri < schema.regions.size(); ++ri) {
        const SchemaRegion& region = schema.regions[ri];
        const RegionSlices& rs = t.layout.regions[ri];
        std::size_t idx = rs.continuous.begin;
        for (const auto& p : region.params)
            t.values[idx++] = encode_continuous(r.continuous.at(region.name + "/" + p.name), p);
        for (std::size_t si = 0; si < region.slots.size(); ++si) {
            const DiscreteSlot& slot = region.slots[si];
            const auto opt = schema.option_index(slot, r.discrete.at(slot.name));
            t.values[rs.slots[si].range.begin + *opt] = 1.0;
        }
    }
    return t;
}

/// Argmax with ties broken toward the lowest index.
inline std::size_t argmax_lowest(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/**
 * Inverse of encode: continuous coordinates are clamped to [-1, 1] and
 * mapped back to declared ranges; each one-hot slice decodes by argmax
 * (lowest index wins ties). Throws LayoutError on length mismatch.
 */
inline Recipe decode(const TargetVector& t, const ParameterSchema& schema) {
    const TargetLayout layout = make_layout(schema);
    if (t.values.size() != layout.size)
        throw LayoutError("vector length " + std::to_string(t.values.size()) +
                          " does not match schema layout size " + std::to_string(layout.size));
    Recipe r;
    for (std::size_t ri = 0; ri < schema.regions.size(); ++ri) {
        const SchemaRegion& region = schema.regions[ri];
        const RegionSlices& rs = layout.regions[ri];
        std::size_t idx = rs.continuous.begin;
        for (const auto& p : region.params)
            r.continuous[region.name + "/" + p.name] = decode_continuous(t.values[idx++], p);
        for (std::size_t si = 0; si < region.slots.size(); ++si) {
            const DiscreteSlot& slot = region.slots[si];
            const IndexRange& range = rs.slots[si].range;
            const std::size_t opt = argmax_lowest(t.values.data() + range.begin, range.size());
            r.discrete[slot.name] = slot.options[opt].guid;
        }
    }
    return r;
}

/// Decodes a model-output vector that may not be exactly one-hot; same rules.
inline Recipe decode(const std::vector<double>& values, const ParameterSchema& schema) {
    TargetVector t;
    t.values = values;
    t.layout = make_layout(schema);
    return decode(t, schema);
}

} // namespace paraface
