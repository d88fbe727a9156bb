/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tests/test_schema.cpp
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

#include <set>

#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "paraface/schema.hpp"

using namespace paraface;

namespace {

ParameterSchema slots_only(const std::vector<int>& option_counts) {
    ParameterSchema s;
    SchemaRegion r;
    r.name = "r";
    for (std::size_t i = 0; i < option_counts.size(); ++i) {
        DiscreteSlot slot;
        slot.name = "slot" + std::to_string(i);
        for (int o = 0; o < option_counts[i]; ++o)
            slot.options.push_back({"a" + std::to_string(o),
                                    "g" + std::to_string(i) + "-" + std::to_string(o)});
        r.slots.push_back(slot);
    }
    s.regions.push_back(r);
    s.validate();
    return s;
}

/// Brute-force count of distinct discrete assignments by explicit enumeration.
std::uint64_t enumerate_assignments(const ParameterSchema& s) {
    std::vector<std::size_t> sizes;
    for (const auto& r : s.regions)
        for (const auto& slot : r.slots) sizes.push_back(slot.options.size());
    std::vector<std::size_t> state(sizes.size(), 0);
    std::uint64_t count = 0;
    for (;;) {
        ++count;
        std::size_t i = 0;
        while (i < state.size()) {
            if (++state[i] < sizes[i]) break;
            state[i] = 0;
            ++i;
        }
        if (i == state.size()) break;
    }
    return count;
}

} // namespace

TEST_CASE("combinatorial complexity matches brute-force enumeration") {
    CHECK(combinatorial_complexity(slots_only({})) == 1);  // empty product
    const ParameterSchema s345 = slots_only({3, 4, 5});
    CHECK(combinatorial_complexity(s345) == 60);
    CHECK(combinatorial_complexity(s345) == enumerate_assignments(s345));
    const ParameterSchema toy = toy_face_schema();
    CHECK(combinatorial_complexity(toy) == enumerate_assignments(toy));
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> counts;
        const int n_slots = 1 + int(rng.uniform_index(6));
        for (int i = 0; i < n_slots; ++i) counts.push_back(1 + int(rng.uniform_index(9)));
        const ParameterSchema s = slots_only(counts);
        CHECK(combinatorial_complexity(s) == enumerate_assignments(s));
    }
}

TEST_CASE("constructed schema reaches the 1e11 combinatorial scale") {
    // 11 slots of 10 options: 10^11 distinct discrete assignments.
    const ParameterSchema big = slots_only(std::vector<int>(11, 10));
    const auto c = combinatorial_complexity(big);
    CHECK(c == 100000000000ull);
    CHECK(c >= 10000000000ull);
    CHECK(c <= 1000000000000ull);
}

TEST_CASE("combinatorial complexity overflow is an error") {
    const ParameterSchema huge = slots_only(std::vector<int>(40, 10));
    CHECK_THROWS_AS(combinatorial_complexity(huge), Error);
}

TEST_CASE("layout partitions the index set exactly") {
    const ParameterSchema schema = toy_face_schema();
    const TargetLayout layout = make_layout(schema);
    std::set<std::size_t> seen;
    std::size_t covered = 0;
    for (const auto& r : schema.regions) {
        auto [cont, disc] = group_slices(schema, r.name);
        for (const auto& range : cont)
            for (std::size_t i = range.begin; i < range.end; ++i) {
                CHECK(seen.insert(i).second);
                ++covered;
            }
        for (const auto& range : disc)
            for (std::size_t i = range.begin; i < range.end; ++i) {
                CHECK(seen.insert(i).second);
                ++covered;
            }
    }
    CHECK(covered == layout.size);
    CHECK(*seen.rbegin() == layout.size - 1);
    std::size_t expected = 0;
    for (const auto& r : schema.regions) {
        expected += r.params.size();
        for (const auto& s : r.slots) expected += s.options.size();
    }
    CHECK(layout.size == expected);
}

TEST_CASE("group_slices edge cases") {
    const ParameterSchema schema = toy_face_schema();
    CHECK_THROWS_AS(group_slices(schema, "chin"), LookupError);
    auto [cont, disc] = group_slices(schema, "head");
    CHECK(cont.size() == 1);
    CHECK(disc.empty());  // head region has no discrete slots

    // Single-region schema: ranges cover the whole vector.
    ParameterSchema single;
    SchemaRegion r;
    r.name = "only";
    r.params = {{"a", -1, 1, ScaleCoupling::none}, {"b", -1, 1, ScaleCoupling::none}};
    r.slots = {{"s", {{"x", "g0"}, {"y", "g1"}}}};
    single.regions.push_back(r);
    single.validate();
    auto [c2, d2] = group_slices(single, "only");
    CHECK(c2.size() == 1);
    CHECK(c2[0].begin == 0);
    CHECK(c2[0].end == 2);
    CHECK(d2.size() == 1);
    CHECK(d2[0].end == make_layout(single).size);
}

TEST_CASE("schema invariants are enforced") {
    ParameterSchema s = toy_face_schema();
    s.regions.push_back(s.regions.front());
    CHECK_THROWS_AS(s.validate(), ValidationError);

    ParameterSchema bad_range = toy_face_schema();
    bad_range.regions[0].params[0].min_value = 2.0;
    bad_range.regions[0].params[0].max_value = -2.0;
    CHECK_THROWS_AS(bad_range.validate(), ValidationError);

    ParameterSchema empty_slot = toy_face_schema();
    empty_slot.regions[1].slots[0].options.clear();
    CHECK_THROWS_AS(empty_slot.validate(), ValidationError);

    ParameterSchema dup_guid = toy_face_schema();
    dup_guid.regions[1].slots[0].options[1].guid = dup_guid.regions[1].slots[0].options[0].guid;
    CHECK_THROWS_AS(dup_guid.validate(), ValidationError);

    ParameterSchema bad_scale = toy_face_schema();
    bad_scale.scale_param_name = "head/nope";
    CHECK_THROWS_AS(bad_scale.validate(), ValidationError);
}

TEST_CASE("schema json round trip is canonical") {
    const ParameterSchema schema = toy_face_schema();
    const auto j = schema_to_json(schema);
    const ParameterSchema back = schema_from_json(j);
    CHECK(schema_to_json(back).dump() == j.dump());
    CHECK(back.scale_param_name == schema.scale_param_name);
    CHECK(back.regions.size() == schema.regions.size());
    CHECK(schema_from_json(j).find_param("eyes/spread")->coupling == ScaleCoupling::exp_size);
}
