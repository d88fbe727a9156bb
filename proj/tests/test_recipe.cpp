/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tests/test_recipe.cpp
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

#include "paraface/recipe.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "test_util.hpp"

using namespace paraface;

namespace {

/// A small makehuman-flavoured schema for codec tests.
ParameterSchema mh_schema() {
    ParameterSchema s;
    SchemaRegion head;
    head.name = "head";
    head.params = {{"head-oval", -1, 1, ScaleCoupling::none},
                   {"head-age-decr|incr", -1, 1, ScaleCoupling::none}};
    SchemaRegion eyes;
    eyes.name = "eyes";
    eyes.params = {{"r-eye-bag-in|out", -1, 1, ScaleCoupling::none}};
    eyes.slots = {{"eyelashes",
                   {{"eyelashes01", "3a9d8b40-4bca-46ff-b120-9a197e57eb78"},
                    {"eyelashes02", "04a0718e-aaa4-4480-a013-ad51703bef6b"}}},
                  {"eyebrows",
                   {{"eyebrow004", "eb028b6d-3ff8-40c7-a2ea-4d9aa808b38d"},
                    {"eyebrow007", "cb2d1b4c-4bd4-4d5b-8b84-2b6a9e5f3c1a"}}}};
    s.regions.push_back(head);
    s.regions.push_back(eyes);
    s.validate();
    return s;
}

} // namespace

TEST_CASE("parse_mhm maps modifier and slot lines, preserves the rest") {
    const ParameterSchema schema = mh_schema();
    const std::string text =
        "version v1.2.0\n"
        "modifier head/head-oval 0.255893\n"
        "modifier head/head-age-decr|incr 0.068249\n"
        "modifier forehead/forehead-trans-backward|forward 0.069743\n"
        "eyelashes eyelashes02 04a0718e-aaa4-4480-a013-ad51703bef6b\n"
        "camera 0.0 0.0 0.0 0.0 0.0 1.0\n";
    const Recipe r = parse_mhm(text, schema);
    CHECK(r.continuous.at("head/head-oval") == 0.255893);
    CHECK(r.continuous.at("head/head-age-decr|incr") == 0.068249);
    CHECK(r.discrete.at("eyelashes") == "04a0718e-aaa4-4480-a013-ad51703bef6b");
    // Out-of-schema modifier and camera/version lines pass through verbatim.
    REQUIRE(r.extras.size() == 3);
    CHECK(r.extras[0] == "version v1.2.0");
    CHECK(r.extras[1] == "modifier forehead/forehead-trans-backward|forward 0.069743");
    CHECK(r.extras[2] == "camera 0.0 0.0 0.0 0.0 0.0 1.0");
    // Omitted slot takes the schema default (option 0).
    CHECK(r.discrete.at("eyebrows") == "eb028b6d-3ff8-40c7-a2ea-4d9aa808b38d");
}

TEST_CASE("parse_mhm error paths") {
    const ParameterSchema schema = mh_schema();
    try {
        parse_mhm("modifier head/head-oval twelve\n", schema);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 1);
    }
    CHECK_THROWS_AS(parse_mhm("\nmodifier head/head-oval 1e\n", schema), ParseError);
    // Recognized slot, unknown guid.
    try {
        parse_mhm("eyelashes eyelashesXX 99999999-0000-0000-0000-000000000000\n", schema);
        FAIL("expected unknown-asset error");
    } catch (const Error& e) {
        CHECK(e.stage() == "unknown-asset");
    }
}

TEST_CASE("empty text parses to schema defaults") {
    const ParameterSchema schema = mh_schema();
    const Recipe r = parse_mhm("", schema);
    CHECK(r == default_recipe(schema));
    CHECK(r.extras.empty());
    CHECK(r.continuous.at("head/head-oval") == 0.0);
}

TEST_CASE("serialize_mhm canonical form") {
    const ParameterSchema schema = mh_schema();
    SECTION("default recipe prints zeros in schema order") {
        const std::string text = serialize_mhm(default_recipe(schema), schema);
        CHECK(text ==
              "modifier head/head-oval 0.000000\n"
              "modifier head/head-age-decr|incr 0.000000\n"
              "modifier eyes/r-eye-bag-in|out 0.000000\n"
              "eyelashes eyelashes01 3a9d8b40-4bca-46ff-b120-9a197e57eb78\n"
              "eyebrows eyebrow004 eb028b6d-3ff8-40c7-a2ea-4d9aa808b38d\n");
    }
    SECTION("extras reappear verbatim at the end") {
        Recipe r = default_recipe(schema);
        r.extras = {"name My Character", "camera 0 0 0"};
        const std::string text = serialize_mhm(r, schema);
        CHECK(text.find("name My Character\ncamera 0 0 0\n") != std::string::npos);
        CHECK(parse_mhm(text, schema) == r);
    }
    SECTION("figure-style snippet round-trips at 6 decimals") {
        const std::string text =
            "modifier head/head-oval 0.255893\n"
            "eyelashes eyelashes02 04a0718e-aaa4-4480-a013-ad51703bef6b\n";
        const Recipe r = parse_mhm(text, schema);
        const Recipe back = parse_mhm(serialize_mhm(r, schema), schema);
        CHECK(back.continuous.at("head/head-oval") ==
              Catch::Approx(0.255893).margin(5e-7));
        CHECK(back.discrete == r.discrete);
    }
}

TEST_CASE("canonical serialization is a fixpoint") {
    const ParameterSchema schema = toy_face_schema();
    Rng rng(2024);
    for (int i = 0; i < 50; ++i) {
        const Recipe r = testutil::random_recipe(schema, rng);
        const std::string s1 = serialize_mhm(r, schema);
        const Recipe p1 = parse_mhm(s1, schema);
        const std::string s2 = serialize_mhm(p1, schema);
        CHECK(s1 == s2);                      // byte-equal
        CHECK(parse_mhm(s2, schema) == p1);   // exact fixpoint
        for (const auto& [k, v] : r.continuous)
            CHECK(p1.continuous.at(k) == Catch::Approx(v).margin(5e-7));
        CHECK(p1.discrete == r.discrete);
    }
}

TEST_CASE("validation lists offending keys") {
    const ParameterSchema schema = mh_schema();
    Recipe r = default_recipe(schema);
    r.continuous["head/head-oval"] = 7.0;
    r.continuous["nose/unknown"] = 0.0;
    try {
        validate_recipe(r, schema);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("head/head-oval") != std::string::npos);
        CHECK(msg.find("nose/unknown") != std::string::npos);
    }
    Recipe bad_slot = default_recipe(schema);
    bad_slot.discrete["eyelashes"] = "not-a-guid";
    CHECK_THROWS_AS(validate_recipe(bad_slot, schema), ValidationError);
    CHECK_THROWS_AS(serialize_mhm(bad_slot, schema), ValidationError);
}

TEST_CASE("normalize_scale contract") {
    const ParameterSchema schema = toy_face_schema();
    SECTION("no scale parameter -> unsupported operation") {
        const ParameterSchema plain = mh_schema();
        try {
            normalize_scale(default_recipe(plain), plain);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.stage() == "unsupported-operation");
        }
    }
    SECTION("already at reference scale -> unchanged") {
        Rng rng(5);
        Recipe r = testutil::random_recipe(schema, rng);
        r.continuous["head/scale"] = 0.0;
        CHECK(normalize_scale(r, schema) == validate_recipe(r, schema));
    }
    SECTION("idempotence") {
        Rng rng(6);
        for (int i = 0; i < 50; ++i) {
            const Recipe r = testutil::random_normalizable_recipe(schema, rng);
            const Recipe once = normalize_scale(r, schema);
            CHECK(normalize_scale(once, schema) == once);
            CHECK(once.continuous.at("head/scale") == 0.0);
        }
    }
    SECTION("out-of-range rewrite is rejected") {
        Recipe r = default_recipe(schema);
        r.continuous["head/scale"] = 0.4;
        r.continuous["head/size"] = 1.4;  // 1.4 + 0.4 leaves [-1.5, 1.5]
        CHECK_THROWS_AS(normalize_scale(r, schema), ValidationError);
    }
}
