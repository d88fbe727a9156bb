/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tests/test_cli.cpp
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

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "paraface/paraface.hpp"
#include "test_util.hpp"

using namespace paraface;

namespace {

struct CliResult {
    int exit_code = 0;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args) {
    testutil::TempDir dir("cli_io");
    const std::string out_path = dir.file("out.txt");
    const std::string err_path = dir.file("err.txt");
    const std::string cmd =
        std::string(PARAFACE_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out_path);
    r.err = read_text_file(err_path);
    return r;
}

/// Writes the config + schema pair the CLI commands need.
std::string write_config(const std::string& dir) {
    const ParameterSchema schema = toy_face_schema();
    write_text_file(dir + "/toy_schema.json", schema_to_json(schema).dump(2) + "\n");
    nlohmann::json cfg{
        {"schema_path", "toy_schema.json"},
        {"canvas", 64},
        {"local_input", 32},
        {"seeds", {{"data", 101}, {"split", 202}, {"train", 303}}},
        {"eval_fraction", 0.2},
        {"fit_split", "train"},
        {"adapter", "identity"},
        {"train",
         {{"fe", {{"lr", 0.1}, {"max_epochs", 8}, {"patience", 3}}},
          {"ft", {{"lr", 0.02}, {"max_epochs", 3}}}}}};
    write_text_file(dir + "/config.json", cfg.dump(2) + "\n");
    return dir + "/config.json";
}

} // namespace

TEST_CASE("cli end to end: gen-data, train, fit-ensemble, infer, report") {
    testutil::TempDir dir("cli_e2e");
    const std::string config = write_config(dir.path());

    SECTION("gen-data is digest-deterministic and --jobs does not matter") {
        const CliResult a =
            run_cli("gen-data --config " + config + " --n 6 --out " + dir.file("da"));
        REQUIRE(a.exit_code == 0);
        const CliResult b = run_cli("gen-data --config " + config + " --n 6 --jobs 3 --out " +
                                    dir.file("db"));
        REQUIRE(b.exit_code == 0);
        CHECK(read_text_file(dir.file("da/manifest.jsonl")) ==
              read_text_file(dir.file("db/manifest.jsonl")));
        CHECK(sha256_file(dir.file("da/images/s000002.png")) ==
              sha256_file(dir.file("db/images/s000002.png")));
    }

    SECTION("pipeline smoke: train aggregate, fit, infer, report") {
        REQUIRE(run_cli("gen-data --config " + config + " --n 14 --out " + dir.file("data"))
                    .exit_code == 0);
        REQUIRE(run_cli("train --config " + config + " --data " + dir.file("data") +
                        " --cell complete,full,fe,- --out " + dir.file("models/aggregate"))
                    .exit_code == 0);
        REQUIRE(run_cli("fit-ensemble --config " + config + " --data " + dir.file("data") +
                        " --models " + dir.file("models") + " --out " + dir.file("ens"))
                    .exit_code == 0);
        CHECK(std::ifstream(dir.file("ens/weights.json")).good());
        CHECK(std::ifstream(dir.file("ens/ensemble.json")).good());

        // Inference against a generated sample, using its true landmarks.
        const DatasetManifest m = load_dataset(dir.file("data"));
        const SampleMeta& s = m.samples[0];
        char landmarks[128];
        std::snprintf(landmarks, sizeof(landmarks), "%.6f,%.6f,%.6f,%.6f", s.left_eye.x,
                      s.left_eye.y, s.right_eye.x, s.right_eye.y);
        const CliResult infer =
            run_cli("infer --config " + config + " --ensemble " + dir.file("ens") + " --image " +
                    dir.file("data/" + s.image_path) + " --landmarks " + landmarks);
        REQUIRE(infer.exit_code == 0);
        // Output is a valid canonical mhm recipe.
        const ParameterSchema schema = toy_face_schema();
        const Recipe parsed = parse_mhm(infer.out, schema);
        CHECK(serialize_mhm(parsed, schema) == infer.out);

        // Missing landmarks name the registration stage, nonzero exit.
        const CliResult no_lm =
            run_cli("infer --config " + config + " --ensemble " + dir.file("ens") + " --image " +
                    dir.file("data/" + s.image_path));
        CHECK(no_lm.exit_code != 0);
        CHECK(no_lm.err.find("stage=registration") != std::string::npos);

        // Reconstruction report runs and writes its tables.
        const CliResult rep =
            run_cli("report --config " + config + " --ensemble " + dir.file("ens") + " --eval " +
                    dir.file("data") + " --out " + dir.file("rep"));
        REQUIRE(rep.exit_code == 0);
        CHECK(std::ifstream(dir.file("rep/reconstruction.csv")).good());
        CHECK(read_text_file(dir.file("rep/reconstruction.txt")).find("adapter") !=
              std::string::npos);
    }

    SECTION("argument errors are single-line and machine-parsable") {
        const CliResult bad = run_cli("train --config " + config + " --data /nonexistent" +
                                      " --cell bogus --out " + dir.file("x"));
        CHECK(bad.exit_code != 0);
        CHECK(bad.err.rfind("error stage=", 0) == 0);
        CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);
    }
}
