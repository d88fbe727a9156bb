/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tests/test_ensemble.cpp
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

#include "paraface/ensemble.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "test_util.hpp"

using namespace paraface;

namespace {

/// Brute-force grid argmin of the pair objective over w in [-2, 2].
double grid_argmin(const std::vector<double>& l, const std::vector<double>& g,
                   const std::vector<double>& t, double step = 1e-4) {
    double best_w = -2.0, best_e = std::numeric_limits<double>::infinity();
    for (double w = -2.0; w <= 2.0 + 1e-12; w += step) {
        double e = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            const double d = w * l[i] + (1.0 - w) * g[i] - t[i];
            e += d * d;
        }
        if (e < best_e) {
            best_e = e;
            best_w = w;
        }
    }
    return best_w;
}

double pair_objective(double w, const std::vector<double>& l, const std::vector<double>& g,
                      const std::vector<double>& t) {
    double e = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        const double d = w * l[i] + (1.0 - w) * g[i] - t[i];
        e += d * d;
    }
    return e;
}

} // namespace

TEST_CASE("pair weights: exact-local and degenerate cases") {
    SECTION("local == target (non-degenerate) -> w = 1") {
        const std::vector<double> l{0.3, -0.7, 1.2};
        const std::vector<double> g{0.1, 0.0, 0.4};
        CHECK(fit_weights_pair(l, g, l) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("local == global -> 0.5 by the degeneracy rule") {
        const std::vector<double> l{0.3, -0.7, 1.2};
        CHECK(fit_weights_pair(l, l, {0.0, 0.1, 0.2}) == 0.5);
    }
    SECTION("spec instance matches the grid oracle") {
        const std::vector<double> l{1.0, 0.0, 2.0};
        const std::vector<double> g{0.0, 1.0, 1.0};
        const std::vector<double> t{0.5, 0.5, 1.8};
        const double w = fit_weights_pair(l, g, t);
        CHECK(w == Catch::Approx(grid_argmin(l, g, t)).margin(1e-3));
    }
    SECTION("errors") {
        CHECK_THROWS_AS(fit_weights_pair({1.0}, {1.0, 2.0}, {1.0}), EnsembleError);
        CHECK_THROWS_AS(fit_weights_pair({}, {}, {}), EnsembleError);
        CHECK_THROWS_AS(
            fit_weights_pair({std::numeric_limits<double>::quiet_NaN()}, {0.0}, {0.0}),
            EnsembleError);
    }
}

TEST_CASE("pair weights match brute-force grid search on random instances") {
    Rng rng(808);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 2 + rng.uniform_index(6);
        std::vector<double> l(n), g(n), t(n);
        for (std::size_t j = 0; j < n; ++j) {
            l[j] = rng.uniform(-1.0, 1.0);
            g[j] = rng.uniform(-1.0, 1.0);
            t[j] = rng.uniform(-1.0, 1.0);
        }
        const double w = fit_weights_pair(l, g, t);
        if (w < -2.0 || w > 2.0) continue;  // oracle grid covers [-2, 2]
        CHECK(w == Catch::Approx(grid_argmin(l, g, t)).margin(1e-3));
    }
}

TEST_CASE("general weights: constrained least squares") {
    Rng rng(909);
    SECTION("single contributor is forced to 1") {
        CHECK(fit_weights_general({{0.4, 0.6}}, {1.0, 2.0}) == std::vector<double>{1.0});
    }
    SECTION("two contributors agree with the pair formula") {
        for (int i = 0; i < 50; ++i) {
            std::vector<double> l(5), g(5), t(5);
            for (std::size_t j = 0; j < 5; ++j) {
                l[j] = rng.uniform(-1.0, 1.0);
                g[j] = rng.uniform(-1.0, 1.0);
                t[j] = rng.uniform(-1.0, 1.0);
            }
            const double w = fit_weights_pair(l, g, t);
            const std::vector<double> wg = fit_weights_general({l, g}, t);
            CHECK(wg[0] == Catch::Approx(w).margin(1e-9));
            CHECK(wg[0] + wg[1] == Catch::Approx(1.0).margin(1e-9));
        }
    }
    SECTION("three contributors beat every vertex and the uniform mix") {
        for (int i = 0; i < 30; ++i) {
            std::vector<std::vector<double>> p(3, std::vector<double>(7));
            std::vector<double> t(7);
            for (std::size_t j = 0; j < 7; ++j) {
                for (auto& v : p) v[j] = rng.uniform(-1.0, 1.0);
                t[j] = rng.uniform(-1.0, 1.0);
            }
            const std::vector<double> w = fit_weights_general(p, t);
            double sum = 0.0;
            for (const double x : w) sum += x;
            CHECK(sum == Catch::Approx(1.0).margin(1e-9));
            auto objective = [&](const std::vector<double>& weights) {
                double e = 0.0;
                for (std::size_t j = 0; j < t.size(); ++j) {
                    double blend = 0.0;
                    for (std::size_t k = 0; k < weights.size(); ++k) blend += weights[k] * p[k][j];
                    e += (blend - t[j]) * (blend - t[j]);
                }
                return e;
            };
            const double best = objective(w);
            CHECK(best <= objective({1.0, 0.0, 0.0}) + 1e-9);
            CHECK(best <= objective({0.0, 1.0, 0.0}) + 1e-9);
            CHECK(best <= objective({0.0, 0.0, 1.0}) + 1e-9);
            CHECK(best <= objective({1.0 / 3, 1.0 / 3, 1.0 / 3}) + 1e-9);
        }
    }
    SECTION("duplicated predictors share weight (minimum-norm deviation)") {
        std::vector<double> a{0.5, -0.2, 0.9, 0.0};
        std::vector<double> t{0.4, -0.1, 1.0, 0.1};
        const std::vector<double> w = fit_weights_general({a, a, a}, t);
        CHECK(w[0] == Catch::Approx(w[1]).margin(1e-9));
        CHECK(w[1] == Catch::Approx(w[2]).margin(1e-9));
        CHECK(w[0] + w[1] + w[2] == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("fit_ensemble covers coordinates per contributor count") {
    // Layout with two coordinates; two "models": a local predicting only c0,
    // an aggregate predicting both.
    TargetLayout layout;
    layout.size = 2;
    layout.coordinate_names = {"r/x", "r/y"};
    PredictionMatrix local;
    local.coordinate_names = {"r/x"};
    PredictionMatrix agg;
    agg.coordinate_names = {"r/x", "r/y"};
    Rng rng(277);
    std::vector<std::vector<double>> targets;
    for (int i = 0; i < 40; ++i) {
        const double truth_x = rng.uniform(-1.0, 1.0);
        const double truth_y = rng.uniform(-1.0, 1.0);
        targets.push_back({truth_x, truth_y});
        local.rows.push_back({truth_x + 0.05 * rng.gaussian()});
        agg.rows.push_back({truth_x + 0.4 * rng.gaussian(), truth_y + 0.1 * rng.gaussian()});
    }
    std::vector<std::size_t> idx(40);
    std::iota(idx.begin(), idx.end(), 0);
    const EnsembleWeights w =
        fit_ensemble({"local", "agg"}, {local, agg}, targets, layout, idx);
    // c0 has two contributors: accurate local should dominate.
    CHECK(w.by_coordinate.at("r/x").at("local") > 0.7);
    CHECK(w.by_coordinate.at("r/x").at("local") + w.by_coordinate.at("r/x").at("agg") ==
          Catch::Approx(1.0).margin(1e-9));
    // c1 is aggregate-only: weight 1.
    CHECK(w.by_coordinate.at("r/y").at("agg") == 1.0);

    SECTION("missing contributors are an error") {
        TargetLayout bigger = layout;
        bigger.size = 3;
        bigger.coordinate_names.push_back("r/z");
        CHECK_THROWS_AS(fit_ensemble({"local", "agg"}, {local, agg}, targets, bigger, idx),
                        EnsembleError);
    }
}

TEST_CASE("a mean-predicting local loses its weight to the aggregate") {
    // The global-placement story: a coordinate the local model can only
    // predict at the dataset mean, while the aggregate tracks the truth.
    Rng rng(515);
    PredictionMatrix local, agg;
    local.coordinate_names = {"eyes/spread"};
    agg.coordinate_names = {"eyes/spread"};
    TargetLayout layout;
    layout.size = 1;
    layout.coordinate_names = {"eyes/spread"};
    std::vector<std::vector<double>> targets;
    for (int i = 0; i < 200; ++i) {
        const double truth = rng.uniform(-1.0, 1.0);
        targets.push_back({truth});
        local.rows.push_back({0.0 + 0.02 * rng.gaussian()});     // stuck at the mean
        agg.rows.push_back({truth + 0.05 * rng.gaussian()});     // informative
    }
    std::vector<std::size_t> idx(200);
    std::iota(idx.begin(), idx.end(), 0);
    const EnsembleWeights w = fit_ensemble({"local", "agg"}, {local, agg}, targets, layout, idx);
    const double wl = w.by_coordinate.at("eyes/spread").at("local");
    CHECK(std::abs(wl) < 0.2);
    // Cross-check against the brute-force grid oracle.
    std::vector<double> l, g, t;
    for (int i = 0; i < 200; ++i) {
        l.push_back(local.rows[i][0]);
        g.push_back(agg.rows[i][0]);
        t.push_back(targets[i][0]);
    }
    CHECK(wl == Catch::Approx(grid_argmin(l, g, t)).margin(1e-3));
}

TEST_CASE("fitted weights are invariant to consistent sample permutation") {
    Rng rng(616);
    std::vector<double> l(60), g(60), t(60);
    for (std::size_t i = 0; i < 60; ++i) {
        l[i] = rng.uniform(-1.0, 1.0);
        g[i] = rng.uniform(-1.0, 1.0);
        t[i] = rng.uniform(-1.0, 1.0);
    }
    const double w1 = fit_weights_pair(l, g, t);
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> lp(60), gp(60), tp(60);
    for (std::size_t i = 0; i < 60; ++i) {
        lp[i] = l[perm[i]];
        gp[i] = g[perm[i]];
        tp[i] = t[perm[i]];
    }
    CHECK(fit_weights_pair(lp, gp, tp) == Catch::Approx(w1).margin(1e-12));
}

TEST_CASE("ensemble weights round-trip through JSON") {
    EnsembleWeights w;
    w.by_coordinate["a/x"] = {{"local", 0.75}, {"agg", 0.25}};
    w.by_coordinate["b/y"] = {{"agg", 1.0}};
    const EnsembleWeights back = ensemble_weights_from_json(ensemble_weights_to_json(w));
    CHECK(back.by_coordinate == w.by_coordinate);
}

namespace {

/// Small trained ensemble over a real rendered dataset (fast FE cells).
struct TinyPipeline {
    ParameterSchema schema = toy_face_schema();
    TargetLayout layout = make_layout(schema);
    DatasetManifest manifest;
    std::vector<std::vector<double>> targets;
    SplitIndices split;
    TrainedModel aggregate;
    std::vector<TrainedModel> locals;

    explicit TinyPipeline(const std::string& dir) {
        manifest = generate_dataset(schema, 24, 515151, AugmentationRanges{}, dir);
        targets = encoded_targets(manifest, schema);
        split = split_dataset(24, 0.2, 31);
        TrainConfig agg_cfg;
        agg_cfg.mode = TrainMode::feature_extraction;
        agg_cfg.input = InputSpec::full_frame;
        agg_cfg.complete_target = true;
        agg_cfg.head = HeadKind::mixed;
        agg_cfg.lr = 0.1;
        agg_cfg.max_epochs = 6;
        agg_cfg.seed = 1;
        const TrainInputs full = build_inputs(manifest, schema, InputSpec::full_frame, "", 32);
        aggregate = train_on(full, targets, schema, layout, agg_cfg, split, nullptr,
                             "aggregate", manifest.manifest_sha256);
        for (const std::string region : {"nose"}) {
            TrainConfig c = agg_cfg;
            c.input = InputSpec::crop;
            c.input_region = region;
            c.complete_target = false;
            c.target_region = region;
            c.head = HeadKind::regression;
            const TrainInputs crop_in = build_inputs(manifest, schema, InputSpec::crop, region, 32);
            locals.push_back(train_on(crop_in, targets, schema, layout, c, split, nullptr,
                                      "local_" + region + "_reg", manifest.manifest_sha256));
        }
    }

    EnsembleModel make(double local_weight) const {
        EnsembleModel e;
        e.schema = schema;
        e.layout = layout;
        e.aggregate = aggregate;
        e.locals = locals;
        e.registration = RegistrationConfig::for_canvas(64);
        e.local_input = 32;
        for (const auto& name : layout.coordinate_names)
            e.weights.by_coordinate[name][aggregate.model_id] = 1.0;
        for (const auto& m : locals)
            for (const auto& name : m.slice.coordinate_names) {
                e.weights.by_coordinate[name][m.model_id] = local_weight;
                e.weights.by_coordinate[name][aggregate.model_id] = 1.0 - local_weight;
            }
        e.validate();
        return e;
    }
};

} // namespace

TEST_CASE("ensemble_predict reduces to its parts at weights 0 and 1") {
    testutil::TempDir dir("ens_reduce");
    const TinyPipeline pipe(dir.path());
    const ImageF raw = read_png(pipe.manifest.image_file(0));
    const SampleMeta& s = pipe.manifest.samples[0];
    auto [registered, rt] =
        register_image(raw, s.left_eye, s.right_eye, RegistrationConfig::for_canvas(64));

    // Weight 0 on locals: identical to the aggregate-only decode.
    const EnsembleModel agg_only = pipe.make(0.0);
    const EnsemblePrediction pa = ensemble_predict_registered(agg_only, registered);
    const std::vector<double> agg_pred = predict(pipe.aggregate, registered);
    Recipe agg_recipe = decode(agg_pred, pipe.schema);
    CHECK(pa.recipe == agg_recipe);

    // Weight 1 on locals: the local coordinates come from the local model.
    const EnsembleModel local_only = pipe.make(1.0);
    const EnsemblePrediction pl = ensemble_predict_registered(local_only, registered);
    const ImageF cropped = crop_region(registered, "nose", 32);
    const std::vector<double> local_pred = predict(pipe.locals[0], cropped);
    for (std::size_t i = 0; i < local_pred.size(); ++i) {
        const std::size_t full_idx = pipe.locals[0].slice.coord_indices[i];
        CHECK(pl.blended[full_idx] == Catch::Approx(local_pred[i]).margin(1e-12));
    }
    // Non-local coordinates still come from the aggregate.
    CHECK(pl.blended[0] == Catch::Approx(agg_pred[0]).margin(1e-12));
}

TEST_CASE("ensemble artifacts round-trip through save/load") {
    testutil::TempDir dir("ens_io");
    const TinyPipeline pipe(dir.file("data"));
    EnsembleModel e = pipe.make(0.6);
    e.adapter_spec = "posterize:4";
    e.adapter = make_adapter(e.adapter_spec);
    save_ensemble(e, dir.file("ens"));
    const EnsembleModel back = load_ensemble(dir.file("ens"), pipe.schema);
    CHECK(back.aggregate.model_id == "aggregate");
    CHECK(back.locals.size() == 1);
    CHECK(back.adapter_spec == "posterize:4");
    CHECK(back.weights.by_coordinate == e.weights.by_coordinate);
    const ImageF raw = read_png(pipe.manifest.image_file(1));
    const SampleMeta& s = pipe.manifest.samples[1];
    const EnsemblePrediction p1 = ensemble_predict(e, raw, s.left_eye, s.right_eye);
    const EnsemblePrediction p2 = ensemble_predict(back, raw, s.left_eye, s.right_eye);
    CHECK(p1.blended == p2.blended);
    CHECK(p1.recipe == p2.recipe);
}
