/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/eval.hpp
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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "paraface/adapt.hpp"
#include "paraface/common.hpp"
#include "paraface/dataset.hpp"
#include "paraface/ensemble.hpp"
#include "paraface/render.hpp"
#include "paraface/trainer.hpp"

namespace paraface {

// --------------------------------------------------------------------------
// Baseline and the baseline-relative inaccuracy metric
// --------------------------------------------------------------------------

/// Per-coordinate mean of encoded targets over the given rows: the constant
/// "average face" predictor.
inline std::vector<double> baseline_predictor(const std::vector<std::vector<double>>& targets,
                                              const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw Error("eval", "baseline over an empty dataset");
    std::vector<double> mean(targets[idx[0]].size(), 0.0);
    for (const std::size_t i : idx)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += targets[i][c];
    for (auto& v : mean) v /= double(idx.size());
    return mean;
}

/// Mean L1 over the selected coordinates and rows; preds indexed like targets.
inline double mean_l1(const std::vector<std::vector<double>>& preds,
                      const std::vector<std::vector<double>>& targets,
                      const std::vector<std::size_t>& rows,
                      const std::vector<std::size_t>& coords) {
    if (rows.empty() || coords.empty()) throw Error("eval", "empty rows or coordinate subset");
    double sum = 0.0;
    for (const std::size_t r : rows)
        for (const std::size_t c : coords) sum += std::abs(preds[r][c] - targets[r][c]);
    return sum / double(rows.size() * coords.size());
}

/**
 * mean L1(preds, targets) - mean L1(baseline, targets), restricted to the
 * given coordinates. Negative = better than the baseline.
 */
inline double inaccuracy_vs_baseline(const std::vector<std::vector<double>>& preds,
                                     const std::vector<std::vector<double>>& targets,
                                     const std::vector<double>& baseline,
                                     const std::vector<std::size_t>& rows,
                                     const std::vector<std::size_t>& coords) {
    double model_sum = 0.0, base_sum = 0.0;
    if (rows.empty() || coords.empty()) throw Error("eval", "empty rows or coordinate subset");
    for (const std::size_t r : rows) {
        for (const std::size_t c : coords) {
            model_sum += std::abs(preds[r][c] - targets[r][c]);
            base_sum += std::abs(baseline[c] - targets[r][c]);
        }
    }
    const double n = double(rows.size() * coords.size());
    return model_sum / n - base_sum / n;
}

// --------------------------------------------------------------------------
// Embedding distance harness
// --------------------------------------------------------------------------

/// Image-to-unit-vector function with an identifier.
struct Embedder {
    std::string id;
    std::function<std::vector<double>(const ImageF&)> fn;

    std::vector<double> embed(const ImageF& img) const { return fn(img); }
};

namespace detail {
inline std::vector<double> l2_normalize(std::vector<double> v) {
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        std::fill(v.begin(), v.end(), 0.0);
        if (!v.empty()) v[0] = 1.0;  // deterministic fallback for flat images
        return v;
    }
    for (auto& x : v) x /= norm;
    return v;
}
} // namespace detail

/// Downsample to 16x16, mean-subtract, L2-normalize.
inline Embedder default_embedder() {
    return {"default16", [](const ImageF& img) {
                const ImageF small = resize_bilinear(img, 16, 16);
                std::vector<double> v(small.pixels.begin(), small.pixels.end());
                double mean = 0.0;
                for (const double x : v) mean += x;
                mean /= double(v.size());
                for (auto& x : v) x -= mean;
                return detail::l2_normalize(std::move(v));
            }};
}

/// External embedder contract: `<cmd...> <in.png> <out.txt>`, exit 0, output
/// a whitespace-separated vector. The result is L2-normalized on load.
inline Embedder external_embedder(const std::vector<std::string>& command) {
    if (command.empty()) throw Error("eval", "empty external embedder command");
    const std::string id = "external:" + command.front();
    return {id, [command, id](const ImageF& img) {
                const std::string in_path = detail::temp_png_path("emb_in");
                const std::string out_path = detail::temp_png_path("emb_out") + ".txt";
                write_png(in_path, img);
                std::vector<std::string> argv = command;
                argv.push_back(in_path);
                argv.push_back(out_path);
                long timeout_ms = 30000;
                if (const char* env = std::getenv("PARAFACE_ADAPTER_TIMEOUT_MS"))
                    timeout_ms = std::atol(env);
                const int rc = detail::run_with_timeout(argv, timeout_ms);
                std::error_code ec;
                std::filesystem::remove(in_path, ec);
                if (rc != 0) {
                    std::filesystem::remove(out_path, ec);
                    throw Error("embedder", "embedder '" + id + "' failed (exit " +
                                                std::to_string(rc) + ")");
                }
                std::istringstream in(read_text_file(out_path));
                std::filesystem::remove(out_path, ec);
                std::vector<double> v;
                double x;
                while (in >> x) v.push_back(x);
                if (v.empty()) throw Error("embedder", "embedder '" + id + "' wrote no values");
                return detail::l2_normalize(std::move(v));
            }};
}

/// Cosine distance 1 - <e_a, e_b> on unit embeddings; in [0, 2].
inline double embedding_distance(const Embedder& embedder, const ImageF& a, const ImageF& b) {
    const std::vector<double> ea = embedder.embed(a);
    const std::vector<double> eb = embedder.embed(b);
    if (ea.size() != eb.size()) throw Error("embedder", "embedding dimension mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) dot += ea[i] * eb[i];
    return std::clamp(1.0 - dot, 0.0, 2.0);
}

// --------------------------------------------------------------------------
// Ablation grid (three binary factors, Table-2-shaped)
// --------------------------------------------------------------------------

struct AblationCell {
    std::string region;
    std::string loss;   // "complete" | "local"
    std::string input;  // "full_frame" | "crop"
    std::string mode;   // "feature_extraction" | "fine_tuning"
    double inaccuracy = 0.0;   // vs baseline, eval split, region continuous coords
    double eval_group_loss = 0.0;
    double train_group_loss = 0.0;
    double baseline_train_loss = 0.0;  // zero-predictor group loss, train split
    std::uint64_t seed = 0;
    std::string model_digest;
    std::string dataset_sha256;
    bool failed = false;
    std::string error;
};

struct AblationSettings {
    std::vector<std::string> regions = feature_regions();
    double eval_fraction = 0.2;
    std::uint64_t split_seed = 2002;
    std::uint64_t train_seed = 3003;
    TrainConfig fe_template;  // schedule shared by every cell (mode/input/target overridden)
    TrainConfig ft_template;
    int local_input = 32;
    int jobs = 1;  // grid cells are independent; never affects results
};

struct AblationResult {
    std::vector<AblationCell> cells;
    std::map<std::string, TrainedModel> models;  // model_id -> trained model
    SplitIndices split;
    std::vector<double> baseline;  // eval-split coordinate means
};

namespace detail {

inline std::vector<std::size_t> region_continuous_coords(const TargetLayout& layout,
                                                         const std::string& region) {
    const RegionSlices& rs = layout.region(region);
    std::vector<std::size_t> out;
    for (std::size_t i = rs.continuous.begin; i < rs.continuous.end; ++i) out.push_back(i);
    return out;
}

/// Full-layout prediction rows for the given rows; coordinates the model
/// does not predict are taken from the baseline so metrics can subset freely.
inline std::vector<std::vector<double>> model_rows(const TrainedModel& model,
                                                   const TrainInputs& inputs,
                                                   const std::vector<std::size_t>& rows,
                                                   const TargetLayout& layout,
                                                   const std::vector<double>& baseline,
                                                   std::size_t total_rows) {
    std::vector<std::vector<double>> out(total_rows);
    ImageF img(inputs.hw, inputs.hw);
    for (const std::size_t r : rows) {
        img.pixels = inputs.images[r];
        const std::vector<double> pred = predict(model, img);
        std::vector<double> full = baseline;
        for (std::size_t i = 0; i < pred.size(); ++i)
            full[model.slice.coord_indices[i]] = pred[i];
        out[r] = std::move(full);
    }
    return out;
}

} // namespace detail

/**
 * Trains and evaluates the Table-2 grid: per region, rows
 * (complete loss, full frame), (local loss, full frame), (local loss, crop),
 * for both transfer modes, under one shared schedule and train/eval split.
 * Fine-tuning cells initialize from the matching feature-extraction cell.
 * A failed cell is recorded and the run continues. Cell seeds derive from
 * (train_seed, cell index) so cells are order-independent.
 */
inline AblationResult run_ablation(const DatasetManifest& manifest, const ParameterSchema& schema,
                                   const AblationSettings& settings) {
    const TargetLayout layout = make_layout(schema);
    const std::vector<std::vector<double>> targets = encoded_targets(manifest, schema);
    AblationResult result;
    result.split = split_dataset(manifest.samples.size(), settings.eval_fraction,
                                 settings.split_seed);
    result.baseline = baseline_predictor(targets, result.split.eval);

    // Input caches shared across cells.
    std::map<std::string, TrainInputs> inputs;
    inputs["full_frame"] = build_inputs(manifest, schema, InputSpec::full_frame, "",
                                        settings.local_input);
    for (const auto& region : settings.regions)
        inputs["crop:" + region] = build_inputs(manifest, schema, InputSpec::crop, region,
                                                settings.local_input);

    struct CellSpec {
        std::string region, loss, input;
        std::string model_key;  // models shared across regions share a key
    };
    std::vector<CellSpec> specs;
    for (const auto& region : settings.regions) {
        specs.push_back({region, "complete", "full_frame", "aggregate"});
        specs.push_back({region, "local", "full_frame", "local_full_" + region});
        specs.push_back({region, "local", "crop", "local_crop_" + region});
    }

    auto config_for = [&](const CellSpec& spec, TrainMode mode, std::uint64_t seed) {
        TrainConfig c = mode == TrainMode::feature_extraction ? settings.fe_template
                                                              : settings.ft_template;
        c.mode = mode;
        c.seed = seed;
        c.split_seed = settings.split_seed;
        c.eval_fraction = settings.eval_fraction;
        c.local_input = settings.local_input;
        if (spec.loss == "complete") {
            c.complete_target = true;
            c.head = HeadKind::mixed;
        } else {
            c.complete_target = false;
            c.target_region = spec.region;
            c.head = HeadKind::regression;
        }
        if (spec.input == "full_frame") {
            c.input = InputSpec::full_frame;
        } else {
            c.input = InputSpec::crop;
            c.input_region = spec.region;
        }
        return c;
    };

    // Model keys deduplicate the aggregate cells; seeds attach to keys so
    // results do not depend on training order or parallelism.
    std::vector<std::string> keys;
    std::map<std::string, std::uint64_t> key_seed;
    std::map<std::string, const CellSpec*> key_spec;
    {
        std::uint64_t k = 0;
        for (const auto& spec : specs) {
            if (!key_seed.count(spec.model_key)) {
                key_seed[spec.model_key] = stable_hash(settings.train_seed, k++);
                key_spec[spec.model_key] = &spec;
                keys.push_back(spec.model_key);
            }
        }
    }

    std::map<std::string, std::string> train_errors;
    for (const auto mode : {TrainMode::feature_extraction, TrainMode::fine_tuning}) {
        // One wave per transfer mode: fine-tuning needs the matching
        // feature-extraction model as its starting point.
        std::vector<std::pair<std::string, TrainedModel>> wave(keys.size());
        std::vector<std::string> wave_errors(keys.size());
        auto train_key = [&](std::size_t ki) {
            const std::string& key = keys[ki];
            const CellSpec& spec = *key_spec.at(key);
            const std::string model_id =
                key + (mode == TrainMode::feature_extraction ? "_fe" : "_ft");
            try {
                const TrainConfig cfg = config_for(spec, mode, key_seed.at(key));
                const TrainedModel* init = nullptr;
                if (mode == TrainMode::fine_tuning) {
                    const std::string fe_id = key + "_fe";
                    if (!result.models.count(fe_id))
                        throw ModelError("missing feature-extraction init for " + model_id);
                    init = &result.models.at(fe_id);
                }
                const std::string input_key =
                    spec.input == "full_frame" ? "full_frame" : "crop:" + spec.region;
                wave[ki] = {model_id,
                            train_on(inputs.at(input_key), targets, schema, layout, cfg,
                                     result.split, init, model_id, manifest.manifest_sha256)};
            } catch (const std::exception& e) {
                wave_errors[ki] = e.what();
            }
        };
        if (settings.jobs <= 1) {
            for (std::size_t ki = 0; ki < keys.size(); ++ki) train_key(ki);
        } else {
            std::vector<std::thread> threads;
            for (int t = 0; t < settings.jobs; ++t)
                threads.emplace_back([&, t]() {
                    for (std::size_t ki = std::size_t(t); ki < keys.size();
                         ki += std::size_t(settings.jobs))
                        train_key(ki);
                });
            for (auto& t : threads) t.join();
        }
        const std::string suffix = mode == TrainMode::feature_extraction ? "_fe" : "_ft";
        for (std::size_t ki = 0; ki < keys.size(); ++ki) {
            if (!wave_errors[ki].empty())
                train_errors[keys[ki] + suffix] = wave_errors[ki];
            else
                result.models.emplace(wave[ki].first, std::move(wave[ki].second));
        }
    }

    for (const auto mode : {TrainMode::feature_extraction, TrainMode::fine_tuning}) {
        for (const auto& spec : specs) {
            const std::string model_id =
                spec.model_key + (mode == TrainMode::feature_extraction ? "_fe" : "_ft");
            AblationCell cell;
            cell.region = spec.region;
            cell.loss = spec.loss;
            cell.input = spec.input;
            cell.mode = to_string(mode);
            cell.dataset_sha256 = manifest.manifest_sha256;
            cell.seed = key_seed[spec.model_key];
            try {
                if (train_errors.count(model_id)) throw ModelError(train_errors.at(model_id));
                const TrainedModel& model = result.models.at(model_id);
                const std::string input_key =
                    spec.input == "full_frame" ? "full_frame" : "crop:" + spec.region;
                const std::vector<std::vector<double>> preds =
                    detail::model_rows(model, inputs.at(input_key), result.split.eval, layout,
                                       result.baseline, targets.size());
                const std::vector<std::size_t> coords =
                    detail::region_continuous_coords(layout, spec.region);
                cell.inaccuracy = inaccuracy_vs_baseline(preds, targets, result.baseline,
                                                         result.split.eval, coords);
                cell.eval_group_loss = model.eval_curve.empty()
                                           ? 0.0
                                           : *std::min_element(model.eval_curve.begin(),
                                                               model.eval_curve.end());
                cell.train_group_loss = model.train_curve.empty() ? 0.0
                                                                  : model.train_curve.back();
                cell.model_digest = sha256_hex(nn::serialize_backbone(model.net));
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

inline std::string ablation_csv(const AblationResult& result) {
    std::string out =
        "region,loss,input,mode,inaccuracy_vs_baseline,eval_group_loss,seed,model_sha256,"
        "dataset_sha256,failed,error\n";
    char buf[64];
    for (const auto& c : result.cells) {
        std::snprintf(buf, sizeof(buf), "%.9e", c.inaccuracy);
        out += c.region + "," + c.loss + "," + c.input + "," + c.mode + "," + buf + ",";
        std::snprintf(buf, sizeof(buf), "%.9e", c.eval_group_loss);
        out += std::string(buf) + "," + std::to_string(c.seed) + "," + c.model_digest + "," +
               c.dataset_sha256 + "," + (c.failed ? "1" : "0") + "," + c.error + "\n";
    }
    return out;
}

/// Plain-text table mirroring the per-region loss/input/mode grid.
inline std::string ablation_table(const AblationResult& result) {
    auto find = [&](const std::string& region, const std::string& loss, const std::string& input,
                    const std::string& mode) -> const AblationCell* {
        for (const auto& c : result.cells)
            if (c.region == region && c.loss == loss && c.input == input && c.mode == mode)
                return &c;
        return nullptr;
    };
    std::string out;
    out += "Inaccuracy vs. baseline (mean L1, eval split; smaller is better)\n";
    out += "------------------------------------------------------------------\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %-9s %-11s %18s %18s\n", "region", "loss", "input",
                  "feature_extraction", "fine_tuning");
    out += line;
    std::vector<std::string> regions;
    for (const auto& c : result.cells)
        if (std::find(regions.begin(), regions.end(), c.region) == regions.end())
            regions.push_back(c.region);
    for (const auto& region : regions) {
        const std::array<std::pair<std::string, std::string>, 3> rows{
            {{"complete", "full_frame"}, {"local", "full_frame"}, {"local", "crop"}}};
        for (const auto& [loss, input] : rows) {
            const AblationCell* fe = find(region, loss, input, "feature_extraction");
            const AblationCell* ft = find(region, loss, input, "fine_tuning");
            auto fmt = [](const AblationCell* c) {
                char b[32];
                if (!c) return std::string("-");
                if (c->failed) return std::string("FAILED");
                std::snprintf(b, sizeof(b), "%+.4f", c->inaccuracy);
                return std::string(b);
            };
            std::snprintf(line, sizeof(line), "%-8s %-9s %-11s %18s %18s\n", region.c_str(),
                          loss.c_str(), input.c_str(), fmt(fe).c_str(), fmt(ft).c_str());
            out += line;
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Constant-vs-fitted weight comparison (Table-3-shaped)
// --------------------------------------------------------------------------

struct WeightComparisonRow {
    std::string label;       // "fitted" | "0.0" | "0.5" | "1.0"
    double fit_split_l2 = 0.0;
    double eval_split_l2 = 0.0;
};

struct WeightComparison {
    std::vector<WeightComparisonRow> rows;
    // Per-coordinate fitted-vs-best-constant check on the fitting split.
    std::size_t coordinates = 0;
    std::size_t pair_coordinates = 0;
};

/**
 * L2 error of blended predictions under the fitted weights vs the constant
 * weights {0, 0.5, 1} (constant = weight on the local model; the aggregate
 * takes the complement). Reported on the fitting split (least-squares
 * optimality holds there by construction) and the other split (trend).
 */
inline WeightComparison compare_constant_weights(
    const std::vector<std::string>& model_ids, const std::vector<PredictionMatrix>& matrices,
    const std::vector<std::vector<double>>& targets, const TargetLayout& layout,
    const EnsembleWeights& fitted, const std::vector<std::size_t>& fit_idx,
    const std::vector<std::size_t>& eval_idx) {
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> contributors;
    for (std::size_t m = 0; m < matrices.size(); ++m)
        for (std::size_t c = 0; c < matrices[m].coordinate_names.size(); ++c)
            contributors[matrices[m].coordinate_names[c]].push_back({m, c});

    WeightComparison out;
    auto split_error = [&](const std::vector<std::size_t>& rows, double constant,
                           bool use_fitted) {
        double total = 0.0;
        for (std::size_t ci = 0; ci < layout.coordinate_names.size(); ++ci) {
            const std::string& name = layout.coordinate_names[ci];
            const auto it = contributors.find(name);
            if (it == contributors.end() || it->second.size() != 2) continue;
            const auto [lm, lc] = it->second[0];
            const auto [gm, gc] = it->second[1];
            double w = constant;
            if (use_fitted) {
                const auto* weights = fitted.find(name);
                if (!weights) throw EnsembleError("missing fitted weights for " + name);
                w = weights->at(model_ids[lm]);
            }
            for (const std::size_t r : rows) {
                const double blended =
                    w * matrices[lm].rows[r][lc] + (1.0 - w) * matrices[gm].rows[r][gc];
                const double d = blended - targets[r][ci];
                total += d * d;
            }
        }
        return total / double(rows.size());
    };

    out.coordinates = layout.coordinate_names.size();
    for (const auto& [name, c] : contributors)
        if (c.size() == 2) ++out.pair_coordinates;
    out.rows.push_back({"fitted", split_error(fit_idx, 0.0, true), split_error(eval_idx, 0.0, true)});
    for (const double w : {0.0, 0.5, 1.0}) {
        char label[8];
        std::snprintf(label, sizeof(label), "%.1f", w);
        out.rows.push_back({label, split_error(fit_idx, w, false), split_error(eval_idx, w, false)});
    }
    return out;
}

inline std::string weight_comparison_table(const WeightComparison& wc) {
    std::string out;
    out += "Ensemble weights: fitted vs constant (summed L2 over pair coordinates)\n";
    out += "----------------------------------------------------------------------\n";
    char line[120];
    std::snprintf(line, sizeof(line), "%-22s %14s %14s\n", "weights", "fit_split", "eval_split");
    out += line;
    for (const auto& r : wc.rows) {
        std::snprintf(line, sizeof(line), "%-22s %14.6f %14.6f\n", r.label.c_str(),
                      r.fit_split_l2, r.eval_split_l2);
        out += line;
    }
    return out;
}

// --------------------------------------------------------------------------
// Reconstruction report (adapter on/off, Table-4-shaped)
// --------------------------------------------------------------------------

struct ReconstructionRow {
    std::string id;
    double target_l1 = 0.0;       // mean L1 over the full encoded vector
    double embed_distance = 0.0;  // re-render vs gap-free reference render
    bool failed = false;
    std::string error;
};

struct ReconstructionReport {
    std::vector<ReconstructionRow> adapter_off;
    std::vector<ReconstructionRow> adapter_on;
    double mean_l1_off = 0.0, mean_l1_on = 0.0;
    double mean_embed_off = 0.0, mean_embed_on = 0.0;
};

using InferFn = std::function<Recipe(const ImageF& image, Point left_eye, Point right_eye)>;

/**
 * For every eval sample: infer a recipe (adapter off, then on), re-render it
 * with neutral augmentation in the clean domain, and report target-space
 * mean L1 plus the embedding distance to the reference render of the true
 * recipe. `infer_override`, when set, replaces the ensemble inference (test
 * oracle hook).
 */
inline ReconstructionReport reconstruction_report(const EnsembleModel& ensemble,
                                                  const DatasetManifest& eval_set,
                                                  const ParameterSchema& schema,
                                                  const Embedder& embedder,
                                                  const InferFn& infer_override = nullptr) {
    ReconstructionReport report;
    const TargetLayout layout = make_layout(schema);
    const int canvas = ensemble.registration.canvas;
    auto run_pass = [&](bool adapter_on) {
        std::vector<ReconstructionRow> rows;
        double l1_sum = 0.0, embed_sum = 0.0;
        std::size_t ok = 0;
        EnsembleModel variant = ensemble;
        if (!adapter_on) {
            variant.adapter = identity_adapter();
            variant.adapter_spec = "identity";
        }
        for (std::size_t i = 0; i < eval_set.samples.size(); ++i) {
            const SampleMeta& s = eval_set.samples[i];
            ReconstructionRow row;
            row.id = s.id;
            try {
                const ImageF raw = read_png(eval_set.image_file(i));
                Recipe inferred;
                if (infer_override) {
                    inferred = infer_override(raw, s.left_eye, s.right_eye);
                } else {
                    inferred = ensemble_predict(variant, raw, s.left_eye, s.right_eye).recipe;
                }
                const Recipe truth = parse_mhm(s.recipe_text, schema);
                const TargetVector tv_pred = encode(inferred, schema);
                const TargetVector tv_true = encode(truth, schema);
                double l1 = 0.0;
                for (std::size_t c = 0; c < tv_pred.values.size(); ++c)
                    l1 += std::abs(tv_pred.values[c] - tv_true.values[c]);
                row.target_l1 = l1 / double(tv_pred.values.size());
                const ImageF rerender =
                    render(schema, inferred, AugmentationSpec::neutral(), canvas).image;
                const ImageF reference =
                    render(schema, truth, AugmentationSpec::neutral(), canvas).image;
                row.embed_distance = embedding_distance(embedder, rerender, reference);
                l1_sum += row.target_l1;
                embed_sum += row.embed_distance;
                ++ok;
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
        const double denom = ok ? double(ok) : 1.0;
        return std::tuple(rows, l1_sum / denom, embed_sum / denom);
    };
    auto [off_rows, off_l1, off_embed] = run_pass(false);
    auto [on_rows, on_l1, on_embed] = run_pass(true);
    report.adapter_off = std::move(off_rows);
    report.adapter_on = std::move(on_rows);
    report.mean_l1_off = off_l1;
    report.mean_l1_on = on_l1;
    report.mean_embed_off = off_embed;
    report.mean_embed_on = on_embed;
    return report;
}

inline std::string reconstruction_csv(const ReconstructionReport& r) {
    std::string out = "adapter,id,target_l1,embed_distance,failed,error\n";
    char buf[48];
    auto rows = [&](const std::vector<ReconstructionRow>& v, const char* tag) {
        for (const auto& row : v) {
            out += std::string(tag) + "," + row.id + ",";
            std::snprintf(buf, sizeof(buf), "%.9e", row.target_l1);
            out += std::string(buf) + ",";
            std::snprintf(buf, sizeof(buf), "%.9e", row.embed_distance);
            out += std::string(buf) + "," + (row.failed ? "1" : "0") + "," + row.error + "\n";
        }
    };
    rows(r.adapter_off, "off");
    rows(r.adapter_on, "on");
    return out;
}

inline std::string reconstruction_table(const ReconstructionReport& r) {
    std::string out;
    out += "Reconstruction quality (means over eval set; smaller is better)\n";
    out += "---------------------------------------------------------------\n";
    char line[120];
    std::snprintf(line, sizeof(line), "%-12s %14s %16s\n", "adapter", "target_L1",
                  "embed_distance");
    out += line;
    std::snprintf(line, sizeof(line), "%-12s %14.6f %16.6f\n", "off", r.mean_l1_off,
                  r.mean_embed_off);
    out += line;
    std::snprintf(line, sizeof(line), "%-12s %14.6f %16.6f\n", "on", r.mean_l1_on,
                  r.mean_embed_on);
    out += line;
    return out;
}

} // namespace paraface
