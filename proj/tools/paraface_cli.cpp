/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: tools/paraface_cli.cpp
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
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "paraface/paraface.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Every artifact directory gets a run.json with the digests that produced it.
void write_run_record(const std::string& out_dir, const std::string& command,
                      const paraface::PipelineConfig& cfg, const json& inputs,
                      const std::vector<std::string>& output_files) {
    json j;
    j["command"] = command;
    j["config_sha256"] = cfg.config_sha256;
    j["schema_sha256"] = cfg.schema_sha256;
    j["inputs"] = inputs;
    json outs = json::object();
    for (const auto& f : output_files)
        outs[f] = paraface::sha256_file((fs::path(out_dir) / f).string());
    j["outputs"] = outs;
    paraface::write_text_file((fs::path(out_dir) / "run.json").string(), j.dump(2) + "\n");
}

paraface::TrainConfig cell_config(const paraface::PipelineConfig& cfg, const std::string& cell,
                                  const std::string& head, std::uint64_t seed) {
    std::vector<std::string> parts;
    std::istringstream in(cell);
    std::string tok;
    while (std::getline(in, tok, ',')) parts.push_back(tok);
    if (parts.size() != 4)
        throw paraface::ConfigError("--cell must be <loss,input,mode,region>, e.g. "
                                    "local,crop,ft,nose or complete,full,fe,-");
    const bool fine_tune = parts[2] == "ft" || parts[2] == "fine_tuning";
    if (!fine_tune && parts[2] != "fe" && parts[2] != "feature_extraction")
        throw paraface::ConfigError("unknown mode: " + parts[2]);
    paraface::TrainConfig c = fine_tune ? cfg.ft_template : cfg.fe_template;
    c.mode = fine_tune ? paraface::TrainMode::fine_tuning
                       : paraface::TrainMode::feature_extraction;
    if (parts[0] == "complete") {
        c.complete_target = true;
        c.head = paraface::HeadKind::mixed;
    } else if (parts[0] == "local") {
        c.complete_target = false;
        c.target_region = parts[3];
        if (head == "regression" || head.empty())
            c.head = paraface::HeadKind::regression;
        else if (head == "classification")
            c.head = paraface::HeadKind::classification;
        else
            throw paraface::ConfigError("unknown head kind: " + head);
    } else {
        throw paraface::ConfigError("unknown loss kind: " + parts[0]);
    }
    if (parts[1] == "full" || parts[1] == "full_frame") {
        c.input = paraface::InputSpec::full_frame;
    } else if (parts[1] == "crop") {
        c.input = paraface::InputSpec::crop;
        c.input_region = parts[3];
    } else {
        throw paraface::ConfigError("unknown input kind: " + parts[1]);
    }
    c.seed = seed;
    c.split_seed = cfg.split_seed;
    c.eval_fraction = cfg.eval_fraction;
    c.local_input = cfg.local_input;
    c.validate();
    return c;
}

std::string default_model_id(const paraface::TrainConfig& c) {
    std::string id = c.complete_target ? "aggregate" : "local_" + c.target_region;
    if (!c.complete_target)
        id += c.head == paraface::HeadKind::classification ? "_cls" : "_reg";
    id += c.input == paraface::InputSpec::crop ? "_crop" : "_full";
    id += c.mode == paraface::TrainMode::fine_tuning ? "_ft" : "_fe";
    return id;
}

int cmd_gen_data(const std::string& config_path, std::size_t n, std::uint64_t seed,
                 const std::string& out, int posterize, int jobs, bool seed_set,
                 bool posterize_set) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    paraface::StyleSpec style = cfg.style;
    if (posterize_set) style.posterize_levels = posterize;
    const std::uint64_t master = seed_set ? seed : cfg.data_seed;
    const paraface::DatasetManifest m = paraface::generate_dataset(
        cfg.schema, n, master, cfg.aug_ranges, out, cfg.canvas, style, jobs);
    write_run_record(out, "gen-data", cfg,
                     json{{"n", n}, {"master_seed", master},
                          {"posterize_levels", style.posterize_levels}},
                     {"manifest.jsonl", "dataset.json"});
    std::printf("generated %zu samples in %s (manifest sha256 %s)\n", m.samples.size(),
                out.c_str(), m.manifest_sha256.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& cell, const std::string& head, const std::string& init_dir,
              const std::string& out, const std::string& id, std::uint64_t seed, bool seed_set) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    const paraface::DatasetManifest manifest = paraface::load_dataset(data_dir);
    const paraface::TrainConfig tc =
        cell_config(cfg, cell, head, seed_set ? seed : cfg.train_seed);
    paraface::TrainedModel init;
    const paraface::TrainedModel* init_ptr = nullptr;
    if (!init_dir.empty()) {
        init = paraface::load_model(init_dir, cfg.schema);
        init_ptr = &init;
    }
    const std::string model_id = id.empty() ? default_model_id(tc) : id;
    const paraface::TrainedModel model =
        paraface::train(manifest, cfg.schema, tc, init_ptr, model_id);
    paraface::save_model(model, out);
    write_run_record(out, "train", cfg,
                     json{{"dataset_sha256", manifest.manifest_sha256},
                          {"cell", cell},
                          {"seed", tc.seed}},
                     {"model.bin", "model.json"});
    std::printf("trained %s: final eval loss %.6f (%zu epochs) -> %s\n", model_id.c_str(),
                model.eval_curve.empty() ? 0.0 : model.eval_curve.back(),
                model.eval_curve.size(), out.c_str());
    return 0;
}

int cmd_fit_ensemble(const std::string& config_path, const std::string& data_dir,
                     const std::string& models_dir, const std::string& split,
                     const std::string& out, const std::string& adapter) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    const paraface::DatasetManifest manifest = paraface::load_dataset(data_dir);
    std::vector<paraface::TrainedModel> models;
    for (const auto& entry : fs::directory_iterator(models_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "model.json"))
            models.push_back(paraface::load_model(entry.path().string(), cfg.schema));
    }
    if (models.empty())
        throw paraface::EnsembleError("no model directories under " + models_dir);
    std::sort(models.begin(), models.end(),
              [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
    const paraface::TrainedModel* aggregate = nullptr;
    std::vector<const paraface::TrainedModel*> locals;
    for (const auto& m : models) {
        if (m.config.complete_target) {
            if (aggregate)
                throw paraface::EnsembleError("multiple complete-target models in " + models_dir);
            aggregate = &m;
        } else {
            locals.push_back(&m);
        }
    }
    if (!aggregate) throw paraface::EnsembleError("no complete-target model in " + models_dir);

    const paraface::TargetLayout layout = paraface::make_layout(cfg.schema);
    const auto targets = paraface::encoded_targets(manifest, cfg.schema);
    const paraface::SplitIndices si = paraface::split_dataset(
        manifest.samples.size(), cfg.eval_fraction, cfg.split_seed);
    const std::string fit_split = split.empty() ? cfg.fit_split : split;
    const std::vector<std::size_t>& fit_idx = fit_split == "eval" ? si.eval : si.train;
    const std::vector<std::size_t>& other_idx = fit_split == "eval" ? si.train : si.eval;

    std::map<std::string, paraface::TrainInputs> input_cache;
    auto inputs_for = [&](const paraface::TrainedModel& m) -> const paraface::TrainInputs& {
        const std::string key = m.config.input_name();
        if (!input_cache.count(key))
            input_cache[key] = paraface::build_inputs(manifest, cfg.schema, m.config.input,
                                                      m.config.input_region, cfg.local_input);
        return input_cache.at(key);
    };

    std::vector<std::string> ids;
    std::vector<paraface::PredictionMatrix> matrices;
    std::vector<std::string> out_files = {"weights.json", "ensemble.json",
                                          "constant_weights.txt", "constant_weights.csv"};
    fs::create_directories(fs::path(out) / "matrices");
    // Locals first so the pair order is (local, aggregate).
    for (const auto* m : locals) {
        ids.push_back(m->model_id);
        matrices.push_back(paraface::predict_matrix(*m, inputs_for(*m)));
    }
    ids.push_back(aggregate->model_id);
    matrices.push_back(paraface::predict_matrix(*aggregate, inputs_for(*aggregate)));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::string rel = "matrices/" + ids[i] + ".csv";
        paraface::write_prediction_csv((fs::path(out) / rel).string(), matrices[i]);
        out_files.push_back(rel);
    }

    const paraface::EnsembleWeights weights =
        paraface::fit_ensemble(ids, matrices, targets, layout, fit_idx);

    paraface::EnsembleModel ensemble;
    ensemble.schema = cfg.schema;
    ensemble.layout = layout;
    ensemble.aggregate = *aggregate;
    for (const auto* m : locals) ensemble.locals.push_back(*m);
    ensemble.weights = weights;
    ensemble.adapter_spec = adapter.empty() ? cfg.adapter_spec : adapter;
    ensemble.adapter = paraface::make_adapter(ensemble.adapter_spec);
    ensemble.registration = cfg.registration;
    ensemble.local_input = cfg.local_input;
    for (const auto& region : paraface::feature_regions())
        ensemble.crop_rects[region] = cfg.crop_box(region);
    ensemble.validate();
    paraface::save_ensemble(ensemble, out);

    const paraface::WeightComparison wc = paraface::compare_constant_weights(
        ids, matrices, targets, layout, weights, fit_idx, other_idx);
    paraface::write_text_file((fs::path(out) / "constant_weights.txt").string(),
                              paraface::weight_comparison_table(wc));
    std::string csv = "weights,fit_split_l2,other_split_l2\n";
    for (const auto& r : wc.rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s,%.9e,%.9e\n", r.label.c_str(), r.fit_split_l2,
                      r.eval_split_l2);
        csv += buf;
    }
    paraface::write_text_file((fs::path(out) / "constant_weights.csv").string(), csv);

    write_run_record(out, "fit-ensemble", cfg,
                     json{{"dataset_sha256", manifest.manifest_sha256},
                          {"fit_split", fit_split},
                          {"models", ids}},
                     out_files);
    std::printf("%s", paraface::weight_comparison_table(wc).c_str());
    std::printf("fitted weights for %zu coordinates -> %s\n", weights.by_coordinate.size(),
                out.c_str());
    return 0;
}

int cmd_infer(const std::string& config_path, const std::string& ensemble_dir,
              const std::string& image_path, const std::string& landmarks,
              const std::string& adapter) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    paraface::EnsembleModel ensemble = paraface::load_ensemble(ensemble_dir, cfg.schema);
    if (!adapter.empty() && adapter != "config") {
        ensemble.adapter_spec = adapter;
        ensemble.adapter = paraface::make_adapter(adapter);
    }
    if (landmarks.empty())
        throw paraface::RegistrationError(
            "eye landmarks required (--landmarks x1,y1,x2,y2); no detector is bundled");
    std::vector<double> v;
    std::istringstream in(landmarks);
    std::string tok;
    while (std::getline(in, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != 4)
        throw paraface::RegistrationError("--landmarks needs exactly x1,y1,x2,y2");
    const paraface::ImageF image = paraface::read_png(image_path);
    const paraface::EnsemblePrediction pred =
        paraface::ensemble_predict(ensemble, image, {v[0], v[1]}, {v[2], v[3]});
    std::fputs(paraface::serialize_mhm(pred.recipe, cfg.schema).c_str(), stdout);
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out, int jobs) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    const paraface::DatasetManifest manifest = paraface::load_dataset(data_dir);
    paraface::AblationSettings settings;
    settings.split_seed = cfg.split_seed;
    settings.train_seed = cfg.train_seed;
    settings.eval_fraction = cfg.eval_fraction;
    settings.fe_template = cfg.fe_template;
    settings.ft_template = cfg.ft_template;
    settings.local_input = cfg.local_input;
    settings.jobs = jobs;
    const paraface::AblationResult result =
        paraface::run_ablation(manifest, cfg.schema, settings);
    fs::create_directories(out);
    paraface::write_text_file((fs::path(out) / "ablation.csv").string(),
                              paraface::ablation_csv(result));
    paraface::write_text_file((fs::path(out) / "ablation.txt").string(),
                              paraface::ablation_table(result));
    std::vector<std::string> out_files = {"ablation.csv", "ablation.txt"};
    for (const auto& [id, model] : result.models) {
        paraface::save_model(model, (fs::path(out) / "models" / id).string());
        out_files.push_back("models/" + id + "/model.bin");
        out_files.push_back("models/" + id + "/model.json");
    }
    write_run_record(out, "ablate", cfg,
                     json{{"dataset_sha256", manifest.manifest_sha256},
                          {"train_seed", settings.train_seed},
                          {"split_seed", settings.split_seed}},
                     out_files);
    std::printf("%s", paraface::ablation_table(result).c_str());
    for (const auto& c : result.cells)
        if (c.failed)
            std::printf("cell FAILED: %s/%s/%s/%s: %s\n", c.region.c_str(), c.loss.c_str(),
                        c.input.c_str(), c.mode.c_str(), c.error.c_str());
    return 0;
}

int cmd_report(const std::string& config_path, const std::string& ensemble_dir,
               const std::string& eval_dir, const std::string& adapter_mode,
               const std::string& out) {
    const paraface::PipelineConfig cfg = paraface::load_pipeline_config(config_path);
    const paraface::EnsembleModel ensemble = paraface::load_ensemble(ensemble_dir, cfg.schema);
    const paraface::DatasetManifest eval_set = paraface::load_dataset(eval_dir);
    const paraface::Embedder embedder = paraface::default_embedder();
    const paraface::ReconstructionReport report =
        paraface::reconstruction_report(ensemble, eval_set, cfg.schema, embedder);
    fs::create_directories(out);
    paraface::write_text_file((fs::path(out) / "reconstruction.csv").string(),
                              paraface::reconstruction_csv(report));
    paraface::write_text_file((fs::path(out) / "reconstruction.txt").string(),
                              paraface::reconstruction_table(report));
    write_run_record(out, "report", cfg,
                     json{{"ensemble", ensemble_dir},
                          {"eval_dataset_sha256", eval_set.manifest_sha256},
                          {"adapter", ensemble.adapter_spec}},
                     {"reconstruction.csv", "reconstruction.txt"});
    if (adapter_mode == "on") {
        std::printf("adapter on : target_L1 %.6f embed %.6f\n", report.mean_l1_on,
                    report.mean_embed_on);
    } else if (adapter_mode == "off") {
        std::printf("adapter off: target_L1 %.6f embed %.6f\n", report.mean_l1_off,
                    report.mean_embed_off);
    } else {
        std::printf("%s", paraface::reconstruction_table(report).c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"paraface: parametric face reconstruction pipeline"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, cell, head, init_dir, model_id, models_dir,
        split, ensemble_dir, image_path, landmarks, adapter, eval_dir, adapter_mode = "both";
    std::size_t n = 100;
    std::uint64_t seed = 0;
    int jobs = 1, posterize = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--config", config_path, "Pipeline config JSON")->required();
    gen->add_option("--n", n, "Number of samples")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "Master seed (default: config seeds.data)");
    gen->add_option("--out", out_dir, "Output dataset directory")->required();
    auto* gen_post = gen->add_option("--posterize", posterize,
                                     "Override style posterization levels (0 = clean)");
    gen->add_option("--jobs", jobs, "Worker threads (does not affect output digests)");

    auto* train = app.add_subcommand("train", "Train one model cell");
    train->add_option("--config", config_path, "Pipeline config JSON")->required();
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--cell", cell, "loss,input,mode,region (e.g. local,crop,ft,nose)")
        ->required();
    train->add_option("--head", head, "regression|classification (local cells)");
    train->add_option("--init", init_dir, "Initial model directory (fine-tuning)");
    train->add_option("--out", out_dir, "Output model directory")->required();
    train->add_option("--id", model_id, "Model id (default derived from the cell)");
    auto* train_seed = train->add_option("--seed", seed, "Training seed (default: config)");

    auto* fit = app.add_subcommand("fit-ensemble", "Fit per-coordinate ensemble weights");
    fit->add_option("--config", config_path, "Pipeline config JSON")->required();
    fit->add_option("--data", data_dir, "Dataset directory")->required();
    fit->add_option("--models", models_dir, "Directory of trained model subdirectories")
        ->required();
    fit->add_option("--split", split, "Fitting split: train|eval (default from config)");
    fit->add_option("--out", out_dir, "Output ensemble directory")->required();
    fit->add_option("--adapter", adapter, "Adapter spec stored with the ensemble");

    auto* infer = app.add_subcommand("infer", "Infer an mhm recipe from one image");
    infer->add_option("--config", config_path, "Pipeline config JSON")->required();
    infer->add_option("--ensemble", ensemble_dir, "Ensemble directory")->required();
    infer->add_option("--image", image_path, "Input PNG")->required();
    infer->add_option("--landmarks", landmarks, "Eye centers x1,y1,x2,y2 (left, right)");
    infer->add_option("--adapter", adapter, "Adapter override (identity|posterize:N|external:cmd)");

    auto* ablate = app.add_subcommand("ablate", "Run the three-factor ablation grid");
    ablate->add_option("--config", config_path, "Pipeline config JSON")->required();
    ablate->add_option("--data", data_dir, "Dataset directory")->required();
    ablate->add_option("--out", out_dir, "Output report directory")->required();
    ablate->add_option("--jobs", jobs, "Worker threads (does not affect output digests)");

    auto* report = app.add_subcommand("report", "Reconstruction report (adapter on/off)");
    report->add_option("--config", config_path, "Pipeline config JSON")->required();
    report->add_option("--ensemble", ensemble_dir, "Ensemble directory")->required();
    report->add_option("--eval", eval_dir, "Evaluation dataset directory")->required();
    report->add_option("--adapter", adapter_mode, "Summary selection: on|off|both");
    report->add_option("--out", out_dir, "Output report directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(config_path, n, seed, out_dir, posterize, jobs,
                                gen_seed->count() > 0, gen_post->count() > 0);
        if (train->parsed())
            return cmd_train(config_path, data_dir, cell, head, init_dir, out_dir, model_id,
                             seed, train_seed->count() > 0);
        if (fit->parsed())
            return cmd_fit_ensemble(config_path, data_dir, models_dir, split, out_dir, adapter);
        if (infer->parsed())
            return cmd_infer(config_path, ensemble_dir, image_path, landmarks, adapter);
        if (ablate->parsed()) return cmd_ablate(config_path, data_dir, out_dir, jobs);
        if (report->parsed())
            return cmd_report(config_path, ensemble_dir, eval_dir, adapter_mode, out_dir);
    } catch (const paraface::Error& e) {
        std::fprintf(stderr, "error stage=%s msg=\"%s\"\n", e.stage().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error stage=internal msg=\"%s\"\n", e.what());
        return 1;
    }
    return 0;
}
