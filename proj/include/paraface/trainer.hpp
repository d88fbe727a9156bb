/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/trainer.hpp
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
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "paraface/adapt.hpp"
#include "paraface/common.hpp"
#include "paraface/dataset.hpp"
#include "paraface/digest.hpp"
#include "paraface/encoding.hpp"
#include "paraface/losses.hpp"
#include "paraface/nn.hpp"
#include "paraface/render.hpp"
#include "paraface/rng.hpp"
#include "paraface/schema.hpp"

namespace paraface {

enum class TrainMode { feature_extraction, fine_tuning };
enum class InputSpec { full_frame, crop };
enum class HeadKind { mixed, regression, classification };

inline std::string to_string(TrainMode m) {
    return m == TrainMode::feature_extraction ? "feature_extraction" : "fine_tuning";
}
inline std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::regression: return "regression";
        case HeadKind::classification: return "classification";
        default: return "mixed";
    }
}

struct TrainConfig {
    TrainMode mode = TrainMode::feature_extraction;
    InputSpec input = InputSpec::full_frame;
    std::string input_region;            // for crop input
    bool complete_target = true;
    std::string target_region;           // for local target
    HeadKind head = HeadKind::mixed;
    RegressionNorm regression_norm = RegressionNorm::l2;
    double lr = 0.02;
    int patience = 2;                    // epochs without eval improvement
    double decay = 0.3;
    double stop_lr = 1e-4;               // stop criterion for the schedule
    int batch_size = 32;
    int max_epochs = 40;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 7;
    double eval_fraction = 0.2;
    int local_input = 32;                // crop-model input size

    void validate() const {
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must be in (0, 1)");
        if (batch_size < 1 || max_epochs < 1) throw ConfigError("bad batch size / max epochs");
        if (input == InputSpec::crop && input_region.empty())
            throw ConfigError("crop input needs a region");
        if (!complete_target && target_region.empty())
            throw ConfigError("local target needs a region");
        if (!complete_target && head == HeadKind::mixed)
            throw ConfigError("local target needs a regression or classification head");
    }

    std::string input_name() const {
        return input == InputSpec::full_frame ? "full_frame" : "crop:" + input_region;
    }
    std::string target_name() const {
        return complete_target ? "complete" : "local:" + target_region;
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"input", c.input_name()},
            {"target", c.target_name()},
            {"head", to_string(c.head)},
            {"regression_norm", to_string(c.regression_norm)},
            {"lr", c.lr},
            {"patience", c.patience},
            {"decay", c.decay},
            {"stop_lr", c.stop_lr},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"seed", c.seed},
            {"split_seed", c.split_seed},
            {"eval_fraction", c.eval_fraction},
            {"local_input", c.local_input}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    const std::string mode = j.value("mode", "feature_extraction");
    if (mode == "feature_extraction")
        c.mode = TrainMode::feature_extraction;
    else if (mode == "fine_tuning")
        c.mode = TrainMode::fine_tuning;
    else
        throw ConfigError("unknown train mode: " + mode);
    const std::string input = j.value("input", "full_frame");
    if (input == "full_frame") {
        c.input = InputSpec::full_frame;
    } else if (input.rfind("crop:", 0) == 0) {
        c.input = InputSpec::crop;
        c.input_region = input.substr(5);
    } else {
        throw ConfigError("unknown input spec: " + input);
    }
    const std::string target = j.value("target", "complete");
    if (target == "complete") {
        c.complete_target = true;
    } else if (target.rfind("local:", 0) == 0) {
        c.complete_target = false;
        c.target_region = target.substr(6);
    } else {
        throw ConfigError("unknown target spec: " + target);
    }
    const std::string head = j.value("head", "mixed");
    if (head == "mixed")
        c.head = HeadKind::mixed;
    else if (head == "regression")
        c.head = HeadKind::regression;
    else if (head == "classification")
        c.head = HeadKind::classification;
    else
        throw ConfigError("unknown head kind: " + head);
    c.regression_norm = regression_norm_from_string(j.value("regression_norm", "l2"));
    c.lr = j.value("lr", c.lr);
    c.patience = j.value("patience", c.patience);
    c.decay = j.value("decay", c.decay);
    c.stop_lr = j.value("stop_lr", c.stop_lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
    c.local_input = j.value("local_input", c.local_input);
    c.validate();
    return c;
}

/**
 * Which target coordinates a model predicts, and how its training loss
 * groups them by region. Model output order matches coord_indices.
 */
struct ModelSlice {
    std::vector<std::size_t> coord_indices;      // into the full target layout
    std::vector<std::string> coordinate_names;
    std::vector<IndexRange> softmax_slices;      // in model-output space

    struct RegGroup {
        std::string region;
        std::size_t begin = 0, end = 0;          // model-output range
        double weight = 1.0;
    };
    struct ClsGroup {
        std::string region;
        std::vector<IndexRange> slots;           // model-output ranges
        double weight = 1.0;
    };
    std::vector<RegGroup> reg_groups;
    std::vector<ClsGroup> cls_groups;

    std::size_t out_dim() const { return coord_indices.size(); }
};

inline ModelSlice make_model_slice(const ParameterSchema& schema, const TargetLayout& layout,
                                   const TrainConfig& config,
                                   const LossWeights& weights) {
    ModelSlice slice;
    const bool want_reg = config.head != HeadKind::classification;
    const bool want_cls = config.head != HeadKind::regression;
    for (std::size_t ri = 0; ri < schema.regions.size(); ++ri) {
        const RegionSlices& rs = layout.regions[ri];
        if (!config.complete_target && rs.region_name != config.target_region) continue;
        if (want_reg && rs.continuous.size() > 0) {
            ModelSlice::RegGroup g;
            g.region = rs.region_name;
            g.begin = slice.coord_indices.size();
            for (std::size_t i = rs.continuous.begin; i < rs.continuous.end; ++i) {
                slice.coord_indices.push_back(i);
                slice.coordinate_names.push_back(layout.coordinate_names[i]);
            }
            g.end = slice.coord_indices.size();
            g.weight = weights.v_of(rs.region_name);
            slice.reg_groups.push_back(g);
        }
        if (want_cls && !rs.slots.empty()) {
            ModelSlice::ClsGroup g;
            g.region = rs.region_name;
            g.weight = weights.w_of(rs.region_name);
            for (const auto& s : rs.slots) {
                IndexRange out_range;
                out_range.begin = slice.coord_indices.size();
                for (std::size_t i = s.range.begin; i < s.range.end; ++i) {
                    slice.coord_indices.push_back(i);
                    slice.coordinate_names.push_back(layout.coordinate_names[i]);
                }
                out_range.end = slice.coord_indices.size();
                g.slots.push_back(out_range);
                slice.softmax_slices.push_back(out_range);
            }
            slice.cls_groups.push_back(g);
        }
    }
    if (!config.complete_target && !schema.find_region(config.target_region))
        throw LookupError("unknown region: " + config.target_region);
    if (slice.coord_indices.empty())
        throw ModelError("model slice is empty for target " + config.target_name());
    return slice;
}

/// Inputs prepared for one input spec: registered full frames or region crops.
struct TrainInputs {
    int hw = 0;
    std::vector<std::vector<float>> images;  // flattened hw*hw
};

inline TrainInputs build_inputs(const DatasetManifest& manifest, const ParameterSchema& schema,
                                InputSpec input, const std::string& region, int local_input) {
    const RegistrationConfig reg_cfg = RegistrationConfig::for_canvas(manifest.canvas);
    TrainInputs out;
    out.hw = input == InputSpec::full_frame ? manifest.canvas : local_input;
    out.images.reserve(manifest.samples.size());
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        const SampleMeta& s = manifest.samples[i];
        const ImageF raw = read_png(manifest.image_file(i));
        auto [registered, rt] = register_image(raw, s.left_eye, s.right_eye, reg_cfg);
        if (input == InputSpec::full_frame) {
            out.images.push_back(std::move(registered.pixels));
        } else {
            ImageF c = crop_region(registered, region, local_input);
            out.images.push_back(std::move(c.pixels));
        }
    }
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// Seeded shuffle split; the same (n, fraction, seed) always yields the same
/// partition, so ablation cells share one split.
inline SplitIndices split_dataset(std::size_t n, double eval_fraction, std::uint64_t split_seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(splitmix64(split_seed));
    rng.shuffle(idx);
    const std::size_t n_eval = std::max<std::size_t>(1, std::size_t(n * eval_fraction));
    SplitIndices s;
    s.eval.assign(idx.begin(), idx.begin() + n_eval);
    s.train.assign(idx.begin() + n_eval, idx.end());
    if (s.train.empty()) throw Error("args", "dataset too small to split");
    return s;
}

struct TrainedModel {
    std::string model_id;
    nn::Backbone net;
    TrainConfig config;
    ModelSlice slice;
    std::vector<double> train_curve;
    std::vector<double> eval_curve;
    std::string dataset_sha256;
    std::string schema_sha256;
    std::string config_sha256;
    std::string feature_digest_before;
    std::string feature_digest_after;
};

namespace detail {

/// Batch loss (mean over batch) and, when dout != nullptr, its gradient
/// w.r.t. the raw model outputs. Classification slices go through softmax +
/// cross-entropy here; regression through the configured norm.
inline double batch_loss(const ModelSlice& slice, RegressionNorm norm, const nn::RowMat& out,
                         const std::vector<const float*>& targets, nn::RowMat* dout) {
    const int batch = int(out.cols());
    double loss = 0.0;
    if (dout) dout->setZero(out.rows(), out.cols());
    std::vector<double> p;
    for (int b = 0; b < batch; ++b) {
        const float* t = targets[std::size_t(b)];
        for (const auto& g : slice.reg_groups) {
            const double scale = g.weight / double(g.end - g.begin);
            for (std::size_t i = g.begin; i < g.end; ++i) {
                const double d = double(out(Eigen::Index(i), b)) - double(t[i]);
                if (norm == RegressionNorm::l2) {
                    loss += scale * d * d;
                    if (dout) (*dout)(Eigen::Index(i), b) += float(scale * 2.0 * d);
                } else {
                    loss += scale * std::abs(d);
                    if (dout) (*dout)(Eigen::Index(i), b) += float(scale * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0));
                }
            }
        }
        for (const auto& g : slice.cls_groups) {
            const double scale = g.weight / double(g.slots.size());
            for (const auto& s : g.slots) {
                const std::size_t n = s.end - s.begin;
                p.resize(n);
                double mx = -1e30;
                for (std::size_t i = 0; i < n; ++i)
                    mx = std::max(mx, double(out(Eigen::Index(s.begin + i), b)));
                double z = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    p[i] = std::exp(double(out(Eigen::Index(s.begin + i), b)) - mx);
                    z += p[i];
                }
                std::size_t true_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    p[i] /= z;
                    if (t[s.begin + i] > t[s.begin + true_i]) true_i = i;
                }
                loss += scale * -std::log(std::max(p[true_i], kProbEpsilon));
                if (dout) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const double onehot = i == true_i ? 1.0 : 0.0;
                        (*dout)(Eigen::Index(s.begin + i), b) += float(scale * (p[i] - onehot));
                    }
                }
            }
        }
    }
    if (dout) *dout /= float(batch);
    return loss / double(batch);
}

inline nn::RowMat gather_batch(const TrainInputs& inputs, const std::vector<std::size_t>& order,
                               std::size_t begin, std::size_t end) {
    const std::size_t p = std::size_t(inputs.hw) * inputs.hw;
    nn::RowMat m(1, Eigen::Index((end - begin) * p));
    for (std::size_t i = begin; i < end; ++i)
        std::memcpy(m.data() + (i - begin) * p, inputs.images[order[i]].data(),
                    p * sizeof(float));
    return m;
}

inline std::vector<std::vector<float>> slice_targets(
    const std::vector<std::vector<double>>& full_targets, const ModelSlice& slice) {
    std::vector<std::vector<float>> out(full_targets.size());
    for (std::size_t i = 0; i < full_targets.size(); ++i) {
        out[i].resize(slice.out_dim());
        for (std::size_t j = 0; j < slice.out_dim(); ++j)
            out[i][j] = float(full_targets[i][slice.coord_indices[j]]);
    }
    return out;
}

/// Mean loss over an index set, forward in batches of 64.
inline double eval_loss(const nn::Backbone& net, const ModelSlice& slice, RegressionNorm norm,
                        const TrainInputs& inputs, const std::vector<std::vector<float>>& targets,
                        const std::vector<std::size_t>& idx) {
    const std::size_t chunk = 64;
    double total = 0.0;
    nn::ForwardCache cache;
    for (std::size_t at = 0; at < idx.size(); at += chunk) {
        const std::size_t end = std::min(idx.size(), at + chunk);
        const nn::RowMat input = gather_batch(inputs, idx, at, end);
        nn::forward(net, input, int(end - at), cache, false);
        std::vector<const float*> t;
        for (std::size_t i = at; i < end; ++i) t.push_back(targets[idx[i]].data());
        total += batch_loss(slice, norm, cache.out, t, nullptr) * double(end - at);
    }
    return total / double(idx.size());
}

struct PlateauSchedule {
    double lr;
    int patience;
    double decay;
    double stop_lr;
    double rel_threshold = 1e-3;  // improvements smaller than this don't reset patience
    double best = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    bool improved_last = false;

    /// Returns false when training should stop.
    bool observe(double eval) {
        improved_last = eval < best;
        const bool significant =
            eval < best - std::max(1e-12, rel_threshold * std::abs(best));
        if (improved_last) best = eval;
        if (significant) {
            since_improvement = 0;
        } else if (++since_improvement >= patience) {
            lr *= decay;
            since_improvement = 0;
        }
        return lr >= stop_lr;
    }
};

} // namespace detail

/**
 * Trains a model on prepared inputs. In feature_extraction mode the feature
 * stage stays frozen at its (seeded) initialization and only the head
 * trains, over cached features; fine_tuning requires `init` (normally the
 * matching feature-extraction model) and updates all parameters. The best
 * eval-loss snapshot is returned. Deterministic given (inputs, targets,
 * config): data order, initialization and numerics all derive from the seed.
 */
inline TrainedModel train_on(const TrainInputs& inputs,
                             const std::vector<std::vector<double>>& full_targets,
                             const ParameterSchema& schema, const TargetLayout& layout,
                             const TrainConfig& config, const SplitIndices& split,
                             const TrainedModel* init, const std::string& model_id,
                             const std::string& dataset_sha256) {
    config.validate();
    if (inputs.images.size() != full_targets.size())
        throw ModelError("inputs/targets size mismatch");
    LossWeights weights = LossWeights::uniform(schema, config.regression_norm);
    TrainedModel model;
    model.model_id = model_id;
    model.config = config;
    model.slice = make_model_slice(schema, layout, config, weights);
    model.dataset_sha256 = dataset_sha256;
    model.schema_sha256 = sha256_hex(schema_to_json(schema).dump());
    model.config_sha256 = sha256_hex(train_config_to_json(config).dump());

    const std::size_t out_dim = model.slice.out_dim();
    if (config.mode == TrainMode::fine_tuning) {
        if (!init) throw ModelError("fine_tuning requires an initial model");
        if (init->net.out_dim != int(out_dim) || init->net.input_hw != inputs.hw)
            throw ModelError("initial model shape does not match this configuration");
        model.net = init->net;
    } else {
        if (init) throw ModelError("feature_extraction starts from a fresh seeded model");
        model.net = nn::make_backbone(inputs.hw, int(out_dim), config.seed);
        // Zero head: training starts at the zero predictor and the plateau
        // schedule only ever moves it toward the data.
        model.net.head_w.setZero();
        model.net.head_b.setZero();
    }
    model.feature_digest_before = nn::feature_stage_digest(model.net);

    const std::vector<std::vector<float>> targets = detail::slice_targets(full_targets, model.slice);
    Rng order_rng(splitmix64(config.seed ^ 0xA5C1E5ull));
    std::vector<std::size_t> order = split.train;

    detail::PlateauSchedule schedule{config.lr, config.patience, config.decay, config.stop_lr};
    nn::Backbone best_net = model.net;

    const bool frozen = config.mode == TrainMode::feature_extraction;
    // Cached frozen features make feature-extraction epochs head-only.
    nn::RowMat feats_all;
    if (frozen) {
        const std::size_t chunk = 64;
        feats_all.resize(model.net.feature_dim(), Eigen::Index(inputs.images.size()));
        std::vector<std::size_t> all(inputs.images.size());
        std::iota(all.begin(), all.end(), 0);
        nn::ForwardCache cache;
        for (std::size_t at = 0; at < all.size(); at += chunk) {
            const std::size_t end = std::min(all.size(), at + chunk);
            const nn::RowMat input = detail::gather_batch(inputs, all, at, end);
            nn::forward(model.net, input, int(end - at), cache, false);
            for (std::size_t i = at; i < end; ++i)
                feats_all.col(Eigen::Index(i)) = cache.feats.col(Eigen::Index(i - at));
        }
        // Fix the standardization constants from the train split (the fresh
        // net has identity constants, so feats_all holds raw GAP features).
        // Low-variance channels are floored relative to the overall feature
        // magnitude so their scales cannot blow up fine-tuning gradients.
        std::vector<double> means(model.net.feature_dim()), stds(model.net.feature_dim());
        double rms = 0.0;
        for (int c = 0; c < model.net.feature_dim(); ++c) {
            double mean = 0.0;
            for (const std::size_t i : split.train) mean += feats_all(c, Eigen::Index(i));
            mean /= double(split.train.size());
            double var = 0.0;
            for (const std::size_t i : split.train) {
                const double d = feats_all(c, Eigen::Index(i)) - mean;
                var += d * d;
            }
            var /= double(split.train.size());
            means[c] = mean;
            stds[c] = std::sqrt(var);
            rms += mean * mean + var;
        }
        rms = std::sqrt(rms / double(model.net.feature_dim()));
        const double floor = 1e-2 * rms + 1e-8;
        // The 1/sqrt(D) factor bounds the head Hessian's top eigenvalue by
        // ~1 whatever the channel correlations, so one learning-rate range
        // works across input specs.
        const double dim_scale = 1.0 / std::sqrt(double(model.net.feature_dim()));
        for (int c = 0; c < model.net.feature_dim(); ++c) {
            model.net.feat_mean(c) = float(means[c]);
            model.net.feat_scale(c) = float(dim_scale / std::max(stds[c], floor));
        }
        feats_all.array().colwise() -= model.net.feat_mean.array();
        feats_all.array().colwise() *= model.net.feat_scale.array();
    }

    auto head_eval = [&](const nn::Backbone& net, const std::vector<std::size_t>& idx) {
        double total = 0.0;
        nn::RowMat out;
        const std::size_t chunk = 256;
        for (std::size_t at = 0; at < idx.size(); at += chunk) {
            const std::size_t end = std::min(idx.size(), at + chunk);
            nn::RowMat f(net.feature_dim(), Eigen::Index(end - at));
            for (std::size_t i = at; i < end; ++i)
                f.col(Eigen::Index(i - at)) = feats_all.col(Eigen::Index(idx[i]));
            out.noalias() = net.head_w * f;
            out.colwise() += net.head_b;
            std::vector<const float*> t;
            for (std::size_t i = at; i < end; ++i) t.push_back(targets[idx[i]].data());
            total += detail::batch_loss(model.slice, config.regression_norm, out, t, nullptr) *
                     double(end - at);
        }
        return total / double(idx.size());
    };

    nn::SgdMomentum opt(model.net);
    nn::Gradients grads = nn::Gradients::zeros_like(model.net);
    nn::ForwardCache cache;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        order_rng.shuffle(order);
        double train_loss = 0.0;
        for (std::size_t at = 0; at < order.size(); at += std::size_t(config.batch_size)) {
            const std::size_t end = std::min(order.size(), at + std::size_t(config.batch_size));
            const int b = int(end - at);
            std::vector<const float*> t;
            for (std::size_t i = at; i < end; ++i) t.push_back(targets[order[i]].data());
            if (frozen) {
                nn::RowMat f(model.net.feature_dim(), b);
                for (std::size_t i = at; i < end; ++i)
                    f.col(Eigen::Index(i - at)) = feats_all.col(Eigen::Index(order[i]));
                nn::RowMat out;
                out.noalias() = model.net.head_w * f;
                out.colwise() += model.net.head_b;
                nn::RowMat dout;
                train_loss += detail::batch_loss(model.slice, config.regression_norm, out, t,
                                                 &dout) * b;
                grads.head_w.noalias() = dout * f.transpose();
                grads.head_b = dout.rowwise().sum();
                opt.step_head(model.net, grads, schedule.lr);
            } else {
                const nn::RowMat input = detail::gather_batch(inputs, order, at, end);
                nn::forward(model.net, input, b, cache, true);
                nn::RowMat dout;
                train_loss += detail::batch_loss(model.slice, config.regression_norm, cache.out,
                                                 t, &dout) * b;
                nn::backward(model.net, cache, dout, grads);
                opt.step_all(model.net, grads, schedule.lr);
            }
        }
        model.train_curve.push_back(train_loss / double(order.size()));
        const double eval = frozen
                                ? head_eval(model.net, split.eval)
                                : detail::eval_loss(model.net, model.slice,
                                                    config.regression_norm, inputs, targets,
                                                    split.eval);
        model.eval_curve.push_back(eval);
        const bool keep_going = schedule.observe(eval);
        if (schedule.improved_last) best_net = model.net;
        if (!keep_going) break;
    }
    model.net = std::move(best_net);
    model.feature_digest_after = nn::feature_stage_digest(model.net);
    return model;
}

/// The spec-level entry point: prepares inputs from a dataset manifest and
/// trains under the given configuration.
inline TrainedModel train(const DatasetManifest& manifest, const ParameterSchema& schema,
                          const TrainConfig& config, const TrainedModel* init = nullptr,
                          const std::string& model_id = "model") {
    if (manifest.samples.empty()) throw ModelError("empty dataset");
    const TrainInputs inputs = build_inputs(manifest, schema, config.input, config.input_region,
                                            config.local_input);
    const std::vector<std::vector<double>> targets = encoded_targets(manifest, schema);
    const TargetLayout layout = make_layout(schema);
    const SplitIndices split = split_dataset(manifest.samples.size(), config.eval_fraction,
                                             config.split_seed);
    return train_on(inputs, targets, schema, layout, config, split, init, model_id,
                    manifest.manifest_sha256);
}

/**
 * Deterministic single-image prediction over the model's target slice.
 * Classification slices are probability-normalized. Batch prediction is the
 * same per-sample path, so it is elementwise identical by construction.
 */
inline std::vector<double> predict(const TrainedModel& model, const ImageF& input) {
    if (input.height != model.net.input_hw || input.width != model.net.input_hw)
        throw ModelError("input size " + std::to_string(input.width) + "x" +
                         std::to_string(input.height) + " does not match model input " +
                         std::to_string(model.net.input_hw));
    nn::RowMat m(1, Eigen::Index(input.size()));
    std::memcpy(m.data(), input.pixels.data(), input.size() * sizeof(float));
    nn::ForwardCache cache;
    nn::forward(model.net, m, 1, cache, false);
    std::vector<double> out(model.slice.out_dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = double(cache.out(Eigen::Index(i), 0));
    for (const auto& s : model.slice.softmax_slices) {
        double mx = -1e300;
        for (std::size_t i = s.begin; i < s.end; ++i) mx = std::max(mx, out[i]);
        double z = 0.0;
        for (std::size_t i = s.begin; i < s.end; ++i) {
            out[i] = std::exp(out[i] - mx);
            z += out[i];
        }
        for (std::size_t i = s.begin; i < s.end; ++i) out[i] /= z;
    }
    return out;
}

// --------------------------------------------------------------------------
// Prediction matrices (CSV external interface)
// --------------------------------------------------------------------------

struct PredictionMatrix {
    std::vector<std::string> coordinate_names;
    std::vector<std::vector<double>> rows;  // manifest order
};

/// Runs the model over every prepared input, in manifest order.
inline PredictionMatrix predict_matrix(const TrainedModel& model, const TrainInputs& inputs) {
    PredictionMatrix pm;
    pm.coordinate_names = model.slice.coordinate_names;
    pm.rows.reserve(inputs.images.size());
    ImageF img(inputs.hw, inputs.hw);
    for (const auto& flat : inputs.images) {
        img.pixels = flat;
        pm.rows.push_back(predict(model, img));
    }
    return pm;
}

inline void write_prediction_csv(const std::string& path, const PredictionMatrix& pm) {
    std::string out;
    for (std::size_t i = 0; i < pm.coordinate_names.size(); ++i) {
        if (i) out += ",";
        out += pm.coordinate_names[i];
    }
    out += "\n";
    char buf[40];
    for (const auto& row : pm.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.9e", row[i]);
            if (i) out += ",";
            out += buf;
        }
        out += "\n";
    }
    write_text_file(path, out);
}

inline PredictionMatrix read_prediction_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty prediction csv: " + path);
    PredictionMatrix pm;
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) pm.coordinate_names.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != pm.coordinate_names.size())
            throw IoError("ragged prediction csv: " + path);
        pm.rows.push_back(std::move(row));
    }
    return pm;
}

// --------------------------------------------------------------------------
// Model artifacts: opaque parameter blob + JSON sidecar
// --------------------------------------------------------------------------

inline void save_model(const TrainedModel& model, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string blob = nn::serialize_backbone(model.net);
    write_text_file((fs::path(dir) / "model.bin").string(), blob);
    nlohmann::json j;
    j["model_id"] = model.model_id;
    j["config"] = train_config_to_json(model.config);
    j["coordinates"] = model.slice.coordinate_names;
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& s : model.slice.softmax_slices) slices.push_back({s.begin, s.end});
    j["softmax_slices"] = slices;
    j["curves"] = {{"train", model.train_curve}, {"eval", model.eval_curve}};
    j["provenance"] = {{"dataset_sha256", model.dataset_sha256},
                       {"schema_sha256", model.schema_sha256},
                       {"config_sha256", model.config_sha256},
                       {"seed", model.config.seed}};
    j["feature_digest_before"] = model.feature_digest_before;
    j["feature_digest_after"] = model.feature_digest_after;
    j["blob_sha256"] = sha256_hex(blob);
    write_text_file((fs::path(dir) / "model.json").string(), j.dump(2) + "\n");
}

inline TrainedModel load_model(const std::string& dir, const ParameterSchema& schema) {
    namespace fs = std::filesystem;
    const std::string blob = read_text_file((fs::path(dir) / "model.bin").string());
    const nlohmann::json j =
        nlohmann::json::parse(read_text_file((fs::path(dir) / "model.json").string()));
    TrainedModel model;
    model.model_id = j.value("model_id", "model");
    model.config = train_config_from_json(j.at("config"));
    model.net = nn::deserialize_backbone(blob);
    if (j.value("blob_sha256", std::string()) != sha256_hex(blob))
        throw ModelError("model blob digest mismatch in " + dir);
    model.slice = make_model_slice(schema, make_layout(schema), model.config,
                                   LossWeights::uniform(schema, model.config.regression_norm));
    if (model.slice.coordinate_names != j.at("coordinates").get<std::vector<std::string>>())
        throw ModelError("model coordinates do not match the schema layout: " + dir);
    if (j.contains("curves")) {
        model.train_curve = j["curves"].value("train", std::vector<double>{});
        model.eval_curve = j["curves"].value("eval", std::vector<double>{});
    }
    model.dataset_sha256 = j["provenance"].value("dataset_sha256", std::string());
    model.schema_sha256 = j["provenance"].value("schema_sha256", std::string());
    model.config_sha256 = j["provenance"].value("config_sha256", std::string());
    model.feature_digest_before = j.value("feature_digest_before", std::string());
    model.feature_digest_after = j.value("feature_digest_after", std::string());
    return model;
}

} // namespace paraface
