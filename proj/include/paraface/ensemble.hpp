/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/ensemble.hpp
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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "paraface/adapt.hpp"
#include "paraface/common.hpp"
#include "paraface/encoding.hpp"
#include "paraface/trainer.hpp"

namespace paraface {

/**
 * Closed-form minimizer of sum_d (w*l_d + (1-w)*g_d - t_d)^2:
 *   w* = sum (t-g)(l-g) / sum (l-g)^2.
 * When local and global are (numerically) identical the objective is flat;
 * 0.5 is returned, keeping both models symmetric.
 */
inline double fit_weights_pair(const std::vector<double>& local,
                               const std::vector<double>& global,
                               const std::vector<double>& target) {
    if (local.size() != global.size() || local.size() != target.size())
        throw EnsembleError("fit_weights_pair: length mismatch");
    if (local.empty()) throw EnsembleError("fit_weights_pair: empty columns");
    double num = 0.0, den = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < local.size(); ++i) {
        const double l = local[i], g = global[i], t = target[i];
        if (!std::isfinite(l) || !std::isfinite(g) || !std::isfinite(t))
            throw EnsembleError("fit_weights_pair: non-finite input");
        num += (t - g) * (l - g);
        den += (l - g) * (l - g);
        norm += l * l + g * g;
    }
    if (den < 1e-12 * norm + 1e-30) return 0.5;
    return num / den;
}

/**
 * Sum-to-1 constrained least squares over n_k prediction columns: solves
 * min_w ||sum_i w_i p_i - t||^2 s.t. sum w = 1, via the substitution
 * w = uniform + B y with B an orthonormal basis of the sum-zero subspace.
 * Rank-deficient systems take the minimum-norm deviation from the uniform
 * weights (Eigen's complete orthogonal decomposition).
 */
inline std::vector<double> fit_weights_general(const std::vector<std::vector<double>>& preds,
                                               const std::vector<double>& target) {
    const std::size_t n = preds.size();
    if (n == 0) throw EnsembleError("fit_weights_general: no contributors");
    for (const auto& p : preds)
        if (p.size() != target.size())
            throw EnsembleError("fit_weights_general: length mismatch");
    if (n == 1) return {1.0};
    const std::size_t d = target.size();
    Eigen::MatrixXd a(d, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d; ++i) {
            if (!std::isfinite(preds[j][i]))
                throw EnsembleError("fit_weights_general: non-finite input");
            a(Eigen::Index(i), Eigen::Index(j)) = preds[j][i];
        }
    Eigen::VectorXd t(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(target[i])) throw EnsembleError("fit_weights_general: non-finite target");
        t(Eigen::Index(i)) = target[i];
    }
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(Eigen::Index(n), 1.0 / double(n));
    // Orthonormal basis of {x : sum x = 0}: trailing columns of the Q factor
    // of the ones vector.
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(Eigen::Index(n), 1);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
    const Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd basis = q.rightCols(Eigen::Index(n - 1));
    const Eigen::MatrixXd ab = a * basis;
    // Fully degenerate system (all predictors numerically identical): every
    // feasible w is optimal; keep the uniform weights.
    if (ab.norm() <= 1e-12 * a.norm() + 1e-30)
        return std::vector<double>(u.data(), u.data() + n);
    const Eigen::VectorXd residual = t - a * u;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ab);
    cod.setThreshold(1e-10);
    const Eigen::VectorXd y = cod.solve(residual);
    Eigen::VectorXd w = u + basis * y;
    if (!w.allFinite()) return std::vector<double>(u.data(), u.data() + n);
    // Pin the constraint against accumulated rounding.
    w /= w.sum();
    return std::vector<double>(w.data(), w.data() + n);
}

/// Weights per target coordinate, per contributing model; sum to 1.
struct EnsembleWeights {
    std::map<std::string, std::map<std::string, double>> by_coordinate;

    const std::map<std::string, double>* find(const std::string& coordinate) const {
        auto it = by_coordinate.find(coordinate);
        return it == by_coordinate.end() ? nullptr : &it->second;
    }
};

inline nlohmann::json ensemble_weights_to_json(const EnsembleWeights& w) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [coord, models] : w.by_coordinate) {
        nlohmann::json jm = nlohmann::json::object();
        for (const auto& [id, weight] : models) jm[id] = weight;
        j[coord] = std::move(jm);
    }
    return j;
}

inline EnsembleWeights ensemble_weights_from_json(const nlohmann::json& j) {
    EnsembleWeights w;
    for (auto it = j.begin(); it != j.end(); ++it)
        for (auto mt = it.value().begin(); mt != it.value().end(); ++mt)
            w.by_coordinate[it.key()][mt.key()] = mt.value().get<double>();
    return w;
}

/**
 * Per-coordinate weight fitting over aligned prediction matrices (Eq.-style:
 * one independent scalar problem per target coordinate). Coordinates
 * predicted by a single model get weight 1 on it; the local+aggregate pair
 * uses the closed form; three or more contributors use the constrained
 * least-squares path. `fit_idx` selects the fitting split rows.
 */
inline EnsembleWeights fit_ensemble(const std::vector<std::string>& model_ids,
                                    const std::vector<PredictionMatrix>& matrices,
                                    const std::vector<std::vector<double>>& targets,
                                    const TargetLayout& layout,
                                    const std::vector<std::size_t>& fit_idx) {
    if (model_ids.size() != matrices.size())
        throw EnsembleError("fit_ensemble: ids/matrices mismatch");
    if (fit_idx.empty()) throw EnsembleError("fit_ensemble: empty fitting split");
    // coordinate -> [(model index, column)] in the order models were given.
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> contributors;
    for (std::size_t m = 0; m < matrices.size(); ++m) {
        for (std::size_t c = 0; c < matrices[m].coordinate_names.size(); ++c)
            contributors[matrices[m].coordinate_names[c]].push_back({m, c});
        if (matrices[m].rows.size() != targets.size())
            throw EnsembleError("fit_ensemble: matrix row count does not match targets");
    }
    EnsembleWeights out;
    for (std::size_t ci = 0; ci < layout.coordinate_names.size(); ++ci) {
        const std::string& name = layout.coordinate_names[ci];
        auto it = contributors.find(name);
        if (it == contributors.end() || it->second.empty())
            throw EnsembleError("coordinate has no contributing model: " + name);
        const auto& contrib = it->second;
        auto column = [&](std::size_t m, std::size_t c) {
            std::vector<double> col(fit_idx.size());
            for (std::size_t i = 0; i < fit_idx.size(); ++i)
                col[i] = matrices[m].rows[fit_idx[i]][c];
            return col;
        };
        std::vector<double> target_col(fit_idx.size());
        for (std::size_t i = 0; i < fit_idx.size(); ++i) target_col[i] = targets[fit_idx[i]][ci];
        std::map<std::string, double>& weights = out.by_coordinate[name];
        if (contrib.size() == 1) {
            weights[model_ids[contrib[0].first]] = 1.0;
        } else if (contrib.size() == 2) {
            const double w = fit_weights_pair(column(contrib[0].first, contrib[0].second),
                                              column(contrib[1].first, contrib[1].second),
                                              target_col);
            weights[model_ids[contrib[0].first]] = w;
            weights[model_ids[contrib[1].first]] = 1.0 - w;
        } else {
            std::vector<std::vector<double>> cols;
            for (const auto& [m, c] : contrib) cols.push_back(column(m, c));
            const std::vector<double> w = fit_weights_general(cols, target_col);
            for (std::size_t k = 0; k < contrib.size(); ++k)
                weights[model_ids[contrib[k].first]] = w[k];
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// The composed inference ensemble
// --------------------------------------------------------------------------

struct EnsembleModel {
    ParameterSchema schema;
    TargetLayout layout;
    TrainedModel aggregate;             // complete-target model
    std::vector<TrainedModel> locals;   // per-region regression/classification
    EnsembleWeights weights;
    DomainAdapter adapter;              // identity allowed
    std::string adapter_spec = "identity";
    RegistrationConfig registration;
    std::map<std::string, PixelBox> crop_rects;  // per input region
    int local_input = 32;

    PixelBox crop_box(const std::string& region) const {
        auto it = crop_rects.find(region);
        return it != crop_rects.end() ? it->second : crop_rect(region, registration.canvas);
    }

    /// Every coordinate covered; >= 2-contributor coordinates have weights.
    void validate() const {
        std::map<std::string, int> cover;
        for (const auto& n : aggregate.slice.coordinate_names) cover[n]++;
        for (const auto& m : locals)
            for (const auto& n : m.slice.coordinate_names) cover[n]++;
        for (const auto& n : layout.coordinate_names) {
            const auto it = cover.find(n);
            if (it == cover.end() || it->second == 0)
                throw EnsembleError("coordinate not covered by any model: " + n);
            if (it->second >= 2 && !weights.find(n))
                throw EnsembleError("coordinate has multiple contributors but no weights: " + n);
        }
    }
};

struct EnsemblePrediction {
    std::vector<double> blended;  // full layout order
    Recipe recipe;
};

/// Blends one model's prediction row into the accumulator.
namespace detail {
inline void accumulate(std::vector<double>& acc, const TrainedModel& model,
                       const std::vector<double>& pred, const EnsembleWeights& weights,
                       const TargetLayout& layout, const std::map<std::string, std::size_t>& pos,
                       int contributors_at[]) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::string& name = model.slice.coordinate_names[i];
        const std::size_t full_idx = pos.at(name);
        const auto* w = weights.find(name);
        double weight = 1.0;
        if (w) {
            auto it = w->find(model.model_id);
            if (it == w->end())
                throw EnsembleError("no weight for model " + model.model_id + " at " + name);
            weight = it->second;
        }
        acc[full_idx] += weight * pred[i];
        contributors_at[full_idx]++;
    }
}
} // namespace detail

/**
 * Full inference pipeline on a registered image: adapter, aggregate
 * prediction on the full frame, per-region local predictions on crops,
 * per-coordinate weighted blend (continuous and one-hot probability
 * coordinates treated uniformly), then decode (argmax on discrete slices).
 */
inline EnsemblePrediction ensemble_predict_registered(const EnsembleModel& model,
                                                      const ImageF& registered) {
    ImageF adapted;
    try {
        adapted = model.adapter.apply(registered);
    } catch (const Error& e) {
        throw AdapterError(std::string("adapter stage failed: ") + e.what());
    }
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < model.layout.coordinate_names.size(); ++i)
        pos[model.layout.coordinate_names[i]] = i;
    std::vector<double> acc(model.layout.size, 0.0);
    std::vector<int> nc(model.layout.size, 0);
    {
        const std::vector<double> pred = predict(model.aggregate, adapted);
        detail::accumulate(acc, model.aggregate, pred, model.weights, model.layout, pos,
                           nc.data());
    }
    for (const auto& local : model.locals) {
        if (local.config.input != InputSpec::crop)
            throw EnsembleError("local model " + local.model_id + " is not crop-input");
        const PixelBox box = model.crop_box(local.config.input_region);
        ImageF cropped = crop(adapted, box.y0, box.x0, box.y1, box.x1);
        cropped = resize_bilinear(cropped, model.local_input, model.local_input);
        const std::vector<double> pred = predict(local, cropped);
        detail::accumulate(acc, local, pred, model.weights, model.layout, pos, nc.data());
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        if (nc[i] == 0) throw EnsembleError("coordinate not predicted: " +
                                            model.layout.coordinate_names[i]);
    EnsemblePrediction out;
    out.blended = std::move(acc);
    out.recipe = decode(out.blended, model.schema);
    return out;
}

/// ensemble_predict with on-the-fly registration from eye landmarks.
inline EnsemblePrediction ensemble_predict(const EnsembleModel& model, const ImageF& image,
                                           Point left_eye, Point right_eye) {
    auto [registered, rt] = register_image(image, left_eye, right_eye, model.registration);
    return ensemble_predict_registered(model, registered);
}

// --------------------------------------------------------------------------
// Ensemble artifacts
// --------------------------------------------------------------------------

inline void save_ensemble(const EnsembleModel& model, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_model(model.aggregate, (fs::path(dir) / model.aggregate.model_id).string());
    nlohmann::json jl = nlohmann::json::array();
    for (const auto& m : model.locals) {
        save_model(m, (fs::path(dir) / m.model_id).string());
        jl.push_back(m.model_id);
    }
    write_text_file((fs::path(dir) / "weights.json").string(),
                    ensemble_weights_to_json(model.weights).dump(2) + "\n");
    nlohmann::json j;
    j["schema_sha256"] = sha256_hex(schema_to_json(model.schema).dump());
    j["aggregate"] = model.aggregate.model_id;
    j["locals"] = jl;
    j["weights"] = "weights.json";
    j["adapter"] = model.adapter_spec;
    j["canvas"] = model.registration.canvas;
    j["local_input"] = model.local_input;
    j["registration"] = {{"left", {model.registration.left_eye.x, model.registration.left_eye.y}},
                         {"right", {model.registration.right_eye.x, model.registration.right_eye.y}},
                         {"fill", model.registration.fill}};
    nlohmann::json jc = nlohmann::json::object();
    for (const auto& region : feature_regions()) {
        const PixelBox b = model.crop_box(region);
        jc[region] = {b.x0, b.y0, b.x1, b.y1};
    }
    j["crop_rects"] = jc;
    write_text_file((fs::path(dir) / "ensemble.json").string(), j.dump(2) + "\n");
}

inline EnsembleModel load_ensemble(const std::string& dir, const ParameterSchema& schema) {
    namespace fs = std::filesystem;
    const nlohmann::json j =
        nlohmann::json::parse(read_text_file((fs::path(dir) / "ensemble.json").string()));
    EnsembleModel model;
    model.schema = schema;
    model.layout = make_layout(schema);
    if (j.value("schema_sha256", std::string()) != sha256_hex(schema_to_json(schema).dump()))
        throw EnsembleError("ensemble was built against a different schema");
    model.aggregate = load_model((fs::path(dir) / j.at("aggregate").get<std::string>()).string(),
                                 schema);
    for (const auto& id : j.value("locals", std::vector<std::string>{}))
        model.locals.push_back(load_model((fs::path(dir) / id).string(), schema));
    model.weights = ensemble_weights_from_json(
        nlohmann::json::parse(read_text_file((fs::path(dir) / "weights.json").string())));
    model.adapter_spec = j.value("adapter", "identity");
    model.adapter = make_adapter(model.adapter_spec);
    model.registration = RegistrationConfig::for_canvas(j.value("canvas", 64));
    if (j.contains("registration")) {
        const auto& r = j["registration"];
        model.registration.left_eye = {r["left"][0].get<double>(), r["left"][1].get<double>()};
        model.registration.right_eye = {r["right"][0].get<double>(), r["right"][1].get<double>()};
        model.registration.fill = r.value("fill", model.registration.fill);
    }
    model.local_input = j.value("local_input", 32);
    if (j.contains("crop_rects")) {
        for (auto it = j["crop_rects"].begin(); it != j["crop_rects"].end(); ++it) {
            const auto& v = it.value();
            model.crop_rects[it.key()] = PixelBox{v[0].get<int>(), v[1].get<int>(),
                                                  v[2].get<int>(), v[3].get<int>()};
        }
    }
    model.validate();
    return model;
}

} // namespace paraface
