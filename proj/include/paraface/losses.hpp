/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/losses.hpp
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
#include <map>
#include <string>
#include <vector>

#include "paraface/common.hpp"
#include "paraface/encoding.hpp"
#include "paraface/schema.hpp"

namespace paraface {

enum class RegressionNorm { l1, l2 };

inline std::string to_string(RegressionNorm n) { return n == RegressionNorm::l1 ? "l1" : "l2"; }

inline RegressionNorm regression_norm_from_string(const std::string& s) {
    if (s == "l1") return RegressionNorm::l1;
    if (s == "l2") return RegressionNorm::l2;
    throw ConfigError("unknown regression norm: " + s);
}

/// Per-region weights for the regression (v) and classification (w) terms.
struct LossWeights {
    std::map<std::string, double> v;  // region -> regression weight
    std::map<std::string, double> w;  // region -> classification weight
    RegressionNorm regression_norm = RegressionNorm::l2;

    static LossWeights uniform(const ParameterSchema& schema,
                               RegressionNorm norm = RegressionNorm::l2) {
        LossWeights lw;
        lw.regression_norm = norm;
        for (const auto& r : schema.regions) {
            lw.v[r.name] = 1.0;
            lw.w[r.name] = 1.0;
        }
        return lw;
    }

    double v_of(const std::string& region) const {
        auto it = v.find(region);
        return it == v.end() ? 1.0 : it->second;
    }
    double w_of(const std::string& region) const {
        auto it = w.find(region);
        return it == w.end() ? 1.0 : it->second;
    }
};

struct LossBreakdown {
    double total = 0.0;
    std::map<std::string, double> regression;      // R_i per region
    std::map<std::string, double> classification;  // C_i per region
};

inline constexpr double kProbEpsilon = 1e-12;      // cross-entropy clamp
inline constexpr double kProbSumTolerance = 1e-6;  // slice normalization check

namespace detail {

/// R_i: mean |delta| or delta^2 over the region's continuous coordinates;
/// C_i: mean -log p[true] over the region's slots. `restrict_region` empty
/// means all regions.
inline LossBreakdown loss_impl(const std::vector<double>& pred, const TargetVector& target,
                               const ParameterSchema& schema, const LossWeights& weights,
                               const std::string& restrict_region) {
    const TargetLayout& layout = target.layout;
    if (pred.size() != layout.size)
        throw LayoutError("prediction length " + std::to_string(pred.size()) +
                          " != layout size " + std::to_string(layout.size));
    LossBreakdown out;
    for (const auto& rs : layout.regions) {
        const bool active = restrict_region.empty() || rs.region_name == restrict_region;
        double r_term = 0.0;
        if (rs.continuous.size() > 0 && active) {
            for (std::size_t i = rs.continuous.begin; i < rs.continuous.end; ++i) {
                const double d = pred[i] - target.values[i];
                r_term += weights.regression_norm == RegressionNorm::l1 ? std::abs(d) : d * d;
            }
            r_term /= double(rs.continuous.size());
        }
        double c_term = 0.0;
        if (!rs.slots.empty() && active) {
            for (const auto& slot : rs.slots) {
                double sum = 0.0;
                std::size_t true_idx = slot.range.begin;
                for (std::size_t i = slot.range.begin; i < slot.range.end; ++i) {
                    const double p = pred[i];
                    if (p < -kProbSumTolerance || p > 1.0 + kProbSumTolerance)
                        throw Error("loss", "probability out of [0,1] in slot " + slot.slot_name);
                    sum += p;
                    if (target.values[i] > target.values[true_idx]) true_idx = i;
                }
                if (std::abs(sum - 1.0) > kProbSumTolerance)
                    throw Error("loss", "slot " + slot.slot_name +
                                            " probabilities sum to " + std::to_string(sum) +
                                            " (not normalized)");
                const double p_true = std::min(std::max(pred[true_idx], kProbEpsilon), 1.0);
                c_term += -std::log(p_true);
            }
            c_term /= double(rs.slots.size());
        }
        out.regression[rs.region_name] = r_term;
        out.classification[rs.region_name] = c_term;
        out.total += weights.v_of(rs.region_name) * r_term +
                     weights.w_of(rs.region_name) * c_term;
    }
    return out;
}

} // namespace detail

/**
 * The heterogeneous multi-part loss: sum over regions of v_i * R_i + w_i * C_i,
 * with R_i the mean L1/L2 regression term and C_i the mean cross-entropy over
 * the region's slots. Discrete slices of `pred` must be probability vectors
 * (model-normalized); the true option is the target slice argmax.
 */
inline LossBreakdown multipart_loss(const std::vector<double>& pred, const TargetVector& target,
                                    const ParameterSchema& schema, const LossWeights& weights) {
    return detail::loss_impl(pred, target, schema, weights, "");
}

/// multipart_loss restricted to one region; terms elsewhere are zero.
/// Summing group_loss totals over all regions reproduces multipart_loss.
inline LossBreakdown group_loss(const std::vector<double>& pred, const TargetVector& target,
                                const ParameterSchema& schema, const LossWeights& weights,
                                const std::string& region) {
    if (!schema.find_region(region)) throw LookupError("unknown region: " + region);
    return detail::loss_impl(pred, target, schema, weights, region);
}

/**
 * Rate-of-change softmax weighting: terms improving slowest (largest mean
 * slope of their recent loss history) receive larger weight. Weights are
 * scaled to sum to the number of terms, so equal histories give all ones.
 * Terms are named "<region>:r" / "<region>:c"; missing names keep weight 1.
 */
inline LossWeights adaptive_weights(const std::map<std::string, std::vector<double>>& history,
                                    double temperature,
                                    const ParameterSchema& schema,
                                    RegressionNorm norm = RegressionNorm::l2) {
    if (history.empty()) throw Error("loss", "adaptive weighting needs at least one term");
    if (temperature <= 0.0) throw Error("loss", "temperature must be positive");
    std::vector<std::string> names;
    std::vector<double> rates;
    for (const auto& [name, h] : history) {
        if (h.size() < 2)
            throw Error("loss", "term '" + name +
                                    "' has fewer than 2 history points; use fixed weights");
        names.push_back(name);
        rates.push_back((h.back() - h.front()) / double(h.size() - 1));
    }
    double max_rate = rates.front();
    for (double r : rates) max_rate = std::max(max_rate, r);
    std::vector<double> soft(rates.size());
    double z = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        soft[i] = std::exp((rates[i] - max_rate) / temperature);
        z += soft[i];
    }
    LossWeights out = LossWeights::uniform(schema, norm);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double weight = soft[i] / z * double(rates.size());
        const std::string& name = names[i];
        const auto colon = name.rfind(':');
        if (colon == std::string::npos) throw Error("loss", "term name not <region>:r|c: " + name);
        const std::string region = name.substr(0, colon);
        if (name.substr(colon + 1) == "r")
            out.v[region] = weight;
        else
            out.w[region] = weight;
    }
    return out;
}

} // namespace paraface
