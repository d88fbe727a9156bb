/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/nn.hpp
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

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paraface/common.hpp"
#include "paraface/digest.hpp"
#include "paraface/rng.hpp"

namespace paraface::nn {

// Row-major throughout: activation rows are channels, columns are
// sample-major flattened spatial positions, so im2col moves contiguous runs.
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXf;

inline constexpr std::array<int, 4> kWidths{16, 32, 64, 128};

struct ConvBlock {
    int c_in = 0, c_out = 0;
    RowMat w;  // (c_out, c_in * 9)
    Vec b;
};

/**
 * The reference image-to-vector model: four blocks of 3x3 convolution +
 * ReLU + 2x average pooling at widths 16/32/64/128, global average pooling,
 * a fixed per-channel feature standardization, then a linear head.
 * The standardization constants are set once from the training split before
 * any head updates (they compose with the head into one affine map; SGD is
 * just far better conditioned this way). Classification slices are
 * normalized outside, by the owner of the output layout.
 */
struct Backbone {
    int input_hw = 64;  // square input, divisible by 16
    int out_dim = 0;
    std::array<ConvBlock, 4> blocks;
    Vec feat_mean;   // per-channel, applied between GAP and head
    Vec feat_scale;
    RowMat head_w;  // (out_dim, 128)
    Vec head_b;

    int feature_dim() const { return kWidths.back(); }
};

inline Backbone make_backbone(int input_hw, int out_dim, std::uint64_t seed) {
    if (input_hw < 16 || input_hw % 16 != 0)
        throw ModelError("backbone input size must be a positive multiple of 16");
    if (out_dim < 1) throw ModelError("backbone output dimension must be >= 1");
    Backbone net;
    net.input_hw = input_hw;
    net.out_dim = out_dim;
    Rng rng(splitmix64(seed));
    int c_in = 1;
    for (int k = 0; k < 4; ++k) {
        ConvBlock& blk = net.blocks[k];
        blk.c_in = c_in;
        blk.c_out = kWidths[k];
        blk.w.resize(blk.c_out, blk.c_in * 9);
        const float std_dev = std::sqrt(2.0f / float(blk.c_in * 9));
        for (Eigen::Index i = 0; i < blk.w.size(); ++i)
            blk.w.data()[i] = float(rng.gaussian()) * std_dev;
        blk.b = Vec::Zero(blk.c_out);
        c_in = blk.c_out;
    }
    net.feat_mean = Vec::Zero(net.feature_dim());
    net.feat_scale = Vec::Ones(net.feature_dim());
    net.head_w.resize(out_dim, net.feature_dim());
    const float head_std = std::sqrt(1.0f / float(net.feature_dim()));
    for (Eigen::Index i = 0; i < net.head_w.size(); ++i)
        net.head_w.data()[i] = float(rng.gaussian()) * head_std;
    net.head_b = Vec::Zero(out_dim);
    return net;
}

namespace detail {

/// (c_in, B*hw*hw) -> (c_in*9, B*hw*hw), 3x3 neighborhoods, zero padding.
inline void im2col(const RowMat& act, int batch, int hw, RowMat& col) {
    const int c_in = int(act.rows());
    const int p = hw * hw;
    col.resize(c_in * 9, Eigen::Index(batch) * p);
    for (int c = 0; c < c_in; ++c) {
        const float* src_row = act.data() + std::size_t(c) * act.cols();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* dst_row = col.data() + std::size_t(c * 9 + ky * 3 + kx) * col.cols();
                const int dy = ky - 1, dx = kx - 1;
                for (int b = 0; b < batch; ++b) {
                    for (int y = 0; y < hw; ++y) {
                        float* dst = dst_row + std::size_t(b) * p + std::size_t(y) * hw;
                        const int sy = y + dy;
                        if (sy < 0 || sy >= hw) {
                            std::memset(dst, 0, sizeof(float) * hw);
                            continue;
                        }
                        const float* src = src_row + std::size_t(b) * p + std::size_t(sy) * hw;
                        const int x0 = std::max(0, -dx);
                        const int x1 = std::min(hw, hw - dx);
                        if (x0 > 0) std::memset(dst, 0, sizeof(float) * x0);
                        if (x1 > x0) std::memcpy(dst + x0, src + x0 + dx, sizeof(float) * (x1 - x0));
                        if (x1 < hw) std::memset(dst + x1, 0, sizeof(float) * (hw - x1));
                    }
                }
            }
        }
    }
}

/// Scatter-add transpose of im2col.
inline void col2im_add(const RowMat& col, int batch, int hw, RowMat& dact) {
    const int c_in = int(dact.rows());
    const int p = hw * hw;
    for (int c = 0; c < c_in; ++c) {
        float* dst_row = dact.data() + std::size_t(c) * dact.cols();
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const float* src_row = col.data() + std::size_t(c * 9 + ky * 3 + kx) * col.cols();
                const int dy = ky - 1, dx = kx - 1;
                for (int b = 0; b < batch; ++b) {
                    for (int y = 0; y < hw; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= hw) continue;
                        const float* src = src_row + std::size_t(b) * p + std::size_t(y) * hw;
                        float* dst = dst_row + std::size_t(b) * p + std::size_t(sy) * hw;
                        const int x0 = std::max(0, -dx);
                        const int x1 = std::min(hw, hw - dx);
                        for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
                    }
                }
            }
        }
    }
}

inline void avgpool2(const RowMat& in, int batch, int hw, RowMat& out) {
    const int oh = hw / 2;
    const int p_in = hw * hw, p_out = oh * oh;
    out.resize(in.rows(), Eigen::Index(batch) * p_out);
    for (int c = 0; c < in.rows(); ++c) {
        const float* src = in.data() + std::size_t(c) * in.cols();
        float* dst = out.data() + std::size_t(c) * out.cols();
        for (int b = 0; b < batch; ++b) {
            for (int y = 0; y < oh; ++y) {
                const float* r0 = src + std::size_t(b) * p_in + std::size_t(2 * y) * hw;
                const float* r1 = r0 + hw;
                float* d = dst + std::size_t(b) * p_out + std::size_t(y) * oh;
                for (int x = 0; x < oh; ++x)
                    d[x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
            }
        }
    }
}

inline void avgpool2_backward(const RowMat& dout, int batch, int hw_in, RowMat& din) {
    const int oh = hw_in / 2;
    const int p_in = hw_in * hw_in, p_out = oh * oh;
    din.resize(dout.rows(), Eigen::Index(batch) * p_in);
    for (int c = 0; c < dout.rows(); ++c) {
        const float* src = dout.data() + std::size_t(c) * dout.cols();
        float* dst = din.data() + std::size_t(c) * din.cols();
        for (int b = 0; b < batch; ++b) {
            for (int y = 0; y < oh; ++y) {
                const float* s = src + std::size_t(b) * p_out + std::size_t(y) * oh;
                float* d0 = dst + std::size_t(b) * p_in + std::size_t(2 * y) * hw_in;
                float* d1 = d0 + hw_in;
                for (int x = 0; x < oh; ++x) {
                    const float g = 0.25f * s[x];
                    d0[2 * x] = g;
                    d0[2 * x + 1] = g;
                    d1[2 * x] = g;
                    d1[2 * x + 1] = g;
                }
            }
        }
    }
}

} // namespace detail

struct ForwardCache {
    struct Block {
        RowMat col;       // im2col of the block input
        RowMat relu_out;  // post-ReLU, pre-pool (also the ReLU mask)
        int hw = 0;       // spatial size at block input
    };
    std::array<Block, 4> blocks;
    RowMat feats;  // (128, B)
    RowMat out;    // (out_dim, B)
    int batch = 0;
};

/// Forward pass over a batch. `input` is (1, B*hw*hw). Caches intermediates
/// when `keep_for_backward` is set.
inline void forward(const Backbone& net, const RowMat& input, int batch, ForwardCache& cache,
                    bool keep_for_backward) {
    int hw = net.input_hw;
    RowMat act = input;
    for (int k = 0; k < 4; ++k) {
        const ConvBlock& blk = net.blocks[k];
        RowMat col;
        detail::im2col(act, batch, hw, col);
        RowMat conv;
        conv.noalias() = blk.w * col;
        conv.colwise() += blk.b;
        conv = conv.cwiseMax(0.0f);
        if (keep_for_backward) {
            cache.blocks[k].col = std::move(col);
            cache.blocks[k].relu_out = conv;
            cache.blocks[k].hw = hw;
        }
        detail::avgpool2(conv, batch, hw, act);
        hw /= 2;
    }
    // Global average pooling, then the fixed per-channel standardization.
    const int p = hw * hw;
    cache.feats.resize(net.feature_dim(), batch);
    for (int c = 0; c < net.feature_dim(); ++c) {
        const float* row = act.data() + std::size_t(c) * act.cols();
        const float mean = net.feat_mean(c);
        const float scale = net.feat_scale(c);
        for (int b = 0; b < batch; ++b) {
            float sum = 0.0f;
            const float* s = row + std::size_t(b) * p;
            for (int i = 0; i < p; ++i) sum += s[i];
            cache.feats(c, b) = (sum / float(p) - mean) * scale;
        }
    }
    cache.out.noalias() = net.head_w * cache.feats;
    cache.out.colwise() += net.head_b;
    cache.batch = batch;
}

struct Gradients {
    std::array<RowMat, 4> conv_w;
    std::array<Vec, 4> conv_b;
    RowMat head_w;
    Vec head_b;

    static Gradients zeros_like(const Backbone& net) {
        Gradients g;
        for (int k = 0; k < 4; ++k) {
            g.conv_w[k] = RowMat::Zero(net.blocks[k].w.rows(), net.blocks[k].w.cols());
            g.conv_b[k] = Vec::Zero(net.blocks[k].b.size());
        }
        g.head_w = RowMat::Zero(net.head_w.rows(), net.head_w.cols());
        g.head_b = Vec::Zero(net.head_b.size());
        return g;
    }
};

/// Backward pass; `dout` is (out_dim, B). Fills `grads` (overwrites).
inline void backward(const Backbone& net, const ForwardCache& cache, const RowMat& dout,
                     Gradients& grads) {
    const int batch = cache.batch;
    grads.head_w.noalias() = dout * cache.feats.transpose();
    grads.head_b = dout.rowwise().sum();
    RowMat dfeats;
    dfeats.noalias() = net.head_w.transpose() * dout;  // (128, B)
    dfeats.array().colwise() *= net.feat_scale.array();  // standardization backward

    // GAP backward: broadcast /p over the final spatial grid.
    int hw = net.input_hw / 16;
    const int p = hw * hw;
    RowMat dact(net.feature_dim(), Eigen::Index(batch) * p);
    for (int c = 0; c < net.feature_dim(); ++c) {
        float* row = dact.data() + std::size_t(c) * dact.cols();
        for (int b = 0; b < batch; ++b) {
            const float g = dfeats(c, b) / float(p);
            float* d = row + std::size_t(b) * p;
            for (int i = 0; i < p; ++i) d[i] = g;
        }
    }

    for (int k = 3; k >= 0; --k) {
        const ConvBlock& blk = net.blocks[k];
        const auto& cb = cache.blocks[k];
        RowMat drelu;
        detail::avgpool2_backward(dact, batch, cb.hw, drelu);
        // ReLU mask from the stored post-activation values.
        for (Eigen::Index i = 0; i < drelu.size(); ++i)
            if (cb.relu_out.data()[i] <= 0.0f) drelu.data()[i] = 0.0f;
        grads.conv_w[k].noalias() = drelu * cb.col.transpose();
        grads.conv_b[k] = drelu.rowwise().sum();
        if (k > 0) {
            RowMat dcol;
            dcol.noalias() = blk.w.transpose() * drelu;
            dact = RowMat::Zero(blk.c_in, Eigen::Index(batch) * cb.hw * cb.hw);
            detail::col2im_add(dcol, batch, cb.hw, dact);
        }
    }
}

/// SGD with momentum. Velocity layout mirrors Gradients.
struct SgdMomentum {
    double momentum = 0.9;
    Gradients velocity;

    explicit SgdMomentum(const Backbone& net) : velocity(Gradients::zeros_like(net)) {}

    void step_head(Backbone& net, const Gradients& g, double lr) {
        velocity.head_w = float(momentum) * velocity.head_w - float(lr) * g.head_w;
        velocity.head_b = float(momentum) * velocity.head_b - float(lr) * g.head_b;
        net.head_w += velocity.head_w;
        net.head_b += velocity.head_b;
    }

    void step_all(Backbone& net, const Gradients& g, double lr) {
        for (int k = 0; k < 4; ++k) {
            velocity.conv_w[k] = float(momentum) * velocity.conv_w[k] - float(lr) * g.conv_w[k];
            velocity.conv_b[k] = float(momentum) * velocity.conv_b[k] - float(lr) * g.conv_b[k];
            net.blocks[k].w += velocity.conv_w[k];
            net.blocks[k].b += velocity.conv_b[k];
        }
        step_head(net, g, lr);
    }
};

// --------------------------------------------------------------------------
// Serialization
// --------------------------------------------------------------------------

namespace detail {

template <typename T>
inline void put(std::string& out, const T& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
inline T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ModelError("truncated model blob");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

inline void put_floats(std::string& out, const float* data, std::size_t n) {
    out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
}

inline void take_floats(const std::string& in, std::size_t& pos, float* data, std::size_t n) {
    if (pos + n * sizeof(float) > in.size()) throw ModelError("truncated model blob");
    std::memcpy(data, in.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
}

} // namespace detail

inline std::string serialize_backbone(const Backbone& net) {
    std::string out;
    out.append("PFMB");
    detail::put<std::uint32_t>(out, 2);
    detail::put<std::int32_t>(out, net.input_hw);
    detail::put<std::int32_t>(out, net.out_dim);
    for (const auto& blk : net.blocks) {
        detail::put<std::int32_t>(out, blk.c_in);
        detail::put<std::int32_t>(out, blk.c_out);
        detail::put_floats(out, blk.w.data(), std::size_t(blk.w.size()));
        detail::put_floats(out, blk.b.data(), std::size_t(blk.b.size()));
    }
    detail::put_floats(out, net.feat_mean.data(), std::size_t(net.feat_mean.size()));
    detail::put_floats(out, net.feat_scale.data(), std::size_t(net.feat_scale.size()));
    detail::put_floats(out, net.head_w.data(), std::size_t(net.head_w.size()));
    detail::put_floats(out, net.head_b.data(), std::size_t(net.head_b.size()));
    return out;
}

inline Backbone deserialize_backbone(const std::string& blob) {
    if (blob.size() < 4 || blob.compare(0, 4, "PFMB") != 0)
        throw ModelError("not a paraface model blob");
    std::size_t pos = 4;
    const auto version = detail::take<std::uint32_t>(blob, pos);
    if (version != 2) throw ModelError("unsupported model blob version");
    Backbone net;
    net.input_hw = detail::take<std::int32_t>(blob, pos);
    net.out_dim = detail::take<std::int32_t>(blob, pos);
    for (auto& blk : net.blocks) {
        blk.c_in = detail::take<std::int32_t>(blob, pos);
        blk.c_out = detail::take<std::int32_t>(blob, pos);
        blk.w.resize(blk.c_out, blk.c_in * 9);
        blk.b.resize(blk.c_out);
        detail::take_floats(blob, pos, blk.w.data(), std::size_t(blk.w.size()));
        detail::take_floats(blob, pos, blk.b.data(), std::size_t(blk.b.size()));
    }
    net.feat_mean.resize(net.feature_dim());
    net.feat_scale.resize(net.feature_dim());
    detail::take_floats(blob, pos, net.feat_mean.data(), std::size_t(net.feat_mean.size()));
    detail::take_floats(blob, pos, net.feat_scale.data(), std::size_t(net.feat_scale.size()));
    net.head_w.resize(net.out_dim, net.feature_dim());
    net.head_b.resize(net.out_dim);
    detail::take_floats(blob, pos, net.head_w.data(), std::size_t(net.head_w.size()));
    detail::take_floats(blob, pos, net.head_b.data(), std::size_t(net.head_b.size()));
    if (pos != blob.size()) throw ModelError("trailing bytes in model blob");
    return net;
}

/// Digest over the feature stage (conv blocks) only; the frozen-layer
/// contract compares this before and after feature-extraction training.
inline std::string feature_stage_digest(const Backbone& net) {
    std::string bytes;
    for (const auto& blk : net.blocks) {
        detail::put_floats(bytes, blk.w.data(), std::size_t(blk.w.size()));
        detail::put_floats(bytes, blk.b.data(), std::size_t(blk.b.size()));
    }
    return sha256_hex(bytes);
}

} // namespace paraface::nn
