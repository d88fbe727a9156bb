/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/adapt.hpp
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

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "paraface/common.hpp"
#include "paraface/image.hpp"
#include "paraface/render.hpp"

namespace paraface {

// --------------------------------------------------------------------------
// Eye-center registration
// --------------------------------------------------------------------------

/// Canonical frame the whole pipeline trains and infers in.
struct RegistrationConfig {
    int canvas = 64;
    Point left_eye{24.0, 21.0};   // canonical eye positions, 64-unit frame
    Point right_eye{40.0, 21.0};
    double fill = 0.05;           // out-of-source background level

    static RegistrationConfig for_canvas(int canvas) {
        const double u = canvas / 64.0;
        RegistrationConfig c;
        c.canvas = canvas;
        c.left_eye = {24.0 * u, 21.0 * u};
        c.right_eye = {40.0 * u, 21.0 * u};
        return c;
    }
};

struct RegistrationTransform {
    Similarity transform;   // input pixel coords -> canonical frame
    Point canonical_left;
    Point canonical_right;
};

/**
 * Closed-form similarity from the two eye-center correspondences, then
 * bilinear resampling into the canonical canvas. Throws RegistrationError
 * for coincident or out-of-image eye points.
 */
inline std::pair<ImageF, RegistrationTransform> register_image(const ImageF& image,
                                                               Point left_eye, Point right_eye,
                                                               const RegistrationConfig& cfg) {
    auto inside = [&](const Point& p) {
        return p.x >= 0 && p.y >= 0 && p.x <= image.width - 1 && p.y <= image.height - 1;
    };
    if (!inside(left_eye) || !inside(right_eye))
        throw RegistrationError("eye landmarks outside the image");
    if (left_eye.x == right_eye.x && left_eye.y == right_eye.y)
        throw RegistrationError("coincident eye points (degenerate geometry)");
    RegistrationTransform rt;
    rt.canonical_left = cfg.left_eye;
    rt.canonical_right = cfg.right_eye;
    rt.transform = Similarity::from_two_points(left_eye, right_eye, cfg.left_eye, cfg.right_eye);
    ImageF registered = warp_similarity(image, rt.transform, cfg.canvas, cfg.canvas,
                                        float(cfg.fill));
    return {std::move(registered), rt};
}

/**
 * Fixed-rectangle crop of a registered image for one region's local model,
 * resized to the local input size. Throws LookupError for unknown regions.
 */
inline ImageF crop_region(const ImageF& registered, const std::string& region, int local_size) {
    const PixelBox box = crop_rect(region, registered.width);
    ImageF cropped = crop(registered, box.y0, box.x0, box.y1, box.x1);
    return resize_bilinear(cropped, local_size, local_size);
}

/// crop_region with on-the-fly registration from supplied eye landmarks.
inline ImageF crop_region(const ImageF& image, Point left_eye, Point right_eye,
                          const std::string& region, const RegistrationConfig& cfg,
                          int local_size) {
    auto [registered, rt] = register_image(image, left_eye, right_eye, cfg);
    return crop_region(registered, region, local_size);
}

// --------------------------------------------------------------------------
// Domain adapters
// --------------------------------------------------------------------------

/**
 * An image-to-image stage preserving dimensions and channel count. apply()
 * enforces the dimension contract for every adapter, built-in or external.
 */
class DomainAdapter {
public:
    DomainAdapter() : id_("identity"), fn_([](const ImageF& img) { return img; }) {}
    DomainAdapter(std::string id, std::function<ImageF(const ImageF&)> fn)
        : id_(std::move(id)), fn_(std::move(fn)) {}

    const std::string& id() const { return id_; }

    ImageF apply(const ImageF& image) const {
        ImageF out = fn_(image);
        if (out.height != image.height || out.width != image.width)
            throw AdapterError("adapter '" + id_ + "' changed image dimensions");
        return out;
    }

private:
    std::string id_;
    std::function<ImageF(const ImageF&)> fn_;
};

/// Returns the input unchanged, byte-exact.
inline DomainAdapter identity_adapter() { return DomainAdapter(); }

/**
 * Deterministic intensity posterization to `levels` bands: the desk-scale
 * stand-in for a synthetic art style. Idempotent at a fixed level count;
 * a no-op at 256 levels on 8-bit data. Throws for levels < 2.
 */
inline ImageF toy_stylizer(const ImageF& image, int levels) {
    if (levels < 2) throw AdapterError("toy stylizer needs levels >= 2");
    ImageF out = image;
    for (auto& p : out.pixels) p = float(posterize_value(p, levels));
    return out;
}

inline DomainAdapter toy_stylizer_adapter(int levels) {
    if (levels < 2) throw AdapterError("toy stylizer needs levels >= 2");
    return DomainAdapter("posterize:" + std::to_string(levels),
                         [levels](const ImageF& img) { return toy_stylizer(img, levels); });
}

/**
 * The adapter mapping eval-domain inputs toward the training domain. For the
 * built-in posterization gap (models trained on posterized renders, clean
 * inputs at inference) the inverse adapter is the stylizer itself.
 */
inline DomainAdapter inverse_adapter_for(const std::string& stylizer_id) {
    if (stylizer_id == "identity" || stylizer_id.empty()) return identity_adapter();
    if (stylizer_id.rfind("posterize:", 0) == 0) {
        const int levels = std::atoi(stylizer_id.c_str() + 10);
        return toy_stylizer_adapter(levels);
    }
    throw AdapterError("unknown stylizer id: " + stylizer_id);
}

namespace detail {

inline int run_with_timeout(const std::vector<std::string>& argv, long timeout_ms) {
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    const pid_t pid = fork();
    if (pid < 0) throw AdapterError("fork failed for external adapter");
    if (pid == 0) {
        execvp(cargv[0], cargv.data());
        _exit(127);
    }
    const long poll_us = 2000;
    long waited_ms = 0;
    for (;;) {
        int status = 0;
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            if (WIFEXITED(status)) return WEXITSTATUS(status);
            return -1;
        }
        if (timeout_ms > 0 && waited_ms >= timeout_ms) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            return -2;
        }
        usleep(poll_us);
        waited_ms += poll_us / 1000;
    }
}

inline std::string temp_png_path(const char* tag) {
    static std::atomic<unsigned> counter{0};
    std::ostringstream name;
    name << "paraface_" << tag << "_" << getpid() << "_" << counter.fetch_add(1) << ".png";
    return (std::filesystem::temp_directory_path() / name.str()).string();
}

} // namespace detail

/**
 * Wraps an external program as a DomainAdapter. Contract:
 * `<cmd...> <in.png> <out.png>`, exit code 0, same output dimensions.
 * Timeout in ms from PARAFACE_ADAPTER_TIMEOUT_MS (default 30000; 0 disables).
 */
inline DomainAdapter external_adapter(const std::vector<std::string>& command) {
    if (command.empty()) throw AdapterError("empty external adapter command");
    std::string id = "external:" + command.front();
    return DomainAdapter(id, [command, id](const ImageF& img) {
        const std::string in_path = detail::temp_png_path("in");
        const std::string out_path = detail::temp_png_path("out");
        write_png(in_path, img);
        std::vector<std::string> argv = command;
        argv.push_back(in_path);
        argv.push_back(out_path);
        long timeout_ms = 30000;
        if (const char* env = std::getenv("PARAFACE_ADAPTER_TIMEOUT_MS")) timeout_ms = std::atol(env);
        const int rc = detail::run_with_timeout(argv, timeout_ms);
        std::error_code ec;
        std::filesystem::remove(in_path, ec);
        if (rc == -2) {
            std::filesystem::remove(out_path, ec);
            throw AdapterError("adapter '" + id + "' timed out");
        }
        if (rc != 0) {
            std::filesystem::remove(out_path, ec);
            throw AdapterError("adapter '" + id + "' failed with exit code " + std::to_string(rc));
        }
        ImageF out;
        try {
            out = read_png(out_path);
        } catch (const Error& e) {
            std::filesystem::remove(out_path, ec);
            throw AdapterError("adapter '" + id + "' wrote no readable output: " +
                               std::string(e.what()));
        }
        std::filesystem::remove(out_path, ec);
        if (out.height != img.height || out.width != img.width)
            throw AdapterError("adapter '" + id + "' output size mismatch");
        return out;
    });
}

/// Adapter factory from a config/CLI identifier:
/// "identity" | "posterize:<levels>" | "external:<cmd>[ args...]".
inline DomainAdapter make_adapter(const std::string& spec) {
    if (spec.empty() || spec == "identity") return identity_adapter();
    if (spec.rfind("posterize:", 0) == 0) return inverse_adapter_for(spec);
    if (spec.rfind("external:", 0) == 0) {
        std::istringstream in(spec.substr(9));
        std::vector<std::string> cmd;
        std::string tok;
        while (in >> tok) cmd.push_back(tok);
        return external_adapter(cmd);
    }
    throw AdapterError("unknown adapter spec: " + spec);
}

} // namespace paraface
