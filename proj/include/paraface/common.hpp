/*
 * paraface - parametric face reconstruction pipeline in modern C++.
 *
 * File: include/paraface/common.hpp
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

#include <stdexcept>
#include <string>

namespace paraface {

inline constexpr const char* kVersion = "0.1.0";

/**
 * All pipeline errors carry the stage they originate from so that callers
 * (and the CLI's single-line error output) can name the failing stage.
 */
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct ParseError : Error {
    ParseError(const std::string& msg, int line = -1)
        : Error("parse", line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_number(line) {}
    int line_number;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error("validate", msg) {}
};

struct LayoutError : Error {
    explicit LayoutError(const std::string& msg) : Error("layout", msg) {}
};

struct LookupError : Error {
    explicit LookupError(const std::string& msg) : Error("lookup", msg) {}
};

struct GeometryError : Error {
    explicit GeometryError(const std::string& msg) : Error("geometry", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct RegistrationError : Error {
    explicit RegistrationError(const std::string& msg) : Error("registration", msg) {}
};

struct AdapterError : Error {
    explicit AdapterError(const std::string& msg) : Error("adapter", msg) {}
};

struct ModelError : Error {
    explicit ModelError(const std::string& msg) : Error("model", msg) {}
};

struct EnsembleError : Error {
    explicit EnsembleError(const std::string& msg) : Error("ensemble", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

} // namespace paraface
