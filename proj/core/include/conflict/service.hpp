// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "conflict/engine.hpp"

namespace conflict {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Holds the journals, scenarios.json and uploads/.
    std::filesystem::path data_dir = "data";
    /// When set, /v1 requests other than /v1/health need "Authorization: Bearer <token>".
    std::optional<std::string> auth_token;
    /// Origins allowed cross-origin access; "*" allows any.
    std::vector<std::string> cors_origins;
    /// Static files (the annotation UI) served under /.
    std::optional<std::filesystem::path> ui_dir;
    std::size_t threads = 8;

    /// CONFLICT_PORT and CONFLICT_DATA_DIR override port and data_dir.
    void apply_env();
    /// Creates the data directory and checks it is writable. Throws IoError.
    void prepare() const;
};

/// HTTP/JSON front end over an Engine and a journaled PreferenceStore.
///
///   POST /v1/detect                       DetectionResult
///   GET  /v1/annotation/scenarios?user=   pending annotation scenarios
///   POST /v1/annotation/cases             record a UserCase
///   GET  /v1/annotation/cases?user=       the user's cases, newest first
///   GET  /v1/scenarios[?role=]            all scenarios
///   GET  /v1/scenarios/{id}/image         scenario image bytes
///   POST /v1/predict                      PreferencePrediction
///   GET  /v1/predictions?user=            the user's predictions, oldest first
///   GET  /v1/predictions/{id}
///   POST /v1/predictions/{id}/rating      updated prediction
///   GET  /v1/ratings?user=                rating history
///   GET  /v1/catalog                      solution catalogs
///   GET  /v1/health
///
/// Every non-2xx body is {"code", "message", "detail"}.
class Service {
public:
    Service(ServiceConfig config, Engine engine);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; returns the bound port (useful with port 0).
    /// Throws IoError when the address is unavailable.
    int bind();
    /// Serves until stop(). Calls bind() first if needed.
    void run();
    void stop();

    PreferenceStore& store();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace conflict
