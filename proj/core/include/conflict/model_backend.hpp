// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "conflict/types.hpp"

namespace conflict {

/// Instruction for the fallback classifier. `user_template` holds the
/// placeholders {task}, {step} and {speech}; absent speech renders as "none".
struct DetectionPrompt {
    std::string system_instruction;
    std::string user_template;

    static DetectionPrompt defaults();
    std::string render_user(const DetectionInput& input) const;
};

/// Replaces every "{name}" with its value. Unknown placeholders are left as is.
std::string fill_template(std::string_view tmpl,
                          std::initializer_list<std::pair<std::string_view, std::string_view>> values);

/// Extracts the single conflict label named in a model reply.
///
/// Canonical tokens ("goal_absence", ..., "normal") are matched
/// case-insensitively on word boundaries. Exactly one distinct label must
/// appear; otherwise ParseError carrying the raw reply is thrown.
ConflictLabel parse_label_response(std::string_view reply);

struct ModelRequest {
    std::string system;
    std::string user;
    ImageRef image;
};

/// A multi-modal model that answers a prompt with free text.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    /// Throws BackendError when the backend cannot answer.
    virtual std::string complete(const ModelRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Scripted backend for tests and offline runs.
class MockModelBackend final : public ModelBackend {
public:
    using Script = std::function<std::string(const ModelRequest&)>;

    explicit MockModelBackend(std::string answer = "normal");
    explicit MockModelBackend(Script script);

    std::string complete(const ModelRequest& request) override;
    std::string id() const override { return "mock-model"; }

    /// When false, complete() throws a retriable BackendError.
    void set_available(bool available) { available_ = available; }
    std::size_t calls() const noexcept { return calls_.load(); }
    void reset_calls() { calls_ = 0; }

private:
    Script script_;
    std::atomic<bool> available_{true};
    std::atomic<std::size_t> calls_{0};
};

enum class BackendKind { Mock, Remote };

struct ModelBackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::optional<std::string> endpoint;
    std::chrono::milliseconds timeout{30000};
    std::string mock_answer = "normal";
    std::size_t max_in_flight = 2;

    void validate() const;
};

void from_json(const nlohmann::json& j, ModelBackendConfig& config);

/// POSTs {"system", "prompt", "image"(base64)} and reads {"text"}.
class RemoteModelBackend final : public ModelBackend {
public:
    explicit RemoteModelBackend(ModelBackendConfig config);
    std::string complete(const ModelRequest& request) override;
    std::string id() const override { return "remote:" + *config_.endpoint; }

private:
    ModelBackendConfig config_;
    std::counting_semaphore<> in_flight_;
};

std::shared_ptr<ModelBackend> make_model_backend(const ModelBackendConfig& config);

/// Renders the detection prompt for `input`, queries `backend` and parses
/// the reply. Throws BackendError or ParseError.
ConflictLabel escalate(const DetectionInput& input, ModelBackend& backend, const DetectionPrompt& prompt);

}  // namespace conflict
