// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/model_backend.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "codec.hpp"
#include "conflict/error.hpp"
#include "http_client.hpp"

namespace conflict {

namespace {

constexpr std::string_view kDetectionSystem = R"(You monitor a household mobile manipulator while it carries out a task for its user.
You receive the robot's current camera image, the user's overall task, the step the robot is
currently executing, and any speech heard around the robot (or "none").

Decide whether a person has caused a conflict with the current step, and classify it:
- goal_absence: the object or place the current step needs is not present in the image.
- human_interaction: someone other than the user is trying to command or engage the robot.
- human_occupancy: a person is using or blocking the space or object the step needs.
- object_state: an object's state (closed door, full container, ...) prevents the step.
- normal: nothing prevents the current step. Conversation unrelated to the robot is normal.

Answer with exactly one of: goal_absence, human_interaction, human_occupancy, object_state, normal.)";

constexpr std::string_view kDetectionUser = "Task: {task}\nStep: {step}\nSpeech: {speech}";

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

}  // namespace

DetectionPrompt DetectionPrompt::defaults() {
    return {std::string(kDetectionSystem), std::string(kDetectionUser)};
}

std::string DetectionPrompt::render_user(const DetectionInput& input) const {
    const std::string speech = input.speech.value_or("none");
    return fill_template(user_template, {{"task", input.task}, {"step", input.step}, {"speech", speech}});
}

std::string fill_template(std::string_view tmpl,
                          std::initializer_list<std::pair<std::string_view, std::string_view>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = tmpl.substr(i + 1, close - i - 1);
                bool replaced = false;
                for (const auto& [key, value] : values) {
                    if (key == name) {
                        out += value;
                        replaced = true;
                        break;
                    }
                }
                if (replaced) {
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

ConflictLabel parse_label_response(std::string_view reply) {
    std::string lower(reply);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    std::set<ConflictLabel> found;
    for (auto label : kAllLabels) {
        const auto token = to_string(label);
        for (auto pos = lower.find(token); pos != std::string::npos; pos = lower.find(token, pos + 1)) {
            const bool left_ok = pos == 0 || !is_word_char(static_cast<unsigned char>(lower[pos - 1]));
            const auto end = pos + token.size();
            const bool right_ok = end == lower.size() || !is_word_char(static_cast<unsigned char>(lower[end]));
            if (left_ok && right_ok) {
                found.insert(label);
                break;
            }
        }
    }
    if (found.size() != 1)
        throw ParseError(fmt::format("model reply names {} conflict labels, expected exactly one", found.size()),
                         std::string(reply));
    return *found.begin();
}

MockModelBackend::MockModelBackend(std::string answer)
    : script_([answer = std::move(answer)](const ModelRequest&) { return answer; }) {}

MockModelBackend::MockModelBackend(Script script) : script_(std::move(script)) {}

std::string MockModelBackend::complete(const ModelRequest& request) {
    ++calls_;
    if (!available_) throw BackendError("mock model backend unavailable", 503, true);
    return script_(request);
}

void ModelBackendConfig::validate() const {
    if (kind == BackendKind::Remote && (!endpoint || endpoint->empty()))
        throw ArgumentError("remote model backend requires an endpoint");
    if (max_in_flight == 0) throw ArgumentError("max_in_flight must be positive");
    if (timeout.count() <= 0) throw ArgumentError("backend timeout must be positive");
}

void from_json(const nlohmann::json& j, ModelBackendConfig& c) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "mock")
        c.kind = BackendKind::Mock;
    else if (kind == "remote")
        c.kind = BackendKind::Remote;
    else
        throw ArgumentError(fmt::format("unknown backend kind '{}'", kind));
    c.endpoint = j.contains("endpoint") ? std::optional(j.at("endpoint").get<std::string>()) : std::nullopt;
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
    c.mock_answer = j.value("mock_answer", std::string("normal"));
    c.max_in_flight = j.value("max_in_flight", std::size_t{2});
    c.validate();
}

RemoteModelBackend::RemoteModelBackend(ModelBackendConfig config)
    : config_(std::move(config)), in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(config_.max_in_flight, 1))) {
    config_.validate();
}

std::string RemoteModelBackend::complete(const ModelRequest& request) {
    const std::string& endpoint = *config_.endpoint;
    const nlohmann::json body = {{"system", request.system},
                                 {"prompt", request.user},
                                 {"image", detail::base64_encode(request.image.load())}};

    detail::HttpResponse res;
    {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{in_flight_};
        try {
            res = detail::post_json(endpoint, body.dump(), config_.timeout);
        } catch (const detail::TransportError& e) {
            throw BackendError(e.what(), 0, true);
        }
    }
    if (res.status < 200 || res.status >= 300)
        throw BackendError(fmt::format("{} returned HTTP {}", endpoint, res.status), res.status,
                           res.status >= 500 || res.status == 429);
    try {
        return nlohmann::json::parse(res.body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(fmt::format("{}: reply is not {{\"text\": ...}}", endpoint), res.body);
    }
}

std::shared_ptr<ModelBackend> make_model_backend(const ModelBackendConfig& config) {
    config.validate();
    if (config.kind == BackendKind::Mock) return std::make_shared<MockModelBackend>(config.mock_answer);
    return std::make_shared<RemoteModelBackend>(config);
}

ConflictLabel escalate(const DetectionInput& input, ModelBackend& backend, const DetectionPrompt& prompt) {
    const ModelRequest request{prompt.system_instruction, prompt.render_user(input), input.image};
    return parse_label_response(backend.complete(request));
}

}  // namespace conflict
