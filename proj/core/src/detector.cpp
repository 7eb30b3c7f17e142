// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/detector.hpp"

#include <cmath>

#include <fmt/format.h>

#include "conflict/error.hpp"

namespace conflict {

namespace {

using Clock = std::chrono::steady_clock;
using Cause = DetectionError::Cause;

double seconds(std::chrono::nanoseconds d) { return std::chrono::duration<double>(d).count(); }

class Run {
public:
    explicit Run(DetectionResult& result) : result_(result), start_(Clock::now()) {}

    // Runs `fn` as a named stage, translating library errors into
    // DetectionError with the scores gathered so far.
    template <typename Fn>
    auto stage(const char* name, Fn&& fn) {
        const auto t0 = Clock::now();
        try {
            auto value = fn();
            result_.stages.push_back({name, Clock::now() - t0});
            return value;
        } catch (const ProviderError& e) {
            fail(name, Cause::ProviderFailure, e.what());
        } catch (const BackendError& e) {
            fail(name, Cause::BackendFailure, e.what());
        } catch (const ParseError& e) {
            fail(name, Cause::BadBackendReply, e.what(), e.raw());
        } catch (const IoError& e) {
            fail(name, Cause::InvalidInput, e.what());
        } catch (const ArgumentError& e) {
            fail(name, Cause::InvalidInput, e.what());
        }
    }

    void finish() {
        result_.latency = Clock::now() - start_;
        result_.timestamp = now_timestamp();
    }

private:
    [[noreturn]] void fail(const char* stage, Cause cause, const char* what, std::string raw = {}) {
        throw DetectionError(fmt::format("{} failed: {}", stage, what), cause, stage, result_.speech_score,
                             result_.task_score, std::move(raw));
    }

    DetectionResult& result_;
    Clock::time_point start_;
};

}  // namespace

void DetectionConfig::validate() const {
    if (!std::isfinite(tau_s) || tau_s < 0.0) throw ArgumentError(fmt::format("tau_s must be >= 0 (got {})", tau_s));
    if (!std::isfinite(tau_t) || tau_t < 0.0) throw ArgumentError(fmt::format("tau_t must be >= 0 (got {})", tau_t));
}

std::string_view to_string(DetectionMethod method) noexcept {
    switch (method) {
        case DetectionMethod::SpeechRetrieval: return "speech_retrieval";
        case DetectionMethod::TaskRetrieval: return "task_retrieval";
        case DetectionMethod::ModelInference: return "model_inference";
    }
    return "model_inference";
}

void to_json(nlohmann::json& j, const DetectionResult& r) {
    const auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : r.stages) stages.push_back({{"stage", s.stage}, {"seconds", seconds(s.duration)}});
    j = nlohmann::json{
        {"label", r.label},
        {"method", to_string(r.method)},
        {"speech_score", opt(r.speech_score)},
        {"task_score", opt(r.task_score)},
        {"matched_entry_id", opt(r.matched_entry_id)},
        {"latency", seconds(r.latency)},
        {"timestamp", format_timestamp(r.timestamp)},
        {"stages", std::move(stages)},
    };
}

DetectionResult detect(const DetectionInput& input, const DetectionConfig& config, const RetrievalBuffers& buffers,
                       const DetectionContext& context) {
    input.validate();
    DetectionResult result;
    Run run(result);

    const auto speech = normalize_speech(input.speech);
    if (speech && !buffers.speech.empty()) {
        const auto query = run.stage("speech_embedding", [&] { return context.providers.text->embed_text(*speech); });
        const auto hit = run.stage("speech_retrieval", [&] { return speech_score(query, buffers.speech); });
        result.speech_score = hit.score;
        if (hit.score > config.tau_s) {
            result.label = hit.entry_label;
            result.method = DetectionMethod::SpeechRetrieval;
            result.matched_entry_id = hit.entry_id;
            run.finish();
            return result;
        }
    }

    if (!buffers.multimodal.empty()) {
        const auto prompt_q =
            run.stage("prompt_embedding", [&] { return context.providers.text->embed_text(render_prompt(input.task, input.step)); });
        const auto obs_q = run.stage("image_embedding", [&] { return context.providers.image->embed_image(input.image); });
        const auto hit = run.stage("task_retrieval",
                                   [&] { return task_attribute_score(prompt_q, obs_q, buffers.multimodal, config.w); });
        result.task_score = hit.score;
        if (hit.score >= config.tau_t) {
            result.label = hit.entry_label;
            result.method = DetectionMethod::TaskRetrieval;
            result.matched_entry_id = hit.entry_id;
            run.finish();
            return result;
        }
    }

    if (!context.backend)
        throw DetectionError("no model backend configured", Cause::BackendFailure, "model_inference",
                             result.speech_score, result.task_score);
    result.label = run.stage("model_inference", [&] { return escalate(input, *context.backend, context.prompt); });
    result.method = DetectionMethod::ModelInference;
    run.finish();
    return result;
}

std::optional<std::string> gate_violation(const DetectionResult& r, const DetectionConfig& c) {
    const bool speech_fired = r.speech_score && *r.speech_score > c.tau_s;
    switch (r.method) {
        case DetectionMethod::SpeechRetrieval:
            if (!speech_fired) return "speech_retrieval without S_s > tau_s";
            if (r.task_score) return "speech_retrieval did not short-circuit task retrieval";
            break;
        case DetectionMethod::TaskRetrieval:
            if (speech_fired) return "task_retrieval although the speech gate fired";
            if (!r.task_score || *r.task_score < c.tau_t) return "task_retrieval without S_t >= tau_t";
            break;
        case DetectionMethod::ModelInference:
            if (speech_fired) return "model_inference although the speech gate fired";
            if (r.task_score && *r.task_score >= c.tau_t) return "model_inference although S_t >= tau_t";
            break;
    }
    return std::nullopt;
}

std::vector<FrameOutcome> detect_stream(std::span<const DetectionInput> frames, const DetectionConfig& config,
                                        const RetrievalBuffers& buffers, const DetectionContext& context) {
    std::vector<FrameOutcome> out;
    out.reserve(frames.size());
    for (const auto& frame : frames) {
        try {
            out.push_back({detect(frame, config, buffers, context), std::nullopt});
        } catch (const Error& e) {
            out.push_back({std::nullopt, std::string(e.what())});
        }
    }
    return out;
}

Detector::Detector(DetectionContext context, DetectionConfig config, std::shared_ptr<const RetrievalBuffers> buffers)
    : context_(std::move(context)), config_(config), buffers_(std::move(buffers)) {
    config_.validate();
    if (!context_.providers.text || !context_.providers.image)
        throw ArgumentError("detector requires text and image embedding providers");
    if (!buffers_) buffers_ = std::make_shared<RetrievalBuffers>();
}

DetectionResult Detector::detect(const DetectionInput& input) const { return detect(input, config_); }

DetectionResult Detector::detect(const DetectionInput& input, const DetectionConfig& config) const {
    const auto snapshot = buffers();
    return conflict::detect(input, config, *snapshot, context_);
}

std::vector<FrameOutcome> Detector::detect_stream(std::span<const DetectionInput> frames) const {
    const auto snapshot = buffers();
    return conflict::detect_stream(frames, config_, *snapshot, context_);
}

void Detector::swap_buffers(std::shared_ptr<const RetrievalBuffers> buffers) {
    if (!buffers) throw ArgumentError("buffers must not be null");
    std::lock_guard lock(buffers_mutex_);
    buffers_ = std::move(buffers);
}

std::shared_ptr<const RetrievalBuffers> Detector::buffers() const {
    std::lock_guard lock(buffers_mutex_);
    return buffers_;
}

}  // namespace conflict
