// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflict/embedding.hpp"
#include "conflict/model_backend.hpp"
#include "conflict/retrieval.hpp"
#include "conflict/types.hpp"

namespace conflict {

/// Gate parameters. Speech fires when S_s > tau_s; task retrieval is
/// accepted when S_t >= tau_t and escalates otherwise.
struct DetectionConfig {
    FusionWeight w{0.87};
    double tau_s = 0.88;
    double tau_t = 0.94;

    /// Tuned values reported for the 3B fallback model.
    static DetectionConfig defaults() { return {}; }

    /// Thresholds must be finite and non-negative. Values above 1 are
    /// allowed here: tau_t > 1 escalates every task-retrieval query.
    void validate() const;
};

enum class DetectionMethod { SpeechRetrieval, TaskRetrieval, ModelInference };

std::string_view to_string(DetectionMethod method) noexcept;

struct StageTiming {
    std::string stage;
    std::chrono::nanoseconds duration{0};
};

struct DetectionResult {
    ConflictLabel label = ConflictLabel::Normal;
    DetectionMethod method = DetectionMethod::TaskRetrieval;
    std::optional<double> speech_score;
    std::optional<double> task_score;
    std::optional<std::string> matched_entry_id;
    std::chrono::nanoseconds latency{0};
    Timestamp timestamp{};
    std::vector<StageTiming> stages;
};

/// latency and stage durations are reported in seconds.
void to_json(nlohmann::json& j, const DetectionResult& result);

struct RetrievalBuffers {
    SpeechBuffer speech;
    MultiModalBuffer multimodal;
};

/// Everything detect() needs besides the gate parameters and the buffers.
struct DetectionContext {
    Providers providers;
    std::shared_ptr<ModelBackend> backend;
    DetectionPrompt prompt = DetectionPrompt::defaults();
};

/// One detection tick.
///
/// 1. Speech present and speech buffer non-empty: if S_s > tau_s, return the
///    speech hit's label (method speech_retrieval) without looking further.
/// 2. Multi-modal buffer non-empty and S_t >= tau_t: maximizer's label
///    (method task_retrieval).
/// 3. Otherwise ask the model backend (method model_inference).
///
/// Throws ArgumentError for invalid input and DetectionError when a
/// provider or the backend fails; no failure is reported as Normal.
DetectionResult detect(const DetectionInput& input, const DetectionConfig& config, const RetrievalBuffers& buffers,
                       const DetectionContext& context);

/// Returns a description of the first gate invariant `result` violates.
std::optional<std::string> gate_violation(const DetectionResult& result, const DetectionConfig& config);

/// Per-frame outcome of a stream; exactly one of the two is set.
struct FrameOutcome {
    std::optional<DetectionResult> result;
    std::optional<std::string> error;
};

/// Runs detect() over frames in order. A failing frame is recorded and the
/// stream continues.
std::vector<FrameOutcome> detect_stream(std::span<const DetectionInput> frames, const DetectionConfig& config,
                                        const RetrievalBuffers& buffers, const DetectionContext& context);

/// Owns the detection context and a swappable, immutable set of buffers.
/// detect() is reentrant.
class Detector {
public:
    Detector(DetectionContext context, DetectionConfig config, std::shared_ptr<const RetrievalBuffers> buffers);

    DetectionResult detect(const DetectionInput& input) const;
    DetectionResult detect(const DetectionInput& input, const DetectionConfig& config) const;
    std::vector<FrameOutcome> detect_stream(std::span<const DetectionInput> frames) const;

    void swap_buffers(std::shared_ptr<const RetrievalBuffers> buffers);
    std::shared_ptr<const RetrievalBuffers> buffers() const;

    const DetectionConfig& config() const noexcept { return config_; }
    const DetectionContext& context() const noexcept { return context_; }

private:
    DetectionContext context_;
    DetectionConfig config_;
    mutable std::mutex buffers_mutex_;
    std::shared_ptr<const RetrievalBuffers> buffers_;
};

}  // namespace conflict
