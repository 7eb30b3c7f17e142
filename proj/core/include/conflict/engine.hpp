// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "conflict/detector.hpp"
#include "conflict/embedding.hpp"
#include "conflict/model_backend.hpp"
#include "conflict/preference.hpp"

namespace conflict {

/// Engine configuration file. Relative paths resolve against the file's
/// directory.
///
/// {
///   "detection": {"w": 0.87, "tau_s": 0.88, "tau_t": 0.94},
///   "text_embedding":  {"kind": "mock", "dimension": 256, "seed": 1},
///   "image_embedding": {"kind": "mock", "dimension": 256, "seed": 2},
///   "model_backend": {"kind": "remote", "endpoint": "http://host:8001/v1/complete"},
///   "summarizer": {"kind": "mock"},
///   "buffers": {"speech": "speech.buf", "multimodal": "multimodal.buf"},
///   "dataset": "dataset.jsonl",
///   "store_noise_speech": false,
///   "max_cases": 20,
///   "detection_prompt": "prompt.json",
///   "preference_prompts": "preference_prompts.json"
/// }
///
/// "detection" is required; its thresholds must lie in [0, 1]. Buffers are
/// loaded from "buffers" when those files exist and otherwise built from
/// "dataset".
struct EngineConfig {
    DetectionConfig detection;
    EmbeddingProviderConfig text_embedding;
    EmbeddingProviderConfig image_embedding;
    ModelBackendConfig model_backend;
    SummarizerConfig summarizer;
    std::optional<std::filesystem::path> speech_buffer;
    std::optional<std::filesystem::path> multimodal_buffer;
    std::optional<std::filesystem::path> dataset;
    bool store_noise_speech = false;
    std::size_t max_cases = PreferenceEngine::kDefaultMaxCases;
    std::optional<std::filesystem::path> detection_prompt;
    std::optional<std::filesystem::path> preference_prompts;

    /// Throws ValidationError on malformed or out-of-range values.
    static EngineConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static EngineConfig load(const std::filesystem::path& path);
};

DetectionPrompt load_detection_prompt(const std::filesystem::path& path);
PreferencePrompts load_preference_prompts(const std::filesystem::path& path);

/// Loads each buffer file that exists, builds the rest from the dataset, and
/// checks the buffers were embedded by the configured providers.
std::shared_ptr<const RetrievalBuffers> load_or_build_buffers(const EngineConfig& config, const Providers& providers);

/// Everything the CLI and the service run on.
struct Engine {
    EngineConfig config;
    Providers providers;
    std::shared_ptr<ModelBackend> backend;
    std::shared_ptr<Detector> detector;
    std::shared_ptr<SummarizerBackend> summarizer;
    PreferencePrompts preference_prompts;
};

Engine build_engine(const EngineConfig& config);

}  // namespace conflict
