// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/engine.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "conflict/error.hpp"
#include "conflict/retrieval.hpp"

namespace conflict {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base / path : path;
}

double unit_threshold(const nlohmann::json& j, const char* key) {
    const double v = j.at(key).get<double>();
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ValidationError(fmt::format("detection.{} must lie in [0, 1] (got {})", key, v));
    return v;
}

// Runs a section parser, reporting any failure against the section name.
template <typename T>
T section(const nlohmann::json& j, const char* key, bool required) {
    if (!j.contains(key)) {
        if (required) throw ValidationError(fmt::format("config is missing \"{}\"", key));
        return T{};
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("config \"{}\": {}", key, e.what()));
    } catch (const ArgumentError& e) {
        throw ValidationError(fmt::format("config \"{}\": {}", key, e.what()));
    }
}

void check_provider(const std::string& what, const std::string& buffer_id, const EmbeddingProvider& provider) {
    if (buffer_id != provider.id())
        throw ValidationError(fmt::format("{} was embedded by '{}' but the configured provider is '{}'", what,
                                          buffer_id, provider.id()));
}

}  // namespace

EngineConfig EngineConfig::parse(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    EngineConfig c;

    if (!j.contains("detection")) throw ValidationError("config is missing \"detection\"");
    const auto& d = j.at("detection");
    try {
        c.detection.w = FusionWeight(d.at("w").get<double>());
        c.detection.tau_s = unit_threshold(d, "tau_s");
        c.detection.tau_t = unit_threshold(d, "tau_t");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("config \"detection\": {}", e.what()));
    } catch (const ArgumentError& e) {
        throw ValidationError(fmt::format("config \"detection\": {}", e.what()));
    }

    c.text_embedding = section<EmbeddingProviderConfig>(j, "text_embedding", true);
    c.image_embedding = section<EmbeddingProviderConfig>(j, "image_embedding", true);
    c.model_backend = section<ModelBackendConfig>(j, "model_backend", false);
    c.summarizer = section<SummarizerConfig>(j, "summarizer", false);

    try {
        if (auto it = j.find("buffers"); it != j.end()) {
            if (it->contains("speech")) c.speech_buffer = resolve(base_dir, it->at("speech").get<std::string>());
            if (it->contains("multimodal"))
                c.multimodal_buffer = resolve(base_dir, it->at("multimodal").get<std::string>());
        }
        if (j.contains("dataset")) c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
        c.store_noise_speech = j.value("store_noise_speech", false);
        c.max_cases = j.value("max_cases", PreferenceEngine::kDefaultMaxCases);
        if (j.contains("detection_prompt"))
            c.detection_prompt = resolve(base_dir, j.at("detection_prompt").get<std::string>());
        if (j.contains("preference_prompts"))
            c.preference_prompts = resolve(base_dir, j.at("preference_prompts").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("config: {}", e.what()));
    }
    if (c.max_cases == 0) throw ValidationError("max_cases must be positive");
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    return parse(read_json(path), std::filesystem::absolute(path).parent_path());
}

DetectionPrompt load_detection_prompt(const std::filesystem::path& path) {
    const auto j = read_json(path);
    auto prompt = DetectionPrompt::defaults();
    prompt.system_instruction = j.value("system_instruction", prompt.system_instruction);
    prompt.user_template = j.value("user_template", prompt.user_template);
    return prompt;
}

PreferencePrompts load_preference_prompts(const std::filesystem::path& path) {
    const auto j = read_json(path);
    auto prompts = PreferencePrompts::defaults();
    if (auto it = j.find("system_by_type"); it != j.end()) {
        for (const auto& [key, value] : it->items()) prompts.system_by_type[parse_label(key)] = value.get<std::string>();
    }
    prompts.user_template = j.value("user_template", prompts.user_template);
    prompts.validate();
    return prompts;
}

std::shared_ptr<const RetrievalBuffers> load_or_build_buffers(const EngineConfig& config, const Providers& providers) {
    auto buffers = std::make_shared<RetrievalBuffers>();
    const auto exists = [](const std::optional<std::filesystem::path>& p) { return p && std::filesystem::exists(*p); };

    std::vector<DatasetRecord> records;
    std::filesystem::path base;
    const bool need_dataset = !exists(config.speech_buffer) || !exists(config.multimodal_buffer);
    if (need_dataset && config.dataset) {
        records = load_dataset(*config.dataset);
        base = config.dataset->parent_path();
    }

    if (exists(config.speech_buffer)) {
        buffers->speech = load_speech_buffer(*config.speech_buffer);
    } else if (config.dataset) {
        buffers->speech = build_speech_buffer(records, *providers.text, {config.store_noise_speech});
    }
    if (exists(config.multimodal_buffer)) {
        buffers->multimodal = load_multimodal_buffer(*config.multimodal_buffer);
    } else if (config.dataset) {
        buffers->multimodal = build_multimodal_buffer(records, *providers.text, *providers.image, base);
    }

    if (!buffers->speech.empty()) check_provider("speech buffer", buffers->speech.provider_id(), *providers.text);
    if (!buffers->multimodal.empty()) {
        check_provider("multi-modal prompt embeddings", buffers->multimodal.prompt_provider_id(), *providers.text);
        check_provider("multi-modal observation embeddings", buffers->multimodal.obs_provider_id(), *providers.image);
    }
    spdlog::info("buffers ready: {} speech entries, {} multi-modal entries", buffers->speech.size(),
                 buffers->multimodal.size());
    return buffers;
}

Engine build_engine(const EngineConfig& config) {
    Engine e;
    e.config = config;
    e.providers = {make_embedding_provider(config.text_embedding), make_embedding_provider(config.image_embedding)};
    e.backend = make_model_backend(config.model_backend);
    e.summarizer = make_summarizer(config.summarizer);
    e.preference_prompts =
        config.preference_prompts ? load_preference_prompts(*config.preference_prompts) : PreferencePrompts::defaults();

    DetectionContext context{e.providers, e.backend,
                             config.detection_prompt ? load_detection_prompt(*config.detection_prompt)
                                                     : DetectionPrompt::defaults()};
    e.detector = std::make_shared<Detector>(std::move(context), config.detection,
                                            load_or_build_buffers(config, e.providers));
    return e;
}

}  // namespace conflict
