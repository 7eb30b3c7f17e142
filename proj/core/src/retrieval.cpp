// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "conflict/error.hpp"

namespace conflict {

namespace {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) noexcept {
    double s = 0.0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double clamp_unit(double x) noexcept { return std::clamp(x, -1.0, 1.0); }

void check_query(const EmbeddingVector& q, std::size_t dim, const std::string& provider, const char* what) {
    if (q.dimension() != dim)
        throw ArgumentError(fmt::format("{} query has dimension {}, buffer has {}", what, q.dimension(), dim));
    if (q.provider_id != provider)
        throw ArgumentError(fmt::format("{} query from provider '{}', buffer built with '{}'", what, q.provider_id,
                                        provider));
}

// Strictly better score, or equal score with a smaller entry id.
inline bool better(double score, const std::string& id, double best_score, const std::string& best_id) {
    return score > best_score || (score == best_score && id < best_id);
}

}  // namespace

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw ArgumentError(fmt::format("cosine of vectors with dimensions {} and {}", a.dimension(), b.dimension()));
    return clamp_unit(dot(a.values, b.values));
}

std::string render_prompt(std::string_view task, std::string_view step) {
    return fmt::format("Task: {}\nStep: {}", task, step);
}

std::string render_unified_prompt(std::string_view task, std::string_view step,
                                  const std::optional<std::string>& speech) {
    auto prompt = render_prompt(task, step);
    if (speech) prompt += fmt::format("\nSpeech: {}", *speech);
    return prompt;
}

double fuse_scores(double prompt_cos, double obs_cos, FusionWeight weight) noexcept {
    const double w = weight.value();
    // Rounding may leave the convex combination a hair outside its bounds.
    return std::clamp(w * prompt_cos + (1.0 - w) * obs_cos, std::min(prompt_cos, obs_cos),
                      std::max(prompt_cos, obs_cos));
}

FusionWeight::FusionWeight(double w) : w_(w) {
    if (!(w >= 0.0 && w <= 1.0)) throw ArgumentError(fmt::format("fusion weight must lie in [0, 1] (got {})", w));
}

SpeechBuffer::SpeechBuffer(std::vector<SpeechBufferEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) return;
    dimension_ = entries_.front().speech_embedding.dimension();
    provider_id_ = entries_.front().speech_embedding.provider_id;
    for (const auto& e : entries_)
        if (e.speech_embedding.dimension() != dimension_ || e.speech_embedding.provider_id != provider_id_)
            throw ArgumentError(fmt::format("speech entry {} does not match buffer dimension/provider", e.source_record_id));
}

MultiModalBuffer::MultiModalBuffer(std::vector<MultiModalBufferEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) return;
    prompt_dim_ = entries_.front().prompt_embedding.dimension();
    obs_dim_ = entries_.front().obs_embedding.dimension();
    prompt_provider_ = entries_.front().prompt_embedding.provider_id;
    obs_provider_ = entries_.front().obs_embedding.provider_id;
    for (const auto& e : entries_) {
        if (e.prompt_embedding.dimension() != prompt_dim_ || e.prompt_embedding.provider_id != prompt_provider_)
            throw ArgumentError(fmt::format("entry {}: prompt embedding does not match buffer", e.source_record_id));
        if (e.obs_embedding.dimension() != obs_dim_ || e.obs_embedding.provider_id != obs_provider_)
            throw ArgumentError(fmt::format("entry {}: observation embedding does not match buffer", e.source_record_id));
    }
}

RetrievalHit speech_score(const EmbeddingVector& query, const SpeechBuffer& buffer) {
    if (buffer.empty()) throw EmptyBufferError("speech buffer empty");
    check_query(query, buffer.dimension(), buffer.provider_id(), "speech");

    const auto& entries = buffer.entries();
    std::size_t best = 0;
    double best_score = clamp_unit(dot(query.values, entries[0].speech_embedding.values));
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const double s = clamp_unit(dot(query.values, entries[i].speech_embedding.values));
        if (better(s, entries[i].source_record_id, best_score, entries[best].source_record_id)) {
            best = i;
            best_score = s;
        }
    }
    return {best_score, entries[best].label, entries[best].source_record_id, best};
}

RetrievalHit task_attribute_score(const EmbeddingVector& prompt_query, const EmbeddingVector& obs_query,
                                  const MultiModalBuffer& buffer, FusionWeight weight) {
    if (buffer.empty()) throw EmptyBufferError("multi-modal buffer empty");
    check_query(prompt_query, buffer.prompt_dimension(), buffer.prompt_provider_id(), "prompt");
    check_query(obs_query, buffer.obs_dimension(), buffer.obs_provider_id(), "observation");

    const auto fused = [&](const MultiModalBufferEntry& e) {
        const double cp = clamp_unit(dot(prompt_query.values, e.prompt_embedding.values));
        const double co = clamp_unit(dot(obs_query.values, e.obs_embedding.values));
        return fuse_scores(cp, co, weight);
    };

    const auto& entries = buffer.entries();
    std::size_t best = 0;
    double best_score = fused(entries[0]);
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const double s = fused(entries[i]);
        if (better(s, entries[i].source_record_id, best_score, entries[best].source_record_id)) {
            best = i;
            best_score = s;
        }
    }
    return {best_score, entries[best].label, entries[best].source_record_id, best};
}

SpeechBuffer build_speech_buffer(std::span<const DatasetRecord> records, EmbeddingProvider& provider,
                                 SpeechBufferOptions options) {
    std::vector<SpeechBufferEntry> entries;
    for (const auto& r : records) {
        const auto speech = normalize_speech(r.speech);
        if (!speech) continue;
        const bool keep = r.label == ConflictLabel::HumanInteraction ||
                          (options.store_noise && r.label == ConflictLabel::Normal);
        if (!keep) continue;
        try {
            entries.push_back({provider.embed_text(*speech), r.id, r.label});
        } catch (const Error& e) {
            throw BufferBuildError(fmt::format("record {}: {}", r.id, e.what()), r.id);
        }
    }
    return SpeechBuffer(std::move(entries));
}

MultiModalBuffer build_multimodal_buffer(std::span<const DatasetRecord> records, EmbeddingProvider& text_provider,
                                         EmbeddingProvider& image_provider, const std::filesystem::path& base_dir,
                                         PromptStyle style) {
    std::vector<MultiModalBufferEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) {
        try {
            const auto input = r.to_input(base_dir);
            const auto prompt = style == PromptStyle::Unified ? render_unified_prompt(r.task, r.step, input.speech)
                                                              : render_prompt(r.task, r.step);
            entries.push_back({text_provider.embed_text(prompt), image_provider.embed_image(input.image), r.label, r.id});
        } catch (const Error& e) {
            throw BufferBuildError(fmt::format("record {}: {}", r.id, e.what()), r.id);
        }
    }
    return MultiModalBuffer(std::move(entries));
}

}  // namespace conflict
