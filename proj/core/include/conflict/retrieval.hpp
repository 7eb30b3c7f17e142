// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conflict/embedding.hpp"
#include "conflict/types.hpp"

namespace conflict {

/// Dot product of two unit vectors, clamped to [-1, 1].
/// Throws ArgumentError on dimension mismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Text embedded for task-attribute retrieval: "Task: {task}\nStep: {step}".
std::string render_prompt(std::string_view task, std::string_view step);

/// Joint prompt for the unified-retrieval baseline: render_prompt() followed
/// by "\nSpeech: {speech}" when speech is present.
std::string render_unified_prompt(std::string_view task, std::string_view step,
                                  const std::optional<std::string>& speech);

/// Convex weight between prompt and observation similarity.
class FusionWeight {
public:
    explicit FusionWeight(double w);
    double value() const noexcept { return w_; }

private:
    double w_;
};

/// w*prompt_cos + (1-w)*obs_cos, kept within [min, max] of the two inputs.
/// Exact at w = 0 and w = 1.
double fuse_scores(double prompt_cos, double obs_cos, FusionWeight weight) noexcept;

struct RetrievalHit {
    double score = 0.0;
    ConflictLabel entry_label = ConflictLabel::Normal;
    std::string entry_id;
    std::size_t entry_index = 0;
};

struct SpeechBufferEntry {
    EmbeddingVector speech_embedding;
    std::string source_record_id;
    ConflictLabel label = ConflictLabel::HumanInteraction;
};

struct MultiModalBufferEntry {
    EmbeddingVector prompt_embedding;
    EmbeddingVector obs_embedding;
    ConflictLabel label = ConflictLabel::Normal;
    std::string source_record_id;
};

/// Text-only store of utterances. Immutable once constructed; all entries
/// share one dimension and provider.
class SpeechBuffer {
public:
    SpeechBuffer() = default;
    /// Throws ArgumentError if entries disagree on dimension or provider.
    explicit SpeechBuffer(std::vector<SpeechBufferEntry> entries);

    const std::vector<SpeechBufferEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t dimension() const noexcept { return dimension_; }
    const std::string& provider_id() const noexcept { return provider_id_; }

private:
    std::vector<SpeechBufferEntry> entries_;
    std::size_t dimension_ = 0;
    std::string provider_id_;
};

/// Store of (prompt embedding, observation embedding, label) triples.
class MultiModalBuffer {
public:
    MultiModalBuffer() = default;
    explicit MultiModalBuffer(std::vector<MultiModalBufferEntry> entries);

    const std::vector<MultiModalBufferEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t prompt_dimension() const noexcept { return prompt_dim_; }
    std::size_t obs_dimension() const noexcept { return obs_dim_; }
    const std::string& prompt_provider_id() const noexcept { return prompt_provider_; }
    const std::string& obs_provider_id() const noexcept { return obs_provider_; }

private:
    std::vector<MultiModalBufferEntry> entries_;
    std::size_t prompt_dim_ = 0;
    std::size_t obs_dim_ = 0;
    std::string prompt_provider_;
    std::string obs_provider_;
};

/// Maximum cosine between `query` and every buffered utterance.
/// Equal maxima resolve to the lexicographically smallest entry id.
/// Throws EmptyBufferError ("speech buffer empty") or ArgumentError.
RetrievalHit speech_score(const EmbeddingVector& query, const SpeechBuffer& buffer);

/// Maximum over entries of w*cos(prompt) + (1-w)*cos(obs), same tie rule.
RetrievalHit task_attribute_score(const EmbeddingVector& prompt_query, const EmbeddingVector& obs_query,
                                  const MultiModalBuffer& buffer, FusionWeight weight);

struct SpeechBufferOptions {
    /// Also store Normal-labeled noise utterances.
    bool store_noise = false;
};

enum class PromptStyle { Separate, Unified };

/// One entry per record with speech labeled HumanInteraction (plus Normal
/// noise records when enabled). Throws BufferBuildError naming the record.
SpeechBuffer build_speech_buffer(std::span<const DatasetRecord> records, EmbeddingProvider& provider,
                                 SpeechBufferOptions options = {});

/// One entry per record. Image paths resolve against `base_dir`.
MultiModalBuffer build_multimodal_buffer(std::span<const DatasetRecord> records, EmbeddingProvider& text_provider,
                                         EmbeddingProvider& image_provider, const std::filesystem::path& base_dir,
                                         PromptStyle style = PromptStyle::Separate);

// Persistence. A JSON header line (format, version, dimensions, provider
// ids, entry ids and labels) followed by little-endian float64 payload.

inline constexpr int kBufferFormatVersion = 1;

void save_buffer(const std::filesystem::path& path, const SpeechBuffer& buffer);
void save_buffer(const std::filesystem::path& path, const MultiModalBuffer& buffer);
std::string serialize_buffer(const SpeechBuffer& buffer);
std::string serialize_buffer(const MultiModalBuffer& buffer);
SpeechBuffer load_speech_buffer(const std::filesystem::path& path);
MultiModalBuffer load_multimodal_buffer(const std::filesystem::path& path);
SpeechBuffer deserialize_speech_buffer(const std::string& bytes);
MultiModalBuffer deserialize_multimodal_buffer(const std::string& bytes);

}  // namespace conflict
