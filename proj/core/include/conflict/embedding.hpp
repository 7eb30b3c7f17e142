// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflict/types.hpp"

namespace conflict {

/// Unit-norm embedding. Values are kept in double precision.
struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;

    std::size_t dimension() const noexcept { return values.size(); }
    double norm() const noexcept;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Raw embeddings with a norm below this are rejected rather than normalized.
inline constexpr double kZeroNormGuard = 1e-12;

/// L2-normalizes `raw`. Throws ProviderError when the norm is below
/// kZeroNormGuard, since cosine similarity is undefined there.
EmbeddingVector make_unit_vector(std::vector<double> raw, std::string provider_id);

enum class ProviderKind { Mock, Remote };

struct EmbeddingProviderConfig {
    ProviderKind kind = ProviderKind::Mock;
    /// 0 lets a remote provider adopt the dimension of its first reply.
    std::size_t dimension = 256;
    std::optional<std::string> endpoint;
    std::chrono::milliseconds timeout{10000};
    std::optional<std::uint64_t> seed;
    std::size_t max_in_flight = 4;

    void validate() const;
};

void from_json(const nlohmann::json& j, EmbeddingProviderConfig& config);
void to_json(nlohmann::json& j, const EmbeddingProviderConfig& config);

/// Computes text and image embeddings. Implementations are safe for
/// concurrent calls and never change dimension once they have emitted a
/// vector.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// Throws ArgumentError for empty text, ProviderError on backend failure.
    virtual EmbeddingVector embed_text(std::string_view text) = 0;
    /// Throws IoError if the image is unreadable, ProviderError otherwise.
    virtual EmbeddingVector embed_image(const ImageRef& image) = 0;

    virtual std::string id() const = 0;
    /// 0 until a remote provider has learned its dimension.
    virtual std::size_t dimension() const = 0;
};

/// Splits on anything that is not an ASCII letter/digit (bytes >= 0x80 are
/// kept so UTF-8 words survive) and lowercases ASCII.
std::vector<std::string> tokenize(std::string_view text);

/// Offline deterministic provider.
///
/// Text: every token is hashed into kProbes signed buckets of a d-dimensional
/// accumulator, which is then normalized. Texts sharing tokens therefore share
/// direction. Image: the byte hash seeds a splitmix64 stream of uniform
/// values in [-1, 1). Both are pure functions of (input, seed, dimension).
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    static constexpr int kProbes = 4;

    MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed);

    EmbeddingVector embed_text(std::string_view text) override;
    EmbeddingVector embed_image(const ImageRef& image) override;
    EmbeddingVector embed_image_bytes(std::span<const std::uint8_t> bytes) const;

    std::string id() const override { return id_; }
    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
    std::string id_;
};

/// HTTP provider: POST {"kind":"text"|"image","payload":...} to the
/// endpoint, expecting {"vector":[...]}. Image payloads are base64.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config);

    EmbeddingVector embed_text(std::string_view text) override;
    EmbeddingVector embed_image(const ImageRef& image) override;

    std::string id() const override { return id_; }
    std::size_t dimension() const override { return dimension_.load(); }

private:
    EmbeddingVector request(std::string_view kind, std::string payload);

    EmbeddingProviderConfig config_;
    std::string id_;
    std::atomic<std::size_t> dimension_;
    std::counting_semaphore<> in_flight_;
};

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config);

/// Text and image providers used together by retrieval.
struct Providers {
    std::shared_ptr<EmbeddingProvider> text;
    std::shared_ptr<EmbeddingProvider> image;
};

}  // namespace conflict
