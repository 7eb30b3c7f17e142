// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/embedding.hpp"

#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "codec.hpp"
#include "conflict/error.hpp"
#include "http_client.hpp"

namespace conflict {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) {
    for (auto b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv1a(std::string_view s) {
    return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool is_token_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace

double EmbeddingVector::norm() const noexcept {
    return std::sqrt(std::inner_product(values.begin(), values.end(), values.begin(), 0.0));
}

EmbeddingVector make_unit_vector(std::vector<double> raw, std::string provider_id) {
    const double n = std::sqrt(std::inner_product(raw.begin(), raw.end(), raw.begin(), 0.0));
    if (!(n >= kZeroNormGuard))
        throw ProviderError(fmt::format("{}: raw embedding has zero norm", provider_id), provider_id, 0, false);
    for (auto& v : raw) v /= n;
    return {std::move(raw), std::move(provider_id)};
}

void EmbeddingProviderConfig::validate() const {
    if (kind == ProviderKind::Remote) {
        if (!endpoint || endpoint->empty()) throw ArgumentError("remote embedding provider requires an endpoint");
        if (max_in_flight == 0) throw ArgumentError("max_in_flight must be positive");
    } else {
        if (!seed) throw ArgumentError("mock embedding provider requires a seed");
        if (dimension == 0) throw ArgumentError("mock embedding provider requires a positive dimension");
    }
    if (timeout.count() <= 0) throw ArgumentError("provider timeout must be positive");
}

void from_json(const nlohmann::json& j, EmbeddingProviderConfig& c) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "mock")
        c.kind = ProviderKind::Mock;
    else if (kind == "remote")
        c.kind = ProviderKind::Remote;
    else
        throw ArgumentError(fmt::format("unknown provider kind '{}'", kind));
    c.dimension = j.value("dimension", c.kind == ProviderKind::Mock ? std::size_t{256} : std::size_t{0});
    c.endpoint = j.contains("endpoint") ? std::optional(j.at("endpoint").get<std::string>()) : std::nullopt;
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 10000));
    c.seed = j.contains("seed") ? std::optional(j.at("seed").get<std::uint64_t>()) : std::nullopt;
    c.max_in_flight = j.value("max_in_flight", std::size_t{4});
    c.validate();
}

void to_json(nlohmann::json& j, const EmbeddingProviderConfig& c) {
    j = nlohmann::json{{"kind", c.kind == ProviderKind::Mock ? "mock" : "remote"},
                       {"dimension", c.dimension},
                       {"timeout_ms", c.timeout.count()},
                       {"max_in_flight", c.max_in_flight}};
    if (c.endpoint) j["endpoint"] = *c.endpoint;
    if (c.seed) j["seed"] = *c.seed;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_token_char(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed), id_(fmt::format("mock-d{}-s{}", dimension, seed)) {
    if (dimension == 0) throw ArgumentError("embedding dimension must be positive");
}

EmbeddingVector MockEmbeddingProvider::embed_text(std::string_view text) {
    if (text.empty()) throw ArgumentError("cannot embed empty text");
    std::vector<double> acc(dimension_, 0.0);
    for (const auto& token : tokenize(text)) {
        const std::uint64_t base = fnv1a(token) ^ splitmix64(seed_);
        for (int probe = 0; probe < kProbes; ++probe) {
            const std::uint64_t h = splitmix64(base + static_cast<std::uint64_t>(probe) * 0x9e3779b97f4a7c15ULL);
            const double sign = (h >> 63) ? -1.0 : 1.0;
            acc[(h & 0x7fffffffffffffffULL) % dimension_] += sign;
        }
    }
    return make_unit_vector(std::move(acc), id_);
}

EmbeddingVector MockEmbeddingProvider::embed_image(const ImageRef& image) {
    const auto bytes = image.load();
    return embed_image_bytes(bytes);
}

EmbeddingVector MockEmbeddingProvider::embed_image_bytes(std::span<const std::uint8_t> bytes) const {
    if (bytes.empty()) throw ArgumentError("cannot embed an empty image");
    std::uint64_t state = fnv1a(bytes) ^ splitmix64(seed_ ^ 0x696d616765ULL);
    std::vector<double> values(dimension_);
    for (auto& v : values) {
        state = splitmix64(state);
        // Top 53 bits -> uniform [0, 1), then map to [-1, 1).
        v = 2.0 * (static_cast<double>(state >> 11) * 0x1.0p-53) - 1.0;
    }
    return make_unit_vector(std::move(values), id_);
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(EmbeddingProviderConfig config)
    : config_(std::move(config)),
      id_(),
      dimension_(config_.dimension),
      in_flight_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
    config_.validate();
    id_ = "remote:" + *config_.endpoint;
}

EmbeddingVector RemoteEmbeddingProvider::embed_text(std::string_view text) {
    if (text.empty()) throw ArgumentError("cannot embed empty text");
    return request("text", std::string(text));
}

EmbeddingVector RemoteEmbeddingProvider::embed_image(const ImageRef& image) {
    const auto bytes = image.load();
    if (bytes.empty()) throw ArgumentError("cannot embed an empty image");
    return request("image", detail::base64_encode(bytes));
}

EmbeddingVector RemoteEmbeddingProvider::request(std::string_view kind, std::string payload) {
    const std::string& endpoint = *config_.endpoint;
    const std::string body = nlohmann::json{{"kind", kind}, {"payload", std::move(payload)}}.dump();

    detail::HttpResponse res;
    {
        struct Slot {
            std::counting_semaphore<>& sem;
            explicit Slot(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
            ~Slot() { sem.release(); }
        } slot(in_flight_);
        try {
            res = detail::post_json(endpoint, body, config_.timeout);
        } catch (const detail::TransportError& e) {
            throw ProviderError(e.what(), endpoint, 0, true);
        }
    }

    if (res.status < 200 || res.status >= 300)
        throw ProviderError(fmt::format("{} returned HTTP {}", endpoint, res.status), endpoint, res.status,
                            res.status >= 500 || res.status == 429);

    std::vector<double> raw;
    try {
        raw = nlohmann::json::parse(res.body).at("vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(fmt::format("{}: malformed reply: {}", endpoint, e.what()), endpoint, res.status, false);
    }
    if (raw.empty()) throw ProviderError(fmt::format("{}: empty vector", endpoint), endpoint, res.status, false);

    std::size_t expected = 0;
    if (!dimension_.compare_exchange_strong(expected, raw.size()) && expected != raw.size())
        throw ProviderError(fmt::format("{}: dimension changed from {} to {}", endpoint, expected, raw.size()),
                            endpoint, res.status, false);
    return make_unit_vector(std::move(raw), id_);
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config) {
    config.validate();
    if (config.kind == ProviderKind::Mock) return std::make_shared<MockEmbeddingProvider>(config.dimension, *config.seed);
    return std::make_shared<RemoteEmbeddingProvider>(config);
}

}  // namespace conflict
