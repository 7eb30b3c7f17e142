// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "conflict/error.hpp"
#include "conflict/retrieval.hpp"

namespace conflict {

namespace {

constexpr const char* kFormatName = "conflict-buffer";

void append_values(std::string& out, const std::vector<double>& values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char raw[8];
        std::memcpy(raw, &bits, 8);
        out.append(raw, 8);
    }
}

class PayloadReader {
public:
    PayloadReader(const std::string& bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

    std::vector<double> read(std::size_t n) {
        if (bytes_.size() - pos_ < n * 8) throw ValidationError("buffer file payload truncated");
        std::vector<double> out(n);
        for (auto& v : out) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes_.data() + pos_, 8);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            v = std::bit_cast<double>(bits);
            pos_ += 8;
        }
        return out;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_;
};

nlohmann::json modality(const char* name, std::size_t dim, const std::string& provider) {
    return {{"name", name}, {"dimension", dim}, {"provider_id", provider}};
}

struct Header {
    nlohmann::json json;
    std::size_t payload_offset;
};

Header read_header(const std::string& bytes, std::string_view expected_kind) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw ValidationError("buffer file has no header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("buffer header is not JSON: {}", e.what()));
    }
    if (header.value("format", "") != kFormatName) throw ValidationError("not a buffer file");
    const int version = header.value("version", 0);
    if (version != kBufferFormatVersion)
        throw ValidationError(fmt::format("unsupported buffer version {} (expected {})", version, kBufferFormatVersion));
    if (header.value("kind", "") != expected_kind)
        throw ValidationError(fmt::format("expected a {} buffer, found '{}'", expected_kind, header.value("kind", "")));
    return {std::move(header), nl + 1};
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open buffer '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write buffer '{}'", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace

std::string serialize_buffer(const SpeechBuffer& buffer) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : buffer.entries()) entries.push_back({{"id", e.source_record_id}, {"label", e.label}});
    const nlohmann::json header = {
        {"format", kFormatName},
        {"version", kBufferFormatVersion},
        {"kind", "speech"},
        {"count", buffer.size()},
        {"modalities", {modality("speech", buffer.dimension(), buffer.provider_id())}},
        {"entries", std::move(entries)},
    };
    std::string out = header.dump() + '\n';
    for (const auto& e : buffer.entries()) append_values(out, e.speech_embedding.values);
    return out;
}

std::string serialize_buffer(const MultiModalBuffer& buffer) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : buffer.entries()) entries.push_back({{"id", e.source_record_id}, {"label", e.label}});
    const nlohmann::json header = {
        {"format", kFormatName},
        {"version", kBufferFormatVersion},
        {"kind", "multimodal"},
        {"count", buffer.size()},
        {"modalities",
         {modality("prompt", buffer.prompt_dimension(), buffer.prompt_provider_id()),
          modality("observation", buffer.obs_dimension(), buffer.obs_provider_id())}},
        {"entries", std::move(entries)},
    };
    std::string out = header.dump() + '\n';
    // Row-major per modality: all prompt rows, then all observation rows.
    for (const auto& e : buffer.entries()) append_values(out, e.prompt_embedding.values);
    for (const auto& e : buffer.entries()) append_values(out, e.obs_embedding.values);
    return out;
}

SpeechBuffer deserialize_speech_buffer(const std::string& bytes) {
    const auto [header, offset] = read_header(bytes, "speech");
    const auto& mod = header.at("modalities").at(0);
    const auto dim = mod.at("dimension").get<std::size_t>();
    const auto provider = mod.at("provider_id").get<std::string>();

    PayloadReader reader(bytes, offset);
    std::vector<SpeechBufferEntry> entries;
    for (const auto& meta : header.at("entries"))
        entries.push_back({EmbeddingVector{reader.read(dim), provider}, meta.at("id").get<std::string>(),
                           meta.at("label").get<ConflictLabel>()});
    if (!reader.at_end()) throw ValidationError("buffer file has trailing bytes");
    return SpeechBuffer(std::move(entries));
}

MultiModalBuffer deserialize_multimodal_buffer(const std::string& bytes) {
    const auto [header, offset] = read_header(bytes, "multimodal");
    const auto& mods = header.at("modalities");
    const auto prompt_dim = mods.at(0).at("dimension").get<std::size_t>();
    const auto prompt_provider = mods.at(0).at("provider_id").get<std::string>();
    const auto obs_dim = mods.at(1).at("dimension").get<std::size_t>();
    const auto obs_provider = mods.at(1).at("provider_id").get<std::string>();

    PayloadReader reader(bytes, offset);
    const auto& metas = header.at("entries");
    std::vector<MultiModalBufferEntry> entries(metas.size());
    for (std::size_t i = 0; i < metas.size(); ++i) {
        entries[i].source_record_id = metas[i].at("id").get<std::string>();
        entries[i].label = metas[i].at("label").get<ConflictLabel>();
        entries[i].prompt_embedding = {reader.read(prompt_dim), prompt_provider};
    }
    for (auto& e : entries) e.obs_embedding = {reader.read(obs_dim), obs_provider};
    if (!reader.at_end()) throw ValidationError("buffer file has trailing bytes");
    return MultiModalBuffer(std::move(entries));
}

void save_buffer(const std::filesystem::path& path, const SpeechBuffer& buffer) {
    write_file(path, serialize_buffer(buffer));
}

void save_buffer(const std::filesystem::path& path, const MultiModalBuffer& buffer) {
    write_file(path, serialize_buffer(buffer));
}

SpeechBuffer load_speech_buffer(const std::filesystem::path& path) {
    return deserialize_speech_buffer(read_file(path));
}

MultiModalBuffer load_multimodal_buffer(const std::filesystem::path& path) {
    return deserialize_multimodal_buffer(read_file(path));
}

}  // namespace conflict
