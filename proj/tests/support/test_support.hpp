// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "conflict/embedding.hpp"
#include "conflict/error.hpp"

namespace conflict::testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "conflict-test") {
        std::string tmpl = (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX")).string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Gaussian direction, normalized.
inline EmbeddingVector random_unit(std::mt19937_64& rng, std::size_t d, const std::string& provider = "test") {
    std::normal_distribution<double> normal;
    std::vector<double> v(d);
    for (auto& x : v) x = normal(rng);
    return make_unit_vector(std::move(v), provider);
}

/// A 2-D unit vector at cosine `c` from (1, 0).
inline EmbeddingVector at_cosine(double c, const std::string& provider = "test") {
    return {{c, std::sqrt(1.0 - c * c)}, provider};
}

/// Provider returning fixed vectors: texts by exact string, images by path.
/// Unknown inputs throw ProviderError.
class TableProvider final : public EmbeddingProvider {
public:
    TableProvider(std::string id, std::size_t dimension) : id_(std::move(id)), dimension_(dimension) {}

    void set_text(const std::string& text, EmbeddingVector v) { texts_[text] = std::move(v); }
    void set_image(const std::string& path, EmbeddingVector v) { images_[path] = std::move(v); }

    EmbeddingVector embed_text(std::string_view text) override {
        auto it = texts_.find(std::string(text));
        if (it == texts_.end()) throw ProviderError("no vector for text", id_, 0, false);
        return it->second;
    }
    EmbeddingVector embed_image(const ImageRef& image) override {
        auto it = images_.find(image.path().string());
        if (it == images_.end()) throw ProviderError("no vector for image", id_, 0, false);
        return it->second;
    }
    std::string id() const override { return id_; }
    std::size_t dimension() const override { return dimension_; }

private:
    std::string id_;
    std::size_t dimension_;
    std::map<std::string, EmbeddingVector> texts_;
    std::map<std::string, EmbeddingVector> images_;
};

}  // namespace conflict::testing
