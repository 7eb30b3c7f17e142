// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "conflict/error.hpp"
#include "conflict/retrieval.hpp"
#include "test_support.hpp"

namespace conflict {
namespace {

using testing::at_cosine;
using testing::random_unit;

TEST(Cosine, FortyFiveDegrees) {
    const EmbeddingVector a{{1.0, 0.0}, "p"};
    const EmbeddingVector b{{std::sqrt(2.0) / 2, std::sqrt(2.0) / 2}, "p"};
    EXPECT_NEAR(cosine(a, b), 0.70710678, 5e-9);  // literal is rounded to 8 places
    EXPECT_THROW(cosine(a, EmbeddingVector{{1.0, 0.0, 0.0}, "p"}), ArgumentError);
}

TEST(Cosine, ClampedToUnitRange) {
    const EmbeddingVector a{{1.0 + 1e-15, 0.0}, "p"};
    EXPECT_LE(cosine(a, a), 1.0);
}

TEST(Prompt, Rendering) {
    EXPECT_EQ(render_prompt("make tea", "boil water"), "Task: make tea\nStep: boil water");
    EXPECT_EQ(render_unified_prompt("t", "s", std::nullopt), "Task: t\nStep: s");
    EXPECT_EQ(render_unified_prompt("t", "s", std::string("hey")), "Task: t\nStep: s\nSpeech: hey");
}

TEST(Fusion, WeightMustBeInUnitInterval) {
    EXPECT_THROW(FusionWeight(-0.01), ArgumentError);
    EXPECT_THROW(FusionWeight(1.01), ArgumentError);
    EXPECT_THROW(FusionWeight(std::nan("")), ArgumentError);
    EXPECT_NO_THROW(FusionWeight(0.0));
    EXPECT_NO_THROW(FusionWeight(1.0));
}

TEST(Fusion, EndpointsExactAndBounded) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> c(-1.0, 1.0), w(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double p = c(rng), o = c(rng);
        EXPECT_EQ(fuse_scores(p, o, FusionWeight(1.0)), p);
        EXPECT_EQ(fuse_scores(p, o, FusionWeight(0.0)), o);
        const double f = fuse_scores(p, o, FusionWeight(w(rng)));
        EXPECT_GE(f, std::min(p, o));
        EXPECT_LE(f, std::max(p, o));
    }
}

MultiModalBufferEntry mm(double prompt_cos, double obs_cos, ConflictLabel label, std::string id) {
    return {at_cosine(prompt_cos), at_cosine(obs_cos), label, std::move(id)};
}

TEST(TaskAttribute, ThreeEntryHandExample) {
    const MultiModalBuffer buffer({mm(0.9, 0.1, ConflictLabel::Normal, "a"),
                                   mm(0.5, 0.5, ConflictLabel::GoalAbsence, "b"),
                                   mm(0.2, 0.95, ConflictLabel::ObjectState, "c")});
    const EmbeddingVector q{{1.0, 0.0}, "test"};
    const auto hit = task_attribute_score(q, q, buffer, FusionWeight(0.5));
    EXPECT_NEAR(hit.score, 0.575, 1e-12);
    EXPECT_EQ(hit.entry_id, "c");
    EXPECT_EQ(hit.entry_index, 2u);
    EXPECT_EQ(hit.entry_label, ConflictLabel::ObjectState);
}

TEST(TaskAttribute, TiesGoToSmallestId) {
    const MultiModalBuffer buffer({mm(0.5, 0.5, ConflictLabel::Normal, "z"),
                                   mm(0.5, 0.5, ConflictLabel::GoalAbsence, "m"),
                                   mm(0.1, 0.1, ConflictLabel::ObjectState, "a")});
    const EmbeddingVector q{{1.0, 0.0}, "test"};
    const auto hit = task_attribute_score(q, q, buffer, FusionWeight(0.3));
    EXPECT_EQ(hit.entry_id, "m");
    EXPECT_EQ(hit.entry_label, ConflictLabel::GoalAbsence);
}

TEST(Speech, MaxCosineWins) {
    const SpeechBuffer buffer({{at_cosine(0.3), "a", ConflictLabel::HumanInteraction},
                               {at_cosine(0.8), "b", ConflictLabel::HumanInteraction},
                               {at_cosine(0.8), "c", ConflictLabel::Normal}});
    const auto hit = speech_score(EmbeddingVector{{1.0, 0.0}, "test"}, buffer);
    EXPECT_NEAR(hit.score, 0.8, 1e-15);
    EXPECT_EQ(hit.entry_id, "b");
}

TEST(Speech, EmptyAndMismatchedQueries) {
    EXPECT_THROW(speech_score(at_cosine(1.0), SpeechBuffer{}), EmptyBufferError);
    const SpeechBuffer buffer({{at_cosine(0.3), "a", ConflictLabel::HumanInteraction}});
    EXPECT_THROW(speech_score(EmbeddingVector{{1.0, 0.0, 0.0}, "test"}, buffer), ArgumentError);
    EXPECT_THROW(speech_score(at_cosine(1.0, "other"), buffer), ArgumentError);
    EXPECT_THROW(task_attribute_score(at_cosine(1.0), at_cosine(1.0), MultiModalBuffer{}, FusionWeight(0.5)),
                 EmptyBufferError);
}

TEST(Buffers, RejectMixedDimensionsOrProviders) {
    EXPECT_THROW(SpeechBuffer({{at_cosine(0.3), "a", ConflictLabel::HumanInteraction},
                               {at_cosine(0.3, "x"), "b", ConflictLabel::HumanInteraction}}),
                 ArgumentError);
    EXPECT_THROW(MultiModalBuffer({mm(0.1, 0.1, ConflictLabel::Normal, "a"),
                                   {at_cosine(0.1), EmbeddingVector{{1, 0, 0}, "test"}, ConflictLabel::Normal, "b"}}),
                 ArgumentError);
}

// Exhaustive reference: every maximizer's id, and the max.
template <typename ScoreFn>
std::pair<double, std::vector<std::string>> brute_force(std::size_t n, ScoreFn score, auto id_of) {
    double best = -2.0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, score(i));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i)
        if (score(i) == best) ids.push_back(id_of(i));
    return {best, ids};
}

TEST(Retrieval, MatchesBruteForceOnRandomBuffers) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> size(1, 200), dim(2, 32);
    std::uniform_real_distribution<double> w(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = size(rng), d = dim(rng);
        std::vector<MultiModalBufferEntry> entries;
        for (std::size_t i = 0; i < n; ++i)
            entries.push_back({random_unit(rng, d), random_unit(rng, d), ConflictLabel::Normal, fmt::format("e{}", i)});
        const MultiModalBuffer buffer(entries);
        const auto qp = random_unit(rng, d), qo = random_unit(rng, d);
        const FusionWeight fw(w(rng));
        const auto hit = task_attribute_score(qp, qo, buffer, fw);
        const auto [best, ids] = brute_force(
            n,
            [&](std::size_t i) {
                double cp = 0, co = 0;
                for (std::size_t k = 0; k < d; ++k) {
                    cp += qp.values[k] * entries[i].prompt_embedding.values[k];
                    co += qo.values[k] * entries[i].obs_embedding.values[k];
                }
                return fw.value() * cp + (1 - fw.value()) * co;
            },
            [&](std::size_t i) { return entries[i].source_record_id; });
        EXPECT_NEAR(hit.score, best, 1e-9);
        const auto& chosen = entries[hit.entry_index];
        EXPECT_NEAR(fuse_scores(cosine(qp, chosen.prompt_embedding), cosine(qo, chosen.obs_embedding), fw), best, 1e-9);
    }
}

TEST(Build, SpeechBufferKeepsInteractionAndOptionalNoise) {
    MockEmbeddingProvider p(16, 1);
    std::vector<DatasetRecord> rs(4);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        rs[i].id = fmt::format("r{}", i);
        rs[i].task = "t";
        rs[i].step = "s";
    }
    rs[0].label = ConflictLabel::HumanInteraction;
    rs[0].speech = "robot come here";
    rs[1].label = ConflictLabel::Normal;
    rs[1].speech = "nice weather today";
    rs[2].label = ConflictLabel::HumanInteraction;  // no speech, skipped
    rs[3].label = ConflictLabel::GoalAbsence;
    rs[3].speech = "where is it";
    EXPECT_EQ(build_speech_buffer(rs, p).size(), 1u);
    const auto with_noise = build_speech_buffer(rs, p, {.store_noise = true});
    ASSERT_EQ(with_noise.size(), 2u);
    EXPECT_EQ(with_noise.entries()[1].label, ConflictLabel::Normal);
    EXPECT_EQ(with_noise.provider_id(), p.id());
}

TEST(Build, MultiModalNamesFailingRecord) {
    testing::TempDir dir;
    testing::write_file(dir / "a.ppm", "abc");
    MockEmbeddingProvider text(16, 1), image(8, 2);
    std::vector<DatasetRecord> rs(2);
    rs[0] = {"ok", "a.ppm", "t", "s", std::nullopt, ConflictLabel::Normal, std::nullopt, std::nullopt};
    rs[1] = {"missing", "b.ppm", "t", "s", std::nullopt, ConflictLabel::Normal, std::nullopt, std::nullopt};
    try {
        build_multimodal_buffer(rs, text, image, dir.path());
        FAIL();
    } catch (const BufferBuildError& e) {
        EXPECT_EQ(e.record_id(), "missing");
    }
    rs.pop_back();
    const auto buffer = build_multimodal_buffer(rs, text, image, dir.path());
    EXPECT_EQ(buffer.prompt_dimension(), 16u);
    EXPECT_EQ(buffer.obs_dimension(), 8u);
    EXPECT_EQ(buffer.entries()[0].prompt_embedding, text.embed_text("Task: t\nStep: s"));
}

}  // namespace
}  // namespace conflict
