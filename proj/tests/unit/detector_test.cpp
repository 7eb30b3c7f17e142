// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "conflict/detector.hpp"
#include "conflict/error.hpp"
#include "test_support.hpp"

namespace conflict {
namespace {

using testing::at_cosine;

const EmbeddingVector kUnitX{{1.0, 0.0}, "test"};

// Queries always embed to (1, 0); buffer entries sit at chosen cosines.
struct Fixture {
    std::shared_ptr<testing::TableProvider> provider = std::make_shared<testing::TableProvider>("test", 2);
    std::shared_ptr<MockModelBackend> backend = std::make_shared<MockModelBackend>("object_state");
    RetrievalBuffers buffers;

    Fixture() {
        provider->set_text("Task: t\nStep: s", kUnitX);
        provider->set_text("hey robot", kUnitX);
        provider->set_image("frame.ppm", kUnitX);
    }

    DetectionContext context() const { return {{provider, provider}, backend, DetectionPrompt::defaults()}; }

    void speech(double c, ConflictLabel label = ConflictLabel::HumanInteraction) {
        buffers.speech = SpeechBuffer({{at_cosine(c), "sp", label}});
    }
    void task(double prompt_cos, double obs_cos, ConflictLabel label) {
        buffers.multimodal = MultiModalBuffer({{at_cosine(prompt_cos), at_cosine(obs_cos), label, "mm"}});
    }
    DetectionResult run(std::optional<std::string> speech, DetectionConfig config = {}) const {
        return detect({ImageRef::from_path("frame.ppm"), "t", "s", std::move(speech)}, config, buffers, context());
    }
};

TEST(Config, DefaultsAndValidation) {
    const auto c = DetectionConfig::defaults();
    EXPECT_DOUBLE_EQ(c.w.value(), 0.87);
    EXPECT_DOUBLE_EQ(c.tau_s, 0.88);
    EXPECT_DOUBLE_EQ(c.tau_t, 0.94);
    DetectionConfig bad;
    bad.tau_t = -0.1;
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad.tau_t = 1.5;
    EXPECT_NO_THROW(bad.validate());
}

TEST(Detect, SpeechGateShortCircuits) {
    Fixture f;
    f.speech(0.95);
    f.task(1.0, 1.0, ConflictLabel::GoalAbsence);
    const auto r = f.run("hey robot");
    EXPECT_EQ(r.method, DetectionMethod::SpeechRetrieval);
    EXPECT_EQ(r.label, ConflictLabel::HumanInteraction);
    EXPECT_FALSE(r.task_score);
    EXPECT_EQ(r.matched_entry_id, "sp");
    EXPECT_EQ(f.backend->calls(), 0u);
}

TEST(Detect, SpeechGateIsStrict) {
    Fixture f;
    f.speech(0.88);
    f.task(1.0, 1.0, ConflictLabel::GoalAbsence);
    const auto r = f.run("hey robot");
    EXPECT_EQ(r.method, DetectionMethod::TaskRetrieval);
    EXPECT_NEAR(*r.speech_score, 0.88, 1e-15);
}

TEST(Detect, TaskGateAcceptsAtThreshold) {
    Fixture f;
    f.task(0.94, 0.94, ConflictLabel::GoalAbsence);
    DetectionConfig c;
    c.tau_t = 0.94;
    const auto r = f.run(std::nullopt, c);
    EXPECT_EQ(r.method, DetectionMethod::TaskRetrieval);
    EXPECT_EQ(r.label, ConflictLabel::GoalAbsence);
    EXPECT_FALSE(r.speech_score);
}

TEST(Detect, LowTaskScoreEscalates) {
    Fixture f;
    f.task(0.9, 0.2, ConflictLabel::GoalAbsence);
    const auto r = f.run(std::nullopt);
    EXPECT_EQ(r.method, DetectionMethod::ModelInference);
    EXPECT_EQ(r.label, ConflictLabel::ObjectState);
    EXPECT_NEAR(*r.task_score, 0.87 * 0.9 + 0.13 * 0.2, 1e-12);
    EXPECT_EQ(f.backend->calls(), 1u);
    EXPECT_FALSE(gate_violation(r, {}));
}

TEST(Detect, EmptyBuffersGoStraightToModel) {
    Fixture f;
    const auto r = f.run("hey robot");
    EXPECT_EQ(r.method, DetectionMethod::ModelInference);
    EXPECT_FALSE(r.speech_score);
    EXPECT_FALSE(r.task_score);
}

TEST(Detect, BackendDownIsAnErrorNotNormal) {
    Fixture f;
    f.task(0.1, 0.1, ConflictLabel::GoalAbsence);
    f.backend->set_available(false);
    try {
        f.run(std::nullopt);
        FAIL();
    } catch (const DetectionError& e) {
        EXPECT_EQ(e.cause(), DetectionError::Cause::BackendFailure);
        EXPECT_EQ(e.stage(), "model_inference");
        EXPECT_NEAR(*e.task_score(), 0.1, 1e-12);
    }
}

TEST(Detect, UnparseableReplyKeepsRaw) {
    Fixture f;
    f.backend = std::make_shared<MockModelBackend>("maybe");
    try {
        f.run(std::nullopt);
        FAIL();
    } catch (const DetectionError& e) {
        EXPECT_EQ(e.cause(), DetectionError::Cause::BadBackendReply);
        EXPECT_EQ(e.raw_reply(), "maybe");
    }
}

TEST(Detect, ProviderFailureNamesStage) {
    Fixture f;
    f.speech(0.5);
    try {
        f.run("unknown words");
        FAIL();
    } catch (const DetectionError& e) {
        EXPECT_EQ(e.cause(), DetectionError::Cause::ProviderFailure);
        EXPECT_EQ(e.stage(), "speech_embedding");
    }
}

TEST(Detect, InvalidInputThrowsArgumentError) {
    Fixture f;
    EXPECT_THROW(detect({ImageRef::from_path("frame.ppm"), "", "s", std::nullopt}, {}, f.buffers, f.context()),
                 ArgumentError);
}

TEST(GateViolation, FlagsInconsistentResults) {
    DetectionResult r;
    r.method = DetectionMethod::TaskRetrieval;
    r.task_score = 0.5;
    EXPECT_TRUE(gate_violation(r, {}));
    r.method = DetectionMethod::ModelInference;
    EXPECT_FALSE(gate_violation(r, {}));
    r.speech_score = 0.99;
    EXPECT_TRUE(gate_violation(r, {}));
}

TEST(Stream, FailingFrameDoesNotStopStream) {
    Fixture f;
    f.task(1.0, 1.0, ConflictLabel::Normal);
    Detector detector(f.context(), {}, std::make_shared<RetrievalBuffers>(f.buffers));
    const std::vector<DetectionInput> frames{{ImageRef::from_path("frame.ppm"), "t", "s", std::nullopt},
                                             {ImageRef::from_path("other.ppm"), "t", "s", std::nullopt},
                                             {ImageRef::from_path("frame.ppm"), "t", "s", std::nullopt}};
    const auto out = detector.detect_stream(frames);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_TRUE(out[0].result);
    EXPECT_TRUE(out[1].error);
    EXPECT_TRUE(out[2].result);
}

TEST(Detector, SwapBuffers) {
    Fixture f;
    f.task(1.0, 1.0, ConflictLabel::Normal);
    Detector detector(f.context(), {}, std::make_shared<RetrievalBuffers>(f.buffers));
    const DetectionInput in{ImageRef::from_path("frame.ppm"), "t", "s", std::nullopt};
    EXPECT_EQ(detector.detect(in).label, ConflictLabel::Normal);
    f.task(1.0, 1.0, ConflictLabel::GoalAbsence);
    detector.swap_buffers(std::make_shared<RetrievalBuffers>(f.buffers));
    EXPECT_EQ(detector.detect(in).label, ConflictLabel::GoalAbsence);
    EXPECT_THROW(detector.swap_buffers(nullptr), ArgumentError);
}

TEST(ResultJson, ReportsSecondsAndNulls) {
    Fixture f;
    f.task(1.0, 1.0, ConflictLabel::Normal);
    const auto j = nlohmann::json(f.run(std::nullopt));
    EXPECT_EQ(j.at("method"), "task_retrieval");
    EXPECT_EQ(j.at("label"), "normal");
    EXPECT_TRUE(j.at("speech_score").is_null());
    EXPECT_LT(j.at("latency").get<double>(), 1.0);
    EXPECT_GE(j.at("stages").size(), 3u);
}

}  // namespace
}  // namespace conflict
