// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "conflict/corpus.hpp"
#include "conflict/service.hpp"
#include "test_support.hpp"

namespace conflict {
namespace {

using json = nlohmann::json;

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        CorpusSpec spec;
        spec.trajectories = 2;
        spec.frames_per_trajectory = 6;
        spec.statics = 12;
        spec.noise = 4;
        spec.scenarios_per_type = 2;
        corpus_ = generate_corpus(dir_.path(), spec);
        start();
    }
    void TearDown() override { stop(); }

    void start(std::optional<std::string> token = std::nullopt) {
        const json config = {{"detection", {{"w", 0.87}, {"tau_s", 0.88}, {"tau_t", 0.94}}},
                             {"text_embedding", {{"kind", "mock"}, {"dimension", 64}, {"seed", 1}}},
                             {"image_embedding", {{"kind", "mock"}, {"dimension", 32}, {"seed", 2}}},
                             {"dataset", "dataset.jsonl"}};
        ServiceConfig sc;
        sc.port = 0;
        sc.data_dir = dir_.path();
        sc.auth_token = std::move(token);
        sc.cors_origins = {"http://ui.local"};
        sc.threads = 4;
        service_ = std::make_unique<Service>(sc, build_engine(EngineConfig::parse(config, dir_.path())));
        port_ = service_->bind();
        thread_ = std::thread([this] { service_->run(); });
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void stop() {
        if (!service_) return;
        service_->stop();
        thread_.join();
        service_.reset();
    }

    json get(const std::string& path, int expected = 200) {
        auto res = client_->Get(path);
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expected) << path << ": " << res->body;
        return json::parse(res->body);
    }
    json post(const std::string& path, const json& body, int expected = 200) {
        auto res = client_->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expected) << path << ": " << res->body;
        return json::parse(res->body);
    }

    std::string annotation_scenario(ConflictLabel type) const {
        for (const auto& s : corpus_.scenarios)
            if (s.role == ScenarioRole::Annotation && s.scenario.label == type) return s.scenario.scenario_id;
        return {};
    }
    std::string prediction_scenario(ConflictLabel type) const {
        for (const auto& s : corpus_.scenarios)
            if (s.role == ScenarioRole::Prediction && s.scenario.label == type) return s.scenario.scenario_id;
        return {};
    }

    testing::TempDir dir_;
    GeneratedCorpus corpus_;
    std::unique_ptr<Service> service_;
    std::unique_ptr<httplib::Client> client_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(ServiceTest, HealthAndCatalog) {
    const auto health = get("/v1/health");
    EXPECT_EQ(health.at("status"), "ok");
    EXPECT_EQ(health.at("multimodal_entries"), corpus_.records.size());
    const auto catalog = get("/v1/catalog");
    EXPECT_EQ(catalog.at("catalogs").at("human_occupancy").size(), 4u);
    EXPECT_EQ(catalog.at("emergency_levels"), json({1, 2, 3}));
}

TEST_F(ServiceTest, DetectReturnsPlantedLabel) {
    const auto& r = corpus_.records.front();
    const json speech = r.speech ? json(*r.speech) : json(nullptr);
    const auto result = post("/v1/detect", {{"image", r.image}, {"task", r.task}, {"step", r.step}, {"speech", speech}});
    EXPECT_EQ(result.at("label").get<ConflictLabel>(), r.label);
    EXPECT_NE(result.at("method"), "model_inference");

    const auto bytes = testing::read_file(dir_ / r.image);
    httplib::MultipartFormDataItems items{{"task", r.task, "", ""}, {"step", r.step, "", ""},
                                          {"image", bytes, "frame.ppm", "image/x-portable-pixmap"}};
    auto res = client_->Post("/v1/detect", items);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
}

TEST_F(ServiceTest, DetectValidationErrors) {
    auto err = post("/v1/detect", {{"image", "x.ppm"}, {"step", "s"}}, 400);
    EXPECT_EQ(err.at("code"), "validation");
    err = post("/v1/detect", {{"task", "t"}, {"step", "s"}}, 400);
    EXPECT_TRUE(err.contains("detail"));
    auto res = client_->Post("/v1/detect", "{not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, AnnotationFlow) {
    const auto sid = annotation_scenario(ConflictLabel::HumanOccupancy);
    auto pending = get("/v1/annotation/scenarios?user=ann");
    const auto total = pending.at("total").get<int>();
    EXPECT_EQ(pending.at("pending").size(), static_cast<std::size_t>(total));

    const json body = {{"user_id", "ann"}, {"scenario_id", sid},
                       {"option", "Directly communicate with the person"}, {"emergency", 2}};
    auto created = post("/v1/annotation/cases", body);
    EXPECT_TRUE(created.at("created").get<bool>());
    EXPECT_EQ(created.at("case_id"), "ann:" + sid);
    auto again = post("/v1/annotation/cases", body);
    EXPECT_FALSE(again.at("created").get<bool>());
    EXPECT_EQ(again.at("case"), created.at("case"));

    pending = get("/v1/annotation/scenarios?user=ann");
    EXPECT_EQ(pending.at("completed"), 1);
    EXPECT_EQ(get("/v1/annotation/cases?user=ann").at("cases").size(), 1u);

    post("/v1/annotation/cases", {{"user_id", "ann"}, {"scenario_id", sid}, {"option", "Fly"}, {"emergency", 2}}, 400);
    post("/v1/annotation/cases",
         {{"user_id", "ann"}, {"scenario_id", sid}, {"option", "Directly communicate with the person"}, {"emergency", 4}},
         400);
    post("/v1/annotation/cases", {{"user_id", "ann"}, {"scenario_id", "nope"}, {"option", "x"}, {"emergency", 1}}, 404);
    get("/v1/annotation/scenarios", 400);
}

TEST_F(ServiceTest, PredictRateAndList) {
    const auto type = ConflictLabel::HumanOccupancy;
    post("/v1/annotation/cases", {{"user_id", "u"},
                                  {"scenario_id", annotation_scenario(type)},
                                  {"chosen_option", {{"text", "Find another similar spot or object"}}},
                                  {"emergency", 3}});
    const auto p = post("/v1/predict", {{"user_id", "u"}, {"scenario_id", prediction_scenario(type)}});
    EXPECT_EQ(p.at("predicted_option").at("text"), "Find another similar spot or object");
    EXPECT_FALSE(p.at("no_preference_data").get<bool>());
    const auto id = p.at("prediction_id").get<std::string>();

    const auto empty = post("/v1/predict", {{"user_id", "fresh"}, {"scenario_id", prediction_scenario(type)}});
    EXPECT_TRUE(empty.at("no_preference_data").get<bool>());

    const auto rated = post("/v1/predictions/" + id + "/rating", {{"rating", 4}});
    EXPECT_EQ(rated.at("rating"), 4);
    post("/v1/predictions/" + id + "/rating", {{"rating", 9}}, 400);
    post("/v1/predictions/missing/rating", {{"rating", 3}}, 404);
    EXPECT_EQ(get("/v1/predictions/" + id).at("rating"), 4);
    get("/v1/predictions/missing", 404);
    EXPECT_EQ(get("/v1/predictions?user=u").at("predictions").size(), 1u);
    EXPECT_EQ(get("/v1/ratings?user=u").at("ratings").size(), 1u);
}

TEST_F(ServiceTest, ScenariosAndImages) {
    const auto all = get("/v1/scenarios");
    EXPECT_EQ(all.at("scenarios").size(), corpus_.scenarios.size());
    const auto annotation = get("/v1/scenarios?role=annotation");
    EXPECT_LT(annotation.at("scenarios").size(), all.at("scenarios").size());
    get("/v1/scenarios?role=bogus", 400);
    const auto url = all.at("scenarios").at(0).at("image_url").get<std::string>();
    auto res = client_->Get(url);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body.substr(0, 2), "P6");
}

TEST_F(ServiceTest, UnknownRouteIsStructured404) {
    const auto err = get("/v1/nothing", 404);
    EXPECT_EQ(err.at("code"), "not_found");
}

TEST_F(ServiceTest, CorsPreflight) {
    auto res = client_->Options("/v1/detect", {{"Origin", "http://ui.local"}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://ui.local");
}

TEST_F(ServiceTest, BearerTokenRequiredWhenConfigured) {
    stop();
    start("s3cret");
    get("/v1/health");
    const auto err = get("/v1/catalog", 401);
    EXPECT_EQ(err.at("code"), "unauthorized");
    client_->set_bearer_token_auth("s3cret");
    get("/v1/catalog");
}

TEST_F(ServiceTest, RestartReplaysJournals) {
    const auto sid = annotation_scenario(ConflictLabel::GoalAbsence);
    post("/v1/annotation/cases", {{"user_id", "r"}, {"scenario_id", sid}, {"option", kInformUserOption}, {"emergency", 1}});
    const auto before = client_->Get("/v1/annotation/cases?user=r")->body;
    stop();
    start();
    EXPECT_EQ(client_->Get("/v1/annotation/cases?user=r")->body, before);
}

}  // namespace
}  // namespace conflict
