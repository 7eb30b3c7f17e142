// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "conflict/error.hpp"
#include "conflict/preference.hpp"
#include "local_server.hpp"
#include "test_support.hpp"

namespace conflict {
namespace {

Scenario scenario(ConflictLabel label, std::string id = "sc") {
    return {std::move(id), {ImageRef::from_path("img/x.ppm"), "set the table", "place the plate", std::nullopt}, label};
}

UserCase make_case(std::string id, ConflictLabel type, int ordinal, int emergency, std::int64_t ms = 0,
                   std::string user = "u1") {
    UserCase c;
    c.case_id = std::move(id);
    c.user_id = std::move(user);
    c.scenario = scenario(type, "s-" + c.case_id);
    c.chosen_option = catalog_options(type).at(static_cast<std::size_t>(ordinal - 1));
    c.emergency = EmergencyLevel(emergency);
    c.created_at = Timestamp{std::chrono::milliseconds{1760000000000 + ms}};
    return c;
}

TEST(Majority, WorkedExampleFromOptionNames) {
    const auto type = ConflictLabel::HumanOccupancy;
    // wait, wait, wait, communicate, inform
    std::vector<UserCase> cases{make_case("a", type, 1, 1), make_case("b", type, 1, 1), make_case("c", type, 1, 1),
                                make_case("d", type, 2, 3), make_case("e", type, 4, 3)};
    EXPECT_EQ(mock_majority_option(type, cases).text, "Stop execution and wait for the person");
}

TEST(Majority, TieGoesToHigherEmergencyThenEarlierOption) {
    const auto type = ConflictLabel::GoalAbsence;
    std::vector<UserCase> cases{make_case("a", type, 1, 1), make_case("b", type, 3, 2)};
    EXPECT_EQ(mock_majority_option(type, cases).ordinal, 3);
    cases[0].emergency = EmergencyLevel(2);
    EXPECT_EQ(mock_majority_option(type, cases).ordinal, 1);
}

TEST(Majority, NoCasesDefersToUser) {
    EXPECT_EQ(mock_majority_option(ConflictLabel::ObjectState, {}).text, kInformUserOption);
}

TEST(Prompts, DefaultsCoverEveryTypeAndPlaceholders) {
    const auto p = PreferencePrompts::defaults();
    EXPECT_NO_THROW(p.validate());
    EXPECT_NE(p.system_by_type.at(ConflictLabel::HumanInteraction), p.system_by_type.at(ConflictLabel::GoalAbsence));
    const auto type = ConflictLabel::HumanOccupancy;
    std::vector<UserCase> cases{make_case("a", type, 2, 3)};
    const auto text = p.render_user(scenario(type), cases);
    EXPECT_NE(text.find("Directly communicate with the person"), std::string::npos);
    EXPECT_NE(text.find("Emergency level: 3"), std::string::npos);
    EXPECT_EQ(text.find("{cases}"), std::string::npos);
    PreferencePrompts missing = p;
    missing.system_by_type.erase(ConflictLabel::ObjectState);
    EXPECT_THROW(missing.validate(), ArgumentError);
}

TEST(ParseReply, ExtractsObjectFromProse) {
    const auto r = parse_summary_reply(
        "Sure!\n{\"summary\": \"prefers waiting\", \"option\": \"stop execution and wait for the person\"}\nDone.",
        ConflictLabel::HumanOccupancy);
    EXPECT_EQ(r.summary, "prefers waiting");
    EXPECT_EQ(r.option.ordinal, 1);
}

TEST(ParseReply, InvalidRepliesKeepRawText) {
    for (std::string reply : {"no json here", "{\"summary\": \"x\"}", "{\"option\": \"Fly away\"}"}) {
        try {
            parse_summary_reply(reply, ConflictLabel::GoalAbsence);
            ADD_FAILURE() << reply;
        } catch (const ValidationError& e) {
            EXPECT_EQ(e.detail(), reply);
        }
    }
}

TEST(Predict, RejectsNormalAndMixedTypes) {
    MockSummarizer mock;
    const auto prompts = PreferencePrompts::defaults();
    EXPECT_THROW(predict_solution(scenario(ConflictLabel::Normal), {}, mock, prompts), ArgumentError);
    std::vector<UserCase> cases{make_case("a", ConflictLabel::GoalAbsence, 1, 1)};
    EXPECT_THROW(predict_solution(scenario(ConflictLabel::ObjectState), cases, mock, prompts), ArgumentError);
}

TEST(Predict, FlagsMissingPreferenceData) {
    MockSummarizer mock;
    const auto p = predict_solution(scenario(ConflictLabel::HumanInteraction), {}, mock, PreferencePrompts::defaults());
    EXPECT_TRUE(p.no_preference_data);
    EXPECT_EQ(p.predicted_option.text, kInformUserOption);
    EXPECT_EQ(p.preference_summary.rfind("No preference data", 0), 0u);
    EXPECT_TRUE(p.used_case_ids.empty());
}

TEST(RemoteSummarizer, RoundTripAndErrors) {
    std::atomic<int> status{200};
    testing::LocalServer server(
        [&](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            EXPECT_TRUE(body.contains("system"));
            EXPECT_TRUE(body.contains("prompt"));
            res.status = status.load();
            res.set_content(R"({"text":"{\"summary\":\"s\",\"option\":\"Switch to new user or task\"}"})",
                            "application/json");
        },
        "/v1/summarize");
    SummarizerConfig config;
    config.kind = SummarizerKind::Remote;
    config.endpoint = server.url();
    config.timeout = std::chrono::milliseconds(2000);
    auto backend = make_summarizer(config);
    const auto p =
        predict_solution(scenario(ConflictLabel::HumanInteraction), {}, *backend, PreferencePrompts::defaults());
    EXPECT_EQ(p.predicted_option.ordinal, 3);
    status = 502;
    try {
        predict_solution(scenario(ConflictLabel::HumanInteraction), {}, *backend, PreferencePrompts::defaults());
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.status(), 502);
        EXPECT_TRUE(e.retriable());
    }
}

TEST(Store, CasesNewestFirstAndFilteredByType) {
    PreferenceStore store;
    store.record_case(make_case("old", ConflictLabel::GoalAbsence, 1, 1, 0));
    store.record_case(make_case("new", ConflictLabel::GoalAbsence, 2, 1, 50));
    store.record_case(make_case("other", ConflictLabel::ObjectState, 2, 1, 100));
    store.record_case(make_case("foreign", ConflictLabel::GoalAbsence, 2, 1, 100, "u2"));
    const auto cases = store.cases_for_type("u1", ConflictLabel::GoalAbsence);
    ASSERT_EQ(cases.size(), 2u);
    EXPECT_EQ(cases[0].case_id, "new");
    EXPECT_EQ(cases[1].case_id, "old");
    EXPECT_EQ(store.cases_for_user("u1").size(), 3u);
    EXPECT_THROW(store.cases_for_type("u1", ConflictLabel::Normal), ArgumentError);
}

TEST(Store, RejectsInvalidCases) {
    PreferenceStore store;
    auto c = make_case("a", ConflictLabel::GoalAbsence, 1, 1);
    c.chosen_option = catalog_options(ConflictLabel::HumanInteraction)[0];
    EXPECT_THROW(store.record_case(c), ValidationError);
    c = make_case("a", ConflictLabel::GoalAbsence, 1, 1);
    c.scenario.label = ConflictLabel::Normal;
    EXPECT_THROW(store.record_case(c), ValidationError);
}

TEST(Store, IdenticalResubmissionIsNoOpAndChangeWins) {
    testing::TempDir dir;
    PreferenceStore store(dir.path());
    const auto c = make_case("a", ConflictLabel::GoalAbsence, 1, 1);
    store.record_case(c);
    store.record_case(c);
    const auto journal = testing::read_file(dir / "cases.jsonl");
    EXPECT_EQ(std::count(journal.begin(), journal.end(), '\n'), 1);
    auto changed = c;
    changed.chosen_option = catalog_options(ConflictLabel::GoalAbsence)[2];
    store.record_case(changed);
    EXPECT_EQ(store.find_case("a")->chosen_option.ordinal, 3);
    PreferenceStore replayed(dir.path());
    EXPECT_EQ(replayed.find_case("a")->chosen_option.ordinal, 3);
}

PreferencePrediction prediction(std::string id, std::string user = "u1") {
    PreferencePrediction p;
    p.prediction_id = std::move(id);
    p.user_id = std::move(user);
    p.scenario = scenario(ConflictLabel::GoalAbsence);
    p.predicted_option = catalog_options(ConflictLabel::GoalAbsence)[0];
    p.preference_summary = "s";
    p.created_at = Timestamp{std::chrono::milliseconds{1760000000000}};
    return p;
}

TEST(Store, PredictionsAndRatings) {
    PreferenceStore store;
    store.record_prediction(prediction("p1"));
    store.record_prediction(prediction("p2"));
    EXPECT_THROW(store.record_prediction(prediction("p1")), ValidationError);
    auto bad = prediction("p3");
    bad.predicted_option = catalog_options(ConflictLabel::HumanOccupancy)[1];
    EXPECT_THROW(store.record_prediction(bad), ValidationError);

    EXPECT_THROW(store.record_rating("p1", 0), ArgumentError);
    EXPECT_THROW(store.record_rating("p1", 6), ArgumentError);
    EXPECT_THROW(store.record_rating("nope", 3), NotFoundError);
    store.record_rating("p1", 2);
    const auto updated = store.record_rating("p1", 5);
    EXPECT_EQ(updated.rating, 5);
    EXPECT_EQ(store.rating_history("u1").size(), 2u);
    const auto listed = store.predictions_for_user("u1");
    ASSERT_EQ(listed.size(), 2u);
    EXPECT_EQ(listed[0].prediction_id, "p1");
}

std::string listing(const PreferenceStore& s) {
    nlohmann::json j;
    j["cases"] = s.cases_for_user("u1");
    j["predictions"] = s.predictions_for_user("u1");
    j["ratings"] = s.rating_history("u1");
    return j.dump();
}

TEST(Store, ReplayReproducesListings) {
    testing::TempDir dir;
    std::string before;
    {
        PreferenceStore store(dir.path());
        for (int i = 0; i < 5; ++i)
            store.record_case(make_case(fmt::format("c{}", i), kConflictTypes[i % 4], 1 + i % 4, 1 + i % 3, i % 2));
        store.record_prediction(prediction("p1"));
        store.record_rating("p1", 4, Timestamp{std::chrono::milliseconds{1760000001000}});
        before = listing(store);
    }
    PreferenceStore replayed(dir.path());
    EXPECT_EQ(listing(replayed), before);
}

TEST(Store, TornFinalLineIsCutAndAppendsContinue) {
    testing::TempDir dir;
    {
        PreferenceStore store(dir.path());
        store.record_case(make_case("a", ConflictLabel::GoalAbsence, 1, 1));
    }
    {
        std::ofstream out(dir / "cases.jsonl", std::ios::app);
        out << R"({"case_id":"b","user_id":"u1","scen)";
    }
    {
        PreferenceStore store(dir.path());
        EXPECT_EQ(store.cases_for_user("u1").size(), 1u);
        store.record_case(make_case("c", ConflictLabel::GoalAbsence, 2, 1, 10));
    }
    PreferenceStore store(dir.path());
    EXPECT_EQ(store.cases_for_user("u1").size(), 2u);
}

TEST(Store, CorruptMiddleLineIsAnError) {
    testing::TempDir dir;
    const auto good = nlohmann::json(make_case("a", ConflictLabel::GoalAbsence, 1, 1)).dump();
    testing::write_file(dir / "cases.jsonl", good + "\n{garbage\n" + good + "\n");
    EXPECT_THROW(PreferenceStore{dir.path()}, ValidationError);
}

TEST(Engine, PredictUsesSameTypeCasesAndPersists) {
    auto store = std::make_shared<PreferenceStore>();
    const auto type = ConflictLabel::HumanOccupancy;
    store->record_case(make_case("a", type, 2, 1, 1));
    store->record_case(make_case("b", type, 2, 1, 2));
    store->record_case(make_case("c", type, 1, 3, 3));
    store->record_case(make_case("d", ConflictLabel::GoalAbsence, 1, 3, 4));
    PreferenceEngine engine(store, std::make_shared<MockSummarizer>(), PreferencePrompts::defaults(), 2);
    const auto p = engine.predict("u1", scenario(type));
    // max_cases=2 keeps the two newest: c (option 1, level 3) and b (option 2, level 1).
    EXPECT_EQ(p.used_case_ids, (std::vector<std::string>{"c", "b"}));
    EXPECT_EQ(p.predicted_option.ordinal, 1);
    EXPECT_EQ(p.prediction_id.rfind("pred-", 0), 0u);
    EXPECT_TRUE(store->prediction(p.prediction_id));
}

TEST(Json, CaseRoundTrip) {
    const auto c = make_case("a", ConflictLabel::HumanInteraction, 3, 2);
    const auto j = nlohmann::json(c);
    EXPECT_EQ(nlohmann::json(j.get<UserCase>()), j);
    EXPECT_EQ(j.at("emergency"), 2);
}

}  // namespace
}  // namespace conflict
