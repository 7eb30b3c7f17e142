// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflict/types.hpp"

namespace conflict {

/// A situation shown to a user: an observation plus its conflict type.
struct Scenario {
    std::string scenario_id;
    DetectionInput input;
    ConflictLabel label = ConflictLabel::GoalAbsence;
};

/// Scenarios are stored with on-disk image paths only.
void to_json(nlohmann::json& j, const Scenario& scenario);
void from_json(const nlohmann::json& j, Scenario& scenario);

/// A user's chosen option and emergency level for one scenario.
struct UserCase {
    std::string case_id;
    std::string user_id;
    Scenario scenario;
    SolutionOption chosen_option;
    EmergencyLevel emergency{1};
    Timestamp created_at{};

    /// Throws ValidationError when the scenario is Normal or the option does
    /// not belong to the scenario's catalog.
    void validate() const;
};

void to_json(nlohmann::json& j, const UserCase& c);
void from_json(const nlohmann::json& j, UserCase& c);

struct PreferencePrediction {
    std::string prediction_id;
    std::string user_id;
    Scenario scenario;
    std::vector<std::string> used_case_ids;
    std::string preference_summary;
    SolutionOption predicted_option;
    bool no_preference_data = false;
    std::optional<int> rating;
    std::optional<Timestamp> rated_at;
    Timestamp created_at{};
};

void to_json(nlohmann::json& j, const PreferencePrediction& p);
void from_json(const nlohmann::json& j, PreferencePrediction& p);

struct RatingEvent {
    std::string prediction_id;
    int rating = 0;
    Timestamp rated_at{};
};

void to_json(nlohmann::json& j, const RatingEvent& e);
void from_json(const nlohmann::json& j, RatingEvent& e);

// ---------------------------------------------------------------------------
// Prompts and summarizer backends
// ---------------------------------------------------------------------------

/// One system instruction per conflict type, plus a shared user template with
/// placeholders {conflict_type}, {scenario}, {options} and {cases}.
struct PreferencePrompts {
    std::map<ConflictLabel, std::string> system_by_type;
    std::string user_template;

    static PreferencePrompts defaults();
    /// Throws ArgumentError unless all four conflict types have a template.
    void validate() const;
    std::string render_user(const Scenario& scenario, std::span<const UserCase> cases) const;
};

struct SummarizerRequest {
    const Scenario& scenario;
    std::span<const UserCase> cases;
    std::string system;
    std::string user;
};

/// Produces a reply containing {"summary": ..., "option": ...}.
class SummarizerBackend {
public:
    virtual ~SummarizerBackend() = default;
    /// Throws BackendError when the backend cannot answer.
    virtual std::string complete(const SummarizerRequest& request) = 0;
};

/// Deterministic stand-in for the LLM summarizer, used as a test oracle.
///
/// Picks the option chosen by most cases. Ties go to the option whose cases
/// reach the highest emergency level, then to the earliest catalog option.
/// With no cases it answers "Inform the user and wait for instructions".
class MockSummarizer final : public SummarizerBackend {
public:
    std::string complete(const SummarizerRequest& request) override;
};

/// The option MockSummarizer selects.
SolutionOption mock_majority_option(ConflictLabel conflict_type, std::span<const UserCase> cases);

enum class SummarizerKind { Mock, Remote };

struct SummarizerConfig {
    SummarizerKind kind = SummarizerKind::Mock;
    std::optional<std::string> endpoint;
    std::chrono::milliseconds timeout{60000};
    std::size_t max_in_flight = 2;

    void validate() const;
};

void from_json(const nlohmann::json& j, SummarizerConfig& config);

/// POSTs {"system", "prompt"} and reads {"text"}.
class RemoteSummarizer final : public SummarizerBackend {
public:
    explicit RemoteSummarizer(SummarizerConfig config);
    std::string complete(const SummarizerRequest& request) override;

private:
    SummarizerConfig config_;
    std::counting_semaphore<> in_flight_;
};

std::shared_ptr<SummarizerBackend> make_summarizer(const SummarizerConfig& config);

struct ParsedSummary {
    std::string summary;
    SolutionOption option;
};

/// Parses the first JSON object in `reply`. Throws ValidationError (raw reply
/// attached) when the option is missing or outside the catalog of `type`.
ParsedSummary parse_summary_reply(std::string_view reply, ConflictLabel type);

/// Renders the prompt for `scenario` and `cases`, queries the backend and
/// validates its choice. Does not persist anything; the returned prediction
/// has no id.
PreferencePrediction predict_solution(const Scenario& scenario, std::span<const UserCase> cases,
                                      SummarizerBackend& backend, const PreferencePrompts& prompts);

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

/// Cases, predictions and ratings, optionally backed by append-only JSON
/// Lines journals (cases.jsonl, predictions.jsonl, ratings.jsonl) that are
/// replayed on construction.
class PreferenceStore {
public:
    /// In-memory store.
    PreferenceStore() = default;
    /// Journaled store rooted at `dir` (created if missing).
    explicit PreferenceStore(std::filesystem::path dir);

    /// Validates and stores. Resubmitting an identical case is a no-op; a
    /// different case under an existing id replaces it (last writer wins).
    std::string record_case(const UserCase& user_case);

    /// The user's cases of one type, newest first. Throws ArgumentError for Normal.
    std::vector<UserCase> cases_for_type(const std::string& user_id, ConflictLabel type) const;
    std::vector<UserCase> cases_for_user(const std::string& user_id) const;
    std::optional<UserCase> find_case(const std::string& case_id) const;

    /// Throws ValidationError if the option is outside the scenario catalog.
    void record_prediction(const PreferencePrediction& prediction);
    std::optional<PreferencePrediction> prediction(const std::string& prediction_id) const;
    /// Oldest first.
    std::vector<PreferencePrediction> predictions_for_user(const std::string& user_id) const;
    std::vector<PreferencePrediction> all_predictions() const;

    /// Throws NotFoundError or ArgumentError (rating outside 1..5).
    PreferencePrediction record_rating(const std::string& prediction_id, int rating, Timestamp at = now_timestamp());
    /// Every rating ever submitted for the user's predictions, in order.
    std::vector<RatingEvent> rating_history(const std::string& user_id) const;

private:
    void replay();
    void append(const char* journal, const nlohmann::json& entry);

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::mutex journal_mutex_;
    std::map<std::string, UserCase> cases_;
    std::map<std::string, std::uint64_t> case_seq_;
    std::map<std::string, PreferencePrediction> predictions_;
    std::vector<std::string> prediction_order_;
    std::vector<RatingEvent> ratings_;
    std::uint64_t next_seq_ = 0;
};

/// Stateful front end: pulls same-type cases from the store, predicts and
/// persists.
class PreferenceEngine {
public:
    static constexpr std::size_t kDefaultMaxCases = 20;

    PreferenceEngine(std::shared_ptr<PreferenceStore> store, std::shared_ptr<SummarizerBackend> backend,
                     PreferencePrompts prompts = PreferencePrompts::defaults(),
                     std::size_t max_cases = kDefaultMaxCases);

    PreferencePrediction predict(const std::string& user_id, const Scenario& scenario);

    PreferenceStore& store() noexcept { return *store_; }

private:
    std::string next_prediction_id();

    std::shared_ptr<PreferenceStore> store_;
    std::shared_ptr<SummarizerBackend> backend_;
    PreferencePrompts prompts_;
    std::size_t max_cases_;
};

}  // namespace conflict
