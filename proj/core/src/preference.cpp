// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/preference.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "conflict/error.hpp"
#include "conflict/model_backend.hpp"
#include "http_client.hpp"

namespace conflict {

namespace {

constexpr const char* kCasesJournal = "cases.jsonl";
constexpr const char* kPredictionsJournal = "predictions.jsonl";
constexpr const char* kRatingsJournal = "ratings.jsonl";

constexpr std::string_view kSystemPreamble =
    R"(You help a household robot resolve a conflict in a way its user would approve of.
The robot has detected a {type_name} ({type_hint}).
You are given the current scenario, the robot's available options, and past cases in which this
user picked an option for a similar conflict and rated how pressing the situation felt to them.

Emergency levels run from 1 to 3. At level 3 the user felt the matter was pressing and wanted
their own task done quickly. At level 1 they were content to give up some time or task quality
so the conflict could be settled gently or with little effort.

First write a short summary of what this user tends to prefer for this kind of conflict, then
pick the single option that fits that preference best for the current scenario.
{type_guidance})";

struct TypeText {
    ConflictLabel type;
    std::string_view hint;
    std::string_view guidance;
};

constexpr std::array<TypeText, 4> kTypeText = {{
    {ConflictLabel::GoalAbsence, "the object or place the current step needs is missing",
     "Consider whether this user prefers asking for help, substituting, replanning, or deferring to them."},
    {ConflictLabel::HumanInteraction, "someone other than the user is trying to command or engage the robot",
     "Consider how this user weighs their own task against requests from other household members."},
    {ConflictLabel::HumanOccupancy, "a person is using or blocking what the current step needs",
     "Consider whether this user prefers waiting, talking to the person, or working around them."},
    {ConflictLabel::ObjectState, "an object's state keeps the current step from continuing",
     "Consider whether this user prefers asking for help, substituting, replanning, or deferring to them."},
}};

constexpr std::string_view kUserTemplate = R"(Conflict type: {conflict_type}

Current scenario:
{scenario}

Available options:
{options}

Past cases from this user:
{cases}

Reply with a JSON object of the form {"summary": "<preference summary>", "option": "<one option copied exactly from the list>"}.)";

std::string describe_input(const DetectionInput& in) {
    std::string image = in.image.is_path() ? in.image.path().string() : in.image.describe();
    return fmt::format("Image: {}\nTask: {}\nStep: {}\nSpeech: {}", image, in.task, in.step,
                       in.speech.value_or("none"));
}

nlohmann::json opt_json(const std::optional<std::string>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string first_json_object(std::string_view reply) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return {};
    return std::string(reply.substr(open, close - open + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Scenario& s) {
    if (!s.input.image.is_path()) throw ArgumentError("scenario images must be stored on disk");
    j = nlohmann::json{{"scenario_id", s.scenario_id},       {"image", s.input.image.path().string()},
                       {"task", s.input.task},               {"step", s.input.step},
                       {"speech", opt_json(s.input.speech)}, {"label", s.label}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.input.image = ImageRef::from_path(j.at("image").get<std::string>());
    s.input.task = j.at("task").get<std::string>();
    s.input.step = j.at("step").get<std::string>();
    std::optional<std::string> speech;
    if (auto it = j.find("speech"); it != j.end() && !it->is_null()) speech = it->get<std::string>();
    s.input.speech = normalize_speech(std::move(speech));
    s.label = j.at("label").get<ConflictLabel>();
}

void UserCase::validate() const {
    if (case_id.empty()) throw ValidationError("case_id must not be empty");
    if (user_id.empty()) throw ValidationError("user_id must not be empty");
    if (scenario.label == ConflictLabel::Normal) throw ValidationError("preference cases need a conflict scenario");
    scenario.input.validate();
    if (chosen_option.conflict_type != scenario.label || !find_option(scenario.label, chosen_option.text))
        throw ValidationError(fmt::format("option '{}' does not belong to the {} catalog", chosen_option.text,
                                          to_string(scenario.label)));
}

void to_json(nlohmann::json& j, const UserCase& c) {
    j = nlohmann::json{{"case_id", c.case_id},
                       {"user_id", c.user_id},
                       {"scenario", c.scenario},
                       {"chosen_option", c.chosen_option},
                       {"emergency", c.emergency.value()},
                       {"created_at", format_timestamp(c.created_at)}};
}

void from_json(const nlohmann::json& j, UserCase& c) {
    c.case_id = j.at("case_id").get<std::string>();
    c.user_id = j.at("user_id").get<std::string>();
    c.scenario = j.at("scenario").get<Scenario>();
    c.chosen_option = j.at("chosen_option").get<SolutionOption>();
    c.emergency = EmergencyLevel(j.at("emergency").get<int>());
    c.created_at = parse_timestamp(j.at("created_at").get<std::string>());
}

void to_json(nlohmann::json& j, const PreferencePrediction& p) {
    j = nlohmann::json{{"prediction_id", p.prediction_id},
                       {"user_id", p.user_id},
                       {"scenario", p.scenario},
                       {"used_case_ids", p.used_case_ids},
                       {"preference_summary", p.preference_summary},
                       {"predicted_option", p.predicted_option},
                       {"no_preference_data", p.no_preference_data},
                       {"rating", p.rating ? nlohmann::json(*p.rating) : nlohmann::json(nullptr)},
                       {"rated_at", p.rated_at ? nlohmann::json(format_timestamp(*p.rated_at)) : nlohmann::json(nullptr)},
                       {"created_at", format_timestamp(p.created_at)}};
}

void from_json(const nlohmann::json& j, PreferencePrediction& p) {
    p.prediction_id = j.at("prediction_id").get<std::string>();
    p.user_id = j.at("user_id").get<std::string>();
    p.scenario = j.at("scenario").get<Scenario>();
    p.used_case_ids = j.at("used_case_ids").get<std::vector<std::string>>();
    p.preference_summary = j.at("preference_summary").get<std::string>();
    p.predicted_option = j.at("predicted_option").get<SolutionOption>();
    p.no_preference_data = j.value("no_preference_data", false);
    p.rating.reset();
    p.rated_at.reset();
    if (auto it = j.find("rating"); it != j.end() && !it->is_null()) p.rating = it->get<int>();
    if (auto it = j.find("rated_at"); it != j.end() && !it->is_null())
        p.rated_at = parse_timestamp(it->get<std::string>());
    p.created_at = parse_timestamp(j.at("created_at").get<std::string>());
}

void to_json(nlohmann::json& j, const RatingEvent& e) {
    j = nlohmann::json{{"prediction_id", e.prediction_id}, {"rating", e.rating}, {"rated_at", format_timestamp(e.rated_at)}};
}

void from_json(const nlohmann::json& j, RatingEvent& e) {
    e.prediction_id = j.at("prediction_id").get<std::string>();
    e.rating = j.at("rating").get<int>();
    e.rated_at = parse_timestamp(j.at("rated_at").get<std::string>());
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

PreferencePrompts PreferencePrompts::defaults() {
    PreferencePrompts prompts;
    for (const auto& t : kTypeText) {
        const std::string name(display_name(t.type));
        prompts.system_by_type[t.type] = fill_template(
            kSystemPreamble, {{"type_name", name}, {"type_hint", t.hint}, {"type_guidance", t.guidance}});
    }
    prompts.user_template = std::string(kUserTemplate);
    return prompts;
}

void PreferencePrompts::validate() const {
    for (auto type : kConflictTypes)
        if (!system_by_type.contains(type))
            throw ArgumentError(fmt::format("no preference prompt for {}", to_string(type)));
    if (user_template.empty()) throw ArgumentError("preference user template is empty");
}

std::string PreferencePrompts::render_user(const Scenario& scenario, std::span<const UserCase> cases) const {
    std::string options;
    for (const auto& o : catalog_options(scenario.label)) options += fmt::format("{}. {}\n", o.ordinal, o.text);
    std::string case_text;
    int n = 1;
    for (const auto& c : cases) {
        case_text += fmt::format("Case {}:\n{}\nChosen option: {}\nEmergency level: {}\n\n", n++,
                                 describe_input(c.scenario.input), c.chosen_option.text, c.emergency.value());
    }
    if (cases.empty()) case_text = "(none recorded)\n";
    const std::string type(display_name(scenario.label));
    const std::string scenario_text = describe_input(scenario.input);
    return fill_template(user_template,
                         {{"conflict_type", type}, {"scenario", scenario_text}, {"options", options}, {"cases", case_text}});
}

// ---------------------------------------------------------------------------
// Summarizers
// ---------------------------------------------------------------------------

SolutionOption mock_majority_option(ConflictLabel conflict_type, std::span<const UserCase> cases) {
    const auto& catalog = catalog_options(conflict_type);
    if (cases.empty()) return catalog.back();

    struct Tally {
        int count = 0;
        int max_emergency = 0;
    };
    std::vector<Tally> tally(catalog.size());
    for (const auto& c : cases) {
        if (c.chosen_option.conflict_type != conflict_type) continue;
        auto& t = tally.at(static_cast<std::size_t>(c.chosen_option.ordinal - 1));
        ++t.count;
        t.max_emergency = std::max(t.max_emergency, c.emergency.value());
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < tally.size(); ++i) {
        const auto& a = tally[i];
        const auto& b = tally[best];
        if (a.count > b.count || (a.count == b.count && a.max_emergency > b.max_emergency)) best = i;
    }
    return catalog[best];
}

std::string MockSummarizer::complete(const SummarizerRequest& request) {
    const auto type = request.scenario.label;
    const auto option = mock_majority_option(type, request.cases);
    std::string summary;
    if (request.cases.empty()) {
        summary = fmt::format("No preference data for {} cases; deferring to the user.", display_name(type));
    } else {
        const auto& catalog = catalog_options(type);
        std::vector<int> counts(catalog.size(), 0);
        int emergency_sum = 0;
        for (const auto& c : request.cases) {
            ++counts.at(static_cast<std::size_t>(c.chosen_option.ordinal - 1));
            emergency_sum += c.emergency.value();
        }
        std::string parts;
        for (std::size_t i = 0; i < catalog.size(); ++i) {
            if (counts[i] == 0) continue;
            if (!parts.empty()) parts += "; ";
            parts += fmt::format("'{}' x{}", catalog[i].text, counts[i]);
        }
        summary = fmt::format("Over {} {} cases the user chose {}. Mean emergency level {:.2f}.", request.cases.size(),
                              display_name(type), parts,
                              static_cast<double>(emergency_sum) / static_cast<double>(request.cases.size()));
    }
    return nlohmann::json{{"summary", summary}, {"option", option.text}}.dump();
}

void SummarizerConfig::validate() const {
    if (kind == SummarizerKind::Remote && (!endpoint || endpoint->empty()))
        throw ArgumentError("remote summarizer requires an endpoint");
    if (max_in_flight == 0) throw ArgumentError("max_in_flight must be positive");
    if (timeout.count() <= 0) throw ArgumentError("summarizer timeout must be positive");
}

void from_json(const nlohmann::json& j, SummarizerConfig& c) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "mock")
        c.kind = SummarizerKind::Mock;
    else if (kind == "remote")
        c.kind = SummarizerKind::Remote;
    else
        throw ArgumentError(fmt::format("unknown summarizer kind '{}'", kind));
    c.endpoint = j.contains("endpoint") ? std::optional(j.at("endpoint").get<std::string>()) : std::nullopt;
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    c.max_in_flight = j.value("max_in_flight", std::size_t{2});
    c.validate();
}

RemoteSummarizer::RemoteSummarizer(SummarizerConfig config)
    : config_(std::move(config)), in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(config_.max_in_flight, 1))) {
    config_.validate();
}

std::string RemoteSummarizer::complete(const SummarizerRequest& request) {
    const std::string& endpoint = *config_.endpoint;
    const nlohmann::json body = {{"system", request.system}, {"prompt", request.user}};
    detail::HttpResponse res;
    {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{in_flight_};
        try {
            res = detail::post_json(endpoint, body.dump(), config_.timeout);
        } catch (const detail::TransportError& e) {
            throw BackendError(e.what(), 0, true);
        }
    }
    if (res.status < 200 || res.status >= 300)
        throw BackendError(fmt::format("{} returned HTTP {}", endpoint, res.status), res.status,
                           res.status >= 500 || res.status == 429);
    try {
        return nlohmann::json::parse(res.body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(fmt::format("{}: reply is not {{\"text\": ...}}", endpoint), res.body);
    }
}

std::shared_ptr<SummarizerBackend> make_summarizer(const SummarizerConfig& config) {
    config.validate();
    if (config.kind == SummarizerKind::Mock) return std::make_shared<MockSummarizer>();
    return std::make_shared<RemoteSummarizer>(config);
}

ParsedSummary parse_summary_reply(std::string_view reply, ConflictLabel type) {
    const auto object = first_json_object(reply);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(object);
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("summarizer reply contains no JSON object", std::string(reply));
    }
    if (!parsed.is_object() || !parsed.contains("option") || !parsed["option"].is_string())
        throw ValidationError("summarizer reply has no \"option\" string", std::string(reply));
    const auto text = parsed["option"].get<std::string>();
    auto option = find_option(type, text);
    if (!option)
        throw ValidationError(fmt::format("summarizer chose '{}', which is not a {} option", text, to_string(type)),
                              std::string(reply));
    std::string summary;
    if (parsed.contains("summary") && parsed["summary"].is_string()) summary = parsed["summary"].get<std::string>();
    return {std::move(summary), std::move(*option)};
}

PreferencePrediction predict_solution(const Scenario& scenario, std::span<const UserCase> cases,
                                      SummarizerBackend& backend, const PreferencePrompts& prompts) {
    if (scenario.label == ConflictLabel::Normal) throw ArgumentError("no solution catalog for Normal");
    for (const auto& c : cases)
        if (c.scenario.label != scenario.label)
            throw ArgumentError(fmt::format("case {} is {}, scenario is {}", c.case_id, to_string(c.scenario.label),
                                            to_string(scenario.label)));
    prompts.validate();

    const SummarizerRequest request{scenario, cases, prompts.system_by_type.at(scenario.label),
                                    prompts.render_user(scenario, cases)};
    auto parsed = parse_summary_reply(backend.complete(request), scenario.label);

    PreferencePrediction p;
    p.scenario = scenario;
    for (const auto& c : cases) p.used_case_ids.push_back(c.case_id);
    p.no_preference_data = cases.empty();
    p.preference_summary = std::move(parsed.summary);
    if (p.no_preference_data && p.preference_summary.find("No preference data") == std::string::npos)
        p.preference_summary = "No preference data. " + p.preference_summary;
    p.predicted_option = std::move(parsed.option);
    p.created_at = now_timestamp();
    return p;
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

PreferenceStore::PreferenceStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw IoError(fmt::format("cannot create data directory '{}': {}", dir_->string(), ec.message()));
    replay();
}

void PreferenceStore::append(const char* journal, const nlohmann::json& entry) {
    if (!dir_) return;
    const std::string line = entry.dump() + '\n';
    std::lock_guard lock(journal_mutex_);
    std::ofstream out(*dir_ / journal, std::ios::app | std::ios::binary);
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw IoError(fmt::format("cannot append to journal '{}'", (*dir_ / journal).string()));
}

void PreferenceStore::replay() {
    const auto read_lines = [&](const char* journal, auto&& apply) {
        const auto path = *dir_ / journal;
        std::ifstream in(path, std::ios::binary);
        if (!in) return;
        const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        in.close();

        std::size_t pos = 0, line_no = 0;
        while (pos < content.size()) {
            const auto nl = content.find('\n', pos);
            const auto end = nl == std::string::npos ? content.size() : nl;
            const std::string_view line(content.data() + pos, end - pos);
            ++line_no;
            nlohmann::json j;
            try {
                if (!line.empty()) j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                // A torn final line is what an interrupted append leaves
                // behind. Cut it off so the next append starts a clean line.
                if (content.find_first_not_of('\n', end) == std::string::npos) {
                    spdlog::warn("{}: dropping truncated final line", path.string());
                    std::filesystem::resize_file(path, pos);
                    return;
                }
                throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
            }
            if (!line.empty()) apply(j);
            if (nl == std::string::npos) {
                std::ofstream(path, std::ios::app | std::ios::binary) << '\n';
                break;
            }
            pos = nl + 1;
        }
    };

    read_lines(kCasesJournal, [&](const nlohmann::json& j) {
        auto c = j.get<UserCase>();
        case_seq_[c.case_id] = next_seq_++;
        cases_.insert_or_assign(c.case_id, std::move(c));
    });
    read_lines(kPredictionsJournal, [&](const nlohmann::json& j) {
        auto p = j.get<PreferencePrediction>();
        if (!predictions_.contains(p.prediction_id)) prediction_order_.push_back(p.prediction_id);
        predictions_.insert_or_assign(p.prediction_id, std::move(p));
    });
    read_lines(kRatingsJournal, [&](const nlohmann::json& j) {
        auto e = j.get<RatingEvent>();
        auto it = predictions_.find(e.prediction_id);
        if (it == predictions_.end()) {
            spdlog::warn("rating for unknown prediction {} ignored", e.prediction_id);
            return;
        }
        it->second.rating = e.rating;
        it->second.rated_at = e.rated_at;
        ratings_.push_back(std::move(e));
    });
}

std::string PreferenceStore::record_case(const UserCase& user_case) {
    user_case.validate();
    std::unique_lock lock(mutex_);
    if (auto it = cases_.find(user_case.case_id); it != cases_.end()) {
        if (nlohmann::json(it->second) == nlohmann::json(user_case)) return user_case.case_id;
    }
    append(kCasesJournal, user_case);
    case_seq_[user_case.case_id] = next_seq_++;
    cases_.insert_or_assign(user_case.case_id, user_case);
    return user_case.case_id;
}

std::vector<UserCase> PreferenceStore::cases_for_type(const std::string& user_id, ConflictLabel type) const {
    if (type == ConflictLabel::Normal) throw ArgumentError("Normal has no preference cases");
    auto all = cases_for_user(user_id);
    std::erase_if(all, [&](const UserCase& c) { return c.scenario.label != type; });
    return all;
}

std::vector<UserCase> PreferenceStore::cases_for_user(const std::string& user_id) const {
    std::shared_lock lock(mutex_);
    std::vector<const UserCase*> picked;
    for (const auto& [id, c] : cases_)
        if (c.user_id == user_id) picked.push_back(&c);
    std::sort(picked.begin(), picked.end(), [&](const UserCase* a, const UserCase* b) {
        if (a->created_at != b->created_at) return a->created_at > b->created_at;
        return case_seq_.at(a->case_id) > case_seq_.at(b->case_id);
    });
    std::vector<UserCase> out;
    out.reserve(picked.size());
    for (const auto* c : picked) out.push_back(*c);
    return out;
}

std::optional<UserCase> PreferenceStore::find_case(const std::string& case_id) const {
    std::shared_lock lock(mutex_);
    auto it = cases_.find(case_id);
    if (it == cases_.end()) return std::nullopt;
    return it->second;
}

void PreferenceStore::record_prediction(const PreferencePrediction& prediction) {
    if (prediction.prediction_id.empty()) throw ValidationError("prediction_id must not be empty");
    if (!find_option(prediction.scenario.label, prediction.predicted_option.text) ||
        prediction.predicted_option.conflict_type != prediction.scenario.label)
        throw ValidationError(fmt::format("predicted option '{}' is outside the {} catalog",
                                          prediction.predicted_option.text, to_string(prediction.scenario.label)));
    std::unique_lock lock(mutex_);
    if (predictions_.contains(prediction.prediction_id))
        throw ValidationError(fmt::format("prediction {} already exists", prediction.prediction_id));
    append(kPredictionsJournal, prediction);
    prediction_order_.push_back(prediction.prediction_id);
    predictions_.emplace(prediction.prediction_id, prediction);
}

std::optional<PreferencePrediction> PreferenceStore::prediction(const std::string& prediction_id) const {
    std::shared_lock lock(mutex_);
    auto it = predictions_.find(prediction_id);
    if (it == predictions_.end()) return std::nullopt;
    return it->second;
}

std::vector<PreferencePrediction> PreferenceStore::predictions_for_user(const std::string& user_id) const {
    std::shared_lock lock(mutex_);
    std::vector<PreferencePrediction> out;
    for (const auto& id : prediction_order_) {
        const auto& p = predictions_.at(id);
        if (p.user_id == user_id) out.push_back(p);
    }
    return out;
}

std::vector<PreferencePrediction> PreferenceStore::all_predictions() const {
    std::shared_lock lock(mutex_);
    std::vector<PreferencePrediction> out;
    for (const auto& id : prediction_order_) out.push_back(predictions_.at(id));
    return out;
}

PreferencePrediction PreferenceStore::record_rating(const std::string& prediction_id, int rating, Timestamp at) {
    if (rating < 1 || rating > 5) throw ArgumentError(fmt::format("rating must be between 1 and 5 (got {})", rating));
    std::unique_lock lock(mutex_);
    auto it = predictions_.find(prediction_id);
    if (it == predictions_.end()) throw NotFoundError(fmt::format("unknown prediction '{}'", prediction_id));
    RatingEvent event{prediction_id, rating, at};
    append(kRatingsJournal, event);
    it->second.rating = rating;
    it->second.rated_at = at;
    ratings_.push_back(std::move(event));
    return it->second;
}

std::vector<RatingEvent> PreferenceStore::rating_history(const std::string& user_id) const {
    std::shared_lock lock(mutex_);
    std::vector<RatingEvent> out;
    for (const auto& e : ratings_)
        if (predictions_.at(e.prediction_id).user_id == user_id) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

PreferenceEngine::PreferenceEngine(std::shared_ptr<PreferenceStore> store, std::shared_ptr<SummarizerBackend> backend,
                                   PreferencePrompts prompts, std::size_t max_cases)
    : store_(std::move(store)), backend_(std::move(backend)), prompts_(std::move(prompts)), max_cases_(max_cases) {
    if (!store_ || !backend_) throw ArgumentError("preference engine needs a store and a summarizer");
    prompts_.validate();
}

PreferencePrediction PreferenceEngine::predict(const std::string& user_id, const Scenario& scenario) {
    auto cases = store_->cases_for_type(user_id, scenario.label);
    if (cases.size() > max_cases_) cases.resize(max_cases_);
    auto prediction = predict_solution(scenario, cases, *backend_, prompts_);
    prediction.prediction_id = next_prediction_id();
    prediction.user_id = user_id;
    store_->record_prediction(prediction);
    return prediction;
}

std::string PreferenceEngine::next_prediction_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    return fmt::format("pred-{:016x}", rng());
}

}  // namespace conflict
