// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/types.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "conflict/error.hpp"

namespace conflict {

namespace {

struct LabelNames {
    ConflictLabel label;
    std::string_view wire;
    std::string_view display;
};

constexpr std::array<LabelNames, 5> kLabelNames = {{
    {ConflictLabel::GoalAbsence, "goal_absence", "Goal Absence Conflict"},
    {ConflictLabel::HumanInteraction, "human_interaction", "Human Interaction Conflict"},
    {ConflictLabel::HumanOccupancy, "human_occupancy", "Human Occupancy Conflict"},
    {ConflictLabel::ObjectState, "object_state", "Object State Conflict"},
    {ConflictLabel::Normal, "normal", "Normal"},
}};

std::vector<SolutionOption> make_catalog(ConflictLabel type, std::initializer_list<const char*> texts) {
    std::vector<SolutionOption> out;
    int ordinal = 1;
    for (const char* t : texts) out.push_back({type, t, ordinal++});
    return out;
}

std::string trim_lower(std::string_view s) {
    auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    std::string out;
    if (first < last) out.assign(first, last);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

}  // namespace

std::string_view to_string(ConflictLabel label) noexcept {
    for (const auto& n : kLabelNames)
        if (n.label == label) return n.wire;
    return "normal";
}

std::string_view display_name(ConflictLabel label) noexcept {
    for (const auto& n : kLabelNames)
        if (n.label == label) return n.display;
    return "Normal";
}

std::optional<ConflictLabel> try_parse_label(std::string_view wire) noexcept {
    for (const auto& n : kLabelNames)
        if (n.wire == wire) return n.label;
    return std::nullopt;
}

ConflictLabel parse_label(std::string_view wire) {
    if (auto label = try_parse_label(wire)) return *label;
    throw ArgumentError(fmt::format("unknown conflict label '{}'", wire));
}

void to_json(nlohmann::json& j, ConflictLabel label) { j = std::string(to_string(label)); }

void from_json(const nlohmann::json& j, ConflictLabel& label) { label = parse_label(j.get<std::string>()); }

const std::vector<SolutionOption>& catalog_options(ConflictLabel conflict_type) {
    // GoalAbsence and ObjectState share option texts but stay separate catalogs.
    static const std::map<ConflictLabel, std::vector<SolutionOption>> catalogs = {
        {ConflictLabel::GoalAbsence,
         make_catalog(ConflictLabel::GoalAbsence,
                      {"Ask people around for help", "Find another similar spot or object",
                       "Re-calculate the path or make a new task plan",
                       "Inform the user and wait for instructions"})},
        {ConflictLabel::HumanOccupancy,
         make_catalog(ConflictLabel::HumanOccupancy,
                      {"Stop execution and wait for the person", "Directly communicate with the person",
                       "Find another similar spot or object", "Inform the user and wait for instructions"})},
        {ConflictLabel::ObjectState,
         make_catalog(ConflictLabel::ObjectState,
                      {"Ask people around for help", "Find another similar spot or object",
                       "Re-calculate the path or make a new task plan",
                       "Inform the user and wait for instructions"})},
        {ConflictLabel::HumanInteraction,
         make_catalog(ConflictLabel::HumanInteraction,
                      {"Ignore and keep original steps", "Pause current actions and interact with person (chat)",
                       "Switch to new user or task", "Inform the user and wait for instructions"})},
    };
    auto it = catalogs.find(conflict_type);
    if (it == catalogs.end()) throw ArgumentError("no solution catalog for Normal");
    return it->second;
}

std::optional<SolutionOption> find_option(ConflictLabel conflict_type, std::string_view text) {
    const std::string wanted = trim_lower(text);
    for (const auto& option : catalog_options(conflict_type))
        if (trim_lower(option.text) == wanted) return option;
    return std::nullopt;
}

void to_json(nlohmann::json& j, const SolutionOption& option) {
    j = nlohmann::json{{"conflict_type", option.conflict_type}, {"text", option.text}, {"ordinal", option.ordinal}};
}

void from_json(const nlohmann::json& j, SolutionOption& option) {
    const auto type = j.at("conflict_type").get<ConflictLabel>();
    const auto text = j.at("text").get<std::string>();
    auto found = find_option(type, text);
    if (!found) throw ValidationError(fmt::format("'{}' is not an option for {}", text, to_string(type)));
    option = *found;
}

EmergencyLevel::EmergencyLevel(int level) : level_(level) {
    if (level < 1 || level > 3) throw ArgumentError(fmt::format("emergency level must be 1, 2 or 3 (got {})", level));
}

Timestamp now_timestamp() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string format_timestamp(Timestamp ts) {
    const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(ts);
    const auto ms = (ts - secs).count();
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", secs, ms);
}

Timestamp parse_timestamp(std::string_view text) {
    std::tm tm{};
    int millis = 0;
    const std::string s(text);
    const int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                              &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &millis);
    if (n < 6) throw ArgumentError(fmt::format("bad timestamp '{}'", text));
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    const std::time_t secs = timegm(&tm);
    return Timestamp{std::chrono::milliseconds{static_cast<std::int64_t>(secs) * 1000 + millis}};
}

ImageRef ImageRef::from_path(std::filesystem::path path) {
    ImageRef ref;
    ref.source_ = std::move(path);
    return ref;
}

ImageRef ImageRef::from_bytes(std::vector<std::uint8_t> bytes) {
    ImageRef ref;
    ref.source_ = std::move(bytes);
    return ref;
}

const std::filesystem::path& ImageRef::path() const {
    if (!is_path()) throw ArgumentError("image is held in memory, not on disk");
    return std::get<std::filesystem::path>(source_);
}

std::vector<std::uint8_t> ImageRef::load() const {
    if (!is_path()) return std::get<std::vector<std::uint8_t>>(source_);
    const auto& p = std::get<std::filesystem::path>(source_);
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read image '{}'", p.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string ImageRef::describe() const {
    if (is_path()) return std::get<std::filesystem::path>(source_).string();
    return fmt::format("<{} bytes>", std::get<std::vector<std::uint8_t>>(source_).size());
}

std::optional<std::string> normalize_speech(std::optional<std::string> speech) {
    if (!speech) return std::nullopt;
    const bool blank = std::all_of(speech->begin(), speech->end(), [](unsigned char c) { return std::isspace(c); });
    if (blank) return std::nullopt;
    return speech;
}

void DetectionInput::validate() const {
    if (task.empty()) throw ArgumentError("task must not be empty");
    if (step.empty()) throw ArgumentError("step must not be empty");
}

DetectionInput DatasetRecord::to_input(const std::filesystem::path& base_dir) const {
    std::filesystem::path img(image);
    if (img.is_relative() && !base_dir.empty()) img = base_dir / img;
    return DetectionInput{ImageRef::from_path(img), task, step, normalize_speech(speech)};
}

void DatasetRecord::validate() const {
    if (id.empty()) throw ValidationError("record id must not be empty");
    if (task.empty()) throw ValidationError(fmt::format("record {}: task must not be empty", id));
    if (step.empty()) throw ValidationError(fmt::format("record {}: step must not be empty", id));
    if (trajectory_id.has_value() != frame_index.has_value())
        throw ValidationError(fmt::format("record {}: frame_index must be present iff trajectory_id is", id));
    if (frame_index && *frame_index < 0)
        throw ValidationError(fmt::format("record {}: frame_index must be non-negative", id));
}

void to_json(nlohmann::json& j, const DatasetRecord& r) {
    j = nlohmann::json{
        {"id", r.id},
        {"image", r.image},
        {"task", r.task},
        {"step", r.step},
        {"speech", r.speech ? nlohmann::json(*r.speech) : nlohmann::json(nullptr)},
        {"label", r.label},
        {"trajectory_id", r.trajectory_id ? nlohmann::json(*r.trajectory_id) : nlohmann::json(nullptr)},
        {"frame_index", r.frame_index ? nlohmann::json(*r.frame_index) : nlohmann::json(nullptr)},
    };
}

void from_json(const nlohmann::json& j, DatasetRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.image = j.at("image").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.step = j.at("step").get<std::string>();
    r.speech = normalize_speech(optional_string(j, "speech"));
    r.label = j.at("label").get<ConflictLabel>();
    r.trajectory_id = optional_string(j, "trajectory_id");
    r.frame_index.reset();
    if (auto it = j.find("frame_index"); it != j.end() && !it->is_null()) r.frame_index = it->get<std::int64_t>();
}

void validate_dataset(std::span<const DatasetRecord> records) {
    std::set<std::string> ids;
    std::map<std::string, std::vector<std::int64_t>> frames;
    for (const auto& r : records) {
        r.validate();
        if (!ids.insert(r.id).second) throw ValidationError(fmt::format("duplicate record id '{}'", r.id));
        if (r.trajectory_id) frames[*r.trajectory_id].push_back(*r.frame_index);
    }
    for (auto& [traj, idx] : frames) {
        std::sort(idx.begin(), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] != static_cast<std::int64_t>(i))
                throw ValidationError(fmt::format("trajectory {}: frames must be consecutive from 0", traj));
    }
}

std::string serialize_record(const DatasetRecord& record) { return nlohmann::json(record).dump(); }

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open dataset '{}'", path.string()));
    std::vector<DatasetRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<DatasetRecord>());
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        } catch (const Error& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    validate_dataset(out);
    return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write dataset '{}'", path.string()));
    for (const auto& r : records) out << serialize_record(r) << '\n';
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace conflict
