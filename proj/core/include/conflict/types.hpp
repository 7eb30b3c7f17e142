// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace conflict {

// ---------------------------------------------------------------------------
// Conflict taxonomy
// ---------------------------------------------------------------------------

enum class ConflictLabel {
    GoalAbsence,
    HumanInteraction,
    HumanOccupancy,
    ObjectState,
    Normal,
};

inline constexpr std::array<ConflictLabel, 5> kAllLabels = {
    ConflictLabel::GoalAbsence, ConflictLabel::HumanInteraction, ConflictLabel::HumanOccupancy,
    ConflictLabel::ObjectState, ConflictLabel::Normal};

/// The four labels that denote an actual conflict.
inline constexpr std::array<ConflictLabel, 4> kConflictTypes = {
    ConflictLabel::GoalAbsence, ConflictLabel::HumanInteraction, ConflictLabel::HumanOccupancy,
    ConflictLabel::ObjectState};

/// Wire name: "goal_absence", "human_interaction", "human_occupancy",
/// "object_state", "normal".
std::string_view to_string(ConflictLabel label) noexcept;

/// Human-readable name, e.g. "Human Occupancy Conflict".
std::string_view display_name(ConflictLabel label) noexcept;

std::optional<ConflictLabel> try_parse_label(std::string_view wire) noexcept;

/// Throws ArgumentError for unknown names.
ConflictLabel parse_label(std::string_view wire);

inline bool is_anomaly(ConflictLabel label) noexcept { return label != ConflictLabel::Normal; }

void to_json(nlohmann::json& j, ConflictLabel label);
void from_json(const nlohmann::json& j, ConflictLabel& label);

// ---------------------------------------------------------------------------
// Solution catalogs
// ---------------------------------------------------------------------------

struct SolutionOption {
    ConflictLabel conflict_type = ConflictLabel::GoalAbsence;
    std::string text;
    int ordinal = 1;  // 1..4, position in the catalog

    friend bool operator==(const SolutionOption&, const SolutionOption&) = default;
};

/// The option shared by every catalog.
inline constexpr std::string_view kInformUserOption = "Inform the user and wait for instructions";

/// Four options in catalog order. Throws ArgumentError for Normal.
const std::vector<SolutionOption>& catalog_options(ConflictLabel conflict_type);

/// Case-insensitive, whitespace-trimmed lookup of an option text within the
/// catalog of `conflict_type`.
std::optional<SolutionOption> find_option(ConflictLabel conflict_type, std::string_view text);

void to_json(nlohmann::json& j, const SolutionOption& option);
void from_json(const nlohmann::json& j, SolutionOption& option);

// ---------------------------------------------------------------------------
// Emergency level
// ---------------------------------------------------------------------------

/// User-assigned concern level; 1 is lowest, 3 is most urgent.
class EmergencyLevel {
public:
    explicit EmergencyLevel(int level);
    int value() const noexcept { return level_; }
    friend auto operator<=>(const EmergencyLevel&, const EmergencyLevel&) = default;

private:
    int level_;
};

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_timestamp();
/// ISO-8601 UTC with millisecond precision, e.g. "2026-10-18T09:30:00.250Z".
std::string format_timestamp(Timestamp ts);
Timestamp parse_timestamp(std::string_view text);

// ---------------------------------------------------------------------------
// Observations and inputs
// ---------------------------------------------------------------------------

/// An observation image, either a file on disk or in-memory bytes.
class ImageRef {
public:
    ImageRef() = default;
    static ImageRef from_path(std::filesystem::path path);
    static ImageRef from_bytes(std::vector<std::uint8_t> bytes);

    bool is_path() const noexcept { return std::holds_alternative<std::filesystem::path>(source_); }
    const std::filesystem::path& path() const;

    /// File contents or the in-memory bytes. Throws IoError if unreadable.
    std::vector<std::uint8_t> load() const;
    std::string describe() const;

private:
    std::variant<std::filesystem::path, std::vector<std::uint8_t>> source_;
};

/// "" and whitespace-only speech normalize to absent.
std::optional<std::string> normalize_speech(std::optional<std::string> speech);

/// One detection tick.
struct DetectionInput {
    ImageRef image;
    std::string task;
    std::string step;
    std::optional<std::string> speech;

    /// Throws ArgumentError when task or step is empty.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Dataset records
// ---------------------------------------------------------------------------

/// Time between consecutive trajectory frames.
inline constexpr std::chrono::milliseconds kFrameInterval{500};

struct DatasetRecord {
    std::string id;
    std::string image;  // path, relative paths resolve against the dataset file
    std::string task;
    std::string step;
    std::optional<std::string> speech;
    ConflictLabel label = ConflictLabel::Normal;
    std::optional<std::string> trajectory_id;
    std::optional<std::int64_t> frame_index;

    bool is_trajectory_frame() const noexcept { return trajectory_id.has_value(); }
    DetectionInput to_input(const std::filesystem::path& base_dir = {}) const;
    /// Per-record invariants (non-empty task/step, frame_index iff trajectory_id).
    void validate() const;
};

void to_json(nlohmann::json& j, const DatasetRecord& record);
void from_json(const nlohmann::json& j, DatasetRecord& record);

/// Cross-record invariants: unique ids, trajectory frames consecutive from 0.
void validate_dataset(std::span<const DatasetRecord> records);

/// JSON Lines reader. Validates every record and the whole set.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records);
std::string serialize_record(const DatasetRecord& record);

}  // namespace conflict
