// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflict/preference.hpp"
#include "conflict/types.hpp"

namespace conflict {

/// Shape of a synthetic corpus. Every record gets its own image file, so a
/// record queried against a buffer containing itself retrieves itself.
struct CorpusSpec {
    std::size_t trajectories = 6;
    std::size_t frames_per_trajectory = 16;
    std::size_t statics = 160;
    /// Normal records carrying everyday chatter unrelated to the robot.
    std::size_t noise = 40;
    /// Preference scenarios per conflict type; the first half are served for
    /// annotation, the rest for prediction.
    std::size_t scenarios_per_type = 10;
    std::uint64_t seed = 7;
};

enum class ScenarioRole { Annotation, Prediction };

std::string_view to_string(ScenarioRole role) noexcept;

struct ScenarioEntry {
    Scenario scenario;
    ScenarioRole role = ScenarioRole::Annotation;
};

struct GeneratedCorpus {
    std::vector<DatasetRecord> records;
    std::vector<ScenarioEntry> scenarios;
    std::filesystem::path dataset_path;    // <dir>/dataset.jsonl
    std::filesystem::path scenarios_path;  // <dir>/scenarios.json
};

/// Writes dataset.jsonl, scenarios.json and images/ under `dir`.
/// Deterministic in `spec.seed`.
GeneratedCorpus generate_corpus(const std::filesystem::path& dir, const CorpusSpec& spec = {});

/// Reads a scenario file: {"scenarios": [{..., "role": "annotation"|"prediction"}]}.
/// Relative image paths resolve against the file's directory.
std::vector<ScenarioEntry> load_scenarios(const std::filesystem::path& path);
void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioEntry>& scenarios);

}  // namespace conflict
