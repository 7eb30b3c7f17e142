// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflict/detector.hpp"
#include "conflict/types.hpp"

namespace conflict {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// correct/total as a percentage in hundredths, rounded half up
/// (11 of 12 -> 9167). An empty partition yields 0.
std::int64_t percent_hundredths(std::int64_t correct, std::int64_t total);

/// Rounds seconds to 4 decimals, as reported.
double round_latency(double seconds);

struct Metrics {
    std::int64_t normal_total = 0;
    std::int64_t normal_correct = 0;
    std::int64_t anomaly_total = 0;
    std::int64_t anomaly_correct = 0;
    std::int64_t escalations = 0;
    std::int64_t errors = 0;
    /// Mean wall-clock seconds per record, unrounded.
    double mean_latency = 0.0;

    std::int64_t samples() const noexcept { return normal_total + anomaly_total; }
    std::int64_t correct() const noexcept { return normal_correct + anomaly_correct; }

    std::int64_t total_hundredths() const noexcept { return percent_hundredths(correct(), samples()); }
    std::int64_t normal_hundredths() const noexcept { return percent_hundredths(normal_correct, normal_total); }
    std::int64_t anomaly_hundredths() const noexcept { return percent_hundredths(anomaly_correct, anomaly_total); }

    double total_acc() const noexcept { return static_cast<double>(total_hundredths()) / 100.0; }
    double normal_acc() const noexcept { return static_cast<double>(normal_hundredths()) / 100.0; }
    double anomaly_acc() const noexcept { return static_cast<double>(anomaly_hundredths()) / 100.0; }
};

void to_json(nlohmann::json& j, const Metrics& m);

/// One-row text table: Total / Normal / Anomaly / Time.
std::string format_metrics_table(const Metrics& m, std::string_view name = "run");

struct RecordOutcome {
    std::string record_id;
    ConflictLabel gold = ConflictLabel::Normal;
    std::optional<ConflictLabel> predicted;
    std::optional<DetectionMethod> method;
    std::chrono::nanoseconds latency{0};
    std::optional<std::string> error;

    bool correct() const noexcept { return predicted && *predicted == gold; }
};

Metrics compute_metrics(std::span<const RecordOutcome> outcomes);

struct EvalReport {
    Metrics metrics;
    std::vector<RecordOutcome> outcomes;
};

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

using Classifier = std::function<DetectionResult(const DetectionInput&)>;

/// Full hybrid detection with `config`.
Classifier hybrid_classifier(const Detector& detector, DetectionConfig config);

/// Retrieval without escalation: the task-attribute maximizer is always
/// accepted. Separate style applies the speech gate first; Unified embeds
/// task, step and speech into one prompt and has no speech gate, so
/// `buffers.multimodal` must have been built with PromptStyle::Unified.
Classifier retrieval_classifier(Providers providers, std::shared_ptr<const RetrievalBuffers> buffers,
                                DetectionConfig config, PromptStyle style);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalOptions {
    /// Worker threads. Ignored (serial) while measure_latency is set.
    std::size_t parallelism = 1;
    bool measure_latency = true;
};

/// Classifies every record and compares against the gold label. A record
/// whose classification throws counts as incorrect and is logged. Throws
/// ArgumentError for an empty test set.
EvalReport evaluate(std::span<const DatasetRecord> test, const std::filesystem::path& base_dir,
                    const Classifier& classify, EvalOptions options = {});

/// evaluate() with the unified-prompt retrieval classifier.
EvalReport unified_retrieval_baseline(std::span<const DatasetRecord> test, const std::filesystem::path& base_dir,
                                      Providers providers, std::shared_ptr<const RetrievalBuffers> unified_buffers,
                                      DetectionConfig config, EvalOptions options = {});

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::vector<std::string> holdout_trajectories;
    std::vector<std::string> holdout_static_ids;
};

void to_json(nlohmann::json& j, const SplitSpec& spec);
void from_json(const nlohmann::json& j, SplitSpec& spec);

inline constexpr std::size_t kDefaultHoldoutTrajectories = 2;
inline constexpr std::size_t kDefaultHoldoutStatics = 32;

/// The first `trajectories` trajectory ids and first `statics` static record
/// ids in lexicographic order. Throws ArgumentError if the corpus has fewer.
SplitSpec default_split_spec(std::span<const DatasetRecord> records,
                             std::size_t trajectories = kDefaultHoldoutTrajectories,
                             std::size_t statics = kDefaultHoldoutStatics);

struct DatasetSplit {
    std::vector<DatasetRecord> buffer_train;
    std::vector<DatasetRecord> test;
};

/// Test = every frame of the held-out trajectories plus the held-out static
/// records; train = the rest, input order preserved. Throws ArgumentError
/// when a requested id is missing or a static id names a trajectory frame.
DatasetSplit split_dataset(std::span<const DatasetRecord> records, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

enum class SweepParameter { W, TauS, TauT };

std::string_view to_string(SweepParameter p) noexcept;
SweepParameter parse_sweep_parameter(std::string_view text);

/// w: 0.00..1.00, thresholds: 0.50..1.00, both in steps of 0.01.
std::vector<double> default_grid(SweepParameter p);

/// Parses "a:b:step" or a comma list.
std::vector<double> parse_grid(std::string_view text);

DetectionConfig with_parameter(DetectionConfig base, SweepParameter p, double value);

struct SweepPoint {
    double value = 0.0;
    Metrics metrics;
};

struct SweepResult {
    SweepParameter parameter = SweepParameter::W;
    std::vector<SweepPoint> points;
    double selected = 0.0;
};

void to_json(nlohmann::json& j, const SweepResult& r);

/// Index of the preferred point: highest total accuracy, then highest
/// anomaly accuracy (both at 2-decimal rounding), then lowest mean latency
/// (4-decimal rounding), then smallest value. Throws ArgumentError if empty.
std::size_t select_sweep_index(std::span<const SweepPoint> points);

/// Evaluates every grid value in order and selects one.
SweepResult sweep(SweepParameter parameter, std::span<const double> grid,
                  const std::function<Metrics(double)>& evaluate_at);

/// value,total_acc,normal_acc,anomaly_acc,mean_latency,escalations,errors
std::string sweep_csv(const SweepResult& r);

// ---------------------------------------------------------------------------
// Fine-tune export
// ---------------------------------------------------------------------------

/// Writes one chat-format JSON line per record: system instruction, user turn
/// (image path plus rendered task/step/speech), assistant turn (label
/// token). Returns the count. Throws IoError if `out` is not writable.
std::size_t export_finetune(std::span<const DatasetRecord> records, const std::filesystem::path& base_dir,
                            const std::filesystem::path& out, const DetectionPrompt& prompt = DetectionPrompt::defaults());

// ---------------------------------------------------------------------------
// Published-table arithmetic
// ---------------------------------------------------------------------------

/// A reported (total, normal, anomaly) accuracy triple in hundredths.
struct AccuracyRow {
    std::int64_t total;
    std::int64_t normal;
    std::int64_t anomaly;
};

struct PartitionTotals {
    std::int64_t normal_total;
    std::int64_t anomaly_total;

    friend bool operator==(const PartitionTotals&, const PartitionTotals&) = default;
};

/// Smallest (normal_total + anomaly_total, then normal_total) for which every
/// row is reproducible from integer correct counts at 2-decimal rounding.
std::optional<PartitionTotals> solve_table_consistency(std::span<const AccuracyRow> rows,
                                                       std::int64_t max_samples = 1000);

/// True if integer counts exist reproducing `row` under `totals`.
bool row_consistent(const AccuracyRow& row, const PartitionTotals& totals);

}  // namespace conflict
