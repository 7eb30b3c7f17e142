// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "conflict/error.hpp"
#include "conflict/retrieval.hpp"

namespace conflict {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(std::chrono::nanoseconds d) { return std::chrono::duration<double>(d).count(); }

std::int64_t latency_ticks(double s) { return std::llround(s * 1e4); }

// Grid values are kept at a fixed precision so 0.1 + 0.2 style drift never
// leaks into reported parameter values.
double snap(double v) { return std::round(v * 1e9) / 1e9; }

RecordOutcome run_one(const DatasetRecord& record, const std::filesystem::path& base_dir, const Classifier& classify) {
    RecordOutcome out;
    out.record_id = record.id;
    out.gold = record.label;
    const auto t0 = Clock::now();
    try {
        const auto result = classify(record.to_input(base_dir));
        out.predicted = result.label;
        out.method = result.method;
    } catch (const std::exception& e) {
        out.error = e.what();
        spdlog::warn("record {}: {}", record.id, e.what());
    }
    out.latency = Clock::now() - t0;
    return out;
}

}  // namespace

std::int64_t percent_hundredths(std::int64_t correct, std::int64_t total) {
    if (total <= 0) return 0;
    return (20000 * correct + total) / (2 * total);
}

double round_latency(double s) { return static_cast<double>(latency_ticks(s)) / 1e4; }

void to_json(nlohmann::json& j, const Metrics& m) {
    j = nlohmann::json{
        {"total_acc", m.total_acc()},
        {"normal_acc", m.normal_acc()},
        {"anomaly_acc", m.anomaly_acc()},
        {"mean_latency", round_latency(m.mean_latency)},
        {"counts",
         {{"normal_total", m.normal_total},
          {"normal_correct", m.normal_correct},
          {"anomaly_total", m.anomaly_total},
          {"anomaly_correct", m.anomaly_correct}}},
        {"samples", m.samples()},
        {"escalations", m.escalations},
        {"errors", m.errors},
    };
}

std::string format_metrics_table(const Metrics& m, std::string_view name) {
    const auto pct = [](std::int64_t h) { return fmt::format("{}.{:02}", h / 100, h % 100); };
    return fmt::format("{:<24}{:>12}{:>13}{:>14}{:>10}\n{:<24}{:>12}{:>13}{:>14}{:>10.4f}\n", "method", "Total Acc.",
                       "Normal Acc.", "Anomaly Acc.", "Time (s)", name, pct(m.total_hundredths()),
                       pct(m.normal_hundredths()), pct(m.anomaly_hundredths()), round_latency(m.mean_latency));
}

Metrics compute_metrics(std::span<const RecordOutcome> outcomes) {
    Metrics m;
    std::chrono::nanoseconds total{0};
    for (const auto& o : outcomes) {
        if (is_anomaly(o.gold)) {
            ++m.anomaly_total;
            m.anomaly_correct += o.correct();
        } else {
            ++m.normal_total;
            m.normal_correct += o.correct();
        }
        m.escalations += o.method == DetectionMethod::ModelInference;
        m.errors += o.error.has_value();
        total += o.latency;
    }
    if (!outcomes.empty()) m.mean_latency = seconds(total) / static_cast<double>(outcomes.size());
    return m;
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

Classifier hybrid_classifier(const Detector& detector, DetectionConfig config) {
    config.validate();
    return [&detector, config](const DetectionInput& input) { return detector.detect(input, config); };
}

Classifier retrieval_classifier(Providers providers, std::shared_ptr<const RetrievalBuffers> buffers,
                                DetectionConfig config, PromptStyle style) {
    config.validate();
    if (!providers.text || !providers.image) throw ArgumentError("retrieval needs text and image providers");
    if (!buffers) throw ArgumentError("retrieval needs buffers");
    return [providers = std::move(providers), buffers = std::move(buffers), config,
            style](const DetectionInput& input) {
        input.validate();
        const auto t0 = Clock::now();
        DetectionResult r;
        const auto speech = normalize_speech(input.speech);
        std::string prompt;
        if (style == PromptStyle::Separate) {
            if (speech && !buffers->speech.empty()) {
                const auto hit = speech_score(providers.text->embed_text(*speech), buffers->speech);
                r.speech_score = hit.score;
                if (hit.score > config.tau_s) {
                    r.label = hit.entry_label;
                    r.method = DetectionMethod::SpeechRetrieval;
                    r.matched_entry_id = hit.entry_id;
                    r.latency = Clock::now() - t0;
                    r.timestamp = now_timestamp();
                    return r;
                }
            }
            prompt = render_prompt(input.task, input.step);
        } else {
            prompt = render_unified_prompt(input.task, input.step, speech);
        }
        if (buffers->multimodal.empty()) throw EmptyBufferError("multi-modal buffer empty");
        const auto hit = task_attribute_score(providers.text->embed_text(prompt), providers.image->embed_image(input.image),
                                              buffers->multimodal, config.w);
        r.task_score = hit.score;
        r.label = hit.entry_label;
        r.method = DetectionMethod::TaskRetrieval;
        r.matched_entry_id = hit.entry_id;
        r.latency = Clock::now() - t0;
        r.timestamp = now_timestamp();
        return r;
    };
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate(std::span<const DatasetRecord> test, const std::filesystem::path& base_dir,
                    const Classifier& classify, EvalOptions options) {
    if (test.empty()) throw ArgumentError("test set is empty");
    EvalReport report;
    report.outcomes.resize(test.size());

    const std::size_t workers =
        options.measure_latency ? 1 : std::clamp<std::size_t>(options.parallelism, 1, test.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < test.size(); ++i) report.outcomes[i] = run_one(test[i], base_dir, classify);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < test.size(); i = next++)
                    report.outcomes[i] = run_one(test[i], base_dir, classify);
            });
        }
    }
    report.metrics = compute_metrics(report.outcomes);
    return report;
}

EvalReport unified_retrieval_baseline(std::span<const DatasetRecord> test, const std::filesystem::path& base_dir,
                                      Providers providers, std::shared_ptr<const RetrievalBuffers> unified_buffers,
                                      DetectionConfig config, EvalOptions options) {
    return evaluate(test, base_dir,
                    retrieval_classifier(std::move(providers), std::move(unified_buffers), config, PromptStyle::Unified),
                    options);
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const SplitSpec& spec) {
    j = nlohmann::json{{"holdout_trajectories", spec.holdout_trajectories},
                       {"holdout_static_ids", spec.holdout_static_ids}};
}

void from_json(const nlohmann::json& j, SplitSpec& spec) {
    spec.holdout_trajectories = j.value("holdout_trajectories", std::vector<std::string>{});
    spec.holdout_static_ids = j.value("holdout_static_ids", std::vector<std::string>{});
}

SplitSpec default_split_spec(std::span<const DatasetRecord> records, std::size_t trajectories, std::size_t statics) {
    std::set<std::string> traj_ids;
    std::set<std::string> static_ids;
    for (const auto& r : records) {
        if (r.trajectory_id)
            traj_ids.insert(*r.trajectory_id);
        else
            static_ids.insert(r.id);
    }
    if (traj_ids.size() < trajectories || static_ids.size() < statics)
        throw ArgumentError(fmt::format("corpus has {} trajectories and {} static records; split needs {} and {}",
                                        traj_ids.size(), static_ids.size(), trajectories, statics));
    SplitSpec spec;
    spec.holdout_trajectories.assign(traj_ids.begin(), std::next(traj_ids.begin(), static_cast<long>(trajectories)));
    spec.holdout_static_ids.assign(static_ids.begin(), std::next(static_ids.begin(), static_cast<long>(statics)));
    return spec;
}

DatasetSplit split_dataset(std::span<const DatasetRecord> records, const SplitSpec& spec) {
    const std::set<std::string> want_traj(spec.holdout_trajectories.begin(), spec.holdout_trajectories.end());
    const std::set<std::string> want_static(spec.holdout_static_ids.begin(), spec.holdout_static_ids.end());
    std::set<std::string> seen_traj;
    std::set<std::string> seen_static;

    DatasetSplit split;
    for (const auto& r : records) {
        bool held = false;
        if (r.trajectory_id) {
            if (want_static.contains(r.id))
                throw ArgumentError(fmt::format("'{}' is a trajectory frame, not a static record", r.id));
            held = want_traj.contains(*r.trajectory_id);
            if (held) seen_traj.insert(*r.trajectory_id);
        } else {
            held = want_static.contains(r.id);
            if (held) seen_static.insert(r.id);
        }
        (held ? split.test : split.buffer_train).push_back(r);
    }
    for (const auto& id : want_traj)
        if (!seen_traj.contains(id)) throw ArgumentError(fmt::format("hold-out trajectory '{}' not in corpus", id));
    for (const auto& id : want_static)
        if (!seen_static.contains(id)) throw ArgumentError(fmt::format("hold-out record '{}' not in corpus", id));
    return split;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::string_view to_string(SweepParameter p) noexcept {
    switch (p) {
        case SweepParameter::W: return "w";
        case SweepParameter::TauS: return "tau_s";
        case SweepParameter::TauT: return "tau_t";
    }
    return "w";
}

SweepParameter parse_sweep_parameter(std::string_view text) {
    if (text == "w") return SweepParameter::W;
    if (text == "tau_s") return SweepParameter::TauS;
    if (text == "tau_t") return SweepParameter::TauT;
    throw ArgumentError(fmt::format("unknown sweep parameter '{}' (expected w, tau_s or tau_t)", text));
}

std::vector<double> default_grid(SweepParameter p) {
    const int first = p == SweepParameter::W ? 0 : 50;
    std::vector<double> grid;
    for (int i = first; i <= 100; ++i) grid.push_back(i / 100.0);
    return grid;
}

std::vector<double> parse_grid(std::string_view text) {
    const auto number = [&](std::string_view s) {
        std::string str(s);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(str, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != str.size() || !std::isfinite(v))
            throw ArgumentError(fmt::format("bad grid value '{}'", s));
        return v;
    };

    std::vector<double> grid;
    if (text.find(':') != std::string_view::npos) {
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string_view::npos) throw ArgumentError("grid range must be start:stop:step");
        const double start = number(text.substr(0, c1));
        const double stop = number(text.substr(c1 + 1, c2 - c1 - 1));
        const double step = number(text.substr(c2 + 1));
        if (step <= 0.0 || stop < start) throw ArgumentError("grid range needs step > 0 and stop >= start");
        const auto n = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9));
        if (n > 1000000) throw ArgumentError("grid too large");
        for (std::int64_t i = 0; i <= n; ++i) grid.push_back(snap(start + static_cast<double>(i) * step));
    } else {
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto comma = std::min(text.find(',', pos), text.size());
            grid.push_back(number(text.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    if (grid.empty()) throw ArgumentError("grid is empty");
    return grid;
}

DetectionConfig with_parameter(DetectionConfig base, SweepParameter p, double value) {
    switch (p) {
        case SweepParameter::W: base.w = FusionWeight(value); break;
        case SweepParameter::TauS: base.tau_s = value; break;
        case SweepParameter::TauT: base.tau_t = value; break;
    }
    base.validate();
    return base;
}

void to_json(nlohmann::json& j, const SweepResult& r) {
    nlohmann::json grid = nlohmann::json::array();
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : r.points) {
        grid.push_back(p.value);
        points.push_back({{"value", p.value}, {"metrics", p.metrics}});
    }
    j = nlohmann::json{{"parameter", to_string(r.parameter)}, {"grid", grid}, {"points", points}, {"selected", r.selected}};
}

std::size_t select_sweep_index(std::span<const SweepPoint> points) {
    if (points.empty()) throw ArgumentError("sweep has no points");
    const auto better = [](const SweepPoint& a, const SweepPoint& b) {
        if (a.metrics.total_hundredths() != b.metrics.total_hundredths())
            return a.metrics.total_hundredths() > b.metrics.total_hundredths();
        if (a.metrics.anomaly_hundredths() != b.metrics.anomaly_hundredths())
            return a.metrics.anomaly_hundredths() > b.metrics.anomaly_hundredths();
        const auto la = latency_ticks(a.metrics.mean_latency);
        const auto lb = latency_ticks(b.metrics.mean_latency);
        if (la != lb) return la < lb;
        return a.value < b.value;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
        if (better(points[i], points[best])) best = i;
    return best;
}

SweepResult sweep(SweepParameter parameter, std::span<const double> grid,
                  const std::function<Metrics(double)>& evaluate_at) {
    if (grid.empty()) throw ArgumentError("sweep grid is empty");
    SweepResult result;
    result.parameter = parameter;
    for (double v : grid) {
        result.points.push_back({v, evaluate_at(v)});
        const auto& m = result.points.back().metrics;
        spdlog::debug("{}={:.2f}: total {:.2f} normal {:.2f} anomaly {:.2f}", to_string(parameter), v, m.total_acc(),
                      m.normal_acc(), m.anomaly_acc());
    }
    result.selected = result.points[select_sweep_index(result.points)].value;
    return result;
}

std::string sweep_csv(const SweepResult& r) {
    std::string out = "value,total_acc,normal_acc,anomaly_acc,mean_latency,escalations,errors\n";
    for (const auto& p : r.points) {
        const auto& m = p.metrics;
        out += fmt::format("{},{:.2f},{:.2f},{:.2f},{:.4f},{},{}\n", p.value, m.total_acc(), m.normal_acc(),
                           m.anomaly_acc(), round_latency(m.mean_latency), m.escalations, m.errors);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fine-tune export
// ---------------------------------------------------------------------------

std::size_t export_finetune(std::span<const DatasetRecord> records, const std::filesystem::path& base_dir,
                            const std::filesystem::path& out, const DetectionPrompt& prompt) {
    std::ofstream file(out, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError(fmt::format("cannot write '{}'", out.string()));
    std::size_t count = 0;
    for (const auto& r : records) {
        const auto input = r.to_input(base_dir);
        const nlohmann::json line = {
            {"id", r.id},
            {"messages",
             nlohmann::json::array({
                 {{"role", "system"}, {"content", prompt.system_instruction}},
                 {{"role", "user"},
                  {"content", nlohmann::json::array({
                                  {{"type", "image"}, {"image", input.image.path().string()}},
                                  {{"type", "text"}, {"text", prompt.render_user(input)}},
                              })}},
                 {{"role", "assistant"}, {"content", to_string(r.label)}},
             })},
        };
        file << line.dump() << '\n';
        ++count;
    }
    file.flush();
    if (!file) throw IoError(fmt::format("write to '{}' failed", out.string()));
    return count;
}

// ---------------------------------------------------------------------------
// Published-table arithmetic
// ---------------------------------------------------------------------------

namespace {

// Correct counts c in [0, n] whose percentage rounds to `target` hundredths.
std::vector<std::int64_t> matching_counts(std::int64_t target, std::int64_t n) {
    std::vector<std::int64_t> out;
    const std::int64_t centre = target * n / 10000;
    for (std::int64_t c = std::max<std::int64_t>(0, centre - 2); c <= std::min(n, centre + 2); ++c)
        if (percent_hundredths(c, n) == target) out.push_back(c);
    return out;
}

}  // namespace

bool row_consistent(const AccuracyRow& row, const PartitionTotals& t) {
    if (t.normal_total <= 0 || t.anomaly_total <= 0) return false;
    const auto normal = matching_counts(row.normal, t.normal_total);
    const auto anomaly = matching_counts(row.anomaly, t.anomaly_total);
    for (auto cn : normal)
        for (auto ca : anomaly)
            if (percent_hundredths(cn + ca, t.normal_total + t.anomaly_total) == row.total) return true;
    return false;
}

std::optional<PartitionTotals> solve_table_consistency(std::span<const AccuracyRow> rows, std::int64_t max_samples) {
    for (std::int64_t total = 2; total <= max_samples; ++total) {
        for (std::int64_t n = 1; n < total; ++n) {
            const PartitionTotals t{n, total - n};
            if (std::all_of(rows.begin(), rows.end(), [&](const AccuracyRow& r) { return row_consistent(r, t); }))
                return t;
        }
    }
    return std::nullopt;
}

}  // namespace conflict
