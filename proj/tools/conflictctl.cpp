// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

// conflictctl: corpus generation, buffer building, detection, evaluation,
// sweeps, fine-tune export and the HTTP service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "conflict/corpus.hpp"
#include "conflict/engine.hpp"
#include "conflict/error.hpp"
#include "conflict/eval.hpp"
#include "conflict/retrieval.hpp"
#include "conflict/service.hpp"

namespace {

using namespace conflict;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
}

fs::path dataset_dir(const fs::path& dataset) { return fs::absolute(dataset).parent_path(); }

enum class Mode { Hybrid, Separate, Unified };

Mode parse_mode(const std::string& s) {
    if (s == "hybrid") return Mode::Hybrid;
    if (s == "separate") return Mode::Separate;
    if (s == "unified") return Mode::Unified;
    throw ArgumentError(fmt::format("unknown mode '{}' (hybrid, separate, unified)", s));
}

// Buffers for an evaluation run: built from `train` when given, otherwise the
// engine's configured buffers.
std::shared_ptr<const RetrievalBuffers> eval_buffers(const Engine& engine, const std::string& train, Mode mode) {
    if (train.empty()) {
        if (mode == Mode::Unified) throw ArgumentError("unified mode needs --train to build unified prompts");
        return engine.detector->buffers();
    }
    const auto records = load_dataset(train);
    auto buffers = std::make_shared<RetrievalBuffers>();
    buffers->speech = build_speech_buffer(records, *engine.providers.text, {engine.config.store_noise_speech});
    buffers->multimodal =
        build_multimodal_buffer(records, *engine.providers.text, *engine.providers.image, dataset_dir(train),
                                mode == Mode::Unified ? PromptStyle::Unified : PromptStyle::Separate);
    return buffers;
}

Classifier classifier_for(const Engine& engine, const Detector& detector,
                          std::shared_ptr<const RetrievalBuffers> buffers, Mode mode, DetectionConfig config) {
    switch (mode) {
        case Mode::Hybrid: return hybrid_classifier(detector, config);
        case Mode::Separate: return retrieval_classifier(engine.providers, std::move(buffers), config, PromptStyle::Separate);
        case Mode::Unified: return retrieval_classifier(engine.providers, std::move(buffers), config, PromptStyle::Unified);
    }
    throw ArgumentError("bad mode");
}

// A detector sharing the engine's context but running over `buffers`.
std::shared_ptr<Detector> detector_over(const Engine& engine, std::shared_ptr<const RetrievalBuffers> buffers) {
    return std::make_shared<Detector>(engine.detector->context(), engine.config.detection, std::move(buffers));
}

// Rewrites relative image paths so they resolve from `to` instead of `from`.
std::vector<DatasetRecord> rebase(std::vector<DatasetRecord> records, const fs::path& from, const fs::path& to) {
    for (auto& r : records) {
        fs::path img(r.image);
        if (img.is_relative()) r.image = (from / img).lexically_normal().lexically_relative(to).generic_string();
    }
    return records;
}

int serve(ServiceConfig config, const std::string& engine_config) {
    // Handle SIGINT/SIGTERM on a dedicated thread so the server can be
    // stopped outside signal context.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(std::move(config), build_engine(EngineConfig::load(engine_config)));
    const int port = service.bind();
    std::cout << fmt::format("listening on port {}", port) << std::endl;

    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        spdlog::info("signal {} received, stopping", sig);
        service.stop();
    });
    service.run();
    // Wake the waiter if run() returned for another reason.
    pthread_kill(waiter.native_handle(), SIGTERM);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Human-induced conflict detection and preference tooling"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    // generate-corpus
    auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic corpus with images and scenarios");
    std::string gen_out;
    CorpusSpec spec;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--trajectories", spec.trajectories)->capture_default_str();
    gen->add_option("--frames", spec.frames_per_trajectory, "Frames per trajectory")->capture_default_str();
    gen->add_option("--statics", spec.statics)->capture_default_str();
    gen->add_option("--noise", spec.noise)->capture_default_str();
    gen->add_option("--scenarios-per-type", spec.scenarios_per_type)->capture_default_str();
    gen->add_option("--seed", spec.seed)->capture_default_str();

    // split
    auto* split = app.add_subcommand("split", "Split a dataset into buffer/train and test sets");
    std::string split_dataset_path, split_out, split_spec_path;
    std::size_t split_traj = kDefaultHoldoutTrajectories, split_static = kDefaultHoldoutStatics;
    split->add_option("--dataset", split_dataset_path)->required()->check(CLI::ExistingFile);
    split->add_option("--out-dir", split_out, "Receives train.jsonl, test.jsonl, split.json")->required();
    split->add_option("--spec", split_spec_path, "JSON hold-out spec; defaults to the first ids")->check(CLI::ExistingFile);
    split->add_option("--holdout-trajectories", split_traj)->capture_default_str();
    split->add_option("--holdout-statics", split_static)->capture_default_str();

    // build-buffer
    auto* build = app.add_subcommand("build-buffer", "Embed a dataset into buffer files");
    std::string build_config, build_dataset, build_speech_out, build_mm_out;
    bool build_unified = false;
    build->add_option("--config", build_config)->required()->check(CLI::ExistingFile);
    build->add_option("--dataset", build_dataset)->required()->check(CLI::ExistingFile);
    build->add_option("--speech-out", build_speech_out);
    build->add_option("--multimodal-out", build_mm_out);
    build->add_flag("--unified", build_unified, "Embed task, step and speech as one prompt");

    // detect
    auto* det = app.add_subcommand("detect", "Run one detection");
    std::string det_config, det_image, det_task, det_step, det_speech;
    det->add_option("--config", det_config)->required()->check(CLI::ExistingFile);
    det->add_option("--image", det_image)->required()->check(CLI::ExistingFile);
    det->add_option("--task", det_task)->required();
    det->add_option("--step", det_step)->required();
    det->add_option("--speech", det_speech);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate on a labelled test set");
    std::string ev_config, ev_test, ev_train, ev_mode = "hybrid", ev_json;
    std::size_t ev_parallel = 1;
    bool ev_no_latency = false;
    ev->add_option("--config", ev_config)->required()->check(CLI::ExistingFile);
    ev->add_option("--test", ev_test)->required()->check(CLI::ExistingFile);
    ev->add_option("--train", ev_train, "Build buffers from this dataset instead of the configured ones")
        ->check(CLI::ExistingFile);
    ev->add_option("--mode", ev_mode, "hybrid, separate or unified")->capture_default_str();
    ev->add_option("--json", ev_json, "Also write metrics JSON here");
    ev->add_option("--parallel", ev_parallel, "Worker threads (implies --no-latency)")->capture_default_str();
    ev->add_flag("--no-latency", ev_no_latency, "Skip serial latency measurement");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Sweep one detection parameter over a grid");
    std::string sw_config, sw_test, sw_train, sw_param = "w", sw_grid, sw_mode, sw_csv, sw_json;
    sw->add_option("--config", sw_config)->required()->check(CLI::ExistingFile);
    sw->add_option("--test", sw_test)->required()->check(CLI::ExistingFile);
    sw->add_option("--train", sw_train)->check(CLI::ExistingFile);
    sw->add_option("--param", sw_param, "w, tau_s or tau_t")->capture_default_str();
    sw->add_option("--grid", sw_grid, "start:stop:step or comma list; default depends on --param");
    sw->add_option("--mode", sw_mode, "Default: unified for w, separate for tau_s, hybrid for tau_t");
    sw->add_option("--csv", sw_csv, "Accuracy-vs-value CSV output");
    sw->add_option("--json", sw_json, "SweepResult JSON output");

    // export-finetune
    auto* ex = app.add_subcommand("export-finetune", "Export chat-format fine-tuning records");
    std::string ex_dataset, ex_out, ex_config;
    ex->add_option("--dataset", ex_dataset)->required()->check(CLI::ExistingFile);
    ex->add_option("--out", ex_out)->required();
    ex->add_option("--config", ex_config, "Engine config supplying a detection prompt override")
        ->check(CLI::ExistingFile);

    // serve
    auto* sv = app.add_subcommand("serve", "Run the HTTP service");
    std::string sv_config;
    ServiceConfig svc;
    try {
        svc.apply_env();  // environment sets defaults; flags win
    } catch (const conflict::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::string sv_data_dir = svc.data_dir.string(), sv_token, sv_ui;
    sv->add_option("--config", sv_config)->required()->check(CLI::ExistingFile);
    sv->add_option("--host", svc.host)->capture_default_str();
    sv->add_option("--port", svc.port, "0 picks a free port")->capture_default_str();
    sv->add_option("--data-dir", sv_data_dir)->capture_default_str();
    sv->add_option("--token", sv_token, "Require this bearer token");
    sv->add_option("--cors", svc.cors_origins, "Allowed origin (repeatable, * for any)");
    sv->add_option("--ui-dir", sv_ui, "Serve static UI files from here")->check(CLI::ExistingDirectory);
    sv->add_option("--threads", svc.threads)->capture_default_str();

    // check-table
    auto* ct = app.add_subcommand("check-table", "Find minimal class totals consistent with reported accuracies");
    std::string ct_rows;
    std::int64_t ct_max = 1000;
    ct->add_option("--rows", ct_rows, "CSV with total,normal,anomaly percentages per line")
        ->required()
        ->check(CLI::ExistingFile);
    ct->add_option("--max-samples", ct_max)->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("conflictctl"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*gen) {
            const auto corpus = generate_corpus(gen_out, spec);
            std::cout << fmt::format("{} records -> {}\n{} scenarios -> {}\n", corpus.records.size(),
                                     corpus.dataset_path.string(), corpus.scenarios.size(),
                                     corpus.scenarios_path.string());
        } else if (*split) {
            const auto records = load_dataset(split_dataset_path);
            SplitSpec s;
            if (!split_spec_path.empty()) {
                std::ifstream in(split_spec_path);
                s = nlohmann::json::parse(in).get<SplitSpec>();
            } else {
                s = default_split_spec(records, split_traj, split_static);
            }
            const auto parts = split_dataset(records, s);
            fs::create_directories(split_out);
            const auto from = dataset_dir(split_dataset_path);
            const auto to = fs::absolute(split_out);
            write_dataset(to / "train.jsonl", rebase(parts.buffer_train, from, to));
            write_dataset(to / "test.jsonl", rebase(parts.test, from, to));
            write_text(to / "split.json", nlohmann::json(s).dump(2) + "\n");
            std::cout << fmt::format("train {} / test {}\n", parts.buffer_train.size(), parts.test.size());
        } else if (*build) {
            if (build_speech_out.empty() && build_mm_out.empty())
                throw ArgumentError("give --speech-out and/or --multimodal-out");
            const auto config = EngineConfig::load(build_config);
            const auto text = make_embedding_provider(config.text_embedding);
            const auto image = make_embedding_provider(config.image_embedding);
            const auto records = load_dataset(build_dataset);
            if (!build_speech_out.empty()) {
                const auto b = build_speech_buffer(records, *text, {config.store_noise_speech});
                save_buffer(build_speech_out, b);
                std::cout << fmt::format("speech buffer: {} entries -> {}\n", b.size(), build_speech_out);
            }
            if (!build_mm_out.empty()) {
                const auto b = build_multimodal_buffer(records, *text, *image, dataset_dir(build_dataset),
                                                       build_unified ? PromptStyle::Unified : PromptStyle::Separate);
                save_buffer(build_mm_out, b);
                std::cout << fmt::format("multi-modal buffer: {} entries -> {}\n", b.size(), build_mm_out);
            }
        } else if (*det) {
            const auto engine = build_engine(EngineConfig::load(det_config));
            DetectionInput in{ImageRef::from_path(det_image), det_task, det_step,
                              normalize_speech(det_speech.empty() ? std::nullopt : std::optional(det_speech))};
            std::cout << nlohmann::json(engine.detector->detect(in)).dump(2) << "\n";
        } else if (*ev) {
            const auto engine = build_engine(EngineConfig::load(ev_config));
            const auto mode = parse_mode(ev_mode);
            auto buffers = eval_buffers(engine, ev_train, mode);
            const auto detector = detector_over(engine, buffers);
            const auto test = load_dataset(ev_test);
            EvalOptions opts{ev_parallel, !ev_no_latency && ev_parallel <= 1};
            const auto report = evaluate(test, dataset_dir(ev_test),
                                         classifier_for(engine, *detector, buffers, mode, engine.config.detection), opts);
            std::cout << format_metrics_table(report.metrics, ev_mode);
            const auto j = nlohmann::json(report.metrics).dump(2);
            std::cout << j << "\n";
            if (!ev_json.empty()) write_text(ev_json, j + "\n");
        } else if (*sw) {
            const auto engine = build_engine(EngineConfig::load(sw_config));
            const auto param = parse_sweep_parameter(sw_param);
            const Mode mode = !sw_mode.empty()              ? parse_mode(sw_mode)
                              : param == SweepParameter::W    ? Mode::Unified
                              : param == SweepParameter::TauS ? Mode::Separate
                                                              : Mode::Hybrid;
            auto buffers = eval_buffers(engine, sw_train, mode);
            const auto detector = detector_over(engine, buffers);
            const auto test = load_dataset(sw_test);
            const auto base = dataset_dir(sw_test);
            const auto grid = sw_grid.empty() ? default_grid(param) : parse_grid(sw_grid);
            const auto result = sweep(param, grid, [&](double v) {
                const auto cfg = with_parameter(engine.config.detection, param, v);
                return evaluate(test, base, classifier_for(engine, *detector, buffers, mode, cfg)).metrics;
            });
            const auto csv = sweep_csv(result);
            if (!sw_csv.empty()) write_text(sw_csv, csv);
            const auto j = nlohmann::json(result).dump(2);
            if (!sw_json.empty()) write_text(sw_json, j + "\n");
            std::cout << csv << fmt::format("selected {} = {}\n", to_string(param), result.selected);
        } else if (*ex) {
            auto prompt = DetectionPrompt::defaults();
            if (!ex_config.empty()) {
                const auto config = EngineConfig::load(ex_config);
                if (config.detection_prompt) prompt = load_detection_prompt(*config.detection_prompt);
            }
            const auto records = load_dataset(ex_dataset);
            const auto n = export_finetune(records, dataset_dir(ex_dataset), ex_out, prompt);
            std::cout << fmt::format("{} records -> {}\n", n, ex_out);
        } else if (*sv) {
            svc.data_dir = sv_data_dir;
            if (!sv_token.empty()) svc.auth_token = sv_token;
            if (!sv_ui.empty()) svc.ui_dir = sv_ui;
            return serve(std::move(svc), sv_config);
        } else if (*ct) {
            std::ifstream in(ct_rows);
            std::vector<AccuracyRow> rows;
            const auto hundredths = [](const std::string& s) { return std::llround(std::stod(s) * 100.0); };
            for (std::string line; std::getline(in, line);) {
                if (line.empty() || line[0] == '#') continue;
                std::vector<std::string> cells;
                std::stringstream ss(line);
                for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
                if (cells.size() != 3) throw ArgumentError(fmt::format("expected 3 columns: '{}'", line));
                rows.push_back({hundredths(cells[0]), hundredths(cells[1]), hundredths(cells[2])});
            }
            if (const auto t = solve_table_consistency(rows, ct_max)) {
                std::cout << fmt::format("normal_total={} anomaly_total={} samples={}\n", t->normal_total,
                                         t->anomaly_total, t->normal_total + t->anomaly_total);
            } else {
                std::cout << fmt::format("no consistent totals up to {} samples\n", ct_max);
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
