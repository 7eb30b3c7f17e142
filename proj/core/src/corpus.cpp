// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/corpus.hpp"

#include <array>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>

#include "conflict/error.hpp"

namespace conflict {

namespace {

constexpr std::array<std::string_view, 10> kTasks = {
    "make a cup of tea",     "tidy the living room", "water the plants",     "set the dinner table",
    "put away the groceries", "do the laundry",      "wash the dishes",      "prepare a sandwich",
    "clean the bathroom",    "feed the cat",
};

constexpr std::array<std::string_view, 12> kObjects = {
    "kettle", "mug", "sponge", "towel", "plate", "bowl", "watering can", "basket", "bread", "cup", "broom", "bottle",
};

constexpr std::array<std::string_view, 10> kPlaces = {
    "kitchen counter", "sink", "dining table", "shelf", "sofa", "balcony", "cupboard", "washing machine", "fridge",
    "hallway",
};

constexpr std::array<std::string_view, 6> kActions = {"pick up", "move to", "open", "carry", "place", "wipe"};

// Requests addressed to the robot. kChatter shares no content words with it.
constexpr std::array<std::string_view, 16> kRequests = {
    "robot please bring me my glasses",
    "hey robot stop that and help me",
    "could you fetch the remote for me",
    "robot come here right now",
    "please hand me the newspaper",
    "can you pass me my phone",
    "robot turn off the lights please",
    "leave that and open the door for me",
    "hey can you get me a blanket",
    "robot fetch my keys from upstairs",
    "please help me lift this box",
    "could you bring the charger over here",
    "robot pause and follow me",
    "can you grab my slippers",
    "hey robot read me the shopping list",
    "please stop and bring my medicine",
};

constexpr std::array<std::string_view, 16> kChatter = {
    "the weather looks lovely this afternoon",
    "did anyone watch the match last night",
    "grandma called about sunday lunch",
    "traffic was terrible on the motorway",
    "that movie ending was so surprising",
    "our neighbours adopted a puppy",
    "i think it might snow tomorrow",
    "the concert tickets sold out quickly",
    "my brother starts university next month",
    "this song always reminds me of summer",
    "the garden roses bloomed early",
    "we should visit the museum sometime",
    "prices at the market went up again",
    "the train was late twice this week",
    "her birthday party was wonderful",
    "autumn leaves look beautiful outside",
};

struct Writer {
    std::filesystem::path root;
    std::mt19937_64 rng;

    template <std::size_t N>
    std::string_view pick(const std::array<std::string_view, N>& pool) {
        return pool[rng() % N];
    }

    std::string step() {
        const auto action = pick(kActions);
        if (action == "move to") return fmt::format("{} the {}", action, pick(kPlaces));
        return fmt::format("{} the {}", action, pick(kObjects));
    }

    // A small binary PPM with random pixels: unique bytes per file.
    std::string image(const std::string& name) {
        const auto rel = std::filesystem::path("images") / (name + ".ppm");
        std::string bytes = "P6\n8 8\n255\n";
        for (int i = 0; i < 8 * 8 * 3; ++i) bytes.push_back(static_cast<char>(rng() & 0xff));
        std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError(fmt::format("cannot write '{}'", (root / rel).string()));
        return rel.generic_string();
    }
};

}  // namespace

std::string_view to_string(ScenarioRole role) noexcept {
    return role == ScenarioRole::Annotation ? "annotation" : "prediction";
}

GeneratedCorpus generate_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

    Writer w{dir, std::mt19937_64(spec.seed)};
    GeneratedCorpus out;

    for (std::size_t t = 0; t < spec.trajectories; ++t) {
        const auto traj = fmt::format("traj-{:02}", t);
        const auto task = std::string(kTasks[t % kTasks.size()]);
        const auto conflict = kConflictTypes[t % kConflictTypes.size()];
        const std::size_t n = spec.frames_per_trajectory;
        std::string step = w.step();
        for (std::size_t f = 0; f < n; ++f) {
            if (f % 3 == 0) step = w.step();
            DatasetRecord r;
            r.id = fmt::format("{}-f{:03}", traj, f);
            r.task = task;
            r.step = step;
            r.label = (f >= n / 3 && f < 2 * n / 3) ? conflict : ConflictLabel::Normal;
            if (r.label == ConflictLabel::HumanInteraction) r.speech = std::string(w.pick(kRequests));
            r.trajectory_id = traj;
            r.frame_index = static_cast<std::int64_t>(f);
            r.image = w.image(r.id);
            out.records.push_back(std::move(r));
        }
    }

    for (std::size_t i = 0; i < spec.statics; ++i) {
        DatasetRecord r;
        r.id = fmt::format("static-{:04}", i);
        r.task = std::string(w.pick(kTasks));
        r.step = w.step();
        r.label = kAllLabels[i % kAllLabels.size()];
        if (r.label == ConflictLabel::HumanInteraction) r.speech = std::string(w.pick(kRequests));
        r.image = w.image(r.id);
        out.records.push_back(std::move(r));
    }

    for (std::size_t i = 0; i < spec.noise; ++i) {
        DatasetRecord r;
        r.id = fmt::format("noise-{:04}", i);
        r.task = std::string(w.pick(kTasks));
        r.step = w.step();
        r.label = ConflictLabel::Normal;
        r.speech = std::string(w.pick(kChatter));
        r.image = w.image(r.id);
        out.records.push_back(std::move(r));
    }

    validate_dataset(out.records);
    out.dataset_path = dir / "dataset.jsonl";
    write_dataset(out.dataset_path, out.records);

    for (auto type : kConflictTypes) {
        for (std::size_t i = 0; i < spec.scenarios_per_type; ++i) {
            ScenarioEntry e;
            e.scenario.scenario_id = fmt::format("{}-{:02}", to_string(type), i);
            e.scenario.label = type;
            e.scenario.input.task = std::string(w.pick(kTasks));
            e.scenario.input.step = w.step();
            if (type == ConflictLabel::HumanInteraction) e.scenario.input.speech = std::string(w.pick(kRequests));
            e.scenario.input.image = ImageRef::from_path(dir / w.image("scenario-" + e.scenario.scenario_id));
            e.role = i < (spec.scenarios_per_type + 1) / 2 ? ScenarioRole::Annotation : ScenarioRole::Prediction;
            out.scenarios.push_back(std::move(e));
        }
    }
    out.scenarios_path = dir / "scenarios.json";
    write_scenarios(out.scenarios_path, out.scenarios);
    return out;
}

std::vector<ScenarioEntry> load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
    const auto base = path.parent_path();
    std::vector<ScenarioEntry> out;
    std::set<std::string> ids;
    for (const auto& item : doc.at("scenarios")) {
        ScenarioEntry e;
        try {
            e.scenario = item.get<Scenario>();
        } catch (const nlohmann::json::exception& ex) {
            throw ValidationError(fmt::format("{}: bad scenario: {}", path.string(), ex.what()));
        }
        if (e.scenario.label == ConflictLabel::Normal)
            throw ValidationError(fmt::format("scenario {} must be a conflict", e.scenario.scenario_id));
        if (!ids.insert(e.scenario.scenario_id).second)
            throw ValidationError(fmt::format("duplicate scenario id '{}'", e.scenario.scenario_id));
        const auto img = e.scenario.input.image.path();
        if (img.is_relative()) e.scenario.input.image = ImageRef::from_path(base / img);
        const auto role = item.value("role", std::string("annotation"));
        if (role == "annotation")
            e.role = ScenarioRole::Annotation;
        else if (role == "prediction")
            e.role = ScenarioRole::Prediction;
        else
            throw ValidationError(fmt::format("scenario {}: unknown role '{}'", e.scenario.scenario_id, role));
        out.push_back(std::move(e));
    }
    return out;
}

void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioEntry>& scenarios) {
    const auto base = path.parent_path();
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : scenarios) {
        Scenario s = e.scenario;
        const auto rel = s.input.image.path().lexically_relative(base);
        if (!rel.empty() && *rel.begin() != "..") s.input.image = ImageRef::from_path(rel);
        nlohmann::json j = s;
        j["role"] = to_string(e.role);
        list.push_back(std::move(j));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << nlohmann::json{{"scenarios", list}}.dump(2) << '\n';
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
}

}  // namespace conflict
