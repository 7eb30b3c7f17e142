// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "conflict/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "codec.hpp"
#include "conflict/corpus.hpp"
#include "conflict/error.hpp"

#ifndef CONFLICT_VERSION
#define CONFLICT_VERSION "0.0.0"
#endif

namespace conflict {

namespace {

using nlohmann::json;

struct ApiError : std::runtime_error {
    ApiError(int status, std::string code, const std::string& message, std::string detail = {})
        : std::runtime_error(message), status(status), code(std::move(code)), detail(std::move(detail)) {}
    int status;
    std::string code;
    std::string detail;
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message,
                std::string_view detail = {}) {
    send_json(res, json{{"code", code}, {"message", message}, {"detail", detail}}, status);
}

json parse_body(const httplib::Request& req) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw ApiError(400, "validation", "request body must be a JSON object");
        return body;
    } catch (const json::parse_error& e) {
        throw ApiError(400, "validation", "request body is not valid JSON", e.what());
    }
}

std::string required_string(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || !it->is_string() || it->get<std::string>().empty())
        throw ApiError(400, "validation", fmt::format("\"{}\" is required and must be a non-empty string", key));
    return it->get<std::string>();
}

std::string required_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key) || req.get_param_value(key).empty())
        throw ApiError(400, "validation", fmt::format("query parameter \"{}\" is required", key));
    return req.get_param_value(key);
}

std::string_view content_type_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".ppm") return "image/x-portable-pixmap";
    return "application/octet-stream";
}

void map_exception(std::exception_ptr ep, httplib::Response& res) {
    using Cause = DetectionError::Cause;
    try {
        std::rethrow_exception(ep);
    } catch (const ApiError& e) {
        send_error(res, e.status, e.code, e.what(), e.detail);
    } catch (const DetectionError& e) {
        switch (e.cause()) {
            case Cause::InvalidInput: send_error(res, 400, "validation", e.what()); break;
            case Cause::ProviderFailure:
            case Cause::BackendFailure: send_error(res, 503, "backend_unavailable", e.what()); break;
            case Cause::BadBackendReply: send_error(res, 422, "validation", e.what(), e.raw_reply()); break;
        }
    } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, "validation", e.what(), e.detail());
    } catch (const ArgumentError& e) {
        send_error(res, 400, "validation", e.what());
    } catch (const IoError& e) {
        send_error(res, 400, "validation", e.what());
    } catch (const BackendError& e) {
        send_error(res, 503, "backend_unavailable", e.what());
    } catch (const ProviderError& e) {
        send_error(res, 503, "backend_unavailable", e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, "validation", "malformed request field", e.what());
    } catch (const std::exception& e) {
        spdlog::error("unhandled: {}", e.what());
        send_error(res, 500, "internal", "internal error", e.what());
    } catch (...) {
        send_error(res, 500, "internal", "internal error");
    }
}

}  // namespace

void ServiceConfig::apply_env() {
    if (const char* port_env = std::getenv("CONFLICT_PORT"); port_env && *port_env) {
        char* end = nullptr;
        const long p = std::strtol(port_env, &end, 10);
        if (*end != '\0' || p < 0 || p > 65535) throw ArgumentError(fmt::format("bad CONFLICT_PORT '{}'", port_env));
        port = static_cast<int>(p);
    }
    if (const char* dir = std::getenv("CONFLICT_DATA_DIR"); dir && *dir) data_dir = dir;
}

void ServiceConfig::prepare() const {
    std::error_code ec;
    std::filesystem::create_directories(data_dir / "uploads", ec);
    if (ec) throw IoError(fmt::format("cannot create data directory '{}': {}", data_dir.string(), ec.message()));
    const auto probe = data_dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!(out << "ok")) throw IoError(fmt::format("data directory '{}' is not writable", data_dir.string()));
    }
    std::filesystem::remove(probe, ec);
}

struct Service::Impl {
    ServiceConfig config;
    Engine engine;
    std::shared_ptr<PreferenceStore> store;
    std::unique_ptr<PreferenceEngine> preferences;
    std::vector<ScenarioEntry> scenarios;
    std::map<std::string, std::size_t> scenario_index;
    httplib::Server server;
    int bound_port = -1;
    std::mutex lifecycle;
    bool listening = false;
    bool stopped = false;

    Impl(ServiceConfig c, Engine e) : config(std::move(c)), engine(std::move(e)) {
        config.data_dir = std::filesystem::absolute(config.data_dir).lexically_normal();
        config.prepare();
        store = std::make_shared<PreferenceStore>(config.data_dir);
        preferences = std::make_unique<PreferenceEngine>(store, engine.summarizer, engine.preference_prompts,
                                                         engine.config.max_cases);
        const auto scenario_file = config.data_dir / "scenarios.json";
        if (std::filesystem::exists(scenario_file)) {
            scenarios = load_scenarios(scenario_file);
        } else {
            spdlog::warn("{} not found; no annotation scenarios are served", scenario_file.string());
        }
        for (std::size_t i = 0; i < scenarios.size(); ++i) scenario_index[scenarios[i].scenario.scenario_id] = i;
        configure();
    }

    const ScenarioEntry& scenario(const std::string& id) const {
        auto it = scenario_index.find(id);
        if (it == scenario_index.end()) throw ApiError(404, "not_found", fmt::format("unknown scenario '{}'", id));
        return scenarios[it->second];
    }

    json scenario_json(const ScenarioEntry& e) const {
        json j = e.scenario;
        j["role"] = to_string(e.role);
        j["image_url"] = fmt::format("/v1/scenarios/{}/image", e.scenario.scenario_id);
        return j;
    }

    std::filesystem::path store_upload(const std::vector<std::uint8_t>& bytes) const {
        if (bytes.empty()) throw ApiError(400, "validation", "uploaded image is empty");
        const auto path = config.data_dir / "uploads" / detail::sha256_hex(bytes);
        if (!std::filesystem::exists(path)) {
            const auto tmp =
                fmt::format("{}.{}.tmp", path.string(), std::hash<std::thread::id>{}(std::this_thread::get_id()));
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
                if (!out) throw IoError("cannot store upload");
            }
            std::filesystem::rename(tmp, path);
        }
        return path;
    }

    DetectionInput detection_input(const httplib::Request& req) const {
        DetectionInput in;
        if (req.is_multipart_form_data()) {
            const auto field = [&](const char* key) -> std::optional<std::string> {
                if (!req.has_file(key)) return std::nullopt;
                return req.get_file_value(key).content;
            };
            auto task = field("task");
            auto step = field("step");
            if (!task || task->empty()) throw ApiError(400, "validation", "\"task\" is required");
            if (!step || step->empty()) throw ApiError(400, "validation", "\"step\" is required");
            if (!req.has_file("image")) throw ApiError(400, "validation", "multipart field \"image\" is required");
            const auto& content = req.get_file_value("image").content;
            in.image = ImageRef::from_path(store_upload({content.begin(), content.end()}));
            in.task = *task;
            in.step = *step;
            in.speech = normalize_speech(field("speech"));
            return in;
        }
        const auto body = parse_body(req);
        in.task = required_string(body, "task");
        in.step = required_string(body, "step");
        if (auto it = body.find("speech"); it != body.end() && !it->is_null()) {
            if (!it->is_string()) throw ApiError(400, "validation", "\"speech\" must be a string or null");
            in.speech = normalize_speech(it->get<std::string>());
        }
        if (body.contains("image_base64")) {
            in.image = ImageRef::from_path(store_upload(detail::base64_decode(required_string(body, "image_base64"))));
        } else if (body.contains("image")) {
            std::filesystem::path p(required_string(body, "image"));
            in.image = ImageRef::from_path(p.is_relative() ? config.data_dir / p : p);
        } else {
            throw ApiError(400, "validation", "one of \"image\" or \"image_base64\" is required");
        }
        return in;
    }

    void configure() {
        const auto threads = std::max<std::size_t>(config.threads, 1);
        server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            const auto origin = req.get_header_value("Origin");
            const bool allowed = !origin.empty() && std::any_of(config.cors_origins.begin(), config.cors_origins.end(),
                                                                [&](const std::string& o) { return o == "*" || o == origin; });
            if (allowed) {
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Vary", "Origin");
                res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            }
            if (req.method == "OPTIONS") {
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            if (config.auth_token && req.path.starts_with("/v1/") && req.path != "/v1/health") {
                if (req.get_header_value("Authorization") != "Bearer " + *config.auth_token) {
                    send_error(res, 401, "unauthorized", "missing or invalid bearer token");
                    return httplib::Server::HandlerResponse::Handled;
                }
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        server.set_exception_handler(
            [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) { map_exception(ep, res); });

        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            if (res.status == 404)
                send_error(res, 404, "not_found", fmt::format("no route for {} {}", req.method, req.path));
            else
                send_error(res, res.status, res.status >= 500 ? "internal" : "validation",
                           httplib::status_message(res.status));
            return httplib::Server::HandlerResponse::Handled;
        });

        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            spdlog::info("{} {} -> {}", req.method, req.path, res.status);
        });

        if (config.ui_dir && !server.set_mount_point("/", config.ui_dir->string()))
            throw IoError(fmt::format("UI directory '{}' does not exist", config.ui_dir->string()));

        routes();
    }

    void routes() {
        server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            const auto buffers = engine.detector->buffers();
            send_json(res, {{"status", "ok"},
                            {"version", CONFLICT_VERSION},
                            {"speech_entries", buffers->speech.size()},
                            {"multimodal_entries", buffers->multimodal.size()},
                            {"scenarios", scenarios.size()}});
        });

        server.Get("/v1/catalog", [](const httplib::Request&, httplib::Response& res) {
            json catalogs = json::object();
            for (auto type : kConflictTypes) catalogs[std::string(to_string(type))] = catalog_options(type);
            send_json(res, {{"catalogs", catalogs}, {"emergency_levels", {1, 2, 3}}});
        });

        server.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, engine.detector->detect(detection_input(req)));
        });

        server.Get("/v1/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
            const auto role = req.get_param_value("role");
            if (!role.empty() && role != "annotation" && role != "prediction")
                throw ApiError(400, "validation", "role must be \"annotation\" or \"prediction\"");
            json list = json::array();
            for (const auto& e : scenarios)
                if (role.empty() || to_string(e.role) == role) list.push_back(scenario_json(e));
            send_json(res, {{"scenarios", list}});
        });

        server.Get(R"(/v1/scenarios/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto& e = scenario(req.matches[1]);
            const auto bytes = e.scenario.input.image.load();
            res.set_content(std::string(bytes.begin(), bytes.end()),
                            std::string(content_type_for(e.scenario.input.image.path())));
        });

        server.Get("/v1/annotation/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
            const auto user = required_param(req, "user");
            std::set<std::string> answered;
            for (const auto& c : store->cases_for_user(user)) answered.insert(c.scenario.scenario_id);
            json pending = json::array();
            std::size_t total = 0;
            for (const auto& e : scenarios) {
                if (e.role != ScenarioRole::Annotation) continue;
                ++total;
                if (!answered.contains(e.scenario.scenario_id)) pending.push_back(scenario_json(e));
            }
            send_json(res, {{"user_id", user},
                            {"total", total},
                            {"completed", total - pending.size()},
                            {"pending", pending}});
        });

        server.Post("/v1/annotation/cases", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto user = required_string(body, "user_id");
            const auto& entry = scenario(required_string(body, "scenario_id"));
            const auto type = entry.scenario.label;

            std::string option_text;
            if (body.contains("option")) {
                option_text = required_string(body, "option");
            } else if (body.contains("chosen_option") && body["chosen_option"].is_object()) {
                option_text = required_string(body["chosen_option"], "text");
            } else {
                throw ApiError(400, "validation", "\"option\" is required");
            }
            const auto option = find_option(type, option_text);
            if (!option)
                throw ApiError(400, "validation",
                               fmt::format("'{}' is not a {} option", option_text, to_string(type)));
            if (!body.contains("emergency") || !body["emergency"].is_number_integer())
                throw ApiError(400, "validation", "\"emergency\" must be 1, 2 or 3");

            UserCase c;
            c.case_id = body.contains("case_id") ? required_string(body, "case_id")
                                                 : fmt::format("{}:{}", user, entry.scenario.scenario_id);
            c.user_id = user;
            c.scenario = entry.scenario;
            c.chosen_option = *option;
            c.emergency = EmergencyLevel(body["emergency"].get<int>());

            if (auto existing = store->find_case(c.case_id)) {
                if (existing->user_id != user) throw ApiError(400, "validation", "case_id belongs to another user");
                if (existing->chosen_option == c.chosen_option && existing->emergency == c.emergency &&
                    existing->scenario.scenario_id == c.scenario.scenario_id) {
                    send_json(res, {{"case_id", c.case_id}, {"created", false}, {"case", *existing}});
                    return;
                }
            }
            c.created_at = now_timestamp();
            store->record_case(c);
            send_json(res, {{"case_id", c.case_id}, {"created", true}, {"case", c}});
        });

        server.Get("/v1/annotation/cases", [this](const httplib::Request& req, httplib::Response& res) {
            const auto user = required_param(req, "user");
            send_json(res, {{"user_id", user}, {"cases", store->cases_for_user(user)}});
        });

        server.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto user = required_string(body, "user_id");
            const auto& entry = scenario(required_string(body, "scenario_id"));
            try {
                send_json(res, preferences->predict(user, entry.scenario));
            } catch (const ValidationError& e) {
                throw ApiError(422, "validation", e.what(), e.detail());
            }
        });

        server.Get("/v1/predictions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto user = required_param(req, "user");
            send_json(res, {{"user_id", user}, {"predictions", store->predictions_for_user(user)}});
        });

        server.Get(R"(/v1/predictions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto p = store->prediction(id);
            if (!p) throw ApiError(404, "not_found", fmt::format("unknown prediction '{}'", id));
            send_json(res, *p);
        });

        server.Post(R"(/v1/predictions/([^/]+)/rating)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            if (!body.contains("rating") || !body["rating"].is_number_integer())
                throw ApiError(400, "validation", "\"rating\" must be an integer from 1 to 5");
            send_json(res, store->record_rating(req.matches[1], body["rating"].get<int>()));
        });

        server.Get("/v1/ratings", [this](const httplib::Request& req, httplib::Response& res) {
            const auto user = required_param(req, "user");
            json list = json::array();
            for (const auto& e : store->rating_history(user)) list.push_back(e);
            send_json(res, {{"user_id", user}, {"ratings", list}});
        });
    }
};

Service::Service(ServiceConfig config, Engine engine)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(engine))) {}

Service::~Service() = default;

int Service::bind() {
    if (impl_->bound_port >= 0) return impl_->bound_port;
    const auto& c = impl_->config;
    if (c.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(c.host);
    } else if (impl_->server.bind_to_port(c.host, c.port)) {
        impl_->bound_port = c.port;
    }
    if (impl_->bound_port < 0) throw IoError(fmt::format("cannot listen on {}:{}", c.host, c.port));
    return impl_->bound_port;
}

void Service::run() {
    const int port = bind();
    {
        std::lock_guard lock(impl_->lifecycle);
        if (impl_->stopped) return;
        impl_->listening = true;
    }
    spdlog::info("listening on {}:{}", impl_->config.host, port);
    impl_->server.listen_after_bind();
}

// httplib ignores stop() until the accept loop is up, so wait for it.
void Service::stop() {
    bool listening = false;
    {
        std::lock_guard lock(impl_->lifecycle);
        impl_->stopped = true;
        listening = impl_->listening;
    }
    if (!listening) return;
    impl_->server.wait_until_ready();
    impl_->server.stop();
}

PreferenceStore& Service::store() { return *impl_->store; }

}  // namespace conflict
