// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

namespace conflict::testing {

/// httplib server on an ephemeral loopback port, stopped on destruction.
class LocalServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit LocalServer(Handler post_handler, std::string path = "/embed") : path_(std::move(path)) {
        server_.Post(path_, std::move(post_handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    LocalServer(const LocalServer&) = delete;
    LocalServer& operator=(const LocalServer&) = delete;

    std::string url() const { return fmt::format("http://127.0.0.1:{}{}", port_, path_); }
    int port() const noexcept { return port_; }

private:
    httplib::Server server_;
    std::string path_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace conflict::testing
