// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#include "http_client.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include "conflict/error.hpp"

namespace conflict::detail {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0)
        throw ArgumentError(fmt::format("unsupported endpoint '{}' (expected http://host[:port]/path)", url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse post_json(const std::string& url, const std::string& body, std::chrono::milliseconds timeout) {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(parts.path, body, "application/json");
    if (!res) throw TransportError(fmt::format("{}: {}", url, httplib::to_string(res.error())));
    return {res->status, res->body};
}

}  // namespace conflict::detail
