// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace conflict::detail {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection-level failure: no HTTP status was received.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Blocking JSON POST to an absolute http:// URL.
HttpResponse post_json(const std::string& url, const std::string& body, std::chrono::milliseconds timeout);

}  // namespace conflict::detail
