// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace conflict {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller passed a value that violates a documented precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Domain validation failure. `detail` carries raw material (e.g. a model
/// reply) useful for diagnosis.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what, std::string detail = {})
        : Error(what), detail_(std::move(detail)) {}
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Embedding provider failure. status == 0 means the request never got an
/// HTTP response (connect failure, timeout).
class ProviderError : public Error {
public:
    ProviderError(const std::string& what, std::string endpoint, int status, bool retriable)
        : Error(what), endpoint_(std::move(endpoint)), status_(status), retriable_(retriable) {}
    const std::string& endpoint() const noexcept { return endpoint_; }
    int status() const noexcept { return status_; }
    bool retriable() const noexcept { return retriable_; }

private:
    std::string endpoint_;
    int status_;
    bool retriable_;
};

/// Model or summarizer backend could not produce a reply.
class BackendError : public Error {
public:
    BackendError(const std::string& what, int status, bool retriable)
        : Error(what), status_(status), retriable_(retriable) {}
    int status() const noexcept { return status_; }
    bool retriable() const noexcept { return retriable_; }

private:
    int status_;
    bool retriable_;
};

/// A backend replied, but the reply did not parse. The raw reply is kept.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class EmptyBufferError : public Error {
public:
    using Error::Error;
};

class BufferBuildError : public Error {
public:
    BufferBuildError(const std::string& what, std::string record_id)
        : Error(what), record_id_(std::move(record_id)) {}
    const std::string& record_id() const noexcept { return record_id_; }

private:
    std::string record_id_;
};

/// Raised by detect(). Carries whatever scores were computed before the
/// failing stage.
class DetectionError : public Error {
public:
    enum class Cause {
        InvalidInput,     // unreadable image and similar
        ProviderFailure,  // embedding provider failed
        BackendFailure,   // model backend unreachable or erroring
        BadBackendReply,  // model backend answered with an unparseable reply
    };

    DetectionError(const std::string& what, Cause cause, std::string stage, std::optional<double> speech_score,
                   std::optional<double> task_score, std::string raw_reply = {})
        : Error(what),
          cause_(cause),
          stage_(std::move(stage)),
          speech_score_(speech_score),
          task_score_(task_score),
          raw_reply_(std::move(raw_reply)) {}

    Cause cause() const noexcept { return cause_; }
    const std::string& stage() const noexcept { return stage_; }
    std::optional<double> speech_score() const noexcept { return speech_score_; }
    std::optional<double> task_score() const noexcept { return task_score_; }
    const std::string& raw_reply() const noexcept { return raw_reply_; }

private:
    Cause cause_;
    std::string stage_;
    std::optional<double> speech_score_;
    std::optional<double> task_score_;
    std::string raw_reply_;
};

}  // namespace conflict
