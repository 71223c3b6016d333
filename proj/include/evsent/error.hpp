#pragma once

#include <chrono>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace evsent {

// Base of every error the library throws.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class io_error : public error {
public:
    using error::error;
};

class usage_error : public error {
public:
    using error::error;
};

class validation_error : public error {
public:
    using error::error;
};

// Malformed input. line() is 1-based, 0 when not tied to a line.
class parse_error : public error {
public:
    parse_error(const std::string& source, std::size_t line, const std::string& what)
        : error(source + (line ? ":" + std::to_string(line) : std::string{}) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class transport_error : public error {
public:
    transport_error(std::string credential_id, const std::string& what)
        : error("[" + credential_id + "] " + what), credential_id_(std::move(credential_id)) {}

    const std::string& credential_id() const noexcept { return credential_id_; }

private:
    std::string credential_id_;
};

// Protected account: the source refuses to serve its timeline.
class access_denied_error : public error {
public:
    using error::error;
};

// Raised by the gateway in non-blocking mode, and by backends on HTTP 429.
class rate_limited_error : public error {
public:
    rate_limited_error(std::chrono::milliseconds retry_after, const std::string& what)
        : error(what), retry_after_(retry_after) {}

    std::chrono::milliseconds retry_after() const noexcept { return retry_after_; }

private:
    std::chrono::milliseconds retry_after_;
};

class undefined_metric_error : public error {
public:
    using error::error;
};

class incomplete_task_error : public error {
public:
    using error::error;
};

} // namespace evsent
