#pragma once

#include <stdexcept>
#include <string>

namespace ovd {

// Typed failures so callers can branch on what went wrong instead of
// string-matching messages. All inherit std::runtime_error.

struct ZeroVector : std::runtime_error {
    explicit ZeroVector(const std::string& what) : std::runtime_error(what) {}
};

struct DimMismatch : std::runtime_error {
    explicit DimMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownCategory : std::runtime_error {
    explicit UnknownCategory(const std::string& what) : std::runtime_error(what) {}
};

struct IndexOutOfRange : std::runtime_error {
    explicit IndexOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySeed : std::runtime_error {
    explicit EmptySeed(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyCategory : std::runtime_error {
    explicit EmptyCategory(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyPayload : std::runtime_error {
    explicit EmptyPayload(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidBox : std::runtime_error {
    explicit InvalidBox(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidCategory : std::runtime_error {
    explicit InvalidCategory(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidQuery : std::runtime_error {
    explicit InvalidQuery(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct LlmUnavailable : std::runtime_error {
    explicit LlmUnavailable(const std::string& what) : std::runtime_error(what) {}
};

// ScriptedMock with no entry for a query; a flavor of LlmUnavailable.
struct MissingScript : LlmUnavailable {
    explicit MissingScript(const std::string& what) : LlmUnavailable(what) {}
};

} // namespace ovd
