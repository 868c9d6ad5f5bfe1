#pragma once

#include <stdexcept>
#include <string>

namespace epiwarn {

// Error categories; the CLI maps each to a distinct exit code (see README).

// Invalid or inconsistent configuration; message names the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A required upstream artifact (manifest, model file, trajectory) is absent.
class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed data in an otherwise present artifact, or invalid runtime input.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace epiwarn
