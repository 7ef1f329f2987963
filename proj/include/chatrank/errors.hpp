// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <stdexcept>
#include <string>

namespace chatrank {

// Malformed or inconsistent input data (bad records, missing files, schema
// violations). Maps to exit code 2 in the CLI.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Caller misuse: invalid configuration, bad parameter combinations.
// Maps to exit code 1 in the CLI.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace chatrank
