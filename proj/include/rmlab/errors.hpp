// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rmlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree with an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An index (token id, target id, row) falls outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A caller violated a precondition that is not about shapes or indices.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (ratios, names, sizes).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Problem with input data: unreadable files, empty sets, invalid records.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed line in a JSONL file. Carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Checkpoint could not be read or does not match the requested model.
class LoadError : public Error {
public:
    using Error::Error;
};

}  // namespace rmlab
