// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every run gets a directory holding manifest.json,
// written before any work starts; outputs default to that directory.

#pragma once

#include <string>
#include <vector>

namespace rmlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

/// Parses and runs one subcommand; never throws.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace rmlab::cli
