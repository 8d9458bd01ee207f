// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic preference tasks with a known separating rule, a matching text
// corpus for base-LM training, and a degenerate memorization corpus.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmlab/data.hpp"

namespace rmlab {

/// How one side of a pair is built: random `alphabet` bytes, `marker`
/// inserted once when nonzero, then `suffix`.
struct ResponseStyle {
    char marker = 0;
    std::string suffix;
};

/// Prompt is `prompt_prefix` + 4 random bytes + ": ". Chosen and rejected
/// bodies have equal length, so only the styles separate them.
struct MarkerTask {
    std::string name;
    std::string prompt_prefix;
    std::string alphabet;
    ResponseStyle chosen;
    ResponseStyle rejected;
    std::size_t min_len = 6;
    std::size_t max_len = 12;
};

/// Chosen responses contain 'Q'; rejected ones do not. Lowercase bodies.
MarkerTask general_task_a();
/// The same rule on digit bodies with a different prompt template.
MarkerTask general_task_b();
/// Both sides contain 'Q' (both satisfy the general rule); chosen responses
/// end in '!' and rejected ones in '.'.
MarkerTask customized_task();

std::vector<PreferencePair> marker_pairs(const MarkerTask& task, std::size_t n, std::uint64_t seed);

/// Prompt + chosen-style response texts, tasks drawn uniformly, so the LM
/// sees the same distribution that imitation later trains on.
std::vector<std::string> synthetic_corpus(const std::vector<MarkerTask>& tasks, std::size_t n,
                                          std::uint64_t seed);

/// `copies` repetitions of a fixed 10-byte string.
std::vector<std::string> memorization_corpus(std::size_t copies = 200);

}  // namespace rmlab
