// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/synthetic.hpp"

#include "rmlab/errors.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

namespace {

constexpr const char* kLetters = "abcdefghijklmnoprstuvwxy";

std::string random_string(Rng& rng, const std::string& alphabet, std::size_t n) {
    std::string s(n, ' ');
    for (auto& c : s) {
        c = alphabet[rng.below(alphabet.size())];
    }
    return s;
}

void check_task(const MarkerTask& t) {
    const auto clash = [&](char m) { return m != 0 && t.alphabet.find(m) != std::string::npos; };
    if (t.alphabet.empty() || clash(t.chosen.marker) || clash(t.rejected.marker)) {
        throw ConfigError("task '" + t.name + "': alphabet must be nonempty and exclude the markers");
    }
    if (t.min_len < 2 || t.max_len < t.min_len) {
        throw ConfigError("task '" + t.name + "': invalid response length range");
    }
}

std::string prompt_of(Rng& rng, const MarkerTask& t) {
    return t.prompt_prefix + random_string(rng, t.alphabet, 4) + ": ";
}

std::string response_of(Rng& rng, const MarkerTask& t, std::size_t len, const ResponseStyle& style) {
    std::string s = random_string(rng, t.alphabet, len);
    if (style.marker != 0) {
        s[rng.below(len)] = style.marker;
    }
    return s + style.suffix;
}

std::size_t length_of(Rng& rng, const MarkerTask& t) {
    return t.min_len + rng.below(t.max_len - t.min_len + 1);
}

}  // namespace

MarkerTask general_task_a() {
    return {.name = "general_a", .prompt_prefix = "ask ", .alphabet = kLetters,
            .chosen = {'Q', "."}, .rejected = {0, "."}};
}

MarkerTask general_task_b() {
    return {.name = "general_b", .prompt_prefix = "num ", .alphabet = "0123456789",
            .chosen = {'Q', "."}, .rejected = {0, "."}};
}

MarkerTask customized_task() {
    return {.name = "custom", .prompt_prefix = "tell ", .alphabet = kLetters,
            .chosen = {'Q', "!"}, .rejected = {'Q', "."}};
}

std::vector<PreferencePair> marker_pairs(const MarkerTask& task, std::size_t n,
                                         std::uint64_t seed) {
    check_task(task);
    Rng rng(seed);
    std::vector<PreferencePair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = length_of(rng, task);
        PreferencePair p;
        p.prompt = prompt_of(rng, task);
        p.chosen = response_of(rng, task, len, task.chosen);
        p.rejected = response_of(rng, task, len, task.rejected);
        p.source = task.name;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::string> synthetic_corpus(const std::vector<MarkerTask>& tasks, std::size_t n,
                                          std::uint64_t seed) {
    if (tasks.empty()) {
        throw ConfigError("synthetic corpus needs at least one task");
    }
    for (const auto& t : tasks) {
        check_task(t);
    }
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const MarkerTask& t = tasks[rng.below(tasks.size())];
        const std::size_t len = length_of(rng, t);
        const std::string prompt = prompt_of(rng, t);
        out.push_back(prompt + response_of(rng, t, len, t.chosen));
    }
    return out;
}

std::vector<std::string> memorization_corpus(std::size_t copies) {
    return std::vector<std::string>(copies, "rmlab-memo");
}

}  // namespace rmlab
