// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"

namespace rmlab::testing {

inline ModelConfig tiny_config(Pooling pooling = Pooling::last_token) {
    ModelConfig c;
    c.embed_dim = 16;
    c.num_layers = 2;
    c.num_heads = 2;
    c.ffn_dim = 32;
    c.max_position = 32;
    c.pooling = pooling;
    return c;
}

inline std::vector<PreferencePair> toy_pairs() {
    return {{"Is 2+2 4? ", "Yes.", "No!", "toy", std::nullopt},
            {"Name a color: ", "blue", "seven", "toy", std::nullopt},
            {"Hi", "Hello there", "Go away", "toy", std::nullopt}};
}

/// Gives the reward head random weights so ranking gradients reach the body.
inline void randomize_reward_head(RewardModel& model, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    for (auto& p : model.parameters()) {
        if (RewardModel::is_reward_head(p.name)) {
            for (auto& v : p.value.mutable_data()) {
                v = rng.normal(0.0, scale);
            }
        }
    }
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rmlab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace rmlab::testing
