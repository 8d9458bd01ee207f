// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (little endian):
//   "PFRG" | u32 version | u64 header length | UTF-8 JSON header | tensor data
// The header holds {config, vocab, tensors: name -> {shape, offset, length}, meta}.
// Offsets are relative to the start of the tensor data, which is a sequence
// of raw float64 values in manifest order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/model.hpp"
#include "rmlab/tokenizer.hpp"

namespace rmlab {

inline constexpr char kCheckpointMagic[4] = {'P', 'F', 'R', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
public:
    ModelConfig config;
    ByteTokenizer vocab;
    std::vector<NamedTensor> tensors;  // manifest order
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();

    bool has_tensor(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
    bool has_reward_head() const;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin = "<memory>");

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    /// SHA-256 of the serialized bytes.
    std::string content_hash() const;
};

}  // namespace rmlab
