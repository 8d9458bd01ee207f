// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer with two heads over the final (post layer norm)
// hidden states: an LM head producing next-token logits and a scalar reward
// head reading a pooled sequence representation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/data.hpp"
#include "rmlab/tensor.hpp"
#include "rmlab/tokenizer.hpp"

namespace rmlab {

enum class Pooling { last_token, eos_token, average, max };

Pooling pooling_from_string(std::string_view s);
std::string to_string(Pooling p);

struct ModelConfig {
    std::size_t vocab_size = ByteTokenizer::kVocabSize;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 256;
    std::size_t max_position = 128;
    Pooling pooling = Pooling::last_token;

    /// Throws ConfigError when sizes are zero or heads do not divide embed_dim.
    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    bool operator==(const ModelConfig&) const = default;
    /// Equal in every field that shapes parameters (pooling excluded).
    bool same_architecture(const ModelConfig& other) const;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

class Checkpoint;

class RewardModel {
public:
    /// Random transformer weights from `seed`; reward head starts at exactly zero.
    RewardModel(ModelConfig config, std::uint64_t seed);

    // Tensors are shared handles, so copies would alias parameters.
    RewardModel(const RewardModel&) = delete;
    RewardModel& operator=(const RewardModel&) = delete;
    RewardModel(RewardModel&&) noexcept = default;
    RewardModel& operator=(RewardModel&&) noexcept = default;

    /// Deep copy with independent parameter storage.
    RewardModel clone() const;

    /// Requires reward head tensors; see attach_reward_head for base LMs.
    static RewardModel from_checkpoint(const Checkpoint& ckpt);
    Checkpoint to_checkpoint(bool include_reward_head = true) const;

    const ModelConfig& config() const noexcept { return config_; }
    void set_pooling(Pooling strategy) noexcept { config_.pooling = strategy; }

    /// [B x T x embed_dim] final hidden states.
    Tensor forward_hidden(const TokenBatch& batch) const;
    /// Same values flattened to [B*T x embed_dim].
    Tensor forward_flat(const TokenBatch& batch) const;

    /// [B x embed_dim]. `hidden` may be rank 3 or flattened.
    Tensor pool(const Tensor& hidden, const TokenBatch& batch, Pooling strategy) const;
    Tensor pool(const Tensor& hidden, const TokenBatch& batch) const {
        return pool(hidden, batch, config_.pooling);
    }

    /// [B] rewards from already computed hidden states.
    Tensor reward_from_hidden(const Tensor& hidden, const TokenBatch& batch) const;
    Tensor reward_score(const TokenBatch& batch) const;

    /// [rows x vocab] logits for flattened hidden rows.
    Tensor lm_logits_from_hidden(const Tensor& hidden_rows) const;
    /// [B x T x vocab]; logits at t predict token t+1.
    Tensor lm_logits(const TokenBatch& batch) const;

    std::vector<NamedTensor>& parameters() noexcept { return params_; }
    const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
    const Tensor& parameter(std::string_view name) const;
    Tensor& parameter(std::string_view name);
    std::size_t parameter_count() const;

    /// Parameters the base LM defines (everything but the reward head).
    static bool is_reward_head(std::string_view name);

    void zero_grad();

private:
    RewardModel() = default;
    friend RewardModel attach_reward_head(const Checkpoint&, const std::optional<ModelConfig>&);

    const Tensor& p(std::size_t index) const { return params_[index].value; }
    std::size_t block_param(std::size_t layer, std::size_t slot) const;

    ModelConfig config_;
    std::vector<NamedTensor> params_;
};

/// Loads a base LM and adds a zero-initialized reward head. Base parameters
/// are copied bitwise. Throws LoadError when `expected` differs from the
/// checkpoint's config or the checkpoint already carries a reward head.
RewardModel attach_reward_head(const Checkpoint& base,
                               const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace rmlab
