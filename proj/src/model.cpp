// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "rmlab/checkpoint.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

Pooling pooling_from_string(std::string_view s) {
    if (s == "last_token") {
        return Pooling::last_token;
    }
    if (s == "eos_token") {
        return Pooling::eos_token;
    }
    if (s == "average") {
        return Pooling::average;
    }
    if (s == "max") {
        return Pooling::max;
    }
    throw ConfigError("unknown pooling strategy \"" + std::string(s) + "\"");
}

std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::last_token: return "last_token";
        case Pooling::eos_token: return "eos_token";
        case Pooling::average: return "average";
        case Pooling::max: return "max";
    }
    return "last_token";
}

void ModelConfig::validate() const {
    if (vocab_size == 0 || embed_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0 ||
        max_position == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
    }
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
    return vocab_size == o.vocab_size && embed_dim == o.embed_dim && num_layers == o.num_layers &&
           num_heads == o.num_heads && ffn_dim == o.ffn_dim && max_position == o.max_position;
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["vocab_size"] = vocab_size;
    j["embed_dim"] = embed_dim;
    j["num_layers"] = num_layers;
    j["num_heads"] = num_heads;
    j["ffn_dim"] = ffn_dim;
    j["max_position"] = max_position;
    j["pooling"] = to_string(pooling);
    j["dropout"] = 0.0;
    j["reward_input"] = "post_final_layer_norm";
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.num_layers = j.value("num_layers", c.num_layers);
        c.num_heads = j.value("num_heads", c.num_heads);
        c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
        c.max_position = j.value("max_position", c.max_position);
        if (j.contains("pooling")) {
            c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
        }
        if (j.value("dropout", 0.0) != 0.0) {
            throw ConfigError("dropout must be 0");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

constexpr std::size_t kBlockSlots = 12;
enum BlockSlot : std::size_t {
    kLn1Gain,
    kLn1Bias,
    kQkvW,
    kQkvB,
    kOutW,
    kOutB,
    kLn2Gain,
    kLn2Bias,
    kUpW,
    kUpB,
    kDownW,
    kDownB,
};
constexpr const char* kBlockNames[kBlockSlots] = {
    "ln1.gain",  "ln1.bias",  "attn.qkv.weight", "attn.qkv.bias", "attn.out.weight", "attn.out.bias",
    "ln2.gain",  "ln2.bias",  "ffn.up.weight",   "ffn.up.bias",   "ffn.down.weight", "ffn.down.bias",
};

constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kFirstBlock = 2;

std::size_t tail_index(const ModelConfig& c, std::size_t offset) {
    return kFirstBlock + c.num_layers * kBlockSlots + offset;
}
enum TailSlot : std::size_t { kLnfGain, kLnfBias, kLmW, kLmB, kRewardW, kRewardB };

constexpr double kInitStd = 0.02;

Tensor normal_param(Shape shape, Rng& rng, double stddev) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.normal(0.0, stddev);
    }
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Parameter names and shapes in canonical order.
std::vector<std::pair<std::string, Shape>> layout(const ModelConfig& c) {
    const std::size_t d = c.embed_dim;
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("tok_emb", Shape{c.vocab_size, d});
    out.emplace_back("pos_emb", Shape{c.max_position, d});
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const std::string prefix = "blocks." + std::to_string(l) + ".";
        const Shape shapes[kBlockSlots] = {{d},         {d}, {d, 3 * d}, {3 * d}, {d, d}, {d},
                                           {d},         {d}, {d, c.ffn_dim}, {c.ffn_dim},
                                           {c.ffn_dim, d}, {d}};
        for (std::size_t s = 0; s < kBlockSlots; ++s) {
            out.emplace_back(prefix + kBlockNames[s], shapes[s]);
        }
    }
    out.emplace_back("ln_f.gain", Shape{d});
    out.emplace_back("ln_f.bias", Shape{d});
    out.emplace_back("lm_head.weight", Shape{d, c.vocab_size});
    out.emplace_back("lm_head.bias", Shape{c.vocab_size});
    out.emplace_back("reward_head.weight", Shape{d, 1});
    out.emplace_back("reward_head.bias", Shape{1});
    return out;
}

}  // namespace

RewardModel::RewardModel(ModelConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const double proj_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config_.num_layers));
    for (auto& [name, shape] : layout(config_)) {
        Tensor t;
        const bool is_gain = name.ends_with(".gain");
        const bool is_bias = name.ends_with(".bias");
        if (is_reward_head(name)) {
            t = Tensor::zeros(shape, true);
        } else if (is_gain) {
            t = Tensor::full(shape, 1.0, true);
        } else if (is_bias) {
            t = Tensor::zeros(shape, true);
        } else if (name.ends_with("attn.out.weight") || name.ends_with("ffn.down.weight")) {
            t = normal_param(shape, rng, proj_std);
        } else {
            t = normal_param(shape, rng, kInitStd);
        }
        params_.push_back({name, std::move(t)});
    }
}

RewardModel RewardModel::clone() const {
    RewardModel m;
    m.config_ = config_;
    for (const auto& p : params_) {
        m.params_.push_back({p.name, Tensor::from(p.value.shape(),
                                                  {p.value.data().begin(), p.value.data().end()},
                                                  p.value.requires_grad())});
    }
    return m;
}

bool RewardModel::is_reward_head(std::string_view name) {
    return name.starts_with("reward_head.");
}

std::size_t RewardModel::block_param(std::size_t layer, std::size_t slot) const {
    return kFirstBlock + layer * kBlockSlots + slot;
}

const Tensor& RewardModel::parameter(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw IndexError("no parameter named " + std::string(name));
}

Tensor& RewardModel::parameter(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw IndexError("no parameter named " + std::string(name));
}

std::size_t RewardModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.numel();
    }
    return n;
}

void RewardModel::zero_grad() {
    for (auto& p : params_) {
        p.value.zero_grad();
    }
}

// ---- forward --------------------------------------------------------------

Tensor RewardModel::forward_flat(const TokenBatch& batch) const {
    if (batch.batch == 0 || batch.length == 0) {
        throw ContractError("forward on an empty batch");
    }
    if (batch.length > config_.max_position) {
        throw ContractError("sequence length " + std::to_string(batch.length) +
                            " exceeds max_position " + std::to_string(config_.max_position) +
                            "; truncate during collation");
    }
    for (auto id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
        }
    }
    Tensor x = add(embedding(p(kTokEmb), batch.ids), embedding(p(kPosEmb), batch.positions));
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        auto w = [&](std::size_t slot) -> const Tensor& { return p(block_param(l, slot)); };
        Tensor h = layer_norm(x, w(kLn1Gain), w(kLn1Bias));
        Tensor qkv = add_bias(matmul(h, w(kQkvW)), w(kQkvB));
        Tensor att = causal_attention(qkv, batch.attention_mask, batch.batch, batch.length,
                                      config_.num_heads);
        x = add(x, add_bias(matmul(att, w(kOutW)), w(kOutB)));
        Tensor h2 = layer_norm(x, w(kLn2Gain), w(kLn2Bias));
        Tensor up = gelu(add_bias(matmul(h2, w(kUpW)), w(kUpB)));
        x = add(x, add_bias(matmul(up, w(kDownW)), w(kDownB)));
    }
    return layer_norm(x, p(tail_index(config_, kLnfGain)), p(tail_index(config_, kLnfBias)));
}

Tensor RewardModel::forward_hidden(const TokenBatch& batch) const {
    return reshape(forward_flat(batch), {batch.batch, batch.length, config_.embed_dim});
}

Tensor RewardModel::pool(const Tensor& hidden, const TokenBatch& batch, Pooling strategy) const {
    const std::size_t d = config_.embed_dim;
    const Tensor flat = hidden.rank() == 2 ? hidden : reshape(hidden, {batch.batch * batch.length, d});
    if (flat.dim(0) != batch.batch * batch.length || flat.dim(1) != d) {
        throw ShapeError("pool: hidden " + shape_str(hidden.shape()) + " does not match batch");
    }
    switch (strategy) {
        case Pooling::last_token: {
            std::vector<std::size_t> rows(batch.batch);
            for (std::size_t b = 0; b < batch.batch; ++b) {
                rows[b] = batch.at(b, batch.last_index[b]);
            }
            return gather_rows(flat, rows);
        }
        case Pooling::eos_token: {
            std::vector<std::size_t> rows(batch.batch);
            for (std::size_t b = 0; b < batch.batch; ++b) {
                if (!batch.eos_index[b]) {
                    throw ContractError("eos_token pooling: sequence " + std::to_string(b) +
                                        " has no EOS token");
                }
                rows[b] = batch.at(b, *batch.eos_index[b]);
            }
            return gather_rows(flat, rows);
        }
        case Pooling::average:
            return masked_mean_rows(flat, batch.attention_mask, batch.batch, batch.length);
        case Pooling::max:
            return masked_max_rows(flat, batch.attention_mask, batch.batch, batch.length);
    }
    throw ConfigError("unknown pooling strategy");
}

Tensor RewardModel::reward_from_hidden(const Tensor& hidden, const TokenBatch& batch) const {
    Tensor pooled = pool(hidden, batch);
    Tensor r = add_bias(matmul(pooled, p(tail_index(config_, kRewardW))),
                        p(tail_index(config_, kRewardB)));
    return reshape(r, {batch.batch});
}

Tensor RewardModel::reward_score(const TokenBatch& batch) const {
    return reward_from_hidden(forward_flat(batch), batch);
}

Tensor RewardModel::lm_logits_from_hidden(const Tensor& hidden_rows) const {
    return add_bias(matmul(hidden_rows, p(tail_index(config_, kLmW))), p(tail_index(config_, kLmB)));
}

Tensor RewardModel::lm_logits(const TokenBatch& batch) const {
    return reshape(lm_logits_from_hidden(forward_flat(batch)),
                   {batch.batch, batch.length, config_.vocab_size});
}

// ---- checkpoint conversion --------------------------------------------------

Checkpoint RewardModel::to_checkpoint(bool include_reward_head) const {
    Checkpoint c;
    c.config = config_;
    for (const auto& p : params_) {
        if (!include_reward_head && is_reward_head(p.name)) {
            continue;
        }
        c.tensors.push_back({p.name, p.value.detach()});
    }
    return c;
}

namespace {

void copy_matching(std::vector<NamedTensor>& params, const Checkpoint& ckpt, bool skip_head) {
    for (auto& p : params) {
        if (skip_head && RewardModel::is_reward_head(p.name)) {
            continue;
        }
        if (!ckpt.has_tensor(p.name)) {
            throw LoadError("checkpoint lacks tensor " + p.name);
        }
        const Tensor& src = ckpt.tensor(p.name);
        if (src.shape() != p.value.shape()) {
            throw LoadError("tensor " + p.name + " has shape " + shape_str(src.shape()) +
                            ", model expects " + shape_str(p.value.shape()));
        }
        std::copy(src.data().begin(), src.data().end(), p.value.mutable_data().begin());
    }
}

}  // namespace

RewardModel RewardModel::from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.has_reward_head()) {
        throw LoadError("checkpoint has no reward head; attach one to the base LM first");
    }
    RewardModel m(ckpt.config, 0);
    copy_matching(m.params_, ckpt, false);
    if (ckpt.tensors.size() != m.params_.size()) {
        throw LoadError("checkpoint has unexpected extra tensors");
    }
    return m;
}

RewardModel attach_reward_head(const Checkpoint& base, const std::optional<ModelConfig>& expected) {
    if (expected && !expected->same_architecture(base.config)) {
        throw LoadError("checkpoint config " + base.config.to_json().dump() +
                        " does not match requested " + expected->to_json().dump());
    }
    if (base.has_reward_head()) {
        throw LoadError("checkpoint already has a reward head");
    }
    RewardModel m(base.config, 0);
    if (expected) {
        m.config_.pooling = expected->pooling;
    }
    copy_matching(m.params_, base, true);
    if (base.tensors.size() + 2 != m.params_.size()) {
        throw LoadError("checkpoint has unexpected extra tensors");
    }
    for (auto& p : m.params_) {
        if (RewardModel::is_reward_head(p.name)) {
            std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0.0);
        }
    }
    return m;
}

}  // namespace rmlab
