// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Preference-model objectives. Ranking loss is the batch mean of
// -log sigmoid(r_good - r_bad); the imitation (LM) loss is a token-sum
// negative log-likelihood per sequence, averaged over the batch; the combined
// objective is ranking + mu * imitation.

#pragma once

#include <cstddef>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"
#include "rmlab/tensor.hpp"

namespace rmlab {

struct LossConfig {
    double mu = 0.0;
    LmTargets lm_targets = LmTargets::prompt_and_response;

    void validate() const;
};

/// mean_i softplus(score_bad_i - score_good_i). Both inputs shaped [B].
Tensor ranking_loss(const Tensor& score_good, const Tensor& score_bad);

/// Sum of next-token NLL over loss_mask for rows [first, first + count) of
/// the batch, given flattened hidden states of the whole batch.
Tensor lm_nll_sum(const RewardModel& model, const Tensor& hidden_flat, const TokenBatch& batch,
                  std::size_t first, std::size_t count);

/// Batch mean of per-sequence token-sum NLL over the batch's loss mask.
Tensor imitation_loss(const RewardModel& model, const TokenBatch& batch);

/// ranking + mu * imitation. Throws ContractError for negative mu.
Tensor pmp_loss(const Tensor& ranking, const Tensor& imitation, double mu);

}  // namespace rmlab
