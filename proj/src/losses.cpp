// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/losses.hpp"

#include <cmath>

#include "rmlab/errors.hpp"

namespace rmlab {

void LossConfig::validate() const {
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
        throw ConfigError("imitation coefficient mu must be a finite value >= 0");
    }
}

Tensor ranking_loss(const Tensor& score_good, const Tensor& score_bad) {
    if (score_good.rank() != 1 || score_good.shape() != score_bad.shape()) {
        throw ContractError("ranking_loss: score vectors " + shape_str(score_good.shape()) +
                            " and " + shape_str(score_bad.shape()) + " must be equal-length [B]");
    }
    return mean(softplus(sub(score_bad, score_good)));
}

Tensor lm_nll_sum(const RewardModel& model, const Tensor& hidden_flat, const TokenBatch& batch,
                  std::size_t first, std::size_t count) {
    if (count == 0 || first + count > batch.batch) {
        throw ContractError("lm_nll_sum: row range out of batch");
    }
    const std::size_t T = batch.length;
    std::vector<std::int32_t> targets(count * T, 0);
    std::vector<std::uint8_t> mask(count * T, 0);
    for (std::size_t r = 0; r < count; ++r) {
        const std::size_t b = first + r;
        for (std::size_t t = 0; t + 1 < T; ++t) {
            if (batch.loss_mask[batch.at(b, t + 1)]) {
                targets[r * T + t] = batch.ids[batch.at(b, t + 1)];
                mask[r * T + t] = 1;
            }
        }
    }
    const Tensor rows = (first == 0 && count == batch.batch)
                            ? hidden_flat
                            : slice_rows(hidden_flat, first * T, (first + count) * T);
    return cross_entropy(model.lm_logits_from_hidden(rows), targets, mask);
}

Tensor imitation_loss(const RewardModel& model, const TokenBatch& batch) {
    if (batch.batch == 0 || batch.length == 0) {
        throw ContractError("imitation_loss on an empty batch");
    }
    const Tensor hidden = model.forward_flat(batch);
    return scale(lm_nll_sum(model, hidden, batch, 0, batch.batch),
                 1.0 / static_cast<double>(batch.batch));
}

Tensor pmp_loss(const Tensor& ranking, const Tensor& imitation, double mu) {
    if (!(mu >= 0.0)) {
        throw ContractError("pmp_loss: mu must be >= 0");
    }
    return add(ranking, scale(imitation, mu));
}

}  // namespace rmlab
