// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/model.hpp"

namespace rmlab {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 1.0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static AdamConfig from_json(const nlohmann::json& j, AdamConfig defaults);
    static AdamConfig from_json(const nlohmann::json& j) { return from_json(j, AdamConfig()); }
};

/// Adam with bias correction over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig config);

    /// Clips, updates every parameter that has a grad, and returns the pre-clip norm.
    double step();
    void zero_grad();

    std::size_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig config_;
    std::size_t t_ = 0;
};

/// sqrt of the sum of squared grads over `params`; missing grads count as 0.
double global_grad_norm(const std::vector<Tensor>& params);

std::vector<Tensor> parameter_tensors(RewardModel& model);

}  // namespace rmlab
