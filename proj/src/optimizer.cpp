// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/optimizer.hpp"

#include <cmath>

#include "rmlab/errors.hpp"

namespace rmlab {

void AdamConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("learning rate must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw ConfigError("Adam eps must be positive");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight decay must be >= 0");
    }
    if (!(clip_norm >= 0.0)) {
        throw ConfigError("clip norm must be >= 0");
    }
}

nlohmann::ordered_json AdamConfig::to_json() const {
    return {{"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"weight_decay", weight_decay},
            {"clip_norm", clip_norm}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j, AdamConfig c) {
    try {
        c.lr = j.value("lr", c.lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid optimizer config: ") + e.what());
    }
    c.validate();
    return c;
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    config_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

double global_grad_norm(const std::vector<Tensor>& params) {
    double total = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) {
            continue;
        }
        for (double g : p.grad()) {
            total += g * g;
        }
    }
    return std::sqrt(total);
}

double Adam::step() {
    const double norm = global_grad_norm(params_);
    const double clip =
        config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) {
            continue;
        }
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] * clip + config_.weight_decay * w[k];
            m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
            v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
    return norm;
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

std::vector<Tensor> parameter_tensors(RewardModel& model) {
    std::vector<Tensor> out;
    for (auto& p : model.parameters()) {
        out.push_back(p.value);
    }
    return out;
}

}  // namespace rmlab
