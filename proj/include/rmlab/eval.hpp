// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/data.hpp"
#include "rmlab/model.hpp"

namespace rmlab {

struct AccuracyResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t ties = 0;
    std::size_t total = 0;
};

/// Correct means good > bad strictly; exact ties count as wrong.
AccuracyResult accuracy_from_scores(std::span<const double> good, std::span<const double> bad);

struct PairScores {
    std::vector<double> good;
    std::vector<double> bad;
};

PairScores score_pairs(const RewardModel& model, const std::vector<PreferencePair>& pairs,
                       const CollateOptions& options, std::size_t batch_pairs = 32);

AccuracyResult preference_accuracy(const RewardModel& model,
                                   const std::vector<PreferencePair>& pairs,
                                   const CollateOptions& options, std::size_t batch_pairs = 32);

double geometric_mean(double acc_a, double acc_b);
double average_accuracy(std::span<const double> per_domain);

struct SetAccuracy {
    double accuracy = 0.0;
    std::size_t pairs = 0;
    std::size_t ties = 0;
};

struct EvalReport {
    std::string checkpoint_hash;
    std::map<std::string, SetAccuracy> sets;
    /// Names of the two sets combined by geometric mean, when both exist.
    std::vector<std::string> composite_of;
    std::optional<double> composite;
    /// Filled when a reference report is supplied.
    std::map<std::string, double> gains;

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

/// current - reference for every set; both must name the same sets.
std::map<std::string, double> accuracy_gain(const EvalReport& current, const EvalReport& reference);

using NamedPairSets = std::map<std::string, std::vector<PreferencePair>>;

EvalReport evaluate(const RewardModel& model, const NamedPairSets& sets,
                    const CollateOptions& options, std::string checkpoint_hash,
                    const std::vector<std::string>& composite_of = {});

/// One row of a stage-comparison table: which data each stage saw, then accuracies.
struct ComparisonRow {
    std::string base;
    std::string grft;  // "No" when the chain skips general fine-tuning
    std::string crft;
    std::map<std::string, double> accuracy;
    /// Accuracy change over the final stage, per set; may be empty.
    std::map<std::string, double> gain;
};

/// Columns: base,grft,crft,<set names of the first row>,average,gain_<set>...
void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows,
                          const std::vector<std::string>& average_over = {});

}  // namespace rmlab
