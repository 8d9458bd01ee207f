// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Three-stage training: base LM, general RM fine-tuning (GRFT) and customized
// RM fine-tuning (CRFT). GRFT and CRFT are the same operation; they differ in
// the starting checkpoint (a bare LM gets a zero-initialized reward head).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/checkpoint.hpp"
#include "rmlab/data.hpp"
#include "rmlab/eval.hpp"
#include "rmlab/model.hpp"
#include "rmlab/optimizer.hpp"

namespace rmlab {

enum class Stage { base_lm, grft, crft };

Stage stage_from_string(std::string_view s);
std::string to_string(Stage s);

struct StageConfig {
    Stage stage = Stage::grft;
    /// Short label used in comparison tables (e.g. the training set name).
    std::string label;
    /// Text JSONL for base_lm, pair JSONL otherwise.
    std::filesystem::path train_path;
    std::map<std::string, std::filesystem::path> eval_paths;
    double mu = 0.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    /// Caps the number of optimizer steps when set.
    std::optional<std::size_t> max_steps;
    std::uint64_t seed = 1;
    /// Evaluate every N steps (0: only at step 0 and at the end).
    std::size_t eval_every = 0;
    /// Write an intermediate checkpoint every N steps when an output dir is given.
    std::size_t checkpoint_every = 0;
    /// Applied when the reward head is attached; kept from the checkpoint otherwise.
    std::optional<Pooling> pooling;
    CollateOptions collate;
    AdamConfig adam;
    /// Architecture for base_lm (ignored by later stages).
    ModelConfig model;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Missing keys keep the values of `defaults`.
    static StageConfig from_json(const nlohmann::json& j, const StageConfig& defaults);
    static StageConfig from_json(const nlohmann::json& j) { return from_json(j, StageConfig()); }
};

struct StepRecord {
    std::size_t step = 0;
    double loss_total = 0.0;
    double loss_rank = 0.0;
    /// Absent when the stage did not compute a language-modeling term.
    std::optional<double> loss_lm;
};

struct Snapshot {
    /// Number of optimizer updates applied before this evaluation.
    std::size_t step = 0;
    std::map<std::string, double> accuracy;
    std::map<std::string, double> gain;  // vs the step-0 snapshot
};

struct TrainLog {
    std::string stage;
    std::vector<StepRecord> steps;
    std::vector<Snapshot> snapshots;
    double wall_seconds = 0.0;

    /// step,loss_total,loss_rank,loss_lm,acc_<set>...,gain_<set>...
    void write_csv(const std::filesystem::path& path) const;
    /// Final losses, snapshots and wall-clock seconds.
    nlohmann::ordered_json summary_json() const;
    /// Everything except wall-clock time, so it is deterministic.
    nlohmann::ordered_json to_json() const;
    static TrainLog from_json(const nlohmann::json& j);
    const Snapshot* final_snapshot() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainLog log;
};

/// Optional on-disk outputs; nothing is written when `dir` is empty.
struct TrainOutputs {
    std::filesystem::path dir;
};

TrainResult train_base_lm(const std::vector<std::string>& corpus, const StageConfig& cfg,
                          const TrainOutputs& out = {});

/// Attaches a reward head when `start` lacks one, otherwise continues from it.
TrainResult train_rm(const Checkpoint& start, const std::vector<PreferencePair>& pairs,
                     const NamedPairSets& eval_sets, const StageConfig& cfg,
                     const TrainOutputs& out = {});

/// One base -> (grft) -> crft chain. `grft` absent reproduces the skip-GRFT setup.
struct ChainSpec {
    std::string name;
    StageConfig base;
    std::optional<StageConfig> grft;
    StageConfig crft;
};

struct MatrixSpec {
    std::vector<ChainSpec> chains;
    /// Passed to every CRFT evaluation; sets combined by geometric mean.
    std::vector<std::string> composite_of;

    static MatrixSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

struct ChainResult {
    std::string name;
    std::vector<TrainLog> logs;  // one per executed or cached stage
    ComparisonRow row;
    std::string final_checkpoint;
};

struct MatrixResult {
    std::vector<ChainResult> chains;
    std::size_t stages_trained = 0;
    std::size_t cache_hits = 0;
};

/// Validates every chain before training anything. Stage outputs are cached
/// under out_dir/cache keyed by a hash of (stage config, input checkpoint, data).
MatrixResult run_experiment_matrix(const MatrixSpec& spec, const std::filesystem::path& out_dir);

}  // namespace rmlab
