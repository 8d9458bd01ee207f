// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "rmlab/errors.hpp"
#include "rmlab/synthetic.hpp"
#include "rmlab/trainer.hpp"
#include "support/fixtures.hpp"

using namespace rmlab;
using namespace rmlab::testing;
namespace fs = std::filesystem;

namespace {

StageConfig lm_config(std::uint64_t seed = 3) {
    StageConfig c;
    c.stage = Stage::base_lm;
    c.seed = seed;
    c.batch_size = 8;
    c.model = tiny_config(Pooling::average);
    c.collate.max_len = 32;
    c.adam.lr = 1e-2;
    return c;
}

StageConfig rm_config(Stage stage, std::uint64_t seed = 5) {
    StageConfig c;
    c.stage = stage;
    c.seed = seed;
    c.batch_size = 4;
    c.collate.max_len = 32;
    c.adam.lr = 1e-2;
    return c;
}

Checkpoint small_base() {
    StageConfig c = lm_config();
    c.max_steps = 5;
    return train_base_lm(synthetic_corpus({general_task_a()}, 40, 2), c).checkpoint;
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b, bool body_only = false) {
    auto pick = [&](const Checkpoint& c) {
        std::vector<const NamedTensor*> out;
        for (const auto& t : c.tensors) {
            if (!body_only || !RewardModel::is_reward_head(t.name)) {
                out.push_back(&t);
            }
        }
        return out;
    };
    const auto ta = pick(a);
    const auto tb = pick(b);
    if (ta.size() != tb.size()) {
        return false;
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
        const auto da = ta[i]->value.data();
        const auto db = tb[i]->value.data();
        if (ta[i]->name != tb[i]->name || ta[i]->value.shape() != tb[i]->value.shape() ||
            std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

fs::path write_pair_file(const fs::path& dir, const std::string& name,
                         const std::vector<PreferencePair>& pairs) {
    const fs::path p = dir / name;
    write_pairs(p, pairs);
    return p;
}

}  // namespace

TEST_CASE("stage config JSON round trip and validation", "[trainer]") {
    StageConfig c = rm_config(Stage::crft);
    c.mu = 0.1;
    c.max_steps = 7;
    c.pooling = Pooling::max;
    c.eval_paths["custom"] = "c.jsonl";
    const StageConfig back = StageConfig::from_json(c.to_json());
    REQUIRE(back.to_json() == c.to_json());

    REQUIRE_THROWS_AS(StageConfig::from_json({{"stage", "grft"}, {"bogus", 1}}), ConfigError);
    REQUIRE_THROWS_AS(StageConfig::from_json({{"stage", "grft"}, {"warmup_steps", 10}}), ConfigError);
    StageConfig bad = rm_config(Stage::grft);
    bad.batch_size = 1;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = rm_config(Stage::grft);
    bad.mu = -0.1;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = rm_config(Stage::grft);
    bad.mu = std::nan("");
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = lm_config();
    bad.collate.lm_targets = LmTargets::none;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("first ranking loss from a fresh head is ln 2", "[trainer]") {
    const Checkpoint base = small_base();
    StageConfig c = rm_config(Stage::grft);
    c.max_steps = 3;
    const auto r = train_rm(base, marker_pairs(general_task_a(), 16, 4), {}, c);
    REQUIRE(r.log.steps.size() == 3);
    REQUIRE(std::abs(r.log.steps[0].loss_rank - std::log(2.0)) < 1e-12);
    REQUIRE(!r.log.steps[0].loss_lm.has_value());
    REQUIRE(r.log.steps[0].loss_total == r.log.steps[0].loss_rank);
}

TEST_CASE("base LM memorizes a repeated string", "[trainer]") {
    StageConfig c = lm_config();
    c.epochs = 20;
    c.max_steps = 500;
    const auto r = train_base_lm(memorization_corpus(), c);
    REQUIRE(r.log.steps.size() <= 500);
    REQUIRE(r.log.steps.front().loss_total > 0.5 * std::log(259.0));
    REQUIRE(r.log.steps.back().loss_total < 0.1 * std::log(259.0));
}

TEST_CASE("zero steps returns the initialization", "[trainer]") {
    StageConfig c = lm_config(11);
    c.max_steps = 0;
    const auto r = train_base_lm(memorization_corpus(10), c);
    REQUIRE(r.log.steps.empty());
    const RewardModel init(c.model, 11);
    REQUIRE(same_tensors(r.checkpoint, init.to_checkpoint(false)));
    REQUIRE(r.checkpoint.meta.at("steps") == 0);

    const Checkpoint base = small_base();
    StageConfig g = rm_config(Stage::grft);
    g.max_steps = 0;
    const auto rm = train_rm(base, toy_pairs(), {}, g);
    REQUIRE(same_tensors(rm.checkpoint, base, true));
    for (const auto& t : rm.checkpoint.tensors) {
        if (RewardModel::is_reward_head(t.name)) {
            for (double v : t.value.data()) {
                REQUIRE(v == 0.0);
            }
        }
    }
}

TEST_CASE("training is deterministic", "[trainer]") {
    const auto corpus = synthetic_corpus({general_task_a(), general_task_b()}, 30, 8);
    StageConfig c = lm_config(4);
    c.max_steps = 6;
    const auto a = train_base_lm(corpus, c);
    const auto b = train_base_lm(corpus, c);
    REQUIRE(a.checkpoint.serialize() == b.checkpoint.serialize());
    REQUIRE(a.log.to_json() == b.log.to_json());

    StageConfig g = rm_config(Stage::grft);
    g.mu = 0.1;
    g.max_steps = 4;
    const auto pairs = marker_pairs(general_task_a(), 20, 6);
    const auto ra = train_rm(a.checkpoint, pairs, {{"t", pairs}}, g);
    const auto rb = train_rm(b.checkpoint, pairs, {{"t", pairs}}, g);
    REQUIRE(ra.checkpoint.serialize() == rb.checkpoint.serialize());
    REQUIRE(ra.log.to_json() == rb.log.to_json());

    c.seed = 5;
    REQUIRE(train_base_lm(corpus, c).checkpoint.serialize() != a.checkpoint.serialize());
}

TEST_CASE("mu has no effect when no tokens are LM targets", "[trainer]") {
    const Checkpoint base = small_base();
    const auto pairs = marker_pairs(general_task_a(), 12, 7);
    StageConfig g = rm_config(Stage::grft);
    g.max_steps = 3;
    g.collate.lm_targets = LmTargets::none;
    const auto r0 = train_rm(base, pairs, {}, g);
    g.mu = 0.1;
    const auto r1 = train_rm(base, pairs, {}, g);
    REQUIRE(same_tensors(r0.checkpoint, r1.checkpoint));
    REQUIRE(r1.log.steps[0].loss_lm == 0.0);

    // With real targets the imitation term changes the result.
    g.collate.lm_targets = LmTargets::prompt_and_response;
    const auto r2 = train_rm(base, pairs, {}, g);
    REQUIRE(!same_tensors(r0.checkpoint, r2.checkpoint));
    REQUIRE(r2.log.steps[0].loss_lm.value() > 0.0);
}

TEST_CASE("stage hand-off keeps parameters", "[trainer]") {
    const Checkpoint base = small_base();
    StageConfig g = rm_config(Stage::grft);
    g.max_steps = 3;
    g.pooling = Pooling::max;
    const auto grft = train_rm(base, marker_pairs(general_task_a(), 12, 1), {}, g);
    REQUIRE(grft.checkpoint.has_reward_head());
    REQUIRE(grft.checkpoint.config.pooling == Pooling::max);
    REQUIRE(grft.checkpoint.meta.at("parent") == base.content_hash());

    StageConfig c = rm_config(Stage::crft);
    c.max_steps = 0;
    const auto crft = train_rm(grft.checkpoint, marker_pairs(customized_task(), 12, 1), {}, c);
    REQUIRE(same_tensors(crft.checkpoint, grft.checkpoint));
    REQUIRE(crft.checkpoint.config.pooling == Pooling::max);
}

TEST_CASE("snapshot gains replay from the log", "[trainer]") {
    const Checkpoint base = small_base();
    const auto pairs = marker_pairs(general_task_a(), 24, 3);
    const NamedPairSets sets = {{"a", marker_pairs(general_task_a(), 10, 9)},
                                {"c", marker_pairs(customized_task(), 10, 9)}};
    StageConfig g = rm_config(Stage::grft);
    g.epochs = 1;
    g.eval_every = 2;
    const auto r = train_rm(base, pairs, sets, g);
    std::vector<std::size_t> steps;
    for (const auto& s : r.log.snapshots) {
        steps.push_back(s.step);
    }
    REQUIRE(steps == std::vector<std::size_t>{0, 2, 4, 6});
    const auto& first = r.log.snapshots.front();
    for (const auto& s : r.log.snapshots) {
        for (const auto& [name, acc] : s.accuracy) {
            REQUIRE(s.gain.at(name) == acc - first.accuracy.at(name));
        }
    }
    // The final snapshot equals a direct evaluation of the returned checkpoint.
    const RewardModel m = RewardModel::from_checkpoint(r.checkpoint);
    for (const auto& [name, set] : sets) {
        REQUIRE(preference_accuracy(m, set, g.collate).accuracy ==
                r.log.final_snapshot()->accuracy.at(name));
    }
    REQUIRE(TrainLog::from_json(r.log.to_json()).to_json() == r.log.to_json());
}

TEST_CASE("training writes checkpoint, log and summary", "[trainer]") {
    const fs::path dir = fresh_dir("trainer_outputs");
    const Checkpoint base = small_base();
    StageConfig g = rm_config(Stage::grft);
    g.mu = 0.5;
    g.max_steps = 4;
    g.checkpoint_every = 2;
    const auto pairs = marker_pairs(general_task_a(), 20, 2);
    const auto r = train_rm(base, pairs, {{"t", pairs}}, g, {dir});
    REQUIRE(Checkpoint::load(dir / "checkpoint.pfrg").serialize() == r.checkpoint.serialize());
    REQUIRE(fs::is_regular_file(dir / "step_2.pfrg"));
    REQUIRE(fs::is_regular_file(dir / "summary.json"));
    std::ifstream in(dir / "log.csv");
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "step,loss_total,loss_rank,loss_lm,acc_t,gain_t");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) {
        ++rows;
    }
    REQUIRE(rows == 5);  // steps 0..3 plus the final snapshot at step 4
}

TEST_CASE("trainer input errors", "[trainer]") {
    const Checkpoint base = small_base();
    StageConfig g = rm_config(Stage::grft);
    REQUIRE_THROWS_AS(train_rm(base, {}, {}, g), DataError);
    std::vector<PreferencePair> same = {{"p", "x", "x", "t", std::nullopt}};
    REQUIRE_THROWS_AS(train_rm(base, same, {}, g), DataError);
    REQUIRE_THROWS_AS(train_rm(base, toy_pairs(), {{"e", {}}}, g), DataError);
    REQUIRE_THROWS_AS(train_rm(base, toy_pairs(), {}, lm_config()), ConfigError);
    REQUIRE_THROWS_AS(train_base_lm({}, lm_config()), ConfigError);
    REQUIRE_THROWS_AS(train_base_lm({"x"}, g), ConfigError);
    StageConfig long_len = lm_config();
    long_len.collate.max_len = 64;
    REQUIRE_THROWS_AS(train_base_lm({"x"}, long_len), ConfigError);
}

TEST_CASE("experiment matrix caches shared stages", "[trainer][matrix]") {
    const fs::path dir = fresh_dir("matrix");
    write_texts(dir / "corpus.jsonl", synthetic_corpus({general_task_a(), customized_task()}, 24, 1));
    write_pair_file(dir, "general.jsonl", marker_pairs(general_task_a(), 12, 2));
    write_pair_file(dir, "custom.jsonl", marker_pairs(customized_task(), 12, 3));
    write_pair_file(dir, "general_test.jsonl", marker_pairs(general_task_a(), 8, 4));
    write_pair_file(dir, "custom_test.jsonl", marker_pairs(customized_task(), 8, 5));

    nlohmann::json model = {{"embed_dim", 16}, {"num_layers", 1}, {"num_heads", 2},
                            {"ffn_dim", 32}, {"max_position", 32}};
    nlohmann::json spec = {
        {"defaults", {{"batch_size", 4}, {"max_steps", 2}, {"max_len", 32}}},
        {"composite_of", {"general", "custom"}},
        {"chains",
         {{{"name", "with_grft"},
           {"base", {{"train", "corpus.jsonl"}, {"model", model}}},
           {"grft", {{"train", "general.jsonl"}, {"label", "G"}}},
           {"crft",
            {{"train", "custom.jsonl"},
             {"label", "C"},
             {"eval", {{"general", "general_test.jsonl"}, {"custom", "custom_test.jsonl"}}}}}},
          {{"name", "skip_grft"},
           {"base", {{"train", "corpus.jsonl"}, {"model", model}}},
           {"grft", nullptr},
           {"crft",
            {{"train", "custom.jsonl"},
             {"label", "C"},
             {"eval", {{"general", "general_test.jsonl"}, {"custom", "custom_test.jsonl"}}}}}}}}};
    const MatrixSpec ms = MatrixSpec::from_json(spec, dir);
    REQUIRE(ms.chains.size() == 2);
    REQUIRE(!ms.chains[1].grft.has_value());

    const auto r1 = run_experiment_matrix(ms, dir / "out");
    REQUIRE(r1.stages_trained == 4);  // one shared base, one grft, two crft
    REQUIRE(r1.cache_hits == 1);
    REQUIRE(r1.chains[0].row.grft == "G");
    REQUIRE(r1.chains[1].row.grft == "No");
    REQUIRE(r1.chains[1].row.crft == "C");

    std::ifstream in(dir / "out" / "comparison.csv");
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    REQUIRE(header.rfind("base,grft,crft,composite,custom,general,average,", 0) == 0);
    REQUIRE(row2.find(",No,C,") != std::string::npos);

    // A rerun is served entirely from the cache and reproduces the table.
    const auto r2 = run_experiment_matrix(ms, dir / "out");
    REQUIRE(r2.stages_trained == 0);
    REQUIRE(r2.cache_hits == 5);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(r2.chains[i].final_checkpoint == r1.chains[i].final_checkpoint);
        REQUIRE(r2.chains[i].row.accuracy == r1.chains[i].row.accuracy);
    }
}

TEST_CASE("invalid matrix fails before training", "[trainer][matrix]") {
    const fs::path dir = fresh_dir("matrix_invalid");
    write_texts(dir / "corpus.jsonl", {"abc", "def"});
    write_pair_file(dir, "p.jsonl", toy_pairs());
    nlohmann::json good_chain = {{"name", "ok"},
                                 {"base", {{"train", "corpus.jsonl"}}},
                                 {"grft", nullptr},
                                 {"crft", {{"train", "p.jsonl"}}}};
    nlohmann::json bad_chain = {{"name", "bad"},
                                {"base", {{"train", "corpus.jsonl"}}},
                                {"grft", nullptr},
                                {"crft", {{"train", "missing.jsonl"}}}};
    const MatrixSpec ms =
        MatrixSpec::from_json({{"chains", {good_chain, bad_chain}}}, dir);
    REQUIRE_THROWS_AS(run_experiment_matrix(ms, dir / "out"), ConfigError);
    REQUIRE((!fs::exists(dir / "out" / "cache") || fs::is_empty(dir / "out" / "cache")));

    nlohmann::json batch_one = good_chain;
    batch_one["crft"]["batch_size"] = 1;
    REQUIRE_THROWS_AS(
        run_experiment_matrix(MatrixSpec::from_json({{"chains", {batch_one}}}, dir), dir / "out"),
        ConfigError);
    REQUIRE_THROWS_AS(MatrixSpec::from_json({{"chains", {{{"name", "x"}}}}}, dir), ConfigError);
}
