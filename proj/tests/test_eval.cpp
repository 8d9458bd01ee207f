// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "rmlab/errors.hpp"
#include "rmlab/eval.hpp"
#include "rmlab/rng.hpp"
#include "support/fixtures.hpp"

using namespace rmlab;
using namespace rmlab::testing;

TEST_CASE("accuracy from hand scores", "[eval]") {
    const std::vector<double> good = {1.0, 0.5, -2.0};
    const std::vector<double> bad = {0.0, 0.2, 1.0};
    const auto r = accuracy_from_scores(good, bad);
    REQUIRE(r.correct == 2);
    REQUIRE(r.total == 3);
    REQUIRE(r.accuracy == 2.0 / 3.0);
    REQUIRE(r.ties == 0);

    const std::vector<double> g2 = {1.0, 1.0, 3.0, 2.0};
    const std::vector<double> b2 = {1.0, 0.0, 3.0, 5.0};
    const auto t = accuracy_from_scores(g2, b2);
    REQUIRE(t.correct == 1);
    REQUIRE(t.ties == 2);
    REQUIRE(t.accuracy == 0.25);

    REQUIRE_THROWS_AS(accuracy_from_scores({}, {}), ContractError);
    REQUIRE_THROWS_AS(accuracy_from_scores(good, b2), ContractError);
}

TEST_CASE("zero reward head ties everything", "[eval]") {
    RewardModel model(tiny_config(), 1);
    const auto r = preference_accuracy(model, toy_pairs(), CollateOptions{});
    REQUIRE(r.accuracy == 0.0);
    REQUIRE(r.ties == r.total);
    REQUIRE(r.total == 3);
    REQUIRE_THROWS_AS(preference_accuracy(model, {}, CollateOptions{}), ContractError);
}

TEST_CASE("accuracy matches direct scoring", "[eval]") {
    RewardModel model(tiny_config(), 2);
    randomize_reward_head(model, 3);
    auto pairs = toy_pairs();
    for (auto p : toy_pairs()) {
        std::swap(p.chosen, p.rejected);
        pairs.push_back(p);
    }
    ByteTokenizer tok;
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        const double g = model.reward_score(collate({encode_example(tok, p.prompt, p.chosen)}, {})).item();
        const double b = model.reward_score(collate({encode_example(tok, p.prompt, p.rejected)}, {})).item();
        correct += g > b ? 1 : 0;
    }
    // Swapped copies make the result exactly one half unless a pair ties.
    for (std::size_t batch : {1, 2, 32}) {
        const auto r = preference_accuracy(model, pairs, CollateOptions{}, batch);
        REQUIRE(r.correct == correct);
        REQUIRE(r.correct == 3);
    }
}

TEST_CASE("geometric mean", "[eval]") {
    REQUIRE(std::abs(geometric_mean(0.7300, 0.7253) - 0.7276) <= 1e-4);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform();
        REQUIRE(std::abs(geometric_mean(x, x) - x) < 1e-15);
        REQUIRE(geometric_mean(0.0, x) == 0.0);
    }
    REQUIRE_THROWS_AS(geometric_mean(1.2, 0.5), ContractError);
    REQUIRE_THROWS_AS(geometric_mean(0.5, -0.1), ContractError);
    REQUIRE_THROWS_AS(geometric_mean(std::nan(""), 0.5), ContractError);
}

TEST_CASE("average accuracy", "[eval]") {
    const std::vector<double> row = {0.8094, 0.7816, 0.8829, 0.8491};
    REQUIRE(std::abs(average_accuracy(row) - 0.8307) <= 1e-4);
    REQUIRE_THROWS_AS(average_accuracy({}), ContractError);
}

TEST_CASE("accuracy gain", "[eval]") {
    EvalReport ref, cur;
    ref.sets["hh"] = {0.7276, 100, 0};
    cur.sets["hh"] = {0.7176, 100, 1};
    REQUIRE(std::abs(accuracy_gain(cur, ref).at("hh") + 0.0100) < 1e-12);
    REQUIRE(accuracy_gain(ref, ref).at("hh") == 0.0);
    cur.sets["extra"] = {0.5, 10, 0};
    REQUIRE_THROWS_AS(accuracy_gain(cur, ref), ContractError);
    ref.sets["other"] = {0.5, 10, 0};
    REQUIRE_THROWS_AS(accuracy_gain(cur, ref), ContractError);
}

TEST_CASE("evaluation report", "[eval]") {
    RewardModel model(tiny_config(), 4);
    randomize_reward_head(model, 5);
    auto pairs = toy_pairs();
    NamedPairSets sets = {{"a", pairs}, {"b", {pairs[0]}}};
    auto r = evaluate(model, sets, {}, "abc", {"a", "b"});
    REQUIRE(r.sets.at("a").pairs == 3);
    REQUIRE(r.composite.has_value());
    REQUIRE(*r.composite == geometric_mean(r.sets.at("a").accuracy, r.sets.at("b").accuracy));
    auto back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
    REQUIRE(back.sets.at("a").accuracy == r.sets.at("a").accuracy);
    REQUIRE(back.composite == r.composite);
    REQUIRE(back.checkpoint_hash == "abc");

    // Composite only when both named sets exist.
    auto partial = evaluate(model, {{"a", pairs}}, {}, "x", {"a", "missing"});
    REQUIRE_FALSE(partial.composite.has_value());
}

TEST_CASE("comparison csv", "[eval]") {
    auto dir = fresh_dir("eval_csv");
    std::vector<ComparisonRow> rows = {
        {"base", "HH", "DSP", {{"academy", 0.5}, {"business", 1.0}}, {{"academy", 0.25}}},
        {"base", "No", "DSP", {{"academy", 0.75}, {"business", 0.25}}, {{"academy", -0.5}}},
    };
    write_comparison_csv(dir / "t.csv", rows);
    std::ifstream in(dir / "t.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    REQUIRE(ss.str() ==
            "base,grft,crft,academy,business,average,gain_academy\n"
            "base,HH,DSP,0.500000,1.000000,0.750000,0.250000\n"
            "base,No,DSP,0.750000,0.250000,0.500000,-0.500000\n");
}
