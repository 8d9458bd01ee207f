// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "rmlab/data.hpp"
#include "rmlab/errors.hpp"

using namespace rmlab;
namespace fs = std::filesystem;

namespace {

DomainRecord full_record(const std::string& query) {
    DomainRecord r;
    r.query = query;
    for (auto d : kDomains) {
        r.responses[std::string(d)] = std::string(d) + " answer to " + query;
    }
    return r;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("rmlab_test_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TokenSequence plain(const std::vector<TokenId>& ids) {
    return TokenSequence{ids, std::vector<Segment>(ids.size(), Segment::response)};
}

}  // namespace

TEST_CASE("build_dsp_pairs counts", "[data]") {
    std::vector<DomainRecord> one = {full_record("q")};
    for (auto target : kDomains) {
        auto res = build_dsp_pairs(one, target);
        REQUIRE(res.pairs.size() == 4);
        REQUIRE(res.skipped == 0);
        for (const auto& p : res.pairs) {
            REQUIRE(p.chosen == one[0].responses.at(std::string(target)));
            REQUIRE(p.domain == std::string(target));
            REQUIRE(p.chosen != p.rejected);
        }
    }

    std::vector<DomainRecord> many;
    for (int i = 0; i < 13000; ++i) {
        many.push_back(full_record("query " + std::to_string(i)));
    }
    REQUIRE(build_dsp_pairs(many, "academy").pairs.size() == 52000);

    DomainRecord lonely;
    lonely.query = "q";
    lonely.responses["academy"] = "a";
    auto res = build_dsp_pairs({lonely}, "academy");
    REQUIRE(res.pairs.empty());
    REQUIRE(res.skipped == 1);

    REQUIRE_THROWS_AS(build_dsp_pairs(one, "sports"), ConfigError);
}

TEST_CASE("build_dsp_pairs order and count property", "[data][property]") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<DomainRecord> records;
        std::size_t expected = 0, skipped = 0;
        const std::string target = std::string(kDomains[rng.below(kDomains.size())]);
        for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) {
            DomainRecord r;
            r.query = "q" + std::to_string(i);
            for (auto d : kDomains) {
                if (rng.bernoulli(0.6)) {
                    r.responses[std::string(d)] = std::string(d) + r.query;
                }
            }
            if (r.responses.count(target) && r.responses.size() >= 2) {
                expected += r.responses.size() - 1;
            } else {
                ++skipped;
            }
            records.push_back(r);
        }
        auto res = build_dsp_pairs(records, target);
        REQUIRE(res.pairs.size() == expected);
        REQUIRE(res.skipped == skipped);
        // Rejected domains appear in sorted order within each query.
        for (std::size_t i = 1; i < res.pairs.size(); ++i) {
            if (res.pairs[i].prompt == res.pairs[i - 1].prompt) {
                REQUIRE(res.pairs[i - 1].rejected < res.pairs[i].rejected);
            }
        }
    }
}

TEST_CASE("pairs_from_scores", "[data]") {
    REQUIRE(pairs_from_scores("p", {{"a", 2}, {"b", 1}}).size() == 1);
    REQUIRE(pairs_from_scores("p", {{"a", 5}, {"b", 5}}).empty());
    auto three = pairs_from_scores("p", {{"a", 3}, {"b", 2}, {"c", 1}});
    REQUIRE(three.size() == 3);
    REQUIRE(pairs_from_scores("p", {{"same", 3}, {"same", 1}}).empty());
}

TEST_CASE("pairs_from_scores matches brute force", "[data][property]") {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<ScoredResponse> rs;
        for (std::size_t i = 0, n = rng.below(7); i < n; ++i) {
            rs.push_back({"t" + std::to_string(rng.below(4)), static_cast<double>(rng.below(4))});
        }
        std::multiset<std::pair<std::string, std::string>> expect;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            for (std::size_t j = 0; j < rs.size(); ++j) {
                if (i < j && rs[i].text != rs[j].text && rs[i].score != rs[j].score) {
                    const bool i_wins = rs[i].score > rs[j].score;
                    expect.insert(i_wins ? std::pair{rs[i].text, rs[j].text}
                                         : std::pair{rs[j].text, rs[i].text});
                }
            }
        }
        std::multiset<std::pair<std::string, std::string>> got;
        for (const auto& p : pairs_from_scores("p", rs)) {
            got.insert({p.chosen, p.rejected});
        }
        REQUIRE(got == expect);
    }
}

TEST_CASE("dedup_invalid", "[data]") {
    REQUIRE(dedup_invalid({}).empty());
    REQUIRE(dedup_invalid({{"p", "x", "x", "s", std::nullopt}}).empty());

    Rng rng(21);
    std::vector<PreferencePair> pairs;
    std::set<std::size_t> planted;
    while (planted.size() < 7) {
        planted.insert(rng.below(100));
    }
    for (std::size_t i = 0; i < 100; ++i) {
        const std::string c = "chosen " + std::to_string(i);
        pairs.push_back({"p" + std::to_string(i), c, planted.count(i) ? c : "rejected", "s", std::nullopt});
    }
    auto kept = dedup_invalid(pairs);
    REQUIRE(kept.size() == 93);
    for (std::size_t i = 1; i < kept.size(); ++i) {
        REQUIRE(std::stoi(kept[i - 1].prompt.substr(1)) < std::stoi(kept[i].prompt.substr(1)));
    }
}

TEST_CASE("split", "[data]") {
    std::vector<int> items(100);
    for (int i = 0; i < 100; ++i) {
        items[i] = i;
    }
    auto [train, test] = split(items, SplitRatio{}, 42);
    REQUIRE(train.size() == 95);
    REQUIRE(test.size() == 5);
    auto again = split(items, SplitRatio{}, 42);
    REQUIRE(again.first == train);
    REQUIRE(again.second == test);
    REQUIRE(split(items, SplitRatio{}, 43).first != train);

    auto tiny = split(std::vector<int>{7}, SplitRatio{}, 1);
    REQUIRE(tiny.first.empty());
    REQUIRE(tiny.second == std::vector<int>{7});

    REQUIRE_THROWS_AS(split(items, SplitRatio{0.9, 0.05}, 1), ConfigError);
    REQUIRE_THROWS_AS(split(items, SplitRatio{1.0, 0.0}, 1), ConfigError);
    REQUIRE_THROWS_AS(split(items, SplitRatio{-0.5, 1.5}, 1), ConfigError);
}

TEST_CASE("split partitions are disjoint and exhaustive", "[data][property]") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = rng.below(200);
        std::vector<std::size_t> items(n);
        for (std::size_t i = 0; i < n; ++i) {
            items[i] = i;
        }
        const double tr = 0.05 + 0.9 * rng.uniform();
        const SplitRatio ratio{tr, 1.0 - tr};
        auto [a, b] = split(items, ratio, trial);
        REQUIRE(a.size() == static_cast<std::size_t>(std::floor(n * tr + 1e-9)));
        std::vector<std::size_t> all = a;
        all.insert(all.end(), b.begin(), b.end());
        std::sort(all.begin(), all.end());
        REQUIRE(all == items);
    }
}

TEST_CASE("collate truncation and padding", "[data]") {
    std::vector<TokenId> ten = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CollateOptions opt;
    opt.max_len = 4;
    auto b = collate({plain(ten)}, opt);
    REQUIRE(decollate(b)[0] == std::vector<TokenId>{6, 7, 8, 9});
    opt.trunc_side = Side::right;
    REQUIRE(decollate(collate({plain(ten)}, opt))[0] == std::vector<TokenId>{0, 1, 2, 3});

    opt.max_len = 10;
    auto exact = collate({plain(ten)}, opt);
    REQUIRE(exact.ids == ten);
    REQUIRE(exact.length == 10);

    CollateOptions pad;
    pad.max_len = 5;
    auto two = collate({plain({1, 2, 3}), plain({1, 2, 3, 4, 5})}, pad);
    REQUIRE(two.length == 5);
    REQUIRE(std::vector<std::uint8_t>(two.attention_mask.begin(), two.attention_mask.begin() + 5) ==
            std::vector<std::uint8_t>{1, 1, 1, 0, 0});
    REQUIRE(std::vector<std::uint8_t>(two.attention_mask.begin() + 5, two.attention_mask.end()) ==
            std::vector<std::uint8_t>{1, 1, 1, 1, 1});
    REQUIRE(two.last_index == std::vector<std::size_t>{2, 4});

    pad.pad_side = Side::left;
    auto left = collate({plain({1, 2, 3}), plain({1, 2, 3, 4, 5})}, pad);
    REQUIRE(std::vector<std::uint8_t>(left.attention_mask.begin(), left.attention_mask.begin() + 5) ==
            std::vector<std::uint8_t>{0, 0, 1, 1, 1});
    REQUIRE(left.last_index == std::vector<std::size_t>{4, 4});
    REQUIRE(left.positions[2] == 0);
    REQUIRE(left.positions[4] == 2);

    CollateOptions zero;
    zero.max_len = 0;
    REQUIRE_THROWS_AS(collate({plain(ten)}, zero), ConfigError);
}

TEST_CASE("collate masks follow segments", "[data]") {
    ByteTokenizer tok;
    auto seq = encode_example(tok, "ab", "cd");
    REQUIRE(seq.ids == std::vector<TokenId>{ByteTokenizer::kBos, 97, 98, 99, 100, ByteTokenizer::kEos});

    CollateOptions opt;
    auto b = collate({seq}, opt);
    REQUIRE(b.loss_mask == std::vector<std::uint8_t>{0, 1, 1, 1, 1, 0});
    REQUIRE(b.eos_index[0] == 5u);
    opt.eos_is_target = true;
    REQUIRE(collate({seq}, opt).loss_mask == std::vector<std::uint8_t>{0, 1, 1, 1, 1, 1});
    opt.eos_is_target = false;
    opt.lm_targets = LmTargets::response_only;
    REQUIRE(collate({seq}, opt).loss_mask == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 0});
    opt.lm_targets = LmTargets::none;
    REQUIRE(collate({seq}, opt).loss_mask == std::vector<std::uint8_t>(6, 0));

    // Right truncation drops EOS; left truncation makes the first kept token a non-target.
    CollateOptions cut;
    cut.max_len = 4;
    cut.trunc_side = Side::right;
    REQUIRE_FALSE(collate({seq}, cut).eos_index[0].has_value());
    cut.trunc_side = Side::left;
    REQUIRE(collate({seq}, cut).loss_mask == std::vector<std::uint8_t>{0, 1, 1, 0});
}

TEST_CASE("collate then decollate recovers truncated sequences", "[data][property]") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenSequence> seqs;
        std::vector<std::vector<TokenId>> raw;
        for (std::size_t i = 0, n = 1 + rng.below(5); i < n; ++i) {
            std::vector<TokenId> ids(1 + rng.below(20));
            for (auto& id : ids) {
                id = static_cast<TokenId>(rng.below(256));
            }
            raw.push_back(ids);
            seqs.push_back(plain(ids));
        }
        CollateOptions opt;
        opt.max_len = 1 + rng.below(16);
        opt.pad_side = rng.bernoulli(0.5) ? Side::left : Side::right;
        opt.trunc_side = rng.bernoulli(0.5) ? Side::left : Side::right;
        auto b = collate(seqs, opt);
        REQUIRE(b.length <= opt.max_len);
        auto back = decollate(b);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            auto expect = raw[i];
            if (expect.size() > opt.max_len) {
                expect = opt.trunc_side == Side::left
                             ? std::vector<TokenId>(expect.end() - opt.max_len, expect.end())
                             : std::vector<TokenId>(expect.begin(), expect.begin() + opt.max_len);
            }
            REQUIRE(back[i] == expect);
            REQUIRE(b.attention_mask[b.at(i, b.last_index[i])] == 1);
        }
        for (std::size_t k = 0; k < b.ids.size(); ++k) {
            REQUIRE((b.attention_mask[k] == 0) == (b.ids[k] == ByteTokenizer::kPad));
        }
    }
}

TEST_CASE("collate_pairs places chosen rows first", "[data]") {
    ByteTokenizer tok;
    std::vector<PreferencePair> pairs = {{"p", "good", "bad", "s", std::nullopt},
                                         {"q", "yes", "no", "s", std::nullopt}};
    auto b = collate_pairs(tok, pairs, CollateOptions{});
    REQUIRE(b.batch == 4);
    auto rows = decollate(b);
    REQUIRE(tok.decode(rows[0]) == "pgood");
    REQUIRE(tok.decode(rows[1]) == "qyes");
    REQUIRE(tok.decode(rows[2]) == "pbad");
    REQUIRE(tok.decode(rows[3]) == "qno");
}

TEST_CASE("jsonl round trip and schema", "[data]") {
    PreferencePair p{"prompt \"x\"", "good\n", "bad", "dsp", std::string("academy")};
    REQUIRE(to_jsonl_line(p) ==
            R"({"prompt":"prompt \"x\"","chosen":"good\n","rejected":"bad","source":"dsp","domain":"academy"})");
    PreferencePair q{"a", "b", "c", "s", std::nullopt};
    REQUIRE(to_jsonl_line(q) == R"({"prompt":"a","chosen":"b","rejected":"c","source":"s","domain":null})");

    auto dir = temp_dir("jsonl");
    write_pairs(dir / "pairs.jsonl", {p, q});
    REQUIRE(read_pairs(dir / "pairs.jsonl") == std::vector<PreferencePair>{p, q});

    std::vector<DomainRecord> records = {full_record("one"), full_record("two")};
    write_records(dir / "nested" / "records.jsonl", records);
    REQUIRE(read_records(dir / "nested" / "records.jsonl") == records);

    write_texts(dir / "texts.jsonl", {"a", "b\nc"});
    REQUIRE(read_texts(dir / "texts.jsonl") == std::vector<std::string>{"a", "b\nc"});
}

TEST_CASE("malformed jsonl is a line-numbered parse error", "[data]") {
    auto dir = temp_dir("bad");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"prompt":"a","chosen":"b","rejected":"c","source":"s","domain":null})" << "\n";
        out << "\n";
        out << R"({"prompt":"a","chosen":"b"})" << "\n";
    }
    try {
        read_pairs(dir / "bad.jsonl");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.line() == 3);
    }
    REQUIRE_THROWS_AS(pair_from_json_line("not json", "x", 1), ParseError);
    REQUIRE_THROWS_AS(pair_from_json_line(R"({"prompt":"a","chosen":"b","rejected":7,"source":"s"})", "x", 1),
                      ParseError);
    REQUIRE_THROWS_AS(record_from_json_line(R"({"query":"","responses":{}})", "x", 1), ParseError);
    REQUIRE_THROWS_AS(record_from_json_line(R"({"query":"q","responses":{"pluto":"x"}})", "x", 1),
                      ParseError);
    REQUIRE_THROWS_AS(read_pairs(dir / "missing.jsonl"), DataError);
}

TEST_CASE("enum strings", "[data]") {
    REQUIRE(side_from_string("left") == Side::left);
    REQUIRE(to_string(Side::right) == "right");
    REQUIRE(lm_targets_from_string(to_string(LmTargets::response_only)) == LmTargets::response_only);
    REQUIRE_THROWS_AS(side_from_string("up"), ConfigError);
}
