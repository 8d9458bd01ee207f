// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "rmlab/corpus_stats.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/rng.hpp"

using namespace rmlab;

TEST_CASE("readability on a short sentence", "[stats]") {
    const auto s = response_stats("The cat sat on the mat.");
    REQUIRE(s.word_count == 6);
    REQUIRE(s.sentence_count == 1);
    REQUIRE(s.syllable_count == 6);
    REQUIRE(s.complex_word_count == 0);
    REQUIRE(std::abs(*s.flesch_reading_ease - 116.145) < 1e-3);
    REQUIRE(std::abs(*s.gunning_fog - 2.4) < 1e-3);
    // 17 letters, 6 words, 1 sentence.
    const double L = 17.0 / 6.0 * 100.0, S = 1.0 / 6.0 * 100.0;
    REQUIRE(std::abs(*s.coleman_liau - (0.0588 * L - 0.296 * S - 15.8)) < 1e-12);
    REQUIRE(*s.lexical_diversity == 5.0 / 6.0);
}

TEST_CASE("lexical diversity", "[stats]") {
    REQUIRE(*response_stats("the the the").lexical_diversity == 1.0 / 3.0);
    REQUIRE(*response_stats("The THE the.").lexical_diversity == 1.0 / 3.0);
    REQUIRE(*response_stats("a b c").lexical_diversity == 1.0);
}

TEST_CASE("empty text has absent metrics", "[stats]") {
    for (const char* text : {"", "   ", "123 456 !!!"}) {
        const auto s = response_stats(text);
        REQUIRE(s.word_count == 0);
        REQUIRE_FALSE(s.lexical_diversity);
        REQUIRE_FALSE(s.flesch_reading_ease);
        REQUIRE_FALSE(s.gunning_fog);
        REQUIRE_FALSE(s.coleman_liau);
        REQUIRE(s.to_json()["flesch_reading_ease"].is_null());
    }
}

TEST_CASE("syllable heuristic", "[stats]") {
    REQUIRE(count_syllables("the") == 1);
    REQUIRE(count_syllables("make") == 1);
    REQUIRE(count_syllables("free") == 1);
    REQUIRE(count_syllables("be") == 1);
    REQUIRE(count_syllables("cat") == 1);
    REQUIRE(count_syllables("table") == 1);  // lone final 'e' after a consonant is dropped
    REQUIRE(count_syllables("rhythm") == 1);
    REQUIRE(count_syllables("beautiful") == 3);
    REQUIRE(count_syllables("university") == 5);
    REQUIRE(count_syllables("queue") == 1);
    REQUIRE(count_syllables("") == 0);
    REQUIRE(count_syllables("pfft") == 0);

    const auto s = response_stats("This beautiful university is wonderful.");
    REQUIRE(s.complex_word_count == 3);
}

TEST_CASE("sentences and words", "[stats]") {
    REQUIRE(count_sentences("One. Two! Three? Four") == 4);
    REQUIRE(count_sentences("e.g. this") == 2);  // abbreviations are not special
    REQUIRE(count_sentences("Version 3.5 works.") == 1);
    REQUIRE(count_sentences("... !!") == 0);
    REQUIRE(words_of("Hello, World! it's 42") == std::vector<std::string>{"hello", "world", "its"});
}

TEST_CASE("response stats are pure", "[stats][property]") {
    Rng rng(3);
    const std::string alphabet = "abcde fghij.!? XYZ\n,";
    for (int i = 0; i < 200; ++i) {
        std::string text;
        const auto n = rng.below(80);
        for (std::uint64_t k = 0; k < n; ++k) {
            text += alphabet[rng.below(alphabet.size())];
        }
        const auto a = response_stats(text);
        const auto b = response_stats(text);
        REQUIRE(a.to_json() == b.to_json());
        if (a.word_count > 0) {
            REQUIRE(*a.lexical_diversity > 0.0);
            REQUIRE(*a.lexical_diversity <= 1.0);
        }
    }
}

TEST_CASE("tfidf matches a hand oracle", "[stats][tfidf]") {
    const std::map<std::string, std::string> docs = {
        {"a", "the apple banana apple"},
        {"b", "the banana cherry"},
        {"c", "The cherry apple date"},
        {"d", "the apple, banana; cherry date!"},
    };
    const auto m = tfidf_matrix(docs);
    const double idf4 = std::log(5.0 / 4.0) + 1.0;
    const double idf3 = std::log(5.0 / 3.0) + 1.0;
    const double idf2 = std::log(5.0 / 2.0) + 1.0;
    REQUIRE(std::abs(idf4 - 1.22314) < 1e-5);
    REQUIRE(std::abs(m.idf.at("the") - idf4) < 1e-12);
    REQUIRE(std::abs(m.idf.at("apple") - idf3) < 1e-12);
    REQUIRE(std::abs(m.idf.at("date") - idf2) < 1e-12);

    // Document -> (term, tf) by hand.
    const std::map<std::string, std::map<std::string, double>> tf = {
        {"a", {{"the", 0.25}, {"apple", 0.5}, {"banana", 0.25}}},
        {"b", {{"the", 1.0 / 3}, {"banana", 1.0 / 3}, {"cherry", 1.0 / 3}}},
        {"c", {{"the", 0.25}, {"cherry", 0.25}, {"apple", 0.25}, {"date", 0.25}}},
        {"d", {{"the", 0.2}, {"apple", 0.2}, {"banana", 0.2}, {"cherry", 0.2}, {"date", 0.2}}},
    };
    const std::map<std::string, double> idf = {
        {"the", idf4}, {"apple", idf3}, {"banana", idf3}, {"cherry", idf3}, {"date", idf2}};
    for (const auto& doc : {"a", "b", "c", "d"}) {
        for (const auto& [term, w] : idf) {
            const auto& row = tf.at(doc);
            const double expect = row.contains(term) ? row.at(term) * w : 0.0;
            REQUIRE(std::abs(m.at(doc, term) - expect) < 1e-12);
        }
    }
    REQUIRE(m.at("b", "apple") == 0.0);
}

TEST_CASE("tfidf invariants", "[stats][tfidf][property]") {
    Rng rng(17);
    const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "eps", "zeta",
                                            "eta",   "theta", "iota", "kappa", "lam", "mu"};
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, std::string> docs;
        const auto n_docs = 2 + rng.below(4);
        for (std::uint64_t d = 0; d < n_docs; ++d) {
            std::string text;
            const auto words = 1 + rng.below(30);
            for (std::uint64_t w = 0; w < words; ++w) {
                text += vocab[rng.below(vocab.size())] + " ";
            }
            docs["d" + std::to_string(d)] = text;
        }
        const auto m = tfidf_matrix(docs);
        for (const auto& [doc, row] : m.tf) {
            double total = 0.0;
            for (const auto& [t, v] : row) {
                total += v;
            }
            REQUIRE(std::abs(total - 1.0) < 1e-12);
        }
        std::map<std::string, std::size_t> df;
        for (const auto& [doc, row] : m.tf) {
            for (const auto& [t, v] : row) {
                ++df[t];
            }
        }
        for (const auto& [t1, d1] : df) {
            for (const auto& [t2, d2] : df) {
                if (d1 < d2) {
                    REQUIRE(m.idf.at(t1) > m.idf.at(t2));
                }
            }
        }

        const std::size_t stop = rng.below(15);
        const auto out = tfidf_domains(docs, stop, 5);
        REQUIRE(out.stopwords.size() == std::min(stop, df.size()));
        const std::set<std::string> stops(out.stopwords.begin(), out.stopwords.end());
        for (const auto& [doc, terms] : out.domains) {
            REQUIRE(terms.size() <= 5);
            for (std::size_t i = 0; i < terms.size(); ++i) {
                REQUIRE_FALSE(stops.contains(terms[i].term));
                if (i > 0) {
                    REQUIRE(terms[i - 1].score >= terms[i].score);
                }
            }
        }
    }
}

TEST_CASE("tfidf stopwords are the highest scoring terms", "[stats][tfidf]") {
    const std::map<std::string, std::string> docs = {
        {"x", "common common common rare"},
        {"y", "common other other"},
    };
    const auto m = tfidf_matrix(docs);
    const auto out = tfidf_domains(docs, 1, 10);
    // other: tf 2/3 with idf ln(3/1)+1 beats common's 3/4 with idf ln(3/2)+1.
    REQUIRE(m.at("y", "other") > m.at("x", "common"));
    REQUIRE(out.stopwords == std::vector<std::string>{"other"});
    REQUIRE(out.domains.at("y").size() == 1);
    REQUIRE(out.domains.at("y")[0].term == "common");
}

TEST_CASE("tfidf errors", "[stats][tfidf]") {
    REQUIRE_THROWS_AS(tfidf_matrix({{"a", "words here"}}), ContractError);
    REQUIRE_THROWS_AS(tfidf_matrix({{"a", "words here"}, {"b", "  1 2 "}}), ContractError);
    const auto m = tfidf_matrix({{"a", "one"}, {"b", "two"}, {"c", ""}});
    REQUIRE(m.documents == std::vector<std::string>{"a", "b"});
}

TEST_CASE("corpus report", "[stats]") {
    std::vector<DomainRecord> records = {
        {"q1", {{"academy", "The results are significant."}, {"business", "Buy now."}}},
        {"q2", {{"academy", "Further research is needed."}, {"business", "Profit grows."}}},
    };
    const auto j = corpus_report(records, 0, 3);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    REQUIRE(j[0]["domain"] == "academy");
    REQUIRE(j[0]["stats"]["responses"] == 2);
    REQUIRE(j[0]["terms"].size() == 3);
    REQUIRE(j[1]["domain"] == "business");
}
