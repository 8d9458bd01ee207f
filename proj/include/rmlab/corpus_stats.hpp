// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Response-level readability statistics and domain-level TF-IDF keywords.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/data.hpp"

namespace rmlab {

struct ResponseStats {
    std::size_t sentence_count = 0;
    std::size_t word_count = 0;
    std::size_t syllable_count = 0;
    std::size_t complex_word_count = 0;
    std::size_t letter_count = 0;
    // Absent when the text has no words.
    std::optional<double> lexical_diversity;
    std::optional<double> flesch_reading_ease;
    std::optional<double> gunning_fog;
    std::optional<double> coleman_liau;

    nlohmann::ordered_json to_json() const;
};

/// Whitespace-delimited tokens reduced to their ASCII letters, lowercased;
/// tokens without letters are not words.
std::vector<std::string> words_of(std::string_view text);
/// Segments ended by . ! or ? before whitespace or end of text that contain a word.
std::size_t count_sentences(std::string_view text);
/// Vowel groups [aeiouy]; a final lone 'e' is silent unless it is the only group.
std::size_t count_syllables(std::string_view word);

ResponseStats response_stats(std::string_view text);

/// Means over responses (metrics averaged where defined).
struct AggregateStats {
    std::size_t responses = 0;
    double sentence_count = 0.0;
    double word_count = 0.0;
    std::optional<double> lexical_diversity;
    std::optional<double> flesch_reading_ease;
    std::optional<double> gunning_fog;
    std::optional<double> coleman_liau;

    nlohmann::ordered_json to_json() const;
};

AggregateStats aggregate_stats(const std::vector<std::string>& responses);

/// Lowercased runs of ASCII letters of length >= 2.
std::vector<std::string> tfidf_terms(std::string_view text);

struct TermScore {
    std::string term;
    double score = 0.0;
};

struct TfidfMatrix {
    std::vector<std::string> documents;           // domain names, sorted
    std::map<std::string, double> idf;            // ln((D + 1) / df) + 1
    std::map<std::string, std::map<std::string, double>> tf;     // doc -> term -> tf
    std::map<std::string, std::map<std::string, double>> score;  // doc -> term -> tf * idf

    /// 0 for terms absent from the document.
    double at(const std::string& doc, const std::string& term) const;
};

/// Documents with no terms are dropped with a warning. Needs >= 2 documents.
TfidfMatrix tfidf_matrix(const std::map<std::string, std::string>& docs);

struct DomainTfidf {
    std::vector<std::string> stopwords;
    std::map<std::string, std::vector<TermScore>> domains;
};

/// Removes the `stopword_count` terms with the highest cross-document score,
/// then keeps the `top_k` best remaining terms per domain.
DomainTfidf tfidf_domains(const std::map<std::string, std::string>& docs,
                          std::size_t stopword_count = 100, std::size_t top_k = 100);

/// [{"domain", "terms":[{"term","score"}], "stats":{...}}] for every domain in `records`.
nlohmann::ordered_json corpus_report(const std::vector<DomainRecord>& records,
                                     std::size_t stopword_count = 100, std::size_t top_k = 100);

}  // namespace rmlab
