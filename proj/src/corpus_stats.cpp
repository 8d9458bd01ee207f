// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/corpus_stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rmlab/errors.hpp"
#include "rmlab/log.hpp"

namespace rmlab {

namespace {

bool is_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }
char lower(char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; }

std::optional<double> mean_of(const std::vector<ResponseStats>& all,
                              std::optional<double> ResponseStats::*field) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : all) {
        if (s.*field) {
            total += *(s.*field);
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return total / static_cast<double>(n);
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    bool in_token = false;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
        }
        cur.clear();
        in_token = false;
    };
    for (char c : text) {
        if (is_space(c)) {
            if (in_token) {
                flush();
            }
            continue;
        }
        in_token = true;
        if (is_letter(c)) {
            cur += lower(c);
        }
    }
    flush();
    return out;
}

std::size_t count_sentences(std::string_view text) {
    std::size_t count = 0;
    std::size_t start = 0;
    auto close = [&](std::size_t end) {
        if (!words_of(text.substr(start, end - start)).empty()) {
            ++count;
        }
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
            close(i + 1);
        }
    }
    if (start < text.size()) {
        close(text.size());
    }
    return count;
}

std::size_t count_syllables(std::string_view word) {
    std::size_t groups = 0;
    bool prev_vowel = false;
    for (char c : word) {
        const bool v = is_vowel(lower(c));
        if (v && !prev_vowel) {
            ++groups;
        }
        prev_vowel = v;
    }
    const std::size_t n = word.size();
    const bool lone_final_e = n >= 2 && lower(word[n - 1]) == 'e' && !is_vowel(lower(word[n - 2]));
    if (lone_final_e && groups > 1) {
        --groups;
    }
    return groups;
}

ResponseStats response_stats(std::string_view text) {
    ResponseStats s;
    const auto words = words_of(text);
    s.word_count = words.size();
    s.sentence_count = count_sentences(text);
    if (words.empty()) {
        return s;
    }
    std::set<std::string> unique(words.begin(), words.end());
    for (const auto& w : words) {
        const std::size_t syl = count_syllables(w);
        s.syllable_count += syl;
        s.complex_word_count += syl >= 3 ? 1 : 0;
        s.letter_count += w.size();
    }
    const double W = static_cast<double>(s.word_count);
    const double S = static_cast<double>(s.sentence_count);
    s.lexical_diversity = static_cast<double>(unique.size()) / W;
    s.flesch_reading_ease = 206.835 - 1.015 * (W / S) - 84.6 * (static_cast<double>(s.syllable_count) / W);
    s.gunning_fog = 0.4 * (W / S + 100.0 * static_cast<double>(s.complex_word_count) / W);
    const double L = 100.0 * static_cast<double>(s.letter_count) / W;
    const double Sp = 100.0 * S / W;
    s.coleman_liau = 0.0588 * L - 0.296 * Sp - 15.8;
    return s;
}

nlohmann::ordered_json ResponseStats::to_json() const {
    return {{"sentence_count", sentence_count},
            {"word_count", word_count},
            {"syllable_count", syllable_count},
            {"complex_word_count", complex_word_count},
            {"letter_count", letter_count},
            {"lexical_diversity", optional_json(lexical_diversity)},
            {"flesch_reading_ease", optional_json(flesch_reading_ease)},
            {"gunning_fog", optional_json(gunning_fog)},
            {"coleman_liau", optional_json(coleman_liau)}};
}

AggregateStats aggregate_stats(const std::vector<std::string>& responses) {
    AggregateStats a;
    a.responses = responses.size();
    std::vector<ResponseStats> all;
    all.reserve(responses.size());
    for (const auto& r : responses) {
        all.push_back(response_stats(r));
        a.sentence_count += static_cast<double>(all.back().sentence_count);
        a.word_count += static_cast<double>(all.back().word_count);
    }
    if (!all.empty()) {
        a.sentence_count /= static_cast<double>(all.size());
        a.word_count /= static_cast<double>(all.size());
    }
    a.lexical_diversity = mean_of(all, &ResponseStats::lexical_diversity);
    a.flesch_reading_ease = mean_of(all, &ResponseStats::flesch_reading_ease);
    a.gunning_fog = mean_of(all, &ResponseStats::gunning_fog);
    a.coleman_liau = mean_of(all, &ResponseStats::coleman_liau);
    return a;
}

nlohmann::ordered_json AggregateStats::to_json() const {
    return {{"responses", responses},
            {"sentence_count", sentence_count},
            {"word_count", word_count},
            {"lexical_diversity", optional_json(lexical_diversity)},
            {"flesch_reading_ease", optional_json(flesch_reading_ease)},
            {"gunning_fog", optional_json(gunning_fog)},
            {"coleman_liau", optional_json(coleman_liau)}};
}

std::vector<std::string> tfidf_terms(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i < text.size() && is_letter(text[i])) {
            cur += lower(text[i]);
            continue;
        }
        if (cur.size() >= 2) {
            out.push_back(cur);
        }
        cur.clear();
    }
    return out;
}

double TfidfMatrix::at(const std::string& doc, const std::string& term) const {
    const auto d = score.find(doc);
    if (d == score.end()) {
        return 0.0;
    }
    const auto t = d->second.find(term);
    return t == d->second.end() ? 0.0 : t->second;
}

TfidfMatrix tfidf_matrix(const std::map<std::string, std::string>& docs) {
    TfidfMatrix m;
    std::map<std::string, std::size_t> df;
    for (const auto& [name, text] : docs) {
        const auto terms = tfidf_terms(text);
        if (terms.empty()) {
            logger()->warn("tf-idf: document '{}' has no terms; omitted", name);
            continue;
        }
        std::map<std::string, std::size_t> counts;
        for (const auto& t : terms) {
            ++counts[t];
        }
        auto& tf = m.tf[name];
        for (const auto& [t, c] : counts) {
            tf[t] = static_cast<double>(c) / static_cast<double>(terms.size());
            ++df[t];
        }
        m.documents.push_back(name);
    }
    if (m.documents.size() < 2) {
        throw ContractError("tf-idf needs at least two non-empty documents");
    }
    const double D = static_cast<double>(m.documents.size());
    for (const auto& [t, n] : df) {
        m.idf[t] = std::log((D + 1.0) / static_cast<double>(n)) + 1.0;
    }
    for (const auto& [doc, tf] : m.tf) {
        auto& row = m.score[doc];
        for (const auto& [t, v] : tf) {
            row[t] = v * m.idf.at(t);
        }
    }
    return m;
}

namespace {

bool ranked_before(const TermScore& a, const TermScore& b) {
    return a.score != b.score ? a.score > b.score : a.term < b.term;
}

}  // namespace

DomainTfidf tfidf_domains(const std::map<std::string, std::string>& docs,
                          std::size_t stopword_count, std::size_t top_k) {
    const TfidfMatrix m = tfidf_matrix(docs);
    std::map<std::string, double> best;
    for (const auto& [doc, row] : m.score) {
        for (const auto& [t, v] : row) {
            auto [it, inserted] = best.emplace(t, v);
            if (!inserted) {
                it->second = std::max(it->second, v);
            }
        }
    }
    std::vector<TermScore> global;
    for (const auto& [t, v] : best) {
        global.push_back({t, v});
    }
    std::sort(global.begin(), global.end(), ranked_before);
    DomainTfidf out;
    std::set<std::string> stop;
    for (std::size_t i = 0; i < std::min(stopword_count, global.size()); ++i) {
        out.stopwords.push_back(global[i].term);
        stop.insert(global[i].term);
    }
    for (const auto& [doc, row] : m.score) {
        std::vector<TermScore> terms;
        for (const auto& [t, v] : row) {
            if (!stop.count(t)) {
                terms.push_back({t, v});
            }
        }
        std::sort(terms.begin(), terms.end(), ranked_before);
        if (terms.size() > top_k) {
            terms.resize(top_k);
        }
        out.domains[doc] = std::move(terms);
    }
    return out;
}

nlohmann::ordered_json corpus_report(const std::vector<DomainRecord>& records,
                                     std::size_t stopword_count, std::size_t top_k) {
    std::map<std::string, std::vector<std::string>> responses;
    for (const auto& r : records) {
        for (const auto& [domain, text] : r.responses) {
            responses[domain].push_back(text);
        }
    }
    std::map<std::string, std::string> docs;
    for (const auto& [domain, texts] : responses) {
        std::string joined;
        for (const auto& t : texts) {
            joined += t;
            joined += '\n';
        }
        docs[domain] = std::move(joined);
    }
    const DomainTfidf tfidf = tfidf_domains(docs, stopword_count, top_k);
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& [domain, texts] : responses) {
        nlohmann::ordered_json terms = nlohmann::ordered_json::array();
        const auto it = tfidf.domains.find(domain);
        if (it != tfidf.domains.end()) {
            for (const auto& t : it->second) {
                terms.push_back({{"term", t.term}, {"score", t.score}});
            }
        }
        out.push_back({{"domain", domain}, {"terms", terms}, {"stats", aggregate_stats(texts).to_json()}});
    }
    return out;
}

}  // namespace rmlab
