// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Preference datasets: JSONL formats, pair construction, cleaning, splitting
// and collation into padded token batches.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rmlab/errors.hpp"
#include "rmlab/rng.hpp"
#include "rmlab/tokenizer.hpp"

namespace rmlab {

inline constexpr std::array<std::string_view, 5> kDomains = {
    "academy", "business", "entertainment", "literature", "normal"};

bool is_known_domain(std::string_view name);

struct DomainRecord {
    std::string query;
    std::map<std::string, std::string> responses;  // domain -> text, sorted by name

    bool operator==(const DomainRecord&) const = default;
};

struct PreferencePair {
    std::string prompt;
    std::string chosen;
    std::string rejected;
    std::string source;
    std::optional<std::string> domain;

    bool operator==(const PreferencePair&) const = default;
};

// ---- JSONL ------------------------------------------------------------------

std::string to_jsonl_line(const PreferencePair& pair);
std::string to_jsonl_line(const DomainRecord& record);
PreferencePair pair_from_json_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no);
DomainRecord record_from_json_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no);

/// Blank lines are ignored; any malformed line raises ParseError with its number.
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);
std::vector<DomainRecord> read_records(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);
void write_records(const std::filesystem::path& path, const std::vector<DomainRecord>& records);

/// Plain text corpus: each line {"text": "..."}.
std::vector<std::string> read_texts(const std::filesystem::path& path);
void write_texts(const std::filesystem::path& path, const std::vector<std::string>& texts);

// ---- pair construction ------------------------------------------------------

struct DspResult {
    std::vector<PreferencePair> pairs;
    std::size_t skipped = 0;  // records lacking the target or any other domain
};

/// Target domain's response is preferred over every other present domain,
/// emitted in sorted domain order. Throws ConfigError for unknown names.
DspResult build_dsp_pairs(const std::vector<DomainRecord>& records, std::string_view target_domain,
                          std::string_view source = "dsp");

struct ScoredResponse {
    std::string text;
    double score = 0.0;
};

/// One pair for each unordered response pair with distinct scores and texts.
std::vector<PreferencePair> pairs_from_scores(const std::string& prompt,
                                              const std::vector<ScoredResponse>& responses,
                                              std::string_view source = "scored");

/// Drops pairs whose chosen and rejected texts are identical; keeps order.
std::vector<PreferencePair> dedup_invalid(const std::vector<PreferencePair>& pairs);

// ---- split --------------------------------------------------------------------

struct SplitRatio {
    double train = 0.95;
    double test = 0.05;
};

void validate_split_ratio(const SplitRatio& ratio);

/// Train size is floor(n * train); the remainder goes to test.
std::size_t split_train_size(std::size_t n, const SplitRatio& ratio);

/// Seeded shuffle, then partition. Disjoint and exhaustive.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& items,
                                                const SplitRatio& ratio, std::uint64_t seed) {
    validate_split_ratio(ratio);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train = split_train_size(items.size(), ratio);
    std::pair<std::vector<T>, std::vector<T>> out;
    out.first.reserve(n_train);
    out.second.reserve(items.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? out.first : out.second).push_back(items[order[i]]);
    }
    return out;
}

// ---- collation ----------------------------------------------------------------

enum class Side { left, right };

enum class Segment : std::uint8_t { special, prompt, response };

/// Which tokens count as language-modeling targets.
enum class LmTargets {
    prompt_and_response,  // prompt and response tokens
    response_only,
    none,
};

Side side_from_string(std::string_view s);
std::string to_string(Side s);
LmTargets lm_targets_from_string(std::string_view s);
std::string to_string(LmTargets t);

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<Segment> segments;
};

/// BOS + prompt + response + EOS.
TokenSequence encode_example(const ByteTokenizer& tok, std::string_view prompt,
                             std::string_view response);
/// BOS + text + EOS with the body tagged as response.
TokenSequence encode_text(const ByteTokenizer& tok, std::string_view text);

struct CollateOptions {
    std::size_t max_len = 128;
    Side pad_side = Side::right;
    Side trunc_side = Side::left;
    LmTargets lm_targets = LmTargets::prompt_and_response;
    bool eos_is_target = false;
    /// Pad every row to at least this length (0: longest kept sequence).
    std::size_t pad_to = 0;
};

/// Row-major [batch x length] token matrix with its masks.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;  // 0 exactly at PAD
    /// 1 where the token is a next-token target (predicted from position t-1).
    std::vector<std::uint8_t> loss_mask;
    std::vector<std::int32_t> positions;  // index among the row's real tokens
    std::vector<std::size_t> last_index;
    std::vector<std::optional<std::size_t>> eos_index;

    std::size_t at(std::size_t b, std::size_t t) const { return b * length + t; }
};

/// Truncates to max_len (keeping the tail for Side::left), pads on pad_side,
/// and fills masks. Throws ConfigError for max_len < 1.
TokenBatch collate(const std::vector<TokenSequence>& sequences, const CollateOptions& options);

/// Recovers each row's kept (post-truncation) token ids.
std::vector<std::vector<TokenId>> decollate(const TokenBatch& batch);

/// Rows [0, n) are chosen, rows [n, 2n) rejected, each BOS + prompt + response + EOS.
TokenBatch collate_pairs(const ByteTokenizer& tok, const std::vector<PreferencePair>& pairs,
                         const CollateOptions& options);

}  // namespace rmlab
