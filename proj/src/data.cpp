// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/data.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rmlab/log.hpp"

namespace rmlab {

using nlohmann::json;
using nlohmann::ordered_json;

bool is_known_domain(std::string_view name) {
    return std::find(kDomains.begin(), kDomains.end(), name) != kDomains.end();
}

namespace {

std::string dump_line(const ordered_json& j) {
    try {
        return j.dump();
    } catch (const json::exception& e) {
        throw DataError(std::string("cannot serialize record: ") + e.what());
    }
}

const json& require_field(const json& j, const char* key, const std::string& origin,
                          std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(origin, line_no, std::string("missing field \"") + key + "\"");
    }
    return *it;
}

std::string require_string(const json& j, const char* key, const std::string& origin,
                           std::size_t line_no) {
    const auto& v = require_field(j, key, origin, line_no);
    if (!v.is_string()) {
        throw ParseError(origin, line_no, std::string("field \"") + key + "\" must be a string");
    }
    return v.get<std::string>();
}

json parse_object(std::string_view line, const std::string& origin, std::size_t line_no) {
    json j = json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded()) {
        throw ParseError(origin, line_no, "invalid JSON");
    }
    if (!j.is_object()) {
        throw ParseError(origin, line_no, "expected a JSON object");
    }
    return j;
}

template <class Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        fn(std::string_view(line), line_no);
    }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    for (const auto& l : lines) {
        out << l << '\n';
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

}  // namespace

std::string to_jsonl_line(const PreferencePair& pair) {
    ordered_json j;
    j["prompt"] = pair.prompt;
    j["chosen"] = pair.chosen;
    j["rejected"] = pair.rejected;
    j["source"] = pair.source;
    j["domain"] = pair.domain ? ordered_json(*pair.domain) : ordered_json(nullptr);
    return dump_line(j);
}

std::string to_jsonl_line(const DomainRecord& record) {
    ordered_json j;
    j["query"] = record.query;
    j["responses"] = ordered_json::object();
    for (const auto& [domain, text] : record.responses) {
        j["responses"][domain] = text;
    }
    return dump_line(j);
}

PreferencePair pair_from_json_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no) {
    const json j = parse_object(line, origin, line_no);
    PreferencePair p;
    p.prompt = require_string(j, "prompt", origin, line_no);
    p.chosen = require_string(j, "chosen", origin, line_no);
    p.rejected = require_string(j, "rejected", origin, line_no);
    if (auto it = j.find("source"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) {
            throw ParseError(origin, line_no, "field \"source\" must be a string");
        }
        p.source = it->get<std::string>();
    }
    if (auto it = j.find("domain"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) {
            throw ParseError(origin, line_no, "field \"domain\" must be a string or null");
        }
        p.domain = it->get<std::string>();
    }
    return p;
}

DomainRecord record_from_json_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no) {
    const json j = parse_object(line, origin, line_no);
    DomainRecord r;
    r.query = require_string(j, "query", origin, line_no);
    if (r.query.empty()) {
        throw ParseError(origin, line_no, "empty query");
    }
    const auto& responses = require_field(j, "responses", origin, line_no);
    if (!responses.is_object()) {
        throw ParseError(origin, line_no, "field \"responses\" must be an object");
    }
    for (const auto& [domain, text] : responses.items()) {
        if (!is_known_domain(domain)) {
            throw ParseError(origin, line_no, "unknown domain \"" + domain + "\"");
        }
        if (!text.is_string()) {
            throw ParseError(origin, line_no, "response for \"" + domain + "\" must be a string");
        }
        r.responses[domain] = text.get<std::string>();
    }
    return r;
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
    std::vector<PreferencePair> out;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        out.push_back(pair_from_json_line(line, path.string(), n));
    });
    return out;
}

std::vector<DomainRecord> read_records(const std::filesystem::path& path) {
    std::vector<DomainRecord> out;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        out.push_back(record_from_json_line(line, path.string(), n));
    });
    return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
    std::vector<std::string> lines;
    lines.reserve(pairs.size());
    for (const auto& p : pairs) {
        lines.push_back(to_jsonl_line(p));
    }
    write_lines(path, lines);
}

void write_records(const std::filesystem::path& path, const std::vector<DomainRecord>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        lines.push_back(to_jsonl_line(r));
    }
    write_lines(path, lines);
}

std::vector<std::string> read_texts(const std::filesystem::path& path) {
    std::vector<std::string> out;
    for_each_line(path, [&](std::string_view line, std::size_t n) {
        const json j = parse_object(line, path.string(), n);
        out.push_back(require_string(j, "text", path.string(), n));
    });
    return out;
}

void write_texts(const std::filesystem::path& path, const std::vector<std::string>& texts) {
    std::vector<std::string> lines;
    lines.reserve(texts.size());
    for (const auto& t : texts) {
        ordered_json j;
        j["text"] = t;
        lines.push_back(dump_line(j));
    }
    write_lines(path, lines);
}

// ---- pair construction -------------------------------------------------------

DspResult build_dsp_pairs(const std::vector<DomainRecord>& records, std::string_view target_domain,
                          std::string_view source) {
    if (!is_known_domain(target_domain)) {
        throw ConfigError("unknown target domain \"" + std::string(target_domain) + "\"");
    }
    const std::string target(target_domain);
    DspResult result;
    for (const auto& rec : records) {
        auto it = rec.responses.find(target);
        if (it == rec.responses.end() || rec.responses.size() < 2) {
            ++result.skipped;
            continue;
        }
        // std::map iterates in sorted domain order.
        for (const auto& [domain, text] : rec.responses) {
            if (domain == target) {
                continue;
            }
            result.pairs.push_back(
                PreferencePair{rec.query, it->second, text, std::string(source), target});
        }
    }
    return result;
}

std::vector<PreferencePair> pairs_from_scores(const std::string& prompt,
                                              const std::vector<ScoredResponse>& responses,
                                              std::string_view source) {
    std::vector<PreferencePair> out;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        for (std::size_t j = i + 1; j < responses.size(); ++j) {
            const auto& a = responses[i];
            const auto& b = responses[j];
            if (a.score == b.score || a.text == b.text) {
                continue;
            }
            const bool a_wins = a.score > b.score;
            out.push_back(PreferencePair{prompt, a_wins ? a.text : b.text, a_wins ? b.text : a.text,
                                         std::string(source), std::nullopt});
        }
    }
    return out;
}

std::vector<PreferencePair> dedup_invalid(const std::vector<PreferencePair>& pairs) {
    std::vector<PreferencePair> out;
    out.reserve(pairs.size());
    std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
                 [](const PreferencePair& p) { return p.chosen != p.rejected; });
    return out;
}

// ---- split ---------------------------------------------------------------------

void validate_split_ratio(const SplitRatio& ratio) {
    if (!(ratio.train > 0.0) || !(ratio.test > 0.0) ||
        std::abs(ratio.train + ratio.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be positive and sum to 1, got [" +
                          std::to_string(ratio.train) + ", " + std::to_string(ratio.test) + "]");
    }
}

std::size_t split_train_size(std::size_t n, const SplitRatio& ratio) {
    validate_split_ratio(ratio);
    // The epsilon absorbs representation error such as 100 * 0.95 = 94.999...
    const auto n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio.train + 1e-9));
    if (n > 0 && (n_train == 0 || n_train == n)) {
        logger()->warn("split of {} items leaves an empty partition ({} train / {} test)", n,
                       n_train, n - n_train);
    }
    return n_train;
}

// ---- collation -----------------------------------------------------------------

Side side_from_string(std::string_view s) {
    if (s == "left") {
        return Side::left;
    }
    if (s == "right") {
        return Side::right;
    }
    throw ConfigError("side must be \"left\" or \"right\", got \"" + std::string(s) + "\"");
}

std::string to_string(Side s) { return s == Side::left ? "left" : "right"; }

LmTargets lm_targets_from_string(std::string_view s) {
    if (s == "prompt_and_response") {
        return LmTargets::prompt_and_response;
    }
    if (s == "response_only") {
        return LmTargets::response_only;
    }
    if (s == "none") {
        return LmTargets::none;
    }
    throw ConfigError("unknown lm target mode \"" + std::string(s) + "\"");
}

std::string to_string(LmTargets t) {
    switch (t) {
        case LmTargets::prompt_and_response: return "prompt_and_response";
        case LmTargets::response_only: return "response_only";
        case LmTargets::none: return "none";
    }
    return "none";
}

TokenSequence encode_example(const ByteTokenizer& tok, std::string_view prompt,
                             std::string_view response) {
    TokenSequence s;
    s.ids.reserve(prompt.size() + response.size() + 2);
    s.ids.push_back(ByteTokenizer::kBos);
    s.segments.push_back(Segment::special);
    for (auto id : tok.encode(prompt)) {
        s.ids.push_back(id);
        s.segments.push_back(Segment::prompt);
    }
    for (auto id : tok.encode(response)) {
        s.ids.push_back(id);
        s.segments.push_back(Segment::response);
    }
    s.ids.push_back(ByteTokenizer::kEos);
    s.segments.push_back(Segment::special);
    return s;
}

TokenSequence encode_text(const ByteTokenizer& tok, std::string_view text) {
    return encode_example(tok, "", text);
}

namespace {

bool is_target(TokenId id, Segment seg, const CollateOptions& o) {
    if (o.lm_targets == LmTargets::none || id == ByteTokenizer::kPad) {
        return false;
    }
    if (id == ByteTokenizer::kEos) {
        return o.eos_is_target;
    }
    if (seg == Segment::response) {
        return true;
    }
    return seg == Segment::prompt && o.lm_targets == LmTargets::prompt_and_response;
}

}  // namespace

TokenBatch collate(const std::vector<TokenSequence>& sequences, const CollateOptions& options) {
    if (options.max_len < 1) {
        throw ConfigError("max_len must be at least 1");
    }
    if (sequences.empty()) {
        throw ContractError("collate: no sequences");
    }
    struct Window {
        std::size_t begin, end;
    };
    std::vector<Window> windows;
    windows.reserve(sequences.size());
    std::size_t longest = 0;
    for (const auto& s : sequences) {
        if (s.ids.size() != s.segments.size()) {
            throw ContractError("collate: ids and segments differ in length");
        }
        if (s.ids.empty()) {
            throw ContractError("collate: empty sequence");
        }
        const std::size_t n = s.ids.size();
        Window w{0, n};
        if (n > options.max_len) {
            w = options.trunc_side == Side::left ? Window{n - options.max_len, n}
                                                 : Window{0, options.max_len};
        }
        longest = std::max(longest, w.end - w.begin);
        windows.push_back(w);
    }

    TokenBatch b;
    b.batch = sequences.size();
    b.length = std::max(longest, options.pad_to);
    const std::size_t total = b.batch * b.length;
    b.ids.assign(total, ByteTokenizer::kPad);
    b.attention_mask.assign(total, 0);
    b.loss_mask.assign(total, 0);
    b.positions.assign(total, 0);
    b.last_index.assign(b.batch, 0);
    b.eos_index.assign(b.batch, std::nullopt);

    for (std::size_t r = 0; r < b.batch; ++r) {
        const auto& s = sequences[r];
        const auto [begin, end] = windows[r];
        const std::size_t kept = end - begin;
        const std::size_t offset = options.pad_side == Side::right ? 0 : b.length - kept;
        for (std::size_t i = 0; i < kept; ++i) {
            const std::size_t t = offset + i;
            const TokenId id = s.ids[begin + i];
            b.ids[b.at(r, t)] = id;
            b.attention_mask[b.at(r, t)] = id != ByteTokenizer::kPad;
            b.positions[b.at(r, t)] = static_cast<std::int32_t>(i);
            b.loss_mask[b.at(r, t)] = i > 0 && is_target(id, s.segments[begin + i], options);
            if (id == ByteTokenizer::kEos) {
                b.eos_index[r] = t;
            }
        }
        b.last_index[r] = offset + kept - 1;
    }
    return b;
}

std::vector<std::vector<TokenId>> decollate(const TokenBatch& batch) {
    std::vector<std::vector<TokenId>> out(batch.batch);
    for (std::size_t r = 0; r < batch.batch; ++r) {
        for (std::size_t t = 0; t < batch.length; ++t) {
            if (batch.attention_mask[batch.at(r, t)]) {
                out[r].push_back(batch.ids[batch.at(r, t)]);
            }
        }
    }
    return out;
}

TokenBatch collate_pairs(const ByteTokenizer& tok, const std::vector<PreferencePair>& pairs,
                         const CollateOptions& options) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        seqs.push_back(encode_example(tok, p.prompt, p.chosen));
    }
    for (const auto& p : pairs) {
        seqs.push_back(encode_example(tok, p.prompt, p.rejected));
    }
    return collate(seqs, options);
}

}  // namespace rmlab
