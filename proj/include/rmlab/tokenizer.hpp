// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rmlab {

using TokenId = std::int32_t;

/// Byte-level vocabulary: ids 0-255 are raw bytes, then PAD, BOS, EOS.
class ByteTokenizer {
public:
    static constexpr TokenId kPad = 256;
    static constexpr TokenId kBos = 257;
    static constexpr TokenId kEos = 258;
    static constexpr std::size_t kVocabSize = 259;

    std::vector<TokenId> encode(std::string_view text, bool add_bos = false,
                                bool add_eos = false) const;
    /// Special ids are skipped. Throws IndexError for ids outside the vocabulary.
    std::string decode(std::span<const TokenId> ids) const;

    static bool is_special(TokenId id) noexcept { return id >= kPad; }
    std::size_t vocab_size() const noexcept { return kVocabSize; }

    /// {"kind":"byte","specials":{"pad":256,"bos":257,"eos":258}}
    nlohmann::ordered_json to_json() const;
    /// Validates a serialized vocabulary; throws LoadError on mismatch.
    static ByteTokenizer from_json(const nlohmann::json& j);
};

}  // namespace rmlab
