// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/tokenizer.hpp"

#include "rmlab/errors.hpp"

namespace rmlab {

std::vector<TokenId> ByteTokenizer::encode(std::string_view text, bool add_bos,
                                           bool add_eos) const {
    std::vector<TokenId> ids;
    ids.reserve(text.size() + 2);
    if (add_bos) {
        ids.push_back(kBos);
    }
    for (unsigned char c : text) {
        ids.push_back(static_cast<TokenId>(c));
    }
    if (add_eos) {
        ids.push_back(kEos);
    }
    return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= kVocabSize) {
            throw IndexError("token id " + std::to_string(id) + " outside byte vocabulary");
        }
        if (!is_special(id)) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
    }
    return out;
}

nlohmann::ordered_json ByteTokenizer::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = "byte";
    j["specials"] = {{"pad", kPad}, {"bos", kBos}, {"eos", kEos}};
    return j;
}

ByteTokenizer ByteTokenizer::from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "byte") {
            throw LoadError("unsupported vocabulary kind " + j.at("kind").dump());
        }
        const auto& s = j.at("specials");
        if (s.at("pad").get<TokenId>() != kPad || s.at("bos").get<TokenId>() != kBos ||
            s.at("eos").get<TokenId>() != kEos) {
            throw LoadError("special token ids differ from the byte vocabulary");
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed vocabulary: ") + e.what());
    }
    return {};
}

}  // namespace rmlab
