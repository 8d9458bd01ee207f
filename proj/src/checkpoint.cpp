// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rmlab/errors.hpp"
#include "rmlab/hash.hpp"

namespace rmlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& origin) {
    if (pos + sizeof(T) > in.size()) {
        throw LoadError(origin + ": truncated checkpoint");
    }
    T value;
    std::memcpy(&value, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return true;
        }
    }
    return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return t.value;
        }
    }
    throw LoadError("checkpoint has no tensor " + name);
}

bool Checkpoint::has_reward_head() const {
    return has_tensor("reward_head.weight") && has_tensor("reward_head.bias");
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    nlohmann::ordered_json header;
    header["config"] = config.to_json();
    header["vocab"] = vocab.to_json();
    header["tensors"] = nlohmann::ordered_json::object();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        const std::uint64_t length = t.value.numel() * sizeof(double);
        header["tensors"][t.name] = {
            {"shape", t.value.shape()}, {"offset", offset}, {"length", length}};
        offset += length;
    }
    header["meta"] = meta;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(16 + text.size() + offset);
    out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : tensors) {
        const auto d = t.value.data();
        const auto* p = reinterpret_cast<const std::uint8_t*>(d.data());
        out.insert(out.end(), p, p + d.size() * sizeof(double));
    }
    return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes,
                                   const std::string& origin) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw LoadError(origin + ": not a checkpoint (bad magic)");
    }
    std::size_t pos = 4;
    const auto version = get<std::uint32_t>(bytes, pos, origin);
    if (version != kCheckpointVersion) {
        throw LoadError(origin + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = get<std::uint64_t>(bytes, pos, origin);
    if (pos + header_len > bytes.size()) {
        throw LoadError(origin + ": truncated header");
    }
    const auto* hb = reinterpret_cast<const char*>(bytes.data() + pos);
    auto header = nlohmann::ordered_json::parse(hb, hb + header_len, nullptr, false);
    if (header.is_discarded() || !header.is_object()) {
        throw LoadError(origin + ": header is not a JSON object");
    }
    pos += header_len;
    const std::size_t data_start = pos;

    Checkpoint c;
    try {
        c.config = ModelConfig::from_json(header.at("config"));
        c.vocab = ByteTokenizer::from_json(header.at("vocab"));
        if (header.contains("meta")) {
            c.meta = header.at("meta");
        }
        for (const auto& [name, entry] : header.at("tensors").items()) {
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto length = entry.at("length").get<std::uint64_t>();
            if (length != shape_numel(shape) * sizeof(double) ||
                data_start + offset + length > bytes.size()) {
                throw LoadError(origin + ": tensor " + name + " has an inconsistent extent");
            }
            std::vector<double> values(shape_numel(shape));
            std::memcpy(values.data(), bytes.data() + data_start + offset, length);
            c.tensors.push_back({name, Tensor::from(shape, std::move(values))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(origin + ": malformed header: " + e.what());
    } catch (const ConfigError& e) {
        throw LoadError(origin + ": " + e.what());
    } catch (const ShapeError& e) {
        throw LoadError(origin + ": " + e.what());
    }
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write checkpoint " + tmp);
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("write failed for checkpoint " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open checkpoint " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes, path.string());
}

std::string Checkpoint::content_hash() const { return sha256_hex(serialize()); }

}  // namespace rmlab
