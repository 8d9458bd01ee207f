// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Domain-specific response collection: one chat-completion request per
// (query, persona domain) with that domain's system prompt.

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmlab/data.hpp"

namespace rmlab {

/// Persona prompts for academy, business, entertainment and literature.
const std::map<std::string, std::string>& default_system_prompts();

struct CollectorConfig {
    /// scheme://host[:port]
    std::string endpoint = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "OPENAI_API_KEY";
    std::map<std::string, std::string> system_prompts = default_system_prompts();
    double timeout_seconds = 60.0;
    std::size_t max_retries = 5;
    double backoff_base_seconds = 1.0;
    double backoff_max_seconds = 60.0;
    double requests_per_minute = 60.0;
    std::size_t concurrency = 4;
    /// Extra request fields (temperature, top_p, ...); omitted when empty.
    nlohmann::ordered_json decoding = nlohmann::ordered_json::object();

    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Missing keys keep the values of `defaults`. `prompts` maps a domain to
    /// prompt text, replacing that domain's default.
    static CollectorConfig from_json(const nlohmann::json& j, const CollectorConfig& defaults);
    static CollectorConfig from_json(const nlohmann::json& j) { return from_json(j, CollectorConfig()); }
};

struct CollectStats {
    std::size_t requests = 0;  // HTTP attempts, retries included
    std::size_t cells_ok = 0;
    std::size_t cells_failed = 0;
};

class Collector {
public:
    /// Reads the API key from the configured environment variable; throws
    /// ConfigError when it is unset or empty.
    explicit Collector(CollectorConfig config);

    /// One record per query, in query order. Cells that still fail after all
    /// retries stay missing. When `sink` is set, each finished record is
    /// appended to it as one complete JSONL line.
    std::vector<DomainRecord> collect(const std::vector<std::string>& queries,
                                      const std::vector<std::string>& domains,
                                      const std::optional<std::filesystem::path>& sink = {});

    /// Requests only the (query, domain) cells missing from `partial`.
    std::vector<DomainRecord> resume(const std::vector<DomainRecord>& partial,
                                     const std::vector<std::string>& domains,
                                     const std::optional<std::filesystem::path>& sink = {});

    const CollectStats& stats() const noexcept { return stats_; }
    const CollectorConfig& config() const noexcept { return config_; }

private:
    std::optional<std::string> request(const std::string& domain, const std::string& query);
    void wait_for_slot();

    CollectorConfig config_;
    std::string api_key_;
    CollectStats stats_;
    std::mutex mutex_;  // guards stats_ and next_slot_
    std::chrono::steady_clock::time_point next_slot_{};
};

/// Reads the complete lines of a collector output file (a torn final line
/// from an interrupted run is skipped) and merges them over `wanted`
/// (queries plus any responses known up front, such as original "normal"
/// ones). Fills every missing cell for `domains`, then atomically rewrites
/// the file in the order of `wanted`.
std::vector<DomainRecord> resume_file(Collector& collector, const std::filesystem::path& path,
                                      const std::vector<DomainRecord>& wanted,
                                      const std::vector<std::string>& domains);

}  // namespace rmlab
