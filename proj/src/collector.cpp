// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/collector.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "rmlab/errors.hpp"
#include "rmlab/log.hpp"

namespace rmlab {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// ---- config -------------------------------------------------------------------

void CollectorConfig::validate() const {
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
        throw ConfigError("collector endpoint must start with http:// or https://");
    }
    if (path.empty() || path.front() != '/') {
        throw ConfigError("collector request path must start with '/'");
    }
    if (model.empty()) {
        throw ConfigError("collector model name is empty");
    }
    if (api_key_env.empty()) {
        throw ConfigError("collector api_key_env is empty");
    }
    if (!(timeout_seconds > 0.0)) {
        throw ConfigError("request timeout must be positive");
    }
    if (!(backoff_base_seconds >= 0.0) || !(backoff_max_seconds >= 0.0)) {
        throw ConfigError("retry backoff must be >= 0");
    }
    if (!(requests_per_minute > 0.0) || !std::isfinite(requests_per_minute)) {
        throw ConfigError("requests-per-minute cap must be positive");
    }
    if (concurrency < 1) {
        throw ConfigError("collector concurrency must be >= 1");
    }
    if (!decoding.is_object()) {
        throw ConfigError("decoding parameters must be a JSON object");
    }
    for (const auto& [domain, prompt] : system_prompts) {
        if (!is_known_domain(domain)) {
            throw ConfigError("system prompt for unknown domain '" + domain + "'");
        }
    }
}

nlohmann::ordered_json CollectorConfig::to_json() const {
    nlohmann::ordered_json j;
    j["endpoint"] = endpoint;
    j["path"] = path;
    j["model"] = model;
    j["api_key_env"] = api_key_env;
    j["timeout_seconds"] = timeout_seconds;
    j["max_retries"] = max_retries;
    j["backoff_base_seconds"] = backoff_base_seconds;
    j["backoff_max_seconds"] = backoff_max_seconds;
    j["requests_per_minute"] = requests_per_minute;
    j["concurrency"] = concurrency;
    // Absent decoding parameters mean provider defaults.
    j["decoding"] = decoding.empty() ? nlohmann::ordered_json("provider defaults") : decoding;
    j["prompts"] = system_prompts;
    return j;
}

CollectorConfig CollectorConfig::from_json(const nlohmann::json& j, const CollectorConfig& defaults) {
    if (!j.is_object()) {
        throw ConfigError("collector config must be a JSON object");
    }
    static const std::set<std::string> known = {
        "endpoint",    "path",           "model",          "api_key_env",
        "timeout_seconds", "max_retries", "backoff_base_seconds", "backoff_max_seconds",
        "requests_per_minute", "concurrency", "decoding",   "prompts"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown collector config key '" + key + "'");
        }
    }
    CollectorConfig c = defaults;
    try {
        c.endpoint = j.value("endpoint", c.endpoint);
        c.path = j.value("path", c.path);
        c.model = j.value("model", c.model);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.backoff_base_seconds = j.value("backoff_base_seconds", c.backoff_base_seconds);
        c.backoff_max_seconds = j.value("backoff_max_seconds", c.backoff_max_seconds);
        c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
        c.concurrency = j.value("concurrency", c.concurrency);
        if (j.contains("decoding")) {
            c.decoding = j.at("decoding");
        }
        if (j.contains("prompts")) {
            for (const auto& [domain, text] : j.at("prompts").items()) {
                c.system_prompts[domain] = text.get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid collector config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- collector ------------------------------------------------------------------

Collector::Collector(CollectorConfig config) : config_(std::move(config)) {
    config_.validate();
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw ConfigError("API key environment variable " + config_.api_key_env + " is not set");
    }
    api_key_ = key;
}

void Collector::wait_for_slot() {
    const auto interval = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(60.0 / config_.requests_per_minute));
    Clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        slot = std::max(Clock::now(), next_slot_);
        next_slot_ = slot + interval;
        ++stats_.requests;
    }
    std::this_thread::sleep_until(slot);
}

std::optional<std::string> Collector::request(const std::string& domain, const std::string& query) {
    nlohmann::ordered_json body;
    body["model"] = config_.model;
    body["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", config_.system_prompts.at(domain)}},
         {{"role", "user"}, {"content", query}}});
    for (const auto& [k, v] : config_.decoding.items()) {
        body[k] = v;
    }
    const std::string payload = body.dump();

    httplib::Client client(config_.endpoint);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    client.set_bearer_token_auth(api_key_);

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = std::min(config_.backoff_max_seconds,
                                          config_.backoff_base_seconds * std::ldexp(1.0, static_cast<int>(attempt - 1)));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        wait_for_slot();
        auto res = client.Post(config_.path, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status) + " (not retried)";
            break;
        }
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
            break;
        }
    }
    logger()->error("collect [{}] failed for query '{}': {}", domain, query.substr(0, 60), last_error);
    return std::nullopt;
}

namespace {

void append_line(const fs::path& path, const std::string& line) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        throw DataError("cannot append to " + path.string());
    }
    // One write per record keeps every line complete up to the last flush.
    const std::string data = line + "\n";
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

}  // namespace

std::vector<DomainRecord> Collector::resume(const std::vector<DomainRecord>& partial,
                                            const std::vector<std::string>& domains,
                                            const std::optional<fs::path>& sink) {
    for (const auto& d : domains) {
        if (!config_.system_prompts.contains(d)) {
            throw ConfigError("no system prompt for domain '" + d +
                              "' (the normal domain comes from original responses)");
        }
    }
    std::vector<DomainRecord> records = partial;
    struct Cell {
        std::size_t record;
        std::string domain;
    };
    std::vector<Cell> cells;
    std::vector<std::size_t> pending(records.size(), 0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].query.empty()) {
            throw ContractError("collector record with an empty query");
        }
        for (const auto& d : domains) {
            if (!records[i].responses.contains(d)) {
                cells.push_back({i, d});
                ++pending[i];
            }
        }
    }

    std::mutex out_mutex;  // record assembly and ordered sink writes
    std::size_t next_cell = 0;
    std::size_t next_emit = 0;
    auto emit_ready = [&] {
        while (next_emit < records.size() && pending[next_emit] == 0) {
            if (sink) {
                append_line(*sink, to_jsonl_line(records[next_emit]));
            }
            ++next_emit;
        }
    };
    {
        std::lock_guard lock(out_mutex);
        emit_ready();
    }
    auto worker = [&] {
        for (;;) {
            Cell cell;
            std::string query;
            {
                std::lock_guard lock(out_mutex);
                if (next_cell >= cells.size()) {
                    return;
                }
                cell = cells[next_cell++];
                query = records[cell.record].query;
            }
            auto text = request(cell.domain, query);
            std::lock_guard lock(out_mutex);
            {
                std::lock_guard stats_lock(mutex_);
                ++(text ? stats_.cells_ok : stats_.cells_failed);
            }
            if (text) {
                records[cell.record].responses[cell.domain] = std::move(*text);
            }
            --pending[cell.record];
            emit_ready();
        }
    };
    const std::size_t n_threads = std::min(config_.concurrency, std::max<std::size_t>(1, cells.size()));
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t t = 0; t < n_threads; ++t) {
        threads.emplace_back([&] {
            try {
                worker();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    for (const auto& r : records) {
        for (const auto& d : domains) {
            if (!r.responses.contains(d)) {
                logger()->warn("record '{}' is missing domain {}", r.query.substr(0, 60), d);
            }
        }
    }
    return records;
}

std::vector<DomainRecord> Collector::collect(const std::vector<std::string>& queries,
                                             const std::vector<std::string>& domains,
                                             const std::optional<fs::path>& sink) {
    if (queries.empty()) {
        throw ConfigError("collector needs at least one query");
    }
    std::vector<DomainRecord> partial(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        partial[i].query = queries[i];
    }
    return resume(partial, domains, sink);
}

std::vector<DomainRecord> resume_file(Collector& collector, const fs::path& path,
                                      const std::vector<DomainRecord>& wanted,
                                      const std::vector<std::string>& domains) {
    std::map<std::string, DomainRecord> existing;
    if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        std::size_t start = 0;
        std::size_t line_no = 0;
        while (start < content.size()) {
            const std::size_t end = content.find('\n', start);
            ++line_no;
            if (end == std::string::npos) {
                logger()->warn("{}: ignoring incomplete final line {}", path.string(), line_no);
                break;
            }
            const std::string_view line(content.data() + start, end - start);
            start = end + 1;
            if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
                continue;
            }
            DomainRecord r = record_from_json_line(line, path.string(), line_no);
            auto [it, inserted] = existing.try_emplace(r.query, r);
            if (!inserted) {
                // Later lines are newer attempts at the same query.
                for (auto& [d, text] : r.responses) {
                    it->second.responses[d] = text;
                }
            }
        }
    }
    std::vector<DomainRecord> partial = wanted;
    for (auto& r : partial) {
        auto it = existing.find(r.query);
        if (it != existing.end()) {
            for (const auto& [d, text] : it->second.responses) {
                r.responses[d] = text;
            }
        }
    }
    auto records = collector.resume(partial, domains);
    const fs::path tmp = path.string() + ".tmp";
    write_records(tmp, records);
    fs::rename(tmp, path);
    return records;
}

}  // namespace rmlab
