// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "rmlab/collector.hpp"
#include "rmlab/corpus_stats.hpp"
#include "rmlab/errors.hpp"
#include "rmlab/eval.hpp"
#include "rmlab/hash.hpp"
#include "rmlab/log.hpp"
#include "rmlab/trainer.hpp"

#ifndef RMLAB_VERSION
#define RMLAB_VERSION "0.0.0"
#endif

namespace rmlab::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string utc_stamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

nlohmann::json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_json_file(const fs::path& path, const ojson& j) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + path.string());
        }
        out << j.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

// Options every subcommand shares, plus the state of the current run.
struct Common {
    std::string run_dir;
    std::string config;
};

class Run {
public:
    Run(std::string command, const Common& common, std::vector<std::string> argv)
        : command_(std::move(command)), argv_(std::move(argv)) {
        if (!common.run_dir.empty()) {
            dir_ = common.run_dir;
        } else {
            const fs::path base = fs::path("runs") / (command_ + "-" + utc_stamp());
            dir_ = base;
            for (int k = 2; fs::exists(dir_); ++k) {
                dir_ = base.string() + "-" + std::to_string(k);
            }
        }
        if (fs::exists(dir_ / "manifest.json")) {
            throw ConfigError("run directory " + dir_.string() + " already holds a manifest");
        }
    }

    const fs::path& dir() const { return dir_; }

    void input(const fs::path& path) {
        if (!fs::is_regular_file(path)) {
            throw DataError("input not found: " + path.string());
        }
        inputs_[fs::absolute(path).lexically_normal().string()] = file_sha256(path);
    }

    /// Writes the manifest; must precede any output.
    void start(const ojson& config, std::optional<std::uint64_t> seed) {
        fs::create_directories(dir_);
        ojson m;
        m["tool"] = "rmlab";
        m["version"] = RMLAB_VERSION;
        m["command"] = command_;
        m["argv"] = argv_;
        m["config"] = config;
        m["inputs"] = inputs_;
        m["seed"] = seed ? ojson(*seed) : ojson();
        m["started_at"] = utc_now();
        write_json_file(dir_ / "manifest.json", m);
        logger()->info("{}: run directory {}", command_, dir_.string());
    }

    void finish(const ojson& outputs) {
        ojson s;
        s["finished_at"] = utc_now();
        s["outputs"] = outputs;
        write_json_file(dir_ / "result.json", s);
    }

    fs::path output(const std::string& flag_value, const std::string& default_name) const {
        return flag_value.empty() ? dir_ / default_name : fs::path(flag_value);
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    fs::path dir_;
    std::map<std::string, std::string> inputs_;
};

nlohmann::json config_file(const Common& c) {
    if (c.config.empty()) {
        return nlohmann::json::object();
    }
    auto j = load_json_file(c.config);
    if (!j.is_object()) {
        throw ConfigError(c.config + ": config must be a JSON object");
    }
    return j;
}

std::string absolute(const std::string& p) {
    return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--run-dir", c.run_dir, "Run directory (default runs/<command>-<UTC time>)");
    sub->add_option("--config", c.config, "JSON config file; flags take precedence");
}

// Set `key` in `j` from an option only when the flag was given.
template <class T>
void overlay(nlohmann::json& j, const CLI::Option* opt, const std::string& key, const T& value) {
    if (opt->count() > 0) {
        j[key] = value;
    }
}

std::map<std::string, std::string> parse_named(const std::vector<std::string>& items) {
    std::map<std::string, std::string> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
            throw ConfigError("expected name=path, got '" + item + "'");
        }
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

// ---- stage flags ------------------------------------------------------------------

struct StageFlags {
    std::uint64_t seed = 0;
    std::size_t epochs = 0, batch_size = 0, max_steps = 0, eval_every = 0, checkpoint_every = 0,
                max_len = 0;
    double lr = 0, mu = 0;
    std::string pooling, pad_side, trunc_side, lm_targets, label;
    std::vector<std::string> eval;
    std::size_t embed_dim = 0, layers = 0, heads = 0, ffn_dim = 0, max_position = 0;
    std::map<std::string, CLI::Option*> opts;
};

void add_stage_flags(CLI::App* sub, StageFlags& f, bool with_model) {
    f.opts["seed"] = sub->add_option("--seed", f.seed, "Random seed");
    f.opts["epochs"] = sub->add_option("--epochs", f.epochs, "Epochs");
    f.opts["batch_size"] = sub->add_option("--batch-size", f.batch_size, "Batch size (pairs for RM stages)");
    f.opts["max_steps"] = sub->add_option("--max-steps", f.max_steps, "Stop after this many updates");
    f.opts["eval_every"] = sub->add_option("--eval-every", f.eval_every, "Evaluate every N updates");
    f.opts["checkpoint_every"] =
        sub->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint every N updates");
    f.opts["max_len"] = sub->add_option("--max-len", f.max_len, "Truncation length");
    f.opts["lr"] = sub->add_option("--lr", f.lr, "Adam learning rate");
    f.opts["pad_side"] = sub->add_option("--pad-side", f.pad_side, "left or right");
    f.opts["trunc_side"] = sub->add_option("--trunc-side", f.trunc_side, "left or right");
    f.opts["lm_targets"] =
        sub->add_option("--lm-targets", f.lm_targets, "prompt_and_response, response_only or none");
    f.opts["label"] = sub->add_option("--label", f.label, "Label used in comparison tables");
    f.opts["pooling"] =
        sub->add_option("--pooling", f.pooling, "last_token, eos_token, average or max");
    if (with_model) {
        f.opts["embed_dim"] = sub->add_option("--embed-dim", f.embed_dim, "Model width");
        f.opts["num_layers"] = sub->add_option("--layers", f.layers, "Transformer blocks");
        f.opts["num_heads"] = sub->add_option("--heads", f.heads, "Attention heads");
        f.opts["ffn_dim"] = sub->add_option("--ffn-dim", f.ffn_dim, "Feed-forward width");
        f.opts["max_position"] = sub->add_option("--max-position", f.max_position, "Position table size");
    } else {
        f.opts["mu"] = sub->add_option("--mu", f.mu, "Imitation-loss coefficient");
        f.opts["eval"] = sub->add_option("--eval", f.eval, "Evaluation set name=pairs.jsonl (repeatable)");
    }
}

StageConfig resolve_stage(Stage stage, const Common& common, const StageFlags& f,
                          const std::string& train_path) {
    nlohmann::json j = config_file(common);
    j["stage"] = to_string(stage);
    auto o = [&](const char* k) { return f.opts.at(k); };
    overlay(j, o("seed"), "seed", f.seed);
    overlay(j, o("epochs"), "epochs", f.epochs);
    overlay(j, o("batch_size"), "batch_size", f.batch_size);
    overlay(j, o("max_steps"), "max_steps", f.max_steps);
    overlay(j, o("eval_every"), "eval_every", f.eval_every);
    overlay(j, o("checkpoint_every"), "checkpoint_every", f.checkpoint_every);
    overlay(j, o("max_len"), "max_len", f.max_len);
    overlay(j, o("pad_side"), "pad_side", f.pad_side);
    overlay(j, o("trunc_side"), "trunc_side", f.trunc_side);
    overlay(j, o("lm_targets"), "lm_targets", f.lm_targets);
    overlay(j, o("label"), "label", f.label);
    overlay(j, o("pooling"), "pooling", f.pooling);
    if (o("lr")->count() > 0) {
        j["optimizer"]["lr"] = f.lr;
    }
    if (f.opts.contains("mu")) {
        overlay(j, o("mu"), "mu", f.mu);
        if (o("eval")->count() > 0) {
            j["eval"] = parse_named(f.eval);
        }
    }
    if (f.opts.contains("embed_dim")) {
        nlohmann::json model = j.value("model", nlohmann::json::object());
        overlay(model, o("embed_dim"), "embed_dim", f.embed_dim);
        overlay(model, o("num_layers"), "num_layers", f.layers);
        overlay(model, o("num_heads"), "num_heads", f.heads);
        overlay(model, o("ffn_dim"), "ffn_dim", f.ffn_dim);
        overlay(model, o("max_position"), "max_position", f.max_position);
        if (!model.empty()) {
            j["model"] = model;
        }
    }
    if (!train_path.empty()) {
        j["train"] = train_path;
    }
    StageConfig cfg = StageConfig::from_json(j);
    cfg.train_path = absolute(cfg.train_path.string());
    for (auto& [name, path] : cfg.eval_paths) {
        path = absolute(path.string());
    }
    return cfg;
}

ojson train_outputs(const fs::path& dir, const TrainResult& r) {
    ojson o;
    o["checkpoint"] = (dir / "checkpoint.pfrg").string();
    o["checkpoint_sha256"] = r.checkpoint.content_hash();
    o["log"] = (dir / "log.csv").string();
    o["summary"] = (dir / "summary.json").string();
    return o;
}

void copy_checkpoint(const TrainResult& r, const std::string& out, ojson& outputs) {
    if (!out.empty()) {
        r.checkpoint.save(out);
        outputs["copy"] = out;
    }
}

// ---- collect ------------------------------------------------------------------------

std::vector<DomainRecord> read_queries(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    std::vector<DomainRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), n, e.what());
        }
        if (!j.is_object() || !j.contains("query") || !j["query"].is_string() ||
            j["query"].get<std::string>().empty()) {
            throw ParseError(path.string(), n, "expected {\"query\": \"...\"}");
        }
        DomainRecord r;
        r.query = j["query"].get<std::string>();
        if (j.contains("response")) {
            if (!j["response"].is_string()) {
                throw ParseError(path.string(), n, "field \"response\" must be a string");
            }
            // Original dataset answers become the normal domain.
            r.responses["normal"] = j["response"].get<std::string>();
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) {
        throw DataError(path.string() + ": no queries");
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string::npos ? s.size() : comma;
        if (end > start) {
            out.push_back(s.substr(start, end - start));
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"rmlab: customized reward-model training"};
    app.require_subcommand(1);
    app.set_version_flag("--version", RMLAB_VERSION);
    std::vector<std::string> all_args(argv, argv + argc);
    std::function<void()> action;

    // collect
    Common c_collect;
    std::string q_path, c_out, c_domains = "academy,business,entertainment,literature";
    std::string c_endpoint, c_model, c_key_env;
    double c_rpm = 0, c_timeout = 0;
    std::size_t c_conc = 0, c_retries = 0;
    bool c_resume = false;
    auto* collect = app.add_subcommand("collect", "Query a chat endpoint once per (query, domain)");
    add_common(collect, c_collect);
    collect->add_option("--queries", q_path, "JSONL of {\"query\", optional \"response\"}")->required();
    collect->add_option("--out", c_out, "Output DomainRecord JSONL");
    collect->add_option("--domains", c_domains, "Comma-separated persona domains");
    auto* o_endpoint = collect->add_option("--endpoint", c_endpoint, "scheme://host[:port]");
    auto* o_model = collect->add_option("--model", c_model, "Model name");
    auto* o_key = collect->add_option("--api-key-env", c_key_env, "Environment variable holding the key");
    auto* o_rpm = collect->add_option("--rpm", c_rpm, "Requests-per-minute cap");
    auto* o_timeout = collect->add_option("--timeout", c_timeout, "Request timeout in seconds");
    auto* o_conc = collect->add_option("--concurrency", c_conc, "In-flight requests");
    auto* o_retries = collect->add_option("--max-retries", c_retries, "Retries on 429/5xx");
    collect->add_flag("--resume", c_resume, "Fill only the cells missing from --out");
    collect->callback([&] {
        action = [&] {
            nlohmann::json j = config_file(c_collect);
            overlay(j, o_endpoint, "endpoint", c_endpoint);
            overlay(j, o_model, "model", c_model);
            overlay(j, o_key, "api_key_env", c_key_env);
            overlay(j, o_rpm, "requests_per_minute", c_rpm);
            overlay(j, o_timeout, "timeout_seconds", c_timeout);
            overlay(j, o_conc, "concurrency", c_conc);
            overlay(j, o_retries, "max_retries", c_retries);
            const CollectorConfig cfg = CollectorConfig::from_json(j);
            const auto domains = split_list(c_domains);
            Run run("collect", c_collect, all_args);
            run.input(q_path);
            const fs::path out = run.output(c_out, "records.jsonl");
            if (c_resume && fs::exists(out)) {
                run.input(out);
            }
            ojson resolved = cfg.to_json();
            resolved["queries"] = absolute(q_path);
            resolved["out"] = absolute(out.string());
            resolved["domains"] = domains;
            resolved["resume"] = c_resume;
            Collector collector(cfg);
            const auto wanted = read_queries(q_path);
            run.start(resolved, std::nullopt);
            std::vector<DomainRecord> records;
            if (c_resume) {
                records = resume_file(collector, out, wanted, domains);
            } else {
                if (fs::exists(out)) {
                    throw DataError(out.string() + " exists; pass --resume to complete it");
                }
                records = collector.resume(wanted, domains, out);
            }
            const auto& st = collector.stats();
            run.finish({{"records", absolute(out.string())},
                        {"requests", st.requests},
                        {"cells_ok", st.cells_ok},
                        {"cells_failed", st.cells_failed}});
        };
    });

    // build-pairs
    Common c_build;
    std::string b_records, b_target, b_out, b_source = "dsp";
    auto* build = app.add_subcommand("build-pairs", "Target domain preferred over every other domain");
    add_common(build, c_build);
    build->add_option("--records", b_records, "DomainRecord JSONL")->required();
    build->add_option("--target", b_target, "Preferred domain")->required();
    build->add_option("--out", b_out, "Output pair JSONL");
    build->add_option("--source", b_source, "Source tag stored on each pair");
    build->callback([&] {
        action = [&] {
            Run run("build-pairs", c_build, all_args);
            run.input(b_records);
            const fs::path out = run.output(b_out, "pairs.jsonl");
            run.start({{"records", absolute(b_records)},
                       {"target", b_target},
                       {"source", b_source},
                       {"out", absolute(out.string())}},
                      std::nullopt);
            const auto dsp = build_dsp_pairs(read_records(b_records), b_target, b_source);
            const auto pairs = dedup_invalid(dsp.pairs);
            write_pairs(out, pairs);
            run.finish({{"pairs", absolute(out.string())},
                        {"count", pairs.size()},
                        {"dropped_identical", dsp.pairs.size() - pairs.size()},
                        {"skipped_records", dsp.skipped}});
        };
    });

    // split
    Common c_split;
    std::string s_pairs, s_train, s_test;
    double s_ratio = 0.95;
    std::uint64_t s_seed = 1;
    auto* split_cmd = app.add_subcommand("split", "Seeded train/test split of a pair file");
    add_common(split_cmd, c_split);
    split_cmd->add_option("--pairs", s_pairs, "Pair JSONL")->required();
    split_cmd->add_option("--train-out", s_train, "Train JSONL");
    split_cmd->add_option("--test-out", s_test, "Test JSONL");
    auto* o_ratio = split_cmd->add_option("--train-ratio", s_ratio, "Train fraction (default 0.95)");
    auto* o_sseed = split_cmd->add_option("--seed", s_seed, "Shuffle seed");
    split_cmd->callback([&] {
        action = [&] {
            nlohmann::json j = config_file(c_split);
            double ratio = j.value("train_ratio", 0.95);
            std::uint64_t seed = j.value("seed", std::uint64_t{1});
            if (o_ratio->count() > 0) {
                ratio = s_ratio;
            }
            if (o_sseed->count() > 0) {
                seed = s_seed;
            }
            const SplitRatio r{ratio, 1.0 - ratio};
            validate_split_ratio(r);
            Run run("split", c_split, all_args);
            run.input(s_pairs);
            const fs::path train = run.output(s_train, "train.jsonl");
            const fs::path test = run.output(s_test, "test.jsonl");
            run.start({{"pairs", absolute(s_pairs)},
                       {"train_ratio", ratio},
                       {"seed", seed},
                       {"train_out", absolute(train.string())},
                       {"test_out", absolute(test.string())}},
                      seed);
            const auto [tr, te] = split(read_pairs(s_pairs), r, seed);
            write_pairs(train, tr);
            write_pairs(test, te);
            run.finish({{"train", tr.size()}, {"test", te.size()}});
        };
    });

    // stats
    Common c_stats;
    std::string st_records, st_out;
    std::size_t st_stop = 100, st_top = 100;
    auto* stats = app.add_subcommand("stats", "Readability statistics and TF-IDF keywords per domain");
    add_common(stats, c_stats);
    stats->add_option("--records", st_records, "DomainRecord JSONL")->required();
    stats->add_option("--out", st_out, "Output JSON");
    auto* o_stop = stats->add_option("--stopwords", st_stop, "Terms removed as stopwords");
    auto* o_top = stats->add_option("--top-k", st_top, "Terms kept per domain");
    stats->callback([&] {
        action = [&] {
            nlohmann::json j = config_file(c_stats);
            std::size_t stop = j.value("stopwords", std::size_t{100});
            std::size_t top = j.value("top_k", std::size_t{100});
            if (o_stop->count() > 0) {
                stop = st_stop;
            }
            if (o_top->count() > 0) {
                top = st_top;
            }
            Run run("stats", c_stats, all_args);
            run.input(st_records);
            const fs::path out = run.output(st_out, "corpus_stats.json");
            run.start({{"records", absolute(st_records)},
                       {"stopwords", stop},
                       {"top_k", top},
                       {"out", absolute(out.string())}},
                      std::nullopt);
            write_json_file(out, corpus_report(read_records(st_records), stop, top));
            run.finish({{"report", absolute(out.string())}});
        };
    });

    // train-lm
    Common c_lm;
    StageFlags f_lm;
    std::string lm_corpus, lm_out;
    auto* train_lm = app.add_subcommand("train-lm", "Train the base language model");
    add_common(train_lm, c_lm);
    train_lm->add_option("--corpus", lm_corpus, "Text JSONL of {\"text\"}");
    train_lm->add_option("--out", lm_out, "Also save the checkpoint here");
    add_stage_flags(train_lm, f_lm, true);
    train_lm->callback([&] {
        action = [&] {
            const StageConfig cfg = resolve_stage(Stage::base_lm, c_lm, f_lm, lm_corpus);
            if (cfg.train_path.empty()) {
                throw ConfigError("train-lm needs --corpus or \"train\" in the config");
            }
            Run run("train-lm", c_lm, all_args);
            run.input(cfg.train_path);
            run.start(cfg.to_json(), cfg.seed);
            const auto r = train_base_lm(read_texts(cfg.train_path), cfg, {run.dir()});
            ojson outputs = train_outputs(run.dir(), r);
            copy_checkpoint(r, lm_out, outputs);
            run.finish(outputs);
        };
    });

    // train-grft / train-crft
    struct RmCommand {
        Common common;
        StageFlags flags;
        std::string base, pairs, out;
    };
    RmCommand rm_cmds[2];
    for (int k = 0; k < 2; ++k) {
        const Stage stage = k == 0 ? Stage::grft : Stage::crft;
        const std::string name = k == 0 ? "train-grft" : "train-crft";
        RmCommand& rc = rm_cmds[k];
        auto* sub = app.add_subcommand(
            name, k == 0 ? "General RM fine-tuning from a base LM or RM checkpoint"
                         : "Customized RM fine-tuning from a general RM checkpoint");
        add_common(sub, rc.common);
        sub->add_option("--base", rc.base, "Starting checkpoint")->required();
        sub->add_option("--pairs", rc.pairs, "Training pair JSONL");
        sub->add_option("--out", rc.out, "Also save the checkpoint here");
        add_stage_flags(sub, rc.flags, false);
        sub->callback([&, stage, name] {
            action = [&, stage, name] {
                const StageConfig cfg = resolve_stage(stage, rc.common, rc.flags, rc.pairs);
                if (cfg.train_path.empty()) {
                    throw ConfigError(name + " needs --pairs or \"train\" in the config");
                }
                Run run(name, rc.common, all_args);
                run.input(rc.base);
                run.input(cfg.train_path);
                for (const auto& [set, path] : cfg.eval_paths) {
                    run.input(path);
                }
                ojson resolved = cfg.to_json();
                resolved["base"] = absolute(rc.base);
                run.start(resolved, cfg.seed);
                const Checkpoint start = Checkpoint::load(rc.base);
                NamedPairSets evals;
                for (const auto& [set, path] : cfg.eval_paths) {
                    evals[set] = read_pairs(path);
                }
                const auto r = train_rm(start, read_pairs(cfg.train_path), evals, cfg, {run.dir()});
                ojson outputs = train_outputs(run.dir(), r);
                copy_checkpoint(r, rc.out, outputs);
                run.finish(outputs);
            };
        });
    }

    // evaluate
    Common c_eval;
    std::string e_ckpt, e_pairs, e_out, e_ref, e_composite;
    std::vector<std::string> e_sets;
    std::size_t e_max_len = 0;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Preference accuracy of a checkpoint");
    add_common(evaluate_cmd, c_eval);
    evaluate_cmd->add_option("--checkpoint", e_ckpt, "RM checkpoint")->required();
    evaluate_cmd->add_option("--pairs", e_pairs, "Pair JSONL (set named after the file)");
    evaluate_cmd->add_option("--eval", e_sets, "Additional name=pairs.jsonl (repeatable)");
    evaluate_cmd->add_option("--out", e_out, "Report JSON");
    evaluate_cmd->add_option("--reference", e_ref, "Earlier report; gains are computed against it");
    evaluate_cmd->add_option("--composite", e_composite, "Two set names combined by geometric mean");
    auto* o_emax = evaluate_cmd->add_option("--max-len", e_max_len, "Truncation length");
    evaluate_cmd->callback([&] {
        action = [&] {
            nlohmann::json j = config_file(c_eval);
            CollateOptions opts;
            opts.max_len = j.value("max_len", opts.max_len);
            if (o_emax->count() > 0) {
                opts.max_len = e_max_len;
            }
            std::map<std::string, std::string> sets = parse_named(e_sets);
            if (!e_pairs.empty()) {
                sets[fs::path(e_pairs).stem().string()] = e_pairs;
            }
            if (sets.empty()) {
                throw ConfigError("evaluate needs --pairs or --eval");
            }
            const auto composite = split_list(e_composite);
            if (!composite.empty() && composite.size() != 2) {
                throw ConfigError("--composite takes exactly two set names");
            }
            Run run("evaluate", c_eval, all_args);
            run.input(e_ckpt);
            ojson resolved;
            resolved["checkpoint"] = absolute(e_ckpt);
            resolved["sets"] = ojson::object();
            for (const auto& [name, path] : sets) {
                run.input(path);
                resolved["sets"][name] = absolute(path);
            }
            if (!e_ref.empty()) {
                run.input(e_ref);
                resolved["reference"] = absolute(e_ref);
            }
            resolved["composite_of"] = composite;
            resolved["max_len"] = opts.max_len;
            const fs::path out = run.output(e_out, "report.json");
            resolved["out"] = absolute(out.string());
            run.start(resolved, std::nullopt);

            const Checkpoint ckpt = Checkpoint::load(e_ckpt);
            if (!ckpt.has_reward_head()) {
                throw LoadError(e_ckpt + " has no reward head");
            }
            const RewardModel model = RewardModel::from_checkpoint(ckpt);
            NamedPairSets pair_sets;
            for (const auto& [name, path] : sets) {
                pair_sets[name] = read_pairs(path);
            }
            EvalReport report = evaluate(model, pair_sets, opts, ckpt.content_hash(), composite);
            if (!e_ref.empty()) {
                report.gains = accuracy_gain(report, EvalReport::from_json(load_json_file(e_ref)));
            }
            write_json_file(out, report.to_json());
            run.finish({{"report", absolute(out.string())}});
        };
    });

    // matrix
    Common c_matrix;
    std::string m_spec;
    auto* matrix = app.add_subcommand("matrix", "Run base -> (grft) -> crft chains and compare");
    add_common(matrix, c_matrix);
    matrix->add_option("--spec", m_spec, "Chain spec JSON")->required();
    matrix->callback([&] {
        action = [&] {
            const auto j = load_json_file(m_spec);
            const MatrixSpec spec = MatrixSpec::from_json(j, fs::absolute(m_spec).parent_path());
            Run run("matrix", c_matrix, all_args);
            run.input(m_spec);
            ojson resolved;
            resolved["spec"] = absolute(m_spec);
            resolved["composite_of"] = spec.composite_of;
            resolved["chains"] = ojson::array();
            for (const auto& c : spec.chains) {
                ojson cj;
                cj["name"] = c.name;
                cj["base"] = c.base.to_json();
                cj["grft"] = c.grft ? c.grft->to_json() : ojson();
                cj["crft"] = c.crft.to_json();
                resolved["chains"].push_back(std::move(cj));
                for (const StageConfig* s : {&c.base, c.grft ? &*c.grft : nullptr, &c.crft}) {
                    if (s == nullptr) {
                        continue;
                    }
                    run.input(s->train_path);
                    for (const auto& [name, path] : s->eval_paths) {
                        run.input(path);
                    }
                }
            }
            run.start(resolved, std::nullopt);
            const auto result = run_experiment_matrix(spec, run.dir());
            run.finish({{"comparison", absolute((run.dir() / "comparison.csv").string())},
                        {"stages_trained", result.stages_trained},
                        {"cache_hits", result.cache_hits}});
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        action();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "rmlab: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "rmlab: data error: " << e.what() << "\n";
        return kExitData;
    } catch (const LoadError& e) {
        std::cerr << "rmlab: data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "rmlab: failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace rmlab::cli
