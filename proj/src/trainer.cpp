// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/trainer.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "rmlab/errors.hpp"
#include "rmlab/hash.hpp"
#include "rmlab/log.hpp"
#include "rmlab/losses.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

namespace fs = std::filesystem;

Stage stage_from_string(std::string_view s) {
    if (s == "base_lm") {
        return Stage::base_lm;
    }
    if (s == "grft") {
        return Stage::grft;
    }
    if (s == "crft") {
        return Stage::crft;
    }
    throw ConfigError("unknown stage '" + std::string(s) + "' (expected base_lm, grft or crft)");
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::base_lm:
            return "base_lm";
        case Stage::grft:
            return "grft";
        case Stage::crft:
            return "crft";
    }
    return "?";
}

// ---- StageConfig ----------------------------------------------------------------

void StageConfig::validate() const {
    if (epochs < 1) {
        throw ConfigError("epochs must be >= 1");
    }
    if (stage == Stage::base_lm) {
        if (batch_size < 1) {
            throw ConfigError("batch size must be >= 1");
        }
        if (collate.lm_targets == LmTargets::none) {
            throw ConfigError("base_lm needs language-modeling targets");
        }
        model.validate();
    } else if (batch_size < 2) {
        throw ConfigError("batch size must be >= 2 for preference stages");
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
        throw ConfigError("mu must be a finite value >= 0");
    }
    if (collate.max_len < 1) {
        throw ConfigError("max_len must be >= 1");
    }
    adam.validate();
}

nlohmann::ordered_json StageConfig::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = to_string(stage);
    j["label"] = label;
    j["train"] = train_path.string();
    j["eval"] = nlohmann::ordered_json::object();
    for (const auto& [name, path] : eval_paths) {
        j["eval"][name] = path.string();
    }
    j["mu"] = mu;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["max_steps"] = max_steps ? nlohmann::ordered_json(*max_steps) : nlohmann::ordered_json();
    j["seed"] = seed;
    j["eval_every"] = eval_every;
    j["checkpoint_every"] = checkpoint_every;
    j["pooling"] = pooling ? nlohmann::ordered_json(to_string(*pooling)) : nlohmann::ordered_json();
    j["max_len"] = collate.max_len;
    j["pad_side"] = to_string(collate.pad_side);
    j["trunc_side"] = to_string(collate.trunc_side);
    j["lm_targets"] = to_string(collate.lm_targets);
    j["eos_is_target"] = collate.eos_is_target;
    j["warmup_steps"] = 0;
    j["optimizer"] = adam.to_json();
    j["model"] = model.to_json();
    return j;
}

StageConfig StageConfig::from_json(const nlohmann::json& j, const StageConfig& defaults) {
    if (!j.is_object()) {
        throw ConfigError("stage config must be a JSON object");
    }
    static const std::set<std::string> known = {
        "stage",     "label",       "train",      "eval",          "mu",
        "batch_size", "epochs",     "max_steps",  "seed",          "eval_every",
        "checkpoint_every", "pooling", "max_len", "pad_side",      "trunc_side",
        "lm_targets", "eos_is_target", "warmup_steps", "optimizer", "model"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown stage config key '" + key + "'");
        }
    }
    StageConfig c = defaults;
    try {
        if (j.contains("stage")) {
            c.stage = stage_from_string(j.at("stage").get<std::string>());
        }
        c.label = j.value("label", c.label);
        if (j.contains("train")) {
            c.train_path = j.at("train").get<std::string>();
        }
        if (j.contains("eval")) {
            c.eval_paths.clear();
            for (const auto& [name, path] : j.at("eval").items()) {
                c.eval_paths[name] = path.get<std::string>();
            }
        }
        c.mu = j.value("mu", c.mu);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        if (j.contains("max_steps")) {
            c.max_steps = j.at("max_steps").is_null()
                              ? std::nullopt
                              : std::optional<std::size_t>(j.at("max_steps").get<std::size_t>());
        }
        c.seed = j.value("seed", c.seed);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        if (j.contains("pooling")) {
            c.pooling = j.at("pooling").is_null()
                            ? std::nullopt
                            : std::optional<Pooling>(
                                  pooling_from_string(j.at("pooling").get<std::string>()));
        }
        c.collate.max_len = j.value("max_len", c.collate.max_len);
        if (j.contains("pad_side")) {
            c.collate.pad_side = side_from_string(j.at("pad_side").get<std::string>());
        }
        if (j.contains("trunc_side")) {
            c.collate.trunc_side = side_from_string(j.at("trunc_side").get<std::string>());
        }
        if (j.contains("lm_targets")) {
            c.collate.lm_targets = lm_targets_from_string(j.at("lm_targets").get<std::string>());
        }
        c.collate.eos_is_target = j.value("eos_is_target", c.collate.eos_is_target);
        if (j.value("warmup_steps", 0) != 0) {
            throw ConfigError("learning-rate warmup is not supported (warmup_steps must be 0)");
        }
        if (j.contains("optimizer")) {
            c.adam = AdamConfig::from_json(j.at("optimizer"), c.adam);
        }
        if (j.contains("model")) {
            nlohmann::json merged = c.model.to_json();
            merged.update(j.at("model"));
            c.model = ModelConfig::from_json(merged);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid stage config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- TrainLog ---------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

nlohmann::ordered_json snapshot_json(const Snapshot& s) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["accuracy"] = s.accuracy;
    j["gain"] = s.gain;
    return j;
}

}  // namespace

void TrainLog::write_csv(const fs::path& path) const {
    std::vector<std::string> sets;
    if (!snapshots.empty()) {
        for (const auto& [name, acc] : snapshots.front().accuracy) {
            sets.push_back(name);
        }
    }
    std::map<std::size_t, const Snapshot*> by_step;
    for (const auto& s : snapshots) {
        by_step[s.step] = &s;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "step,loss_total,loss_rank,loss_lm";
    for (const auto& s : sets) {
        out << ",acc_" << s;
    }
    for (const auto& s : sets) {
        out << ",gain_" << s;
    }
    out << "\n";
    auto write_metrics = [&](std::size_t step) {
        const auto it = by_step.find(step);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& s : sets) {
                out << ",";
                if (it != by_step.end()) {
                    out << fmt((pass == 0 ? it->second->accuracy : it->second->gain).at(s));
                }
            }
        }
        out << "\n";
    };
    // Snapshot k was taken after k updates, the same moment the loss of
    // step record k is measured, so they share a row.
    std::set<std::size_t> written;
    for (const auto& r : steps) {
        out << r.step << "," << fmt(r.loss_total) << "," << fmt(r.loss_rank) << ",";
        if (r.loss_lm) {
            out << fmt(*r.loss_lm);
        }
        write_metrics(r.step);
        written.insert(r.step);
    }
    for (const auto& s : snapshots) {
        if (!written.contains(s.step)) {
            out << s.step << ",,,";
            write_metrics(s.step);
        }
    }
}

nlohmann::ordered_json TrainLog::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["steps"] = nlohmann::ordered_json::array();
    for (const auto& r : steps) {
        nlohmann::ordered_json s;
        s["step"] = r.step;
        s["loss_total"] = r.loss_total;
        s["loss_rank"] = r.loss_rank;
        s["loss_lm"] = r.loss_lm ? nlohmann::ordered_json(*r.loss_lm) : nlohmann::ordered_json();
        j["steps"].push_back(std::move(s));
    }
    j["snapshots"] = nlohmann::ordered_json::array();
    for (const auto& s : snapshots) {
        j["snapshots"].push_back(snapshot_json(s));
    }
    return j;
}

TrainLog TrainLog::from_json(const nlohmann::json& j) {
    TrainLog log;
    try {
        log.stage = j.at("stage").get<std::string>();
        for (const auto& s : j.at("steps")) {
            StepRecord r;
            r.step = s.at("step").get<std::size_t>();
            r.loss_total = s.at("loss_total").get<double>();
            r.loss_rank = s.at("loss_rank").get<double>();
            if (!s.at("loss_lm").is_null()) {
                r.loss_lm = s.at("loss_lm").get<double>();
            }
            log.steps.push_back(r);
        }
        for (const auto& s : j.at("snapshots")) {
            Snapshot snap;
            snap.step = s.at("step").get<std::size_t>();
            snap.accuracy = s.at("accuracy").get<std::map<std::string, double>>();
            snap.gain = s.at("gain").get<std::map<std::string, double>>();
            log.snapshots.push_back(std::move(snap));
        }
        log.wall_seconds = j.value("wall_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid train log: ") + e.what());
    }
    return log;
}

nlohmann::ordered_json TrainLog::summary_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["steps"] = steps.empty() ? 0 : steps.back().step + 1;
    if (!steps.empty()) {
        j["first_loss_total"] = steps.front().loss_total;
        j["final_loss_total"] = steps.back().loss_total;
        j["final_loss_rank"] = steps.back().loss_rank;
        j["final_loss_lm"] = steps.back().loss_lm ? nlohmann::ordered_json(*steps.back().loss_lm)
                                                  : nlohmann::ordered_json();
    }
    j["snapshots"] = nlohmann::ordered_json::array();
    for (const auto& s : snapshots) {
        j["snapshots"].push_back(snapshot_json(s));
    }
    j["wall_seconds"] = wall_seconds;
    return j;
}

const Snapshot* TrainLog::final_snapshot() const {
    return snapshots.empty() ? nullptr : &snapshots.back();
}

// ---- training loops ---------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Per-epoch seeded shuffles of [0, n), cut into batches of `batch` (the
// final short batch is kept), truncated to max_steps.
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n, const StageConfig& cfg) {
    Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            if (cfg.max_steps && out.size() >= *cfg.max_steps) {
                return out;
            }
            const std::size_t end = std::min(n, s + cfg.batch_size);
            out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return out;
}

nlohmann::ordered_json checkpoint_meta(const StageConfig& cfg, std::size_t steps,
                                       const std::string& parent) {
    auto c = cfg.to_json();
    c.erase("train");
    c.erase("eval");
    nlohmann::ordered_json m;
    m["stage"] = to_string(cfg.stage);
    m["label"] = cfg.label;
    m["steps"] = steps;
    m["parent"] = parent.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(parent);
    m["stage_config"] = std::move(c);
    return m;
}

void write_outputs(const TrainOutputs& out, const TrainResult& r) {
    if (out.dir.empty()) {
        return;
    }
    fs::create_directories(out.dir);
    r.checkpoint.save(out.dir / "checkpoint.pfrg");
    r.log.write_csv(out.dir / "log.csv");
    std::ofstream(out.dir / "summary.json", std::ios::trunc) << r.log.summary_json().dump(2) << "\n";
}

void maybe_periodic_checkpoint(const TrainOutputs& out, const StageConfig& cfg,
                               const RewardModel& model, bool with_head, std::size_t updates,
                               const std::string& parent) {
    if (out.dir.empty() || cfg.checkpoint_every == 0 || updates % cfg.checkpoint_every != 0) {
        return;
    }
    fs::create_directories(out.dir);
    Checkpoint c = model.to_checkpoint(with_head);
    c.meta = checkpoint_meta(cfg, updates, parent);
    c.save(out.dir / ("step_" + std::to_string(updates) + ".pfrg"));
}

void check_length(const StageConfig& cfg, const ModelConfig& model) {
    if (cfg.collate.max_len > model.max_position) {
        throw ConfigError("max_len " + std::to_string(cfg.collate.max_len) +
                          " exceeds the model's max_position " + std::to_string(model.max_position));
    }
}

}  // namespace

TrainResult train_base_lm(const std::vector<std::string>& corpus, const StageConfig& cfg,
                          const TrainOutputs& out) {
    if (cfg.stage != Stage::base_lm) {
        throw ConfigError("train_base_lm needs a base_lm stage config");
    }
    cfg.validate();
    if (corpus.empty()) {
        throw ConfigError("base LM corpus is empty");
    }
    check_length(cfg, cfg.model);
    const auto t0 = Clock::now();
    ModelConfig mc = cfg.model;
    if (cfg.pooling) {
        mc.pooling = *cfg.pooling;
    }
    RewardModel model(mc, cfg.seed);
    Adam adam(parameter_tensors(model), cfg.adam);
    CollateOptions opts = cfg.collate;
    // The LM must learn to terminate, so EOS is always a target here.
    opts.eos_is_target = true;

    ByteTokenizer tok;
    std::vector<TokenSequence> seqs;
    seqs.reserve(corpus.size());
    for (const auto& text : corpus) {
        seqs.push_back(encode_text(tok, text));
    }

    TrainLog log;
    log.stage = to_string(cfg.stage);
    const auto schedule = batch_schedule(seqs.size(), cfg);
    for (const auto& idx : schedule) {
        std::vector<TokenSequence> chunk;
        chunk.reserve(idx.size());
        for (std::size_t i : idx) {
            chunk.push_back(seqs[i]);
        }
        const TokenBatch b = collate(chunk, opts);
        const std::size_t targets =
            std::accumulate(b.loss_mask.begin(), b.loss_mask.end(), std::size_t{0});
        if (targets == 0) {
            throw DataError("base LM batch has no target tokens");
        }
        const Tensor hidden = model.forward_flat(b);
        const Tensor loss =
            scale(lm_nll_sum(model, hidden, b, 0, b.batch), 1.0 / static_cast<double>(targets));
        log.steps.push_back({log.steps.size(), loss.item(), 0.0, loss.item()});
        adam.zero_grad();
        backward(loss);
        adam.step();
        maybe_periodic_checkpoint(out, cfg, model, false, adam.steps(), "");
    }
    adam.zero_grad();

    TrainResult r;
    r.checkpoint = model.to_checkpoint(false);
    r.checkpoint.meta = checkpoint_meta(cfg, adam.steps(), "");
    log.wall_seconds = seconds_since(t0);
    r.log = std::move(log);
    write_outputs(out, r);
    logger()->info("base_lm: {} steps, final loss {}", r.log.steps.size(),
                   r.log.steps.empty() ? 0.0 : r.log.steps.back().loss_total);
    return r;
}

TrainResult train_rm(const Checkpoint& start, const std::vector<PreferencePair>& raw_pairs,
                     const NamedPairSets& eval_sets, const StageConfig& cfg,
                     const TrainOutputs& out) {
    if (cfg.stage == Stage::base_lm) {
        throw ConfigError("train_rm needs a grft or crft stage config");
    }
    cfg.validate();
    const std::vector<PreferencePair> pairs = dedup_invalid(raw_pairs);
    if (pairs.empty()) {
        throw DataError("preference pair set is empty after dedup");
    }
    for (const auto& [name, set] : eval_sets) {
        if (set.empty()) {
            throw DataError("evaluation set '" + name + "' is empty");
        }
    }
    check_length(cfg, start.config);
    const auto t0 = Clock::now();
    const std::string parent = start.content_hash();

    RewardModel model = [&] {
        if (start.has_reward_head()) {
            RewardModel m = RewardModel::from_checkpoint(start);
            return m;
        }
        RewardModel m = attach_reward_head(start);
        if (cfg.pooling) {
            m.set_pooling(*cfg.pooling);
        }
        return m;
    }();
    if (start.has_reward_head() && cfg.pooling && *cfg.pooling != model.config().pooling) {
        logger()->warn("{}: keeping the checkpoint's pooling {} (config asks for {})",
                       to_string(cfg.stage), to_string(model.config().pooling),
                       to_string(*cfg.pooling));
    }
    Adam adam(parameter_tensors(model), cfg.adam);
    const CollateOptions& opts = cfg.collate;

    TrainLog log;
    log.stage = to_string(cfg.stage);
    std::map<std::string, double> base_acc;
    auto snapshot = [&](std::size_t updates) {
        if (eval_sets.empty()) {
            return;
        }
        Snapshot s;
        s.step = updates;
        for (const auto& [name, set] : eval_sets) {
            s.accuracy[name] = preference_accuracy(model, set, opts).accuracy;
        }
        if (log.snapshots.empty()) {
            base_acc = s.accuracy;
        }
        for (const auto& [name, acc] : s.accuracy) {
            s.gain[name] = acc - base_acc.at(name);
        }
        log.snapshots.push_back(std::move(s));
    };
    snapshot(0);

    ByteTokenizer tok;
    const auto schedule = batch_schedule(pairs.size(), cfg);
    for (const auto& idx : schedule) {
        std::vector<PreferencePair> chunk;
        chunk.reserve(idx.size());
        for (std::size_t i : idx) {
            chunk.push_back(pairs[i]);
        }
        const std::size_t n = chunk.size();
        const TokenBatch b = collate_pairs(tok, chunk, opts);
        const Tensor hidden = model.forward_flat(b);
        const Tensor scores = reshape(model.reward_from_hidden(hidden, b), {2 * n, 1});
        const Tensor rank = ranking_loss(reshape(slice_rows(scores, 0, n), {n}),
                                         reshape(slice_rows(scores, n, 2 * n), {n}));
        StepRecord rec{log.steps.size(), 0.0, rank.item(), std::nullopt};
        Tensor total = rank;
        if (cfg.mu > 0.0) {
            const Tensor imit =
                scale(lm_nll_sum(model, hidden, b, 0, n), 1.0 / static_cast<double>(n));
            rec.loss_lm = imit.item();
            total = pmp_loss(rank, imit, cfg.mu);
        }
        rec.loss_total = total.item();
        log.steps.push_back(rec);
        adam.zero_grad();
        backward(total);
        adam.step();
        const std::size_t updates = adam.steps();
        if (cfg.eval_every > 0 && updates % cfg.eval_every == 0 && updates < schedule.size()) {
            snapshot(updates);
        }
        maybe_periodic_checkpoint(out, cfg, model, true, updates, parent);
    }
    adam.zero_grad();
    if (log.snapshots.empty() || log.snapshots.back().step != adam.steps()) {
        snapshot(adam.steps());
    }

    TrainResult r;
    r.checkpoint = model.to_checkpoint(true);
    r.checkpoint.meta = checkpoint_meta(cfg, adam.steps(), parent);
    log.wall_seconds = seconds_since(t0);
    r.log = std::move(log);
    write_outputs(out, r);
    if (const Snapshot* s = r.log.final_snapshot()) {
        for (const auto& [name, acc] : s->accuracy) {
            logger()->info("{}: {} steps, {} accuracy {:.4f}", r.log.stage, adam.steps(), name, acc);
        }
    }
    return r;
}

// ---- experiment matrix -----------------------------------------------------------

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute()) {
        return p;
    }
    return base / p;
}

StageConfig stage_from_spec(const nlohmann::json& j, const StageConfig& defaults, Stage stage,
                            const fs::path& base_dir) {
    nlohmann::json merged = j;
    if (merged.contains("stage") && merged.at("stage") != to_string(stage)) {
        throw ConfigError("chain entry '" + to_string(stage) + "' declares stage " +
                          merged.at("stage").dump());
    }
    merged["stage"] = to_string(stage);
    StageConfig c = StageConfig::from_json(merged, defaults);
    c.train_path = resolve(c.train_path, base_dir);
    for (auto& [name, path] : c.eval_paths) {
        path = resolve(path, base_dir);
    }
    return c;
}

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) {
        throw ConfigError(what + ": no dataset path given");
    }
    if (!fs::is_regular_file(p)) {
        throw ConfigError(what + ": dataset not found: " + p.string());
    }
}

// Cache key: stage config without file paths, plus content hashes of the
// data files and of the input checkpoint.
std::string cache_key(const StageConfig& cfg, const std::string& input_hash) {
    nlohmann::ordered_json j = cfg.to_json();
    j.erase("train");
    j.erase("eval");
    j.erase("label");
    j["train_sha256"] = file_sha256(cfg.train_path);
    j["eval_sha256"] = nlohmann::ordered_json::object();
    for (const auto& [name, path] : cfg.eval_paths) {
        j["eval_sha256"][name] = file_sha256(path);
    }
    j["input"] = input_hash;
    return sha256_hex(std::string_view(j.dump()));
}

struct StageRun {
    Checkpoint checkpoint;
    TrainLog log;
    std::string hash;
};

StageRun run_stage(const StageConfig& cfg, const std::optional<Checkpoint>& input,
                   const fs::path& cache_dir, const fs::path& stage_dir, MatrixResult& stats) {
    const std::string input_hash = input ? input->content_hash() : "";
    const std::string key = cache_key(cfg, input_hash);
    const fs::path ckpt_path = cache_dir / (key + ".pfrg");
    const fs::path log_path = cache_dir / (key + ".log.json");
    StageRun run;
    if (fs::is_regular_file(ckpt_path) && fs::is_regular_file(log_path)) {
        run.checkpoint = Checkpoint::load(ckpt_path);
        std::ifstream in(log_path);
        run.log = TrainLog::from_json(nlohmann::json::parse(in));
        ++stats.cache_hits;
        logger()->info("{} '{}': cache hit {}", to_string(cfg.stage), cfg.label, key.substr(0, 12));
    } else {
        TrainResult r;
        if (cfg.stage == Stage::base_lm) {
            r = train_base_lm(read_texts(cfg.train_path), cfg);
        } else {
            NamedPairSets evals;
            for (const auto& [name, path] : cfg.eval_paths) {
                evals[name] = read_pairs(path);
            }
            r = train_rm(*input, read_pairs(cfg.train_path), evals, cfg);
        }
        fs::create_directories(cache_dir);
        r.checkpoint.save(ckpt_path);
        {
            std::ofstream out(log_path.string() + ".tmp", std::ios::trunc);
            out << r.log.to_json().dump(2) << "\n";
        }
        fs::rename(log_path.string() + ".tmp", log_path);
        run.checkpoint = std::move(r.checkpoint);
        run.log = std::move(r.log);
        ++stats.stages_trained;
    }
    run.hash = run.checkpoint.content_hash();
    fs::create_directories(stage_dir);
    run.log.write_csv(stage_dir / "log.csv");
    std::ofstream(stage_dir / "summary.json", std::ios::trunc) << run.log.summary_json().dump(2)
                                                               << "\n";
    std::ofstream(stage_dir / "checkpoint.txt", std::ios::trunc) << ckpt_path.string() << "\n";
    return run;
}

}  // namespace

MatrixSpec MatrixSpec::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object() || !j.contains("chains") || !j.at("chains").is_array()) {
        throw ConfigError("experiment matrix needs a 'chains' array");
    }
    MatrixSpec spec;
    StageConfig defaults;
    if (j.contains("defaults")) {
        nlohmann::json d = j.at("defaults");
        d["stage"] = "grft";
        defaults = StageConfig::from_json(d);
    }
    try {
        spec.composite_of = j.value("composite_of", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid composite_of: ") + e.what());
    }
    if (!spec.composite_of.empty() && spec.composite_of.size() != 2) {
        throw ConfigError("composite_of must name exactly two sets");
    }
    std::set<std::string> names;
    for (const auto& cj : j.at("chains")) {
        if (!cj.is_object() || !cj.contains("name") || !cj.contains("base") || !cj.contains("crft")) {
            throw ConfigError("each chain needs name, base and crft");
        }
        ChainSpec c;
        c.name = cj.at("name").get<std::string>();
        if (!names.insert(c.name).second) {
            throw ConfigError("duplicate chain name '" + c.name + "'");
        }
        c.base = stage_from_spec(cj.at("base"), defaults, Stage::base_lm, base_dir);
        if (cj.contains("grft") && !cj.at("grft").is_null()) {
            c.grft = stage_from_spec(cj.at("grft"), defaults, Stage::grft, base_dir);
        }
        c.crft = stage_from_spec(cj.at("crft"), defaults, Stage::crft, base_dir);
        spec.chains.push_back(std::move(c));
    }
    if (spec.chains.empty()) {
        throw ConfigError("experiment matrix has no chains");
    }
    return spec;
}

MatrixResult run_experiment_matrix(const MatrixSpec& spec, const fs::path& out_dir) {
    // Validate everything up front so a bad chain fails before any training.
    if (spec.chains.empty()) {
        throw ConfigError("experiment matrix has no chains");
    }
    for (const auto& c : spec.chains) {
        const std::string where = "chain '" + c.name + "'";
        if (c.base.stage != Stage::base_lm) {
            throw ConfigError(where + ": first stage must be base_lm");
        }
        if (c.grft && c.grft->stage != Stage::grft) {
            throw ConfigError(where + ": middle stage must be grft");
        }
        if (c.crft.stage != Stage::crft) {
            throw ConfigError(where + ": last stage must be crft");
        }
        c.base.validate();
        check_length(c.base, c.base.model);
        require_file(c.base.train_path, where + " base_lm");
        for (const StageConfig* s : {c.grft ? &*c.grft : nullptr, &c.crft}) {
            if (s == nullptr) {
                continue;
            }
            s->validate();
            check_length(*s, c.base.model);
            require_file(s->train_path, where + " " + to_string(s->stage));
            for (const auto& [name, path] : s->eval_paths) {
                require_file(path, where + " eval set " + name);
            }
        }
        for (const auto& name : spec.composite_of) {
            if (!c.crft.eval_paths.contains(name)) {
                throw ConfigError(where + ": composite set '" + name + "' is not evaluated");
            }
        }
    }

    MatrixResult result;
    const fs::path cache_dir = out_dir / "cache";
    std::vector<ComparisonRow> rows;
    std::vector<std::string> average_over;
    for (const auto& [name, path] : spec.chains.front().crft.eval_paths) {
        average_over.push_back(name);
    }
    for (const auto& c : spec.chains) {
        ChainResult cr;
        cr.name = c.name;
        const fs::path chain_dir = out_dir / "chains" / c.name;
        StageRun base = run_stage(c.base, std::nullopt, cache_dir, chain_dir / "base_lm", result);
        cr.logs.push_back(base.log);
        Checkpoint current = std::move(base.checkpoint);
        if (c.grft) {
            StageRun g = run_stage(*c.grft, current, cache_dir, chain_dir / "grft", result);
            cr.logs.push_back(g.log);
            current = std::move(g.checkpoint);
        }
        StageRun crft = run_stage(c.crft, current, cache_dir, chain_dir / "crft", result);
        cr.logs.push_back(crft.log);
        cr.final_checkpoint = crft.hash;

        cr.row.base = c.base.label.empty() ? "base" : c.base.label;
        cr.row.grft = c.grft ? (c.grft->label.empty() ? "grft" : c.grft->label) : "No";
        cr.row.crft = c.crft.label.empty() ? "crft" : c.crft.label;
        if (const Snapshot* s = crft.log.final_snapshot()) {
            cr.row.accuracy = s->accuracy;
            cr.row.gain = s->gain;
            if (spec.composite_of.size() == 2) {
                cr.row.accuracy["composite"] = geometric_mean(
                    s->accuracy.at(spec.composite_of[0]), s->accuracy.at(spec.composite_of[1]));
            }
        }
        rows.push_back(cr.row);
        result.chains.push_back(std::move(cr));
    }

    fs::create_directories(out_dir);
    write_comparison_csv(out_dir / "comparison.csv", rows, average_over);
    nlohmann::ordered_json summary;
    summary["stages_trained"] = result.stages_trained;
    summary["cache_hits"] = result.cache_hits;
    summary["chains"] = nlohmann::ordered_json::array();
    for (const auto& cr : result.chains) {
        nlohmann::ordered_json cj;
        cj["name"] = cr.name;
        cj["base"] = cr.row.base;
        cj["grft"] = cr.row.grft;
        cj["crft"] = cr.row.crft;
        cj["final_checkpoint"] = cr.final_checkpoint;
        cj["accuracy"] = cr.row.accuracy;
        if (!cr.logs.empty() && cr.logs.back().final_snapshot()) {
            cj["gain"] = cr.logs.back().final_snapshot()->gain;
        }
        summary["chains"].push_back(std::move(cj));
    }
    std::ofstream(out_dir / "matrix.json", std::ios::trunc) << summary.dump(2) << "\n";
    return result;
}

}  // namespace rmlab
