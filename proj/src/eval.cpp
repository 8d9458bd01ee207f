// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "rmlab/errors.hpp"

namespace rmlab {

AccuracyResult accuracy_from_scores(std::span<const double> good, std::span<const double> bad) {
    if (good.size() != bad.size()) {
        throw ContractError("accuracy: score lists differ in length");
    }
    if (good.empty()) {
        throw ContractError("accuracy over an empty pair set");
    }
    AccuracyResult r;
    r.total = good.size();
    for (std::size_t i = 0; i < good.size(); ++i) {
        if (good[i] > bad[i]) {
            ++r.correct;
        } else if (good[i] == bad[i]) {
            ++r.ties;
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

PairScores score_pairs(const RewardModel& model, const std::vector<PreferencePair>& pairs,
                       const CollateOptions& options, std::size_t batch_pairs) {
    if (batch_pairs == 0) {
        throw ConfigError("evaluation batch size must be positive");
    }
    NoGradGuard no_grad;
    ByteTokenizer tok;
    PairScores out;
    out.good.reserve(pairs.size());
    out.bad.reserve(pairs.size());
    for (std::size_t start = 0; start < pairs.size(); start += batch_pairs) {
        const std::size_t end = std::min(pairs.size(), start + batch_pairs);
        std::vector<PreferencePair> chunk(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                                          pairs.begin() + static_cast<std::ptrdiff_t>(end));
        const TokenBatch b = collate_pairs(tok, chunk, options);
        const Tensor s = model.reward_score(b);
        const std::size_t n = chunk.size();
        for (std::size_t i = 0; i < n; ++i) {
            out.good.push_back(s.at(i));
            out.bad.push_back(s.at(n + i));
        }
    }
    return out;
}

AccuracyResult preference_accuracy(const RewardModel& model,
                                   const std::vector<PreferencePair>& pairs,
                                   const CollateOptions& options, std::size_t batch_pairs) {
    if (pairs.empty()) {
        throw ContractError("preference_accuracy on an empty pair set");
    }
    const auto scores = score_pairs(model, pairs, options, batch_pairs);
    return accuracy_from_scores(scores.good, scores.bad);
}

double geometric_mean(double acc_a, double acc_b) {
    if (!(acc_a >= 0.0 && acc_a <= 1.0) || !(acc_b >= 0.0 && acc_b <= 1.0)) {
        throw ContractError("geometric_mean expects accuracies in [0, 1]");
    }
    return std::sqrt(acc_a * acc_b);
}

double average_accuracy(std::span<const double> per_domain) {
    if (per_domain.empty()) {
        throw ContractError("average_accuracy of an empty list");
    }
    return std::accumulate(per_domain.begin(), per_domain.end(), 0.0) /
           static_cast<double>(per_domain.size());
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["checkpoint_hash"] = checkpoint_hash;
    j["sets"] = nlohmann::ordered_json::object();
    for (const auto& [name, s] : sets) {
        j["sets"][name] = {{"accuracy", s.accuracy}, {"pairs", s.pairs}, {"ties", s.ties}};
    }
    if (composite) {
        j["composite"] = {{"of", composite_of}, {"geometric_mean", *composite}};
    }
    if (!gains.empty()) {
        j["gains"] = gains;
    }
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.checkpoint_hash = j.value("checkpoint_hash", "");
        for (const auto& [name, s] : j.at("sets").items()) {
            r.sets[name] = {s.at("accuracy").get<double>(), s.at("pairs").get<std::size_t>(),
                            s.at("ties").get<std::size_t>()};
        }
        if (j.contains("composite")) {
            r.composite_of = j["composite"].at("of").get<std::vector<std::string>>();
            r.composite = j["composite"].at("geometric_mean").get<double>();
        }
        if (j.contains("gains")) {
            r.gains = j["gains"].get<std::map<std::string, double>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed evaluation report: ") + e.what());
    }
    return r;
}

std::map<std::string, double> accuracy_gain(const EvalReport& current, const EvalReport& reference) {
    if (current.sets.size() != reference.sets.size()) {
        throw ContractError("accuracy_gain: reports cover different sets");
    }
    std::map<std::string, double> out;
    for (const auto& [name, s] : current.sets) {
        const auto it = reference.sets.find(name);
        if (it == reference.sets.end()) {
            throw ContractError("accuracy_gain: reference lacks set " + name);
        }
        out[name] = s.accuracy - it->second.accuracy;
    }
    return out;
}

EvalReport evaluate(const RewardModel& model, const NamedPairSets& sets,
                    const CollateOptions& options, std::string checkpoint_hash,
                    const std::vector<std::string>& composite_of) {
    EvalReport r;
    r.checkpoint_hash = std::move(checkpoint_hash);
    for (const auto& [name, pairs] : sets) {
        const auto acc = preference_accuracy(model, pairs, options);
        r.sets[name] = {acc.accuracy, acc.total, acc.ties};
    }
    if (!composite_of.empty()) {
        if (composite_of.size() != 2) {
            throw ConfigError("composite needs exactly two set names");
        }
        r.composite_of = composite_of;
        const auto a = r.sets.find(composite_of[0]);
        const auto b = r.sets.find(composite_of[1]);
        if (a != r.sets.end() && b != r.sets.end()) {
            r.composite = geometric_mean(a->second.accuracy, b->second.accuracy);
        }
    }
    return r;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << v;
    return os.str();
}

}  // namespace

void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows,
                          const std::vector<std::string>& average_over) {
    std::vector<std::string> columns;
    if (!rows.empty()) {
        for (const auto& [name, acc] : rows.front().accuracy) {
            columns.push_back(name);
        }
    }
    const std::vector<std::string>& avg_cols = average_over.empty() ? columns : average_over;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "base,grft,crft";
    for (const auto& c : columns) {
        out << ',' << csv_field(c);
    }
    std::vector<std::string> gain_columns;
    if (!rows.empty()) {
        for (const auto& [name, g] : rows.front().gain) {
            gain_columns.push_back(name);
        }
    }
    out << ",average";
    for (const auto& c : gain_columns) {
        out << ',' << csv_field("gain_" + c);
    }
    out << '\n';
    for (const auto& row : rows) {
        out << csv_field(row.base) << ',' << csv_field(row.grft) << ',' << csv_field(row.crft);
        for (const auto& c : columns) {
            const auto it = row.accuracy.find(c);
            out << ',' << (it == row.accuracy.end() ? std::string() : number(it->second));
        }
        std::vector<double> vals;
        for (const auto& c : avg_cols) {
            const auto it = row.accuracy.find(c);
            if (it != row.accuracy.end()) {
                vals.push_back(it->second);
            }
        }
        out << ',' << (vals.empty() ? std::string() : number(average_accuracy(vals)));
        for (const auto& c : gain_columns) {
            const auto it = row.gain.find(c);
            out << ',' << (it == row.gain.end() ? std::string() : number(it->second));
        }
        out << '\n';
    }
}

}  // namespace rmlab
