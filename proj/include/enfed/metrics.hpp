#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "enfed/energy.hpp"
#include "enfed/errors.hpp"
#include "enfed/wire.hpp"

namespace enfed {

enum class StopReason { AccuracyReached, BatteryLow, MaxRoundsReached };
enum class StopPhase { Collection, Rounds };
enum class RunOutcome { Ok, NoCollaborators };

inline const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::AccuracyReached: return "accuracy_reached";
        case StopReason::BatteryLow: return "battery_low";
        case StopReason::MaxRoundsReached: return "max_rounds_reached";
    }
    return "unknown";
}

// Requester-side message counters, indexed by MsgType.
struct MsgCounters {
    std::array<long, 6> sent{};
    std::array<long, 6> recv{};

    void count_sent(MsgType t) { ++sent[static_cast<int>(t) - 1]; }
    void count_recv(MsgType t) { ++recv[static_cast<int>(t) - 1]; }
    long sent_of(MsgType t) const { return sent[static_cast<int>(t) - 1]; }
    long recv_of(MsgType t) const { return recv[static_cast<int>(t) - 1]; }
    long total() const {
        long n = 0;
        for (long v : sent) n += v;
        for (long v : recv) n += v;
        return n;
    }
};

// Everything a run reports. Serialized as flat key=value lines in a fixed
// order so equal runs produce byte-identical files.
struct RunMetrics {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string transport = "sim";
    RunOutcome outcome = RunOutcome::Ok;
    std::optional<StopReason> stop_reason;
    std::optional<StopPhase> stop_phase;
    int rounds_executed = 0;
    int collaborators = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    EnergyLedger ledger;
    double battery_start = 0.0;
    double battery_end = 0.0;
    double response_time = 0.0;
    MsgCounters msgs;
    double sim_elapsed = 0.0;
    std::vector<double> loss_trace;      // one entry per aggregation round
    std::vector<double> round_accuracy;  // aligned with loss_trace
    std::vector<double> round_battery;   // battery level after each round
};

namespace metricsdetail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(v[i]);
    }
    return out;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            out.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw DataError("metrics field '" + key + "': bad number '" + cell + "'");
        }
    }
    return out;
}

inline const std::array<const char*, 6>& type_names() {
    static const std::array<const char*, 6> names = {"request",      "accept", "reject",
                                                     "model_update", "pull_request", "close"};
    return names;
}

}  // namespace metricsdetail

inline std::string serialize_metrics(const RunMetrics& m) {
    using metricsdetail::fmt_double;
    using metricsdetail::fmt_list;
    std::string out;
    auto kv = [&out](const std::string& k, const std::string& v) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    };
    kv("scenario", m.scenario);
    kv("seed", std::to_string(m.seed));
    kv("transport", m.transport);
    kv("outcome", m.outcome == RunOutcome::Ok ? "ok" : "no_collaborators");
    kv("stop_reason", m.stop_reason ? stop_reason_name(*m.stop_reason) : "none");
    kv("stop_phase", !m.stop_phase                       ? "none"
                     : *m.stop_phase == StopPhase::Collection ? "collection"
                                                              : "rounds");
    kv("rounds_executed", std::to_string(m.rounds_executed));
    kv("collaborators", std::to_string(m.collaborators));
    kv("accuracy", fmt_double(m.accuracy));
    kv("precision", fmt_double(m.precision));
    kv("recall", fmt_double(m.recall));
    kv("f1", fmt_double(m.f1));
    kv("t_init", fmt_double(m.ledger.t_init));
    kv("t_com1", fmt_double(m.ledger.t_com1));
    kv("t_com2", fmt_double(m.ledger.t_com2));
    kv("t_loc", fmt_double(m.ledger.t_loc));
    kv("t_agg", fmt_double(m.ledger.t_agg));
    kv("t_total", fmt_double(m.ledger.total_time()));
    kv("e_comp", fmt_double(m.ledger.e_comp));
    kv("e_comm", fmt_double(m.ledger.e_comm));
    kv("e_total", fmt_double(m.ledger.total_energy()));
    kv("battery_start", fmt_double(m.battery_start));
    kv("battery_end", fmt_double(m.battery_end));
    kv("response_time", fmt_double(m.response_time));
    for (int i = 0; i < 6; ++i)
        kv(std::string("msg_sent_") + metricsdetail::type_names()[i], std::to_string(m.msgs.sent[i]));
    for (int i = 0; i < 6; ++i)
        kv(std::string("msg_recv_") + metricsdetail::type_names()[i], std::to_string(m.msgs.recv[i]));
    kv("sim_elapsed", fmt_double(m.sim_elapsed));
    kv("loss_trace", fmt_list(m.loss_trace));
    kv("round_accuracy", fmt_list(m.round_accuracy));
    kv("round_battery", fmt_list(m.round_battery));
    return out;
}

inline RunMetrics parse_metrics(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("metrics line " + std::to_string(lineno) + ": missing '='");
        if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
            throw DataError("metrics: duplicate field '" + line.substr(0, eq) + "'");
    }
    auto take = [&kv](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("metrics: missing field '" + key + "'");
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_double = [&take](const std::string& key) {
        const std::string v = take(key);
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw DataError("metrics field '" + key + "': bad number '" + v + "'");
        }
    };
    auto take_long = [&take_double](const std::string& key) {
        return static_cast<long>(take_double(key));
    };

    RunMetrics m;
    m.scenario = take("scenario");
    m.seed = static_cast<std::uint64_t>(take_long("seed"));
    m.transport = take("transport");
    const std::string outcome = take("outcome");
    if (outcome == "ok")
        m.outcome = RunOutcome::Ok;
    else if (outcome == "no_collaborators")
        m.outcome = RunOutcome::NoCollaborators;
    else
        throw DataError("metrics: unknown outcome '" + outcome + "'");
    const std::string reason = take("stop_reason");
    if (reason == "accuracy_reached")
        m.stop_reason = StopReason::AccuracyReached;
    else if (reason == "battery_low")
        m.stop_reason = StopReason::BatteryLow;
    else if (reason == "max_rounds_reached")
        m.stop_reason = StopReason::MaxRoundsReached;
    else if (reason != "none")
        throw DataError("metrics: unknown stop_reason '" + reason + "'");
    const std::string phase = take("stop_phase");
    if (phase == "collection")
        m.stop_phase = StopPhase::Collection;
    else if (phase == "rounds")
        m.stop_phase = StopPhase::Rounds;
    else if (phase != "none")
        throw DataError("metrics: unknown stop_phase '" + phase + "'");
    m.rounds_executed = static_cast<int>(take_long("rounds_executed"));
    m.collaborators = static_cast<int>(take_long("collaborators"));
    m.accuracy = take_double("accuracy");
    m.precision = take_double("precision");
    m.recall = take_double("recall");
    m.f1 = take_double("f1");
    m.ledger.t_init = take_double("t_init");
    m.ledger.t_com1 = take_double("t_com1");
    m.ledger.t_com2 = take_double("t_com2");
    m.ledger.t_loc = take_double("t_loc");
    m.ledger.t_agg = take_double("t_agg");
    const double t_total = take_double("t_total");
    m.ledger.e_comp = take_double("e_comp");
    m.ledger.e_comm = take_double("e_comm");
    const double e_total = take_double("e_total");
    (void)t_total;
    (void)e_total;
    m.battery_start = take_double("battery_start");
    m.battery_end = take_double("battery_end");
    m.response_time = take_double("response_time");
    for (int i = 0; i < 6; ++i)
        m.msgs.sent[i] = take_long(std::string("msg_sent_") + metricsdetail::type_names()[i]);
    for (int i = 0; i < 6; ++i)
        m.msgs.recv[i] = take_long(std::string("msg_recv_") + metricsdetail::type_names()[i]);
    m.sim_elapsed = take_double("sim_elapsed");
    m.loss_trace = metricsdetail::parse_list(take("loss_trace"), "loss_trace");
    m.round_accuracy = metricsdetail::parse_list(take("round_accuracy"), "round_accuracy");
    m.round_battery = metricsdetail::parse_list(take("round_battery"), "round_battery");
    if (!kv.empty()) throw DataError("metrics: unknown field '" + kv.begin()->first + "'");
    return m;
}

// Write-then-rename so a failed run never leaves a partial file behind.
inline void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw EnfedError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) {
            fs::remove(tmp);
            throw EnfedError("write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw EnfedError("rename to '" + path + "' failed: " + ec.message());
    }
}

inline RunMetrics load_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open metrics file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_metrics(ss.str());
}

// Comparison table plus reduction percentages against the first entry,
// the headline form "training time reduced by NN.N%".
inline std::string format_report(const std::vector<std::pair<std::string, RunMetrics>>& entries) {
    if (entries.empty()) throw std::invalid_argument("format_report: no metrics");
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-12s %-10s %-12s %-12s %-7s %-18s\n", "scenario",
                  "accuracy", "time_s", "energy_J", "rounds", "stop");
    out += buf;
    for (const auto& [name, m] : entries) {
        std::snprintf(buf, sizeof(buf), "%-12s %-10.4f %-12.6f %-12.6f %-7d %-18s\n",
                      m.scenario.c_str(), m.accuracy, m.ledger.total_time(),
                      m.ledger.total_energy(), m.rounds_executed,
                      m.stop_reason ? stop_reason_name(*m.stop_reason) : "none");
        out += buf;
    }
    const auto& base = entries.front().second;
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const auto& other = entries[i].second;
        const double ot = other.ledger.total_time();
        const double oe = other.ledger.total_energy();
        const double time_red = ot > 0 ? (ot - base.ledger.total_time()) / ot * 100.0 : 0.0;
        const double energy_red = oe > 0 ? (oe - base.ledger.total_energy()) / oe * 100.0 : 0.0;
        std::snprintf(buf, sizeof(buf),
                      "%s vs %s: training time reduced by %.1f%%, energy reduced by %.1f%%\n",
                      base.scenario.c_str(), other.scenario.c_str(), time_red, energy_red);
        out += buf;
    }
    return out;
}

}  // namespace enfed
