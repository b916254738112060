#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "enfed/baselines.hpp"
#include "enfed/datasets.hpp"
#include "enfed/energy.hpp"
#include "enfed/protocol.hpp"

namespace enfed {

struct DatasetConfig {
    std::string type = "synthetic";  // synthetic | csv
    // synthetic
    int classes = 6;
    int per_class = 100;
    int dim = 16;
    double sep = 8.0;
    double label_noise = 0.0;
    // csv
    std::string path;
    std::string schema = "harsense";
    bool normalize = true;
};

struct PartitionConfig {
    PartitionMode mode = PartitionMode::Iid;
    double alpha = 0.5;
};

struct EnfedScenarioConfig {
    RequesterConfig requester;  // hp filled in from model + dataset
    int nearby = 5;
    double reserve_price = 0.0;
    std::vector<double> reserve_prices;  // optional per-peer override
    bool pretrained = true;
    int pretrain_epochs = 0;  // 0: use model epochs
    bool retrain_between_rounds = false;
    std::vector<int> sweep_collaborators;
};

struct ModelConfig {
    std::vector<int> hidden = {64, 32};
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-3;
};

struct ExperimentConfig {
    std::string scenario = "enfed";  // enfed | cfl | dfl | cloud
    std::uint64_t seed = 0;
    std::string out = "metrics.txt";
    std::string transport = "sim";  // sim | tcp (enfed only)
    DatasetConfig dataset;
    double split_ratio = 0.8;
    PartitionConfig partition;
    ModelConfig model;
    PowerProfile power;
    BatteryState battery;
    CostModel cost;
    SimLink network;
    int probe_rows = 1;
    EnfedScenarioConfig enfed;
    CflConfig cfl;
    DflConfig dfl;
    CloudConfig cloud;
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("'" + ctx + "' must be an object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key '" + item.key() + "' in " + ctx);
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using cfgdetail::check_keys;
    using cfgdetail::get_or;
    using nlohmann::json;

    check_keys(j, {"scenario", "seed", "out", "transport", "dataset", "split_ratio", "partition",
                   "model", "power", "battery", "cost", "network", "probe_rows", "enfed", "cfl",
                   "dfl", "cloud"},
               "config");
    ExperimentConfig cfg;
    cfg.scenario = get_or<std::string>(j, "scenario", cfg.scenario);
    if (cfg.scenario != "enfed" && cfg.scenario != "cfl" && cfg.scenario != "dfl" &&
        cfg.scenario != "cloud")
        throw ConfigError("scenario must be one of enfed|cfl|dfl|cloud");
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out = get_or<std::string>(j, "out", cfg.out);
    cfg.transport = get_or<std::string>(j, "transport", cfg.transport);
    if (cfg.transport != "sim" && cfg.transport != "tcp")
        throw ConfigError("transport must be sim or tcp");
    if (cfg.transport == "tcp" && cfg.scenario != "enfed")
        throw ConfigError("tcp transport is only supported for the enfed scenario");
    cfg.split_ratio = get_or<double>(j, "split_ratio", cfg.split_ratio);
    if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0))
        throw ConfigError("split_ratio must be in (0,1)");
    cfg.probe_rows = get_or<int>(j, "probe_rows", cfg.probe_rows);
    if (cfg.probe_rows < 1) throw ConfigError("probe_rows must be >= 1");

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d,
                   {"type", "classes", "per_class", "dim", "sep", "label_noise", "path", "schema",
                    "normalize"},
                   "dataset");
        cfg.dataset.type = get_or<std::string>(d, "type", cfg.dataset.type);
        if (cfg.dataset.type != "synthetic" && cfg.dataset.type != "csv")
            throw ConfigError("dataset.type must be synthetic or csv");
        cfg.dataset.classes = get_or<int>(d, "classes", cfg.dataset.classes);
        cfg.dataset.per_class = get_or<int>(d, "per_class", cfg.dataset.per_class);
        cfg.dataset.dim = get_or<int>(d, "dim", cfg.dataset.dim);
        cfg.dataset.sep = get_or<double>(d, "sep", cfg.dataset.sep);
        cfg.dataset.label_noise = get_or<double>(d, "label_noise", cfg.dataset.label_noise);
        cfg.dataset.path = get_or<std::string>(d, "path", cfg.dataset.path);
        cfg.dataset.schema = get_or<std::string>(d, "schema", cfg.dataset.schema);
        cfg.dataset.normalize = get_or<bool>(d, "normalize", cfg.dataset.normalize);
        if (cfg.dataset.type == "csv" && cfg.dataset.path.empty())
            throw ConfigError("dataset.path is required for csv datasets");
    }

    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        check_keys(p, {"mode", "alpha"}, "partition");
        const std::string mode = get_or<std::string>(p, "mode", "iid");
        if (mode == "iid")
            cfg.partition.mode = PartitionMode::Iid;
        else if (mode == "label_skew")
            cfg.partition.mode = PartitionMode::LabelSkew;
        else
            throw ConfigError("partition.mode must be iid or label_skew");
        cfg.partition.alpha = get_or<double>(p, "alpha", cfg.partition.alpha);
        if (!(cfg.partition.alpha > 0)) throw ConfigError("partition.alpha must be > 0");
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"hidden", "epochs", "batch_size", "learning_rate"}, "model");
        cfg.model.hidden = get_or<std::vector<int>>(m, "hidden", cfg.model.hidden);
        cfg.model.epochs = get_or<int>(m, "epochs", cfg.model.epochs);
        cfg.model.batch_size = get_or<int>(m, "batch_size", cfg.model.batch_size);
        cfg.model.learning_rate = get_or<double>(m, "learning_rate", cfg.model.learning_rate);
        for (int h : cfg.model.hidden)
            if (h <= 0) throw ConfigError("model.hidden sizes must be positive");
        if (cfg.model.epochs <= 0) throw ConfigError("model.epochs must be positive");
        if (cfg.model.batch_size <= 0) throw ConfigError("model.batch_size must be positive");
    }

    if (j.contains("power")) {
        const auto& p = j.at("power");
        check_keys(p, {"p_init", "p_local", "p_agg", "p_send", "p_recv"}, "power");
        cfg.power.p_init = get_or<double>(p, "p_init", cfg.power.p_init);
        cfg.power.p_local = get_or<double>(p, "p_local", cfg.power.p_local);
        cfg.power.p_agg = get_or<double>(p, "p_agg", cfg.power.p_agg);
        cfg.power.p_send = get_or<double>(p, "p_send", cfg.power.p_send);
        cfg.power.p_recv = get_or<double>(p, "p_recv", cfg.power.p_recv);
    }

    if (j.contains("battery")) {
        const auto& b = j.at("battery");
        check_keys(b, {"capacity_j", "initial_percent"}, "battery");
        cfg.battery.capacity_j = get_or<double>(b, "capacity_j", cfg.battery.capacity_j);
        cfg.battery.initial_percent =
            get_or<double>(b, "initial_percent", cfg.battery.initial_percent);
        if (!(cfg.battery.capacity_j > 0)) throw ConfigError("battery.capacity_j must be > 0");
        if (cfg.battery.initial_percent < 0 || cfg.battery.initial_percent > 100)
            throw ConfigError("battery.initial_percent must be in [0,100]");
    }

    if (j.contains("cost")) {
        const auto& c = j.at("cost");
        check_keys(c, {"init_s", "local_rate", "agg_rate", "infer_rate", "proc_delay_s"}, "cost");
        cfg.cost.init_s = get_or<double>(c, "init_s", cfg.cost.init_s);
        cfg.cost.local_rate = get_or<double>(c, "local_rate", cfg.cost.local_rate);
        cfg.cost.agg_rate = get_or<double>(c, "agg_rate", cfg.cost.agg_rate);
        cfg.cost.infer_rate = get_or<double>(c, "infer_rate", cfg.cost.infer_rate);
        cfg.cost.proc_delay_s = get_or<double>(c, "proc_delay_s", cfg.cost.proc_delay_s);
    }

    if (j.contains("network")) {
        const auto& n = j.at("network");
        check_keys(n, {"latency_s", "bandwidth_bps", "drop_prob"}, "network");
        cfg.network.latency_s = get_or<double>(n, "latency_s", cfg.network.latency_s);
        cfg.network.bandwidth_bps = get_or<double>(n, "bandwidth_bps", cfg.network.bandwidth_bps);
        cfg.network.drop_prob = get_or<double>(n, "drop_prob", cfg.network.drop_prob);
        if (!(cfg.network.drop_prob >= 0.0 && cfg.network.drop_prob < 1.0))
            throw ConfigError("network.drop_prob must be in [0,1)");
        if (!(cfg.network.bandwidth_bps > 0)) throw ConfigError("network.bandwidth_bps must be > 0");
        if (!(cfg.network.latency_s >= 0)) throw ConfigError("network.latency_s must be >= 0");
    }

    if (j.contains("enfed")) {
        const auto& e = j.at("enfed");
        check_keys(e,
                   {"app_id", "desired_accuracy", "max_collaborators", "max_rounds",
                    "battery_min_percent", "incentive", "response_timeout_s", "nearby",
                    "reserve_price", "reserve_prices", "pretrained", "pretrain_epochs",
                    "retrain_between_rounds", "sweep_collaborators"},
                   "enfed");
        auto& r = cfg.enfed.requester;
        r.app_id = get_or<std::string>(e, "app_id", r.app_id);
        r.desired_accuracy = get_or<double>(e, "desired_accuracy", r.desired_accuracy);
        r.max_collaborators = get_or<int>(e, "max_collaborators", r.max_collaborators);
        r.max_rounds = get_or<int>(e, "max_rounds", r.max_rounds);
        r.battery_min_percent = get_or<double>(e, "battery_min_percent", r.battery_min_percent);
        r.incentive = get_or<double>(e, "incentive", r.incentive);
        r.response_timeout_s = get_or<double>(e, "response_timeout_s", r.response_timeout_s);
        cfg.enfed.nearby = get_or<int>(e, "nearby", cfg.enfed.nearby);
        cfg.enfed.reserve_price = get_or<double>(e, "reserve_price", cfg.enfed.reserve_price);
        cfg.enfed.reserve_prices =
            get_or<std::vector<double>>(e, "reserve_prices", cfg.enfed.reserve_prices);
        cfg.enfed.pretrained = get_or<bool>(e, "pretrained", cfg.enfed.pretrained);
        cfg.enfed.pretrain_epochs = get_or<int>(e, "pretrain_epochs", cfg.enfed.pretrain_epochs);
        cfg.enfed.retrain_between_rounds =
            get_or<bool>(e, "retrain_between_rounds", cfg.enfed.retrain_between_rounds);
        cfg.enfed.sweep_collaborators =
            get_or<std::vector<int>>(e, "sweep_collaborators", cfg.enfed.sweep_collaborators);
        if (cfg.enfed.nearby < 1) throw ConfigError("enfed.nearby must be >= 1");
        if (!cfg.enfed.reserve_prices.empty() &&
            cfg.enfed.reserve_prices.size() != static_cast<std::size_t>(cfg.enfed.nearby))
            throw ConfigError("enfed.reserve_prices must have one entry per nearby device");
    }

    if (j.contains("cfl")) {
        const auto& c = j.at("cfl");
        check_keys(c, {"clients", "rounds", "target_accuracy"}, "cfl");
        cfg.cfl.clients = get_or<int>(c, "clients", cfg.cfl.clients);
        cfg.cfl.rounds = get_or<int>(c, "rounds", cfg.cfl.rounds);
        if (c.contains("target_accuracy") && !c.at("target_accuracy").is_null())
            cfg.cfl.target_accuracy = c.at("target_accuracy").get<double>();
        if (cfg.cfl.clients < 2) throw ConfigError("cfl.clients must be >= 2");
    }
    if (j.contains("dfl")) {
        const auto& d = j.at("dfl");
        check_keys(d, {"nodes", "rounds", "target_accuracy"}, "dfl");
        cfg.dfl.nodes = get_or<int>(d, "nodes", cfg.dfl.nodes);
        cfg.dfl.rounds = get_or<int>(d, "rounds", cfg.dfl.rounds);
        if (d.contains("target_accuracy") && !d.at("target_accuracy").is_null())
            cfg.dfl.target_accuracy = d.at("target_accuracy").get<double>();
        if (cfg.dfl.nodes < 2) throw ConfigError("dfl.nodes must be >= 2");
    }
    if (j.contains("cloud")) {
        const auto& c = j.at("cloud");
        check_keys(c, {"latency_s", "bandwidth_bps", "server_speed"}, "cloud");
        cfg.cloud.latency_s = get_or<double>(c, "latency_s", cfg.cloud.latency_s);
        cfg.cloud.bandwidth_bps = get_or<double>(c, "bandwidth_bps", cfg.cloud.bandwidth_bps);
        cfg.cloud.server_speed = get_or<double>(c, "server_speed", cfg.cloud.server_speed);
    }
    cfg.cloud.probe_rows = cfg.probe_rows;
    cfg.enfed.requester.split_ratio = cfg.split_ratio;
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return parse_config(j);
}

}  // namespace enfed
