#pragma once

#include <optional>
#include <string>
#include <vector>

#include "enfed/aggregate.hpp"
#include "enfed/datasets.hpp"
#include "enfed/energy.hpp"
#include "enfed/metrics.hpp"
#include "enfed/simnet.hpp"

namespace enfed {

struct CflConfig {
    int clients = 6;
    int rounds = 10;
    std::optional<double> target_accuracy;  // stop early when reached
};

struct DflConfig {
    int nodes = 3;
    int rounds = 10;
    std::optional<double> target_accuracy;
};

struct CloudConfig {
    double latency_s = 0.05;
    double bandwidth_bps = 1e6;
    int probe_rows = 1;
    double server_speed = 1.0;
};

namespace basedetail {

inline std::vector<std::uint8_t> model_frame(const ModelWeights& w, std::uint32_t round,
                                             const std::string& source) {
    return encode_frame(encode_message(ModelUpdateMsg{round, source, w}));
}

inline PhaseWork fit_work(const Hyperparams& hp, std::size_t rows, std::size_t weights) {
    return PhaseWork{Phase::LocalTrain, static_cast<double>(hp.epochs),
                     static_cast<double>(rows), static_cast<double>(hp.batch_size),
                     static_cast<double>(weights)};
}

}  // namespace basedetail

// Centralized FL baseline: every client fits locally each round, uploads to
// the server, the server averages and broadcasts. Clients share one initial
// model (distributed out of band before the measured run), so the counted
// traffic is exactly one upload and one broadcast per client per round.
// Client 0's ledger is the reported device cost; message counters are
// network-wide.
inline RunMetrics run_cfl(const CflConfig& cfg, const std::vector<Dataset>& parts,
                          const Dataset& global_test, const Hyperparams& hp, const SimLink& link,
                          const DeviceEnv& env, const BatteryState& battery, std::uint64_t seed,
                          int probe_rows = 1, ModelWeights* final_model = nullptr) {
    if (cfg.clients < 2) throw std::invalid_argument("run_cfl: need at least 2 clients");
    if (cfg.rounds < 1) throw std::invalid_argument("run_cfl: rounds must be >= 1");
    if (parts.size() != static_cast<std::size_t>(cfg.clients))
        throw std::invalid_argument("run_cfl: one partition per client required");
    if (link.drop_prob != 0.0)
        throw std::invalid_argument("run_cfl: baseline links must be lossless");

    const int k = cfg.clients;
    SimNet net(SimNetConfig{seed, link});
    net.add_device("server");
    std::vector<std::string> ids;
    for (int i = 0; i < k; ++i) {
        ids.push_back("client" + std::to_string(i));
        net.add_device(ids.back());
        net.add_duplex_link(ids.back(), "server", link);
    }

    Hyperparams init_hp = hp;
    init_hp.seed = derive_seed(seed, seed_stream::kModelInit, 9000);
    ModelWeights global = init_mlp(init_hp);
    const std::size_t wc = global.weight_count();
    std::vector<ModelWeights> models(k, global);
    std::vector<double> client_time(k, 0.0);

    RunMetrics m;
    m.scenario = "cfl";
    m.seed = seed;
    m.battery_start = battery.initial_percent;
    m.ledger.charge(Phase::Init, env.cost.init_s, env.power);
    for (int i = 0; i < k; ++i) client_time[i] = env.cost.init_s;

    auto record = [&](double acc) {
        m.loss_trace.push_back(mean_cross_entropy(global, parts[0].features, parts[0].labels));
        m.round_accuracy.push_back(acc);
        m.round_battery.push_back(battery_after(battery, m.ledger));
    };
    record(accuracy_score(global, global_test));

    int rounds = 0;
    std::optional<StopReason> stop;
    for (int r = 0; r < cfg.rounds; ++r) {
        if (cfg.target_accuracy && m.round_accuracy.back() >= *cfg.target_accuracy) {
            stop = StopReason::AccuracyReached;
            break;
        }
        // local fits, then uploads timed by each client's own clock
        for (int i = 0; i < k; ++i) {
            Hyperparams chp = hp;
            chp.seed = derive_seed(seed, seed_stream::kDevice,
                                   static_cast<std::uint64_t>(i) * 1000 + r);
            const double dur =
                simulated_duration(env.cost, basedetail::fit_work(chp, parts[i].rows(), wc));
            models[i] = fit(std::move(models[i]), parts[i], chp).net;
            client_time[i] += dur;
            auto frame = basedetail::model_frame(models[i], r + 1, ids[i]);
            const double tx = net.transfer_seconds(ids[i], "server", frame.size());
            if (i == 0) {
                m.ledger.charge(Phase::LocalTrain, dur, env.power);
                m.ledger.charge(Phase::Send, tx, env.power);
            }
            net.send(ids[i], "server", std::move(frame), client_time[i]);
            m.msgs.count_sent(MsgType::ModelUpdate);
        }
        // server aggregation in arrival order
        std::vector<ModelBundle> bundles;
        double server_time = 0.0;
        for (int i = 0; i < k; ++i) {
            auto d = net.wait_inbox("server", std::numeric_limits<double>::infinity());
            if (!d) throw EnfedError("run_cfl: missing upload");
            m.msgs.count_recv(MsgType::ModelUpdate);
            auto msg = std::get<ModelUpdateMsg>(decode_message(decode_frame(d->frame)));
            bundles.push_back(ModelBundle{msg.source, std::move(msg.weights), r + 1});
            server_time = std::max(server_time, d->time);
        }
        global = average_weights(bundles);
        server_time += simulated_duration(
            env.cost, PhaseWork{Phase::Aggregate, 0, 0, 1, static_cast<double>(wc),
                                static_cast<double>(k)});
        // broadcast
        for (int i = 0; i < k; ++i) {
            auto frame = basedetail::model_frame(global, r + 1, "server");
            net.send("server", ids[i], std::move(frame), server_time);
            m.msgs.count_sent(MsgType::ModelUpdate);
        }
        for (int i = 0; i < k; ++i) {
            auto d = net.wait_inbox(ids[i], std::numeric_limits<double>::infinity());
            if (!d) throw EnfedError("run_cfl: missing broadcast");
            m.msgs.count_recv(MsgType::ModelUpdate);
            const double rx = net.transfer_seconds("server", ids[i], d->frame.size());
            if (i == 0) m.ledger.charge(Phase::Recv, rx, env.power);
            client_time[i] = d->time;
            models[i] = global;
        }
        ++rounds;
        record(accuracy_score(global, global_test));
    }
    if (!stop) {
        if (cfg.target_accuracy && m.round_accuracy.back() >= *cfg.target_accuracy)
            stop = StopReason::AccuracyReached;
        else
            stop = StopReason::MaxRoundsReached;
    }

    m.rounds_executed = rounds;
    m.stop_reason = stop;
    m.stop_phase = StopPhase::Rounds;
    m.collaborators = k;
    const auto cls = classification_metrics(global, global_test);
    m.accuracy = cls.accuracy;
    m.precision = cls.macro_precision;
    m.recall = cls.macro_recall;
    m.f1 = cls.macro_f1;
    m.battery_end = battery_after(battery, m.ledger);
    m.response_time = inference_duration(env.cost, probe_rows, static_cast<double>(wc));
    m.sim_elapsed = net.now();
    if (final_model) *final_model = global;
    return m;
}

// Decentralized FL baseline: full-mesh gossip. Every node fits locally, sends
// its weights to all peers, and averages what it received together with its
// own model. Node 0's ledger is the reported device cost. `initial_models`
// overrides the per-node seeded initialization when provided.
inline RunMetrics run_dfl(const DflConfig& cfg, const std::vector<Dataset>& parts,
                          const Dataset& global_test, const Hyperparams& hp, const SimLink& link,
                          const DeviceEnv& env, const BatteryState& battery, std::uint64_t seed,
                          int probe_rows = 1, ModelWeights* final_model = nullptr,
                          std::vector<ModelWeights> initial_models = {}) {
    if (cfg.nodes < 2) throw std::invalid_argument("run_dfl: need at least 2 nodes");
    if (cfg.rounds < 1) throw std::invalid_argument("run_dfl: rounds must be >= 1");
    if (parts.size() != static_cast<std::size_t>(cfg.nodes))
        throw std::invalid_argument("run_dfl: one partition per node required");
    if (link.drop_prob != 0.0)
        throw std::invalid_argument("run_dfl: baseline links must be lossless");

    const int n = cfg.nodes;
    SimNet net(SimNetConfig{seed, link});
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        ids.push_back("node" + std::to_string(i));
        net.add_device(ids.back());
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) net.add_link(ids[i], ids[j], link);

    std::vector<ModelWeights> models;
    if (!initial_models.empty()) {
        if (initial_models.size() != static_cast<std::size_t>(n))
            throw std::invalid_argument("run_dfl: one initial model per node required");
        models = std::move(initial_models);
    } else {
        for (int i = 0; i < n; ++i) {
            Hyperparams ihp = hp;
            ihp.seed = derive_seed(seed, seed_stream::kDevice, 100 + i);
            models.push_back(init_mlp(ihp));
        }
    }
    const std::size_t wc = models[0].weight_count();
    std::vector<double> node_time(n, env.cost.init_s);

    RunMetrics m;
    m.scenario = "dfl";
    m.seed = seed;
    m.battery_start = battery.initial_percent;
    m.ledger.charge(Phase::Init, env.cost.init_s, env.power);

    auto record = [&](double acc) {
        m.loss_trace.push_back(mean_cross_entropy(models[0], parts[0].features, parts[0].labels));
        m.round_accuracy.push_back(acc);
        m.round_battery.push_back(battery_after(battery, m.ledger));
    };
    record(accuracy_score(models[0], global_test));

    int rounds = 0;
    std::optional<StopReason> stop;
    for (int r = 0; r < cfg.rounds; ++r) {
        if (cfg.target_accuracy && m.round_accuracy.back() >= *cfg.target_accuracy) {
            stop = StopReason::AccuracyReached;
            break;
        }
        for (int i = 0; i < n; ++i) {
            Hyperparams nhp = hp;
            nhp.seed = derive_seed(seed, seed_stream::kDevice,
                                   static_cast<std::uint64_t>(i) * 1000 + r);
            const double dur =
                simulated_duration(env.cost, basedetail::fit_work(nhp, parts[i].rows(), wc));
            models[i] = fit(std::move(models[i]), parts[i], nhp).net;
            node_time[i] += dur;
            if (i == 0) m.ledger.charge(Phase::LocalTrain, dur, env.power);
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                auto frame = basedetail::model_frame(models[i], r + 1, ids[i]);
                const double tx = net.transfer_seconds(ids[i], ids[j], frame.size());
                if (i == 0) m.ledger.charge(Phase::Send, tx, env.power);
                net.send(ids[i], ids[j], std::move(frame), node_time[i]);
                m.msgs.count_sent(MsgType::ModelUpdate);
            }
        }
        // every node averages its own model with the n-1 received ones
        std::vector<ModelWeights> averaged(n);
        for (int i = 0; i < n; ++i) {
            std::vector<ModelBundle> bundles;
            bundles.push_back(ModelBundle{ids[i], models[i], r + 1});
            double last_arrival = node_time[i];
            for (int c = 0; c < n - 1; ++c) {
                auto d = net.wait_inbox(ids[i], std::numeric_limits<double>::infinity());
                if (!d) throw EnfedError("run_dfl: missing peer model");
                m.msgs.count_recv(MsgType::ModelUpdate);
                const double rx = net.transfer_seconds(d->from, ids[i], d->frame.size());
                if (i == 0) m.ledger.charge(Phase::Recv, rx, env.power);
                auto msg = std::get<ModelUpdateMsg>(decode_message(decode_frame(d->frame)));
                bundles.push_back(ModelBundle{msg.source, std::move(msg.weights), r + 1});
                last_arrival = std::max(last_arrival, d->time);
            }
            const double agg = simulated_duration(
                env.cost, PhaseWork{Phase::Aggregate, 0, 0, 1, static_cast<double>(wc),
                                    static_cast<double>(n)});
            if (i == 0) m.ledger.charge(Phase::Aggregate, agg, env.power);
            node_time[i] = last_arrival + agg;
            averaged[i] = average_weights(bundles);
        }
        models = std::move(averaged);
        ++rounds;
        record(accuracy_score(models[0], global_test));
    }
    if (!stop) {
        if (cfg.target_accuracy && m.round_accuracy.back() >= *cfg.target_accuracy)
            stop = StopReason::AccuracyReached;
        else
            stop = StopReason::MaxRoundsReached;
    }

    m.rounds_executed = rounds;
    m.stop_reason = stop;
    m.stop_phase = StopPhase::Rounds;
    m.collaborators = n - 1;
    const auto cls = classification_metrics(models[0], global_test);
    m.accuracy = cls.accuracy;
    m.precision = cls.macro_precision;
    m.recall = cls.macro_recall;
    m.f1 = cls.macro_f1;
    m.battery_end = battery_after(battery, m.ledger);
    m.response_time = inference_duration(env.cost, probe_rows, static_cast<double>(wc));
    m.sim_elapsed = net.now();
    if (final_model) *final_model = models[0];
    return m;
}

// Cloud-only reference: the device ships its data to a server-trained model
// and waits for the result. Response time is upload + server inference +
// download; only the radio time lands on the device ledger.
inline RunMetrics run_cloud_only(const CloudConfig& cfg, const Dataset& train,
                                 const Dataset& test, const Hyperparams& hp,
                                 const DeviceEnv& env, const BatteryState& battery,
                                 std::uint64_t seed) {
    if (!(cfg.latency_s >= 0)) throw std::invalid_argument("run_cloud_only: negative latency");
    if (!(cfg.bandwidth_bps > 0))
        throw std::invalid_argument("run_cloud_only: bandwidth must be positive");
    if (cfg.probe_rows < 1) throw std::invalid_argument("run_cloud_only: probe_rows must be >= 1");
    if (!(cfg.server_speed > 0))
        throw std::invalid_argument("run_cloud_only: server_speed must be positive");

    Hyperparams shp = hp;
    shp.seed = derive_seed(seed, seed_stream::kDevice, 7777);
    auto fitted = fit(init_mlp(shp), train, shp);
    const std::size_t wc = fitted.net.weight_count();

    RunMetrics m;
    m.scenario = "cloud";
    m.seed = seed;
    m.battery_start = battery.initial_percent;

    const double up_bytes = 5.0 + static_cast<double>(cfg.probe_rows) * train.dim() * 4.0;
    const double down_bytes = 5.0 + static_cast<double>(cfg.probe_rows) * 4.0;
    const double up_tx = up_bytes / cfg.bandwidth_bps;
    const double down_tx = down_bytes / cfg.bandwidth_bps;
    const double infer =
        inference_duration(env.cost, cfg.probe_rows, static_cast<double>(wc)) / cfg.server_speed;
    m.response_time = cfg.latency_s + up_tx + infer + cfg.latency_s + down_tx;
    m.ledger.charge(Phase::Send, up_tx, env.power);
    m.ledger.charge(Phase::Recv, down_tx, env.power);

    const auto cls = classification_metrics(fitted.net, test);
    m.accuracy = cls.accuracy;
    m.precision = cls.macro_precision;
    m.recall = cls.macro_recall;
    m.f1 = cls.macro_f1;
    m.loss_trace.push_back(mean_cross_entropy(fitted.net, train.features, train.labels));
    m.round_accuracy.push_back(cls.accuracy);
    m.round_battery.push_back(battery_after(battery, m.ledger));
    m.battery_end = battery_after(battery, m.ledger);
    m.sim_elapsed = m.response_time;
    return m;
}

}  // namespace enfed
