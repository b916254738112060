#pragma once

#include <memory>
#include <thread>

#include "enfed/config.hpp"
#include "enfed/datasets.hpp"
#include "enfed/protocol.hpp"
#include "enfed/tcp_transport.hpp"

namespace enfed {

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.type == "synthetic")
        return synth_generate(cfg.dataset.classes, cfg.dataset.per_class, cfg.dataset.dim,
                              cfg.dataset.sep, cfg.seed, cfg.dataset.label_noise);
    return load_csv(cfg.dataset.path, schema_by_name(cfg.dataset.schema));
}

// Layer sizes come from the data (input dim, configured hidden sizes, class
// count), so the model always matches the dataset.
inline Hyperparams make_hyperparams(const ExperimentConfig& cfg, const Dataset& ds) {
    Hyperparams hp;
    hp.layer_sizes.push_back(static_cast<int>(ds.dim()));
    for (int h : cfg.model.hidden) hp.layer_sizes.push_back(h);
    hp.layer_sizes.push_back(ds.class_count);
    hp.epochs = cfg.model.epochs;
    hp.batch_size = cfg.model.batch_size;
    hp.learning_rate = cfg.model.learning_rate;
    hp.seed = derive_seed(cfg.seed, seed_stream::kDevice, 0);
    return hp;
}

inline bool wants_normalization(const ExperimentConfig& cfg) {
    return cfg.dataset.type == "csv" && cfg.dataset.normalize;
}

struct NamedPartition {
    std::string device;
    Dataset data;
};

// The per-device data each scenario would hand out; also drives the
// partition inspection command.
inline std::vector<NamedPartition> scenario_partitions(const ExperimentConfig& cfg) {
    const Dataset full = build_dataset(cfg);
    std::vector<NamedPartition> out;
    if (cfg.scenario == "enfed") {
        const int k = cfg.enfed.nearby + 1;
        auto parts = partition(full, k, cfg.partition.mode, cfg.partition.alpha, cfg.seed);
        out.push_back({"requester", std::move(parts[0])});
        for (int i = 1; i < k; ++i)
            out.push_back({"peer" + std::to_string(i), std::move(parts[i])});
    } else if (cfg.scenario == "cfl" || cfg.scenario == "dfl") {
        const int k = cfg.scenario == "cfl" ? cfg.cfl.clients : cfg.dfl.nodes;
        const auto sp = split(full, cfg.split_ratio, cfg.seed);
        auto parts = partition(sp.train, k, cfg.partition.mode, cfg.partition.alpha, cfg.seed);
        const std::string prefix = cfg.scenario == "cfl" ? "client" : "node";
        for (int i = 0; i < k; ++i) out.push_back({prefix + std::to_string(i), std::move(parts[i])});
    } else {
        out.push_back({"device", full});
    }
    return out;
}

namespace scendetail {

struct EnfedSetup {
    Dataset requester_data;
    std::vector<std::string> nearby;
    std::vector<std::unique_ptr<CollaboratorContext>> peers;
    RequesterConfig requester_cfg;
    std::size_t weight_count = 0;
};

inline EnfedSetup prepare_enfed(const ExperimentConfig& cfg) {
    const Dataset full = build_dataset(cfg);
    const int k = cfg.enfed.nearby + 1;
    auto parts = partition(full, k, cfg.partition.mode, cfg.partition.alpha, cfg.seed);

    EnfedSetup setup;
    Hyperparams hp = make_hyperparams(cfg, full);
    setup.requester_cfg = cfg.enfed.requester;
    setup.requester_cfg.hp = hp;
    setup.requester_cfg.split_ratio = cfg.split_ratio;
    setup.weight_count = init_mlp(hp).weight_count();

    setup.requester_data = std::move(parts[0]);
    if (wants_normalization(cfg)) {
        // fit on exactly the rows the requester will train on (same seeded split)
        const auto sp = split(setup.requester_data, cfg.split_ratio, hp.seed);
        setup.requester_data = Normalizer::fit(sp.train).apply(setup.requester_data);
    }

    for (int i = 1; i < k; ++i) {
        auto ctx = std::make_unique<CollaboratorContext>();
        ctx->id = "peer" + std::to_string(i);
        ctx->policy.reserve_price = cfg.enfed.reserve_prices.empty()
                                        ? cfg.enfed.reserve_price
                                        : cfg.enfed.reserve_prices[i - 1];
        ctx->policy.retrain_between_rounds = cfg.enfed.retrain_between_rounds;
        ctx->train = std::move(parts[i]);
        if (wants_normalization(cfg)) ctx->train = Normalizer::fit(ctx->train).apply(ctx->train);
        ctx->hp = hp;
        ctx->hp.seed = derive_seed(cfg.seed, seed_stream::kDevice, i);
        ctx->cost = cfg.cost;
        ctx->model = init_mlp(ctx->hp);
        if (cfg.enfed.pretrained) {
            Hyperparams php = ctx->hp;
            if (cfg.enfed.pretrain_epochs > 0) php.epochs = cfg.enfed.pretrain_epochs;
            ctx->model = fit(std::move(ctx->model), ctx->train, php).net;
        }
        setup.nearby.push_back(ctx->id);
        setup.peers.push_back(std::move(ctx));
    }
    return setup;
}

inline void finish_metrics(RunMetrics& m, const ExperimentConfig& cfg, std::size_t weight_count) {
    m.seed = cfg.seed;
    m.transport = cfg.transport;
    if (m.response_time == 0.0)
        m.response_time =
            inference_duration(cfg.cost, cfg.probe_rows, static_cast<double>(weight_count));
}

}  // namespace scendetail

inline RunMetrics run_enfed_sim(const ExperimentConfig& cfg) {
    auto setup = scendetail::prepare_enfed(cfg);
    SimNet net(SimNetConfig{cfg.seed, cfg.network});
    net.add_device("requester");
    for (auto& peer : setup.peers) {
        register_sim_collaborator(net, *peer);
        net.add_duplex_link("requester", peer->id, cfg.network);
    }
    SimRequesterTransport transport(net, "requester");
    const DeviceEnv env{cfg.power, cfg.cost, ClockMode::Simulated};
    auto result = requester_run(setup.requester_cfg, setup.nearby, transport,
                                setup.requester_data, cfg.battery, env);
    scendetail::finish_metrics(result.metrics, cfg, setup.weight_count);
    return result.metrics;
}

// Same protocol over loopback TCP: one service thread per collaborator,
// wall-clock ledger. Deterministic model math, non-deterministic timing.
inline RunMetrics run_enfed_tcp(const ExperimentConfig& cfg) {
    auto setup = scendetail::prepare_enfed(cfg);
    std::vector<std::unique_ptr<TcpListener>> listeners;
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < setup.peers.size(); ++i)
        listeners.push_back(std::make_unique<TcpListener>(0));

    for (std::size_t i = 0; i < setup.peers.size(); ++i) {
        CollaboratorContext* ctx = setup.peers[i].get();
        TcpListener* lst = listeners[i].get();
        threads.emplace_back([ctx, lst] {
            try {
                TcpConn conn = lst->accept_conn(30.0);
                collaborator_serve(*ctx, conn);
            } catch (const std::exception&) {
                // peer thread exits; the requester sees a closed connection
            }
        });
    }

    RunMetrics metrics;
    {
        std::vector<TcpRequesterTransport::Peer> peers;
        for (std::size_t i = 0; i < setup.peers.size(); ++i)
            peers.push_back({setup.peers[i]->id,
                             TcpConn::connect_to("127.0.0.1", listeners[i]->port())});
        TcpRequesterTransport transport(std::move(peers));
        const DeviceEnv env{cfg.power, cfg.cost, ClockMode::Wall};
        auto result = requester_run(setup.requester_cfg, setup.nearby, transport,
                                    setup.requester_data, cfg.battery, env);
        metrics = std::move(result.metrics);
    }  // connections close here, releasing any still-serving threads
    for (auto& t : threads) t.join();
    scendetail::finish_metrics(metrics, cfg, setup.weight_count);
    return metrics;
}

inline RunMetrics run_cfl_scenario(const ExperimentConfig& cfg) {
    const Dataset full = build_dataset(cfg);
    auto sp = split(full, cfg.split_ratio, cfg.seed);
    if (wants_normalization(cfg)) {
        const auto norm = Normalizer::fit(sp.train);
        sp.train = norm.apply(sp.train);
        sp.test = norm.apply(sp.test);
    }
    auto parts =
        partition(sp.train, cfg.cfl.clients, cfg.partition.mode, cfg.partition.alpha, cfg.seed);
    const Hyperparams hp = make_hyperparams(cfg, full);
    const DeviceEnv env{cfg.power, cfg.cost, ClockMode::Simulated};
    RunMetrics m = run_cfl(cfg.cfl, parts, sp.test, hp, cfg.network, env, cfg.battery, cfg.seed,
                           cfg.probe_rows);
    scendetail::finish_metrics(m, cfg, init_mlp(hp).weight_count());
    return m;
}

inline RunMetrics run_dfl_scenario(const ExperimentConfig& cfg) {
    const Dataset full = build_dataset(cfg);
    auto sp = split(full, cfg.split_ratio, cfg.seed);
    if (wants_normalization(cfg)) {
        const auto norm = Normalizer::fit(sp.train);
        sp.train = norm.apply(sp.train);
        sp.test = norm.apply(sp.test);
    }
    auto parts =
        partition(sp.train, cfg.dfl.nodes, cfg.partition.mode, cfg.partition.alpha, cfg.seed);
    const Hyperparams hp = make_hyperparams(cfg, full);
    const DeviceEnv env{cfg.power, cfg.cost, ClockMode::Simulated};
    RunMetrics m = run_dfl(cfg.dfl, parts, sp.test, hp, cfg.network, env, cfg.battery, cfg.seed,
                           cfg.probe_rows);
    scendetail::finish_metrics(m, cfg, init_mlp(hp).weight_count());
    return m;
}

inline RunMetrics run_cloud_scenario(const ExperimentConfig& cfg) {
    const Dataset full = build_dataset(cfg);
    auto sp = split(full, cfg.split_ratio, cfg.seed);
    if (wants_normalization(cfg)) {
        const auto norm = Normalizer::fit(sp.train);
        sp.train = norm.apply(sp.train);
        sp.test = norm.apply(sp.test);
    }
    const Hyperparams hp = make_hyperparams(cfg, full);
    const DeviceEnv env{cfg.power, cfg.cost, ClockMode::Simulated};
    RunMetrics m = run_cloud_only(cfg.cloud, sp.train, sp.test, hp, env, cfg.battery, cfg.seed);
    scendetail::finish_metrics(m, cfg, init_mlp(hp).weight_count());
    return m;
}

inline RunMetrics run_scenario(const ExperimentConfig& cfg) {
    if (cfg.scenario == "enfed")
        return cfg.transport == "tcp" ? run_enfed_tcp(cfg) : run_enfed_sim(cfg);
    if (cfg.scenario == "cfl") return run_cfl_scenario(cfg);
    if (cfg.scenario == "dfl") return run_dfl_scenario(cfg);
    if (cfg.scenario == "cloud") return run_cloud_scenario(cfg);
    throw ConfigError("unknown scenario '" + cfg.scenario + "'");
}

}  // namespace enfed
