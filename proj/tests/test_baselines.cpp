#include <catch2/catch_amalgamated.hpp>

#include "enfed/baselines.hpp"
#include "enfed/scenario.hpp"

using namespace enfed;

namespace {

Hyperparams hp_of(std::vector<int> sizes, std::uint64_t seed, int epochs, double lr) {
    Hyperparams hp;
    hp.layer_sizes = std::move(sizes);
    hp.epochs = epochs;
    hp.batch_size = 16;
    hp.learning_rate = lr;
    hp.seed = seed;
    return hp;
}

struct Workload {
    std::vector<Dataset> parts;
    Dataset test;
};

Workload make_workload(int k, std::uint64_t seed, int classes = 3, int per_class = 80,
                       double sep = 7.0) {
    Dataset full = synth_generate(classes, per_class, 5, sep, seed);
    auto sp = split(full, 0.8, seed);
    Workload w;
    w.parts = partition_iid(sp.train, k, seed);
    w.test = sp.test;
    return w;
}

}  // namespace

TEST_CASE("cfl with zero learning rate returns the initial weights", "[baselines]") {
    auto w = make_workload(3, 1);
    Hyperparams hp = hp_of({5, 8, 3}, 1, 3, 0.0);
    CflConfig cfg{3, 1, std::nullopt};
    ModelWeights global;
    RunMetrics m = run_cfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{},
                           BatteryState{}, 1, 1, &global);
    // every client starts from the shared init and never moves
    Hyperparams init_hp = hp;
    init_hp.seed = derive_seed(1, seed_stream::kModelInit, 9000);
    REQUIRE(bitwise_equal(global, init_mlp(init_hp)));
    REQUIRE(m.rounds_executed == 1);
    REQUIRE(m.loss_trace.size() == 2);
    REQUIRE(m.loss_trace[0] == m.loss_trace[1]);
    REQUIRE(m.round_accuracy[0] == m.round_accuracy[1]);
}

TEST_CASE("cfl counts one upload and one broadcast per client per round", "[baselines]") {
    auto w = make_workload(4, 2);
    Hyperparams hp = hp_of({5, 8, 3}, 2, 2, 1e-3);
    CflConfig cfg{4, 3, std::nullopt};
    RunMetrics m =
        run_cfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 2);
    REQUIRE(m.rounds_executed == 3);
    REQUIRE(m.msgs.sent_of(MsgType::ModelUpdate) == 2 * 4 * 3);
    REQUIRE(m.msgs.recv_of(MsgType::ModelUpdate) == 2 * 4 * 3);
}

TEST_CASE("cfl reaches an easy target within the round cap", "[baselines]") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto w = make_workload(6, 10 + seed, 3, 120, 8.0);
        Hyperparams hp = hp_of({5, 16, 3}, 10 + seed, 15, 5e-3);
        CflConfig cfg{6, 10, 0.95};
        RunMetrics m = run_cfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{},
                               BatteryState{}, 10 + seed);
        if (m.stop_reason == StopReason::AccuracyReached && m.accuracy >= 0.95) ++hits;
    }
    REQUIRE(hits == 3);
}

TEST_CASE("dfl averaging of w and -w zeroes both nodes", "[baselines]") {
    auto w = make_workload(2, 3);
    Hyperparams hp = hp_of({5, 8, 3}, 3, 2, 0.0);
    ModelWeights pos = init_mlp(hp);
    ModelWeights neg = pos;
    for (auto& l : neg.layers) {
        for (auto& v : l.w.a) v = -v;
        for (auto& v : l.b) v = -v;
    }
    DflConfig cfg{2, 1, std::nullopt};
    ModelWeights node0;
    run_dfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 3, 1,
            &node0, {pos, neg});
    for (const auto& l : node0.layers) {
        for (float v : l.w.a) REQUIRE(v == 0.0f);
        for (float v : l.b) REQUIRE(v == 0.0f);
    }
}

TEST_CASE("dfl sends n*(n-1) model messages per round", "[baselines]") {
    auto w = make_workload(4, 4);
    Hyperparams hp = hp_of({5, 8, 3}, 4, 2, 1e-3);
    DflConfig cfg{4, 2, std::nullopt};
    RunMetrics m =
        run_dfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 4);
    REQUIRE(m.rounds_executed == 2);
    REQUIRE(m.msgs.sent_of(MsgType::ModelUpdate) == 4 * 3 * 2);
    REQUIRE(m.msgs.recv_of(MsgType::ModelUpdate) == 4 * 3 * 2);
}

TEST_CASE("dfl with zero learning rate reaches its gossip fixed point", "[baselines]") {
    auto w = make_workload(3, 5);
    Hyperparams hp = hp_of({5, 8, 3}, 5, 2, 0.0);
    DflConfig cfg{3, 3, std::nullopt};
    RunMetrics m =
        run_dfl(cfg, w.parts, w.test, hp, SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 5);
    // after round 1 every node holds the same average (up to summation-order
    // ulps); later rounds are no-ops
    REQUIRE(m.loss_trace.size() == 4);
    REQUIRE(m.loss_trace[1] == Catch::Approx(m.loss_trace[2]).epsilon(1e-6));
    REQUIRE(m.loss_trace[2] == Catch::Approx(m.loss_trace[3]).epsilon(1e-6));
}

TEST_CASE("dfl beats cfl when cfl runs more rounds", "[baselines]") {
    auto w = make_workload(4, 6, 3, 120, 8.0);
    Hyperparams hp = hp_of({5, 16, 3}, 6, 10, 5e-3);
    const SimLink link{0.01, 0.0, 1e6};
    DflConfig dcfg{4, 10, 0.9};   // stops early on this easy task
    CflConfig ccfg{4, 10, std::nullopt};  // conventional full schedule
    RunMetrics dm =
        run_dfl(dcfg, w.parts, w.test, hp, link, DeviceEnv{}, BatteryState{}, 6);
    RunMetrics cm =
        run_cfl(ccfg, w.parts, w.test, hp, link, DeviceEnv{}, BatteryState{}, 6);
    REQUIRE(dm.rounds_executed < cm.rounds_executed);
    REQUIRE(dm.ledger.total_time() < cm.ledger.total_time());
    REQUIRE(dm.ledger.total_energy() < cm.ledger.total_energy());
}

TEST_CASE("cloud response time is inference alone on a perfect link", "[baselines]") {
    Dataset full = synth_generate(3, 80, 5, 7.0, 7);
    auto sp = split(full, 0.8, 7);
    Hyperparams hp = hp_of({5, 8, 3}, 7, 10, 5e-3);
    CloudConfig cfg;
    cfg.latency_s = 0.0;
    cfg.bandwidth_bps = std::numeric_limits<double>::infinity();
    cfg.probe_rows = 4;
    DeviceEnv env;
    RunMetrics m = run_cloud_only(cfg, sp.train, sp.test, hp, env, BatteryState{}, 7);
    const double weights = static_cast<double>(init_mlp(hp).weight_count());
    REQUIRE(m.response_time == Catch::Approx(inference_duration(env.cost, 4, weights)));
    REQUIRE(m.ledger.total_time() == 0.0);
}

TEST_CASE("doubling the probe payload doubles the transfer component", "[baselines]") {
    Dataset full = synth_generate(3, 80, 5, 7.0, 8);
    auto sp = split(full, 0.8, 8);
    Hyperparams hp = hp_of({5, 8, 3}, 8, 5, 5e-3);
    DeviceEnv env;
    auto transfer_of = [&](int rows) {
        CloudConfig cfg;
        cfg.latency_s = 0.0;
        cfg.bandwidth_bps = 1e6;
        cfg.probe_rows = rows;
        RunMetrics m = run_cloud_only(cfg, sp.train, sp.test, hp, env, BatteryState{}, 8);
        const double weights = static_cast<double>(init_mlp(hp).weight_count());
        const double infer = inference_duration(env.cost, rows, weights);
        return std::pair{m.response_time - infer, m.ledger.total_time()};
    };
    auto [t1, ledger1] = transfer_of(50);
    auto [t2, ledger2] = transfer_of(100);
    // both frame headers stay constant; the payload part doubles exactly
    const double header_part = 2.0 * 5.0 / 1e6;
    REQUIRE(t2 - header_part == Catch::Approx(2.0 * (t1 - header_part)).epsilon(1e-12));
    REQUIRE(ledger2 - header_part == Catch::Approx(2.0 * (ledger1 - header_part)).epsilon(1e-12));
}

TEST_CASE("local inference answers faster than the cloud round trip", "[baselines]") {
    ExperimentConfig cfg;
    cfg.scenario = "cloud";
    cfg.seed = 9;
    cfg.dataset.classes = 3;
    cfg.dataset.per_class = 80;
    cfg.dataset.dim = 5;
    cfg.model.hidden = {8};
    cfg.model.epochs = 10;
    cfg.cloud.latency_s = 0.05;
    cfg.cloud.bandwidth_bps = 1e6;
    RunMetrics cloud = run_cloud_scenario(cfg);

    cfg.scenario = "enfed";
    cfg.model.epochs = 8;
    cfg.enfed.nearby = 3;
    cfg.enfed.requester.max_collaborators = 3;
    cfg.enfed.requester.desired_accuracy = 0.9;
    RunMetrics local = run_enfed_sim(cfg);
    REQUIRE(local.response_time < cloud.response_time);
}

TEST_CASE("baselines refuse lossy links and bad shapes", "[baselines]") {
    auto w = make_workload(3, 10);
    Hyperparams hp = hp_of({5, 8, 3}, 10, 2, 1e-3);
    REQUIRE_THROWS_AS(run_cfl(CflConfig{3, 1, std::nullopt}, w.parts, w.test, hp,
                              SimLink{0.01, 0.5, 1e6}, DeviceEnv{}, BatteryState{}, 1),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(run_cfl(CflConfig{4, 1, std::nullopt}, w.parts, w.test, hp,
                              SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 1),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(run_dfl(DflConfig{1, 1, std::nullopt}, w.parts, w.test, hp,
                              SimLink{0.01, 0.0, 1e6}, DeviceEnv{}, BatteryState{}, 1),
                      std::invalid_argument);
}
