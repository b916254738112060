#include <catch2/catch_amalgamated.hpp>

#include <memory>

#include "enfed/scenario.hpp"

using namespace enfed;

namespace {

ExperimentConfig base_cfg() {
    ExperimentConfig cfg;
    cfg.scenario = "enfed";
    cfg.seed = 1;
    cfg.dataset.classes = 4;
    cfg.dataset.per_class = 120;
    cfg.dataset.dim = 6;
    cfg.dataset.sep = 7.0;
    cfg.model.hidden = {16, 8};
    cfg.model.epochs = 12;
    cfg.model.batch_size = 16;
    cfg.model.learning_rate = 5e-3;
    cfg.battery.capacity_j = 50000.0;
    cfg.battery.initial_percent = 80.0;
    cfg.network = SimLink{0.005, 0.0, 2e6};
    cfg.enfed.nearby = 5;
    cfg.enfed.requester.desired_accuracy = 0.9;
    cfg.enfed.requester.max_collaborators = 5;
    cfg.enfed.requester.max_rounds = 10;
    cfg.enfed.requester.battery_min_percent = 20.0;
    cfg.enfed.requester.incentive = 5.0;
    cfg.enfed.requester.response_timeout_s = 30.0;
    cfg.enfed.pretrained = true;
    cfg.enfed.pretrain_epochs = 12;
    return cfg;
}

Hyperparams tiny_hp(std::uint64_t seed) {
    Hyperparams hp;
    hp.layer_sizes = {4, 8, 3};
    hp.epochs = 5;
    hp.batch_size = 16;
    hp.learning_rate = 5e-3;
    hp.seed = seed;
    return hp;
}

CollaboratorContext make_ctx(const std::string& id, std::uint64_t seed, double reserve = 0.0,
                             bool retrain = false) {
    CollaboratorContext ctx;
    ctx.id = id;
    ctx.policy.reserve_price = reserve;
    ctx.policy.retrain_between_rounds = retrain;
    ctx.hp = tiny_hp(seed);
    ctx.train = synth_generate(3, 30, 4, 6.0, seed);
    ctx.model = init_mlp(ctx.hp);
    return ctx;
}

void check_run_invariants(const RunMetrics& m, int nearby) {
    REQUIRE(m.outcome == RunOutcome::Ok);
    REQUIRE(m.stop_reason.has_value());
    // trace lengths: one entry per aggregation round
    REQUIRE(m.loss_trace.size() == static_cast<std::size_t>(m.rounds_executed) + 1);
    REQUIRE(m.round_accuracy.size() == m.loss_trace.size());
    REQUIRE(m.round_battery.size() == m.loss_trace.size());
    REQUIRE(m.accuracy == Catch::Approx(m.round_accuracy.back()));
    // message accounting
    REQUIRE(m.msgs.sent_of(MsgType::Request) == nearby);
    REQUIRE(m.msgs.recv_of(MsgType::Accept) + m.msgs.recv_of(MsgType::Reject) <= nearby);
    REQUIRE(m.msgs.sent_of(MsgType::Close) == m.msgs.recv_of(MsgType::Accept));
    REQUIRE(m.msgs.recv_of(MsgType::ModelUpdate) <=
            m.msgs.recv_of(MsgType::Accept) * (1 + m.rounds_executed));
    REQUIRE(m.msgs.sent_of(MsgType::PullRequest) <= m.collaborators * m.rounds_executed);
    // battery only drains
    for (std::size_t i = 1; i < m.round_battery.size(); ++i)
        REQUIRE(m.round_battery[i] <= m.round_battery[i - 1]);
    REQUIRE(m.battery_end <= m.battery_start);
    // uniform 5 W profile: energy is five times the ledger time
    REQUIRE(m.ledger.total_energy() ==
            Catch::Approx(5.0 * m.ledger.total_time()).epsilon(1e-6));
}

}  // namespace

TEST_CASE("collaborators accept or reject on the reserve price", "[protocol]") {
    auto ctx = make_ctx("p", 1, 3.0);
    auto replies = collaborator_handle(ctx, RequestMsg{"app", 5.0, 10});
    REQUIRE(replies.size() == 2);
    REQUIRE(std::holds_alternative<AcceptMsg>(replies[0].msg));
    REQUIRE(std::holds_alternative<ModelUpdateMsg>(replies[1].msg));

    auto ctx2 = make_ctx("q", 2, 3.0);
    auto rejected = collaborator_handle(ctx2, RequestMsg{"app", 2.0, 10});
    REQUIRE(rejected.size() == 1);
    REQUIRE(std::holds_alternative<RejectMsg>(rejected[0].msg));
}

TEST_CASE("without retraining, pulled models are bitwise identical", "[protocol]") {
    auto ctx = make_ctx("p", 3, 0.0, false);
    auto r1 = collaborator_handle(ctx, PullRequestMsg{1});
    auto r2 = collaborator_handle(ctx, PullRequestMsg{2});
    REQUIRE(r1.size() == 1);
    REQUIRE(r2.size() == 1);
    auto b1 = encode_frame(encode_message(r1[0].msg));
    auto b2 = encode_frame(encode_message(r2[0].msg));
    // payloads differ only in the round counter (first 4 payload bytes)
    b1[5 + 3] = b2[5 + 3] = 0;
    REQUIRE(b1 == b2);
}

TEST_CASE("retraining between rounds changes the model and costs time", "[protocol]") {
    auto ctx = make_ctx("p", 4, 0.0, true);
    const ModelWeights before = ctx.model;
    auto r = collaborator_handle(ctx, PullRequestMsg{1});
    REQUIRE(r.size() == 1);
    REQUIRE_FALSE(bitwise_equal(ctx.model, before));
    REQUIRE(r[0].delay_s > ctx.cost.proc_delay_s);
}

TEST_CASE("a closed collaborator stays silent", "[protocol]") {
    auto ctx = make_ctx("p", 5);
    REQUIRE(collaborator_handle(ctx, CloseMsg{"done"}).empty());
    REQUIRE(ctx.closed);
    REQUIRE(collaborator_handle(ctx, PullRequestMsg{1}).empty());
    REQUIRE(collaborator_handle(ctx, RequestMsg{"app", 5.0, 10}).empty());
}

TEST_CASE("nonsense messages draw a protocol-error close", "[protocol]") {
    auto ctx = make_ctx("p", 6);
    auto replies = collaborator_handle(ctx, AcceptMsg{"whoever"});
    REQUIRE(replies.size() == 1);
    const auto* close = std::get_if<CloseMsg>(&replies[0].msg);
    REQUIRE(close);
    REQUIRE(close->reason == "protocol-error");
    REQUIRE(ctx.closed);
}

TEST_CASE("the battery guard wraps the requester threshold", "[protocol]") {
    RequesterConfig cfg;
    cfg.hp = tiny_hp(1);
    cfg.battery_min_percent = 20.0;
    EnergyLedger ledger;
    REQUIRE(check_battery(BatteryState{100.0, 19.9}, ledger, cfg) == BatteryDecision::StopNow);
    REQUIRE(check_battery(BatteryState{100.0, 20.0}, ledger, cfg) == BatteryDecision::Continue);
}

TEST_CASE("a full run reaches the accuracy target and keeps its books", "[protocol]") {
    auto cfg = base_cfg();
    RunMetrics m = run_enfed_sim(cfg);
    check_run_invariants(m, cfg.enfed.nearby);
    REQUIRE(m.stop_reason == StopReason::AccuracyReached);
    REQUIRE(m.collaborators == 5);
    REQUIRE(m.accuracy >= 0.9);
}

TEST_CASE("an immediate battery trip aggregates exactly one model", "[protocol]") {
    auto cfg = base_cfg();
    cfg.enfed.requester.battery_min_percent = 100.0;
    RunMetrics m = run_enfed_sim(cfg);
    check_run_invariants(m, cfg.enfed.nearby);
    REQUIRE(m.stop_reason == StopReason::BatteryLow);
    REQUIRE(m.stop_phase == StopPhase::Collection);
    REQUIRE(m.collaborators == 1);
    REQUIRE(m.rounds_executed == 0);
}

TEST_CASE("an unreachable target exhausts the round cap", "[protocol]") {
    auto cfg = base_cfg();
    cfg.dataset.label_noise = 0.3;
    cfg.enfed.requester.desired_accuracy = 1.0;
    cfg.enfed.requester.max_rounds = 2;
    cfg.enfed.requester.battery_min_percent = 0.0;
    cfg.battery.capacity_j = 1e9;
    RunMetrics m = run_enfed_sim(cfg);
    check_run_invariants(m, cfg.enfed.nearby);
    REQUIRE(m.stop_reason == StopReason::MaxRoundsReached);
    REQUIRE(m.rounds_executed == 2);
    REQUIRE(m.round_accuracy.back() < 1.0);
}

TEST_CASE("universal rejection is a distinct failure outcome", "[protocol]") {
    auto cfg = base_cfg();
    cfg.enfed.reserve_price = 100.0;  // everyone demands more than the offer
    RunMetrics m = run_enfed_sim(cfg);
    REQUIRE(m.outcome == RunOutcome::NoCollaborators);
    REQUIRE_FALSE(m.stop_reason.has_value());
    REQUIRE(m.collaborators == 0);
    REQUIRE(m.msgs.recv_of(MsgType::Reject) == 5);
    REQUIRE(m.msgs.sent_of(MsgType::Close) == 0);
}

TEST_CASE("a silent network is a distinct failure outcome", "[protocol]") {
    auto cfg = base_cfg();
    cfg.network.drop_prob = 1.0;
    cfg.enfed.requester.response_timeout_s = 2.0;
    RunMetrics m = run_enfed_sim(cfg);
    REQUIRE(m.outcome == RunOutcome::NoCollaborators);
    REQUIRE(m.msgs.recv_of(MsgType::Accept) == 0);
}

TEST_CASE("a dead link excludes only that peer", "[protocol]") {
    SimNet net(SimNetConfig{9, SimLink{0.005, 0.0, 2e6}});
    net.add_device("requester");
    std::vector<std::unique_ptr<CollaboratorContext>> peers;
    std::vector<std::string> ids;
    Dataset pool = synth_generate(3, 90, 4, 7.0, 9);
    auto parts = partition_iid(pool, 4, 9);
    for (int i = 0; i < 3; ++i) {
        auto ctx = std::make_unique<CollaboratorContext>();
        ctx->id = "peer" + std::to_string(i);
        ctx->hp = tiny_hp(100 + i);
        ctx->train = parts[i + 1];
        ctx->model = fit(init_mlp(ctx->hp), ctx->train, ctx->hp).net;
        register_sim_collaborator(net, *ctx);
        const bool dead = i == 1;
        net.add_duplex_link("requester", ctx->id,
                            SimLink{0.005, dead ? 1.0 : 0.0, 2e6});
        ids.push_back(ctx->id);
        peers.push_back(std::move(ctx));
    }
    RequesterConfig rc;
    rc.hp = tiny_hp(9);
    rc.desired_accuracy = 0.9;
    rc.max_collaborators = 3;
    rc.response_timeout_s = 1.0;
    SimRequesterTransport transport(net, "requester");
    auto res = requester_run(rc, ids, transport, parts[0], BatteryState{50000, 80},
                             DeviceEnv{});
    REQUIRE(res.metrics.outcome == RunOutcome::Ok);
    REQUIRE(res.metrics.collaborators == 2);
    REQUIRE(res.metrics.msgs.recv_of(MsgType::Accept) == 2);
    REQUIRE(res.metrics.msgs.sent_of(MsgType::Close) == 2);
}

TEST_CASE("a peer that goes mute is dropped after one missed deadline", "[protocol]") {
    SimNet net(SimNetConfig{10, SimLink{0.005, 0.0, 2e6}});
    net.add_device("requester");
    std::vector<std::unique_ptr<CollaboratorContext>> peers;
    std::vector<std::string> ids;
    Dataset pool = synth_generate(3, 90, 4, 2.0, 10, 0.3);  // noisy: target unreachable
    auto parts = partition_iid(pool, 4, 10);
    for (int i = 0; i < 3; ++i) {
        auto ctx = std::make_unique<CollaboratorContext>();
        ctx->id = "peer" + std::to_string(i);
        ctx->hp = tiny_hp(200 + i);
        ctx->train = parts[i + 1];
        ctx->model = init_mlp(ctx->hp);
        if (i == 0) ctx->mute_after_round = 0;  // answers collection, then vanishes
        register_sim_collaborator(net, *ctx);
        net.add_duplex_link("requester", ctx->id, SimLink{0.005, 0.0, 2e6});
        ids.push_back(ctx->id);
        peers.push_back(std::move(ctx));
    }
    RequesterConfig rc;
    rc.hp = tiny_hp(10);
    rc.desired_accuracy = 1.0;
    rc.max_rounds = 3;
    rc.max_collaborators = 3;
    rc.battery_min_percent = 0.0;
    rc.response_timeout_s = 0.5;
    SimRequesterTransport transport(net, "requester");
    auto res = requester_run(rc, ids, transport, parts[0], BatteryState{1e9, 80}, DeviceEnv{});
    const auto& m = res.metrics;
    REQUIRE(m.outcome == RunOutcome::Ok);
    REQUIRE(m.stop_reason == StopReason::MaxRoundsReached);
    REQUIRE(m.rounds_executed == 3);
    REQUIRE(m.collaborators == 3);
    // pulls: 3 peers in round 1, 2 peers afterwards
    REQUIRE(m.msgs.sent_of(MsgType::PullRequest) == 3 + 2 + 2);
    REQUIRE(m.msgs.sent_of(MsgType::Close) == 3);  // the mute peer included, exactly once
}

TEST_CASE("garbage from a peer earns a protocol-error close", "[protocol]") {
    SimNet net(SimNetConfig{11, SimLink{0.001, 0.0}});
    net.add_device("requester");
    net.add_device("rogue");
    net.set_handler("rogue", [&net](const Delivery& d) {
        net.send("rogue", d.from, {0xde, 0xad, 0xbe, 0xef, 0xff, 0x00}, net.now());
    });
    auto good = std::make_unique<CollaboratorContext>(make_ctx("good", 12));
    good->train = synth_generate(3, 60, 4, 7.0, 12);
    good->model = fit(init_mlp(good->hp), good->train, good->hp).net;
    register_sim_collaborator(net, *good);
    net.add_duplex_link("requester", "good", SimLink{0.001, 0.0});
    net.add_duplex_link("requester", "rogue", SimLink{0.001, 0.0});

    RequesterConfig rc;
    rc.hp = tiny_hp(12);
    rc.desired_accuracy = 0.5;
    rc.max_collaborators = 2;
    rc.response_timeout_s = 1.0;
    SimRequesterTransport transport(net, "requester");
    auto res = requester_run(rc, {"rogue", "good"}, transport,
                             synth_generate(3, 60, 4, 7.0, 13), BatteryState{50000, 80},
                             DeviceEnv{});
    const auto& m = res.metrics;
    REQUIRE(m.outcome == RunOutcome::Ok);
    REQUIRE(m.collaborators == 1);
    // one close for the rogue (protocol error), one for the good peer
    REQUIRE(m.msgs.sent_of(MsgType::Close) == m.msgs.recv_of(MsgType::Accept) + 1);
}

TEST_CASE("malformed frames make a collaborator close the connection", "[protocol]") {
    SimNet net(SimNetConfig{13, SimLink{0.001, 0.0}});
    net.add_device("tester");
    auto ctx = make_ctx("victim", 14);
    register_sim_collaborator(net, ctx);
    net.add_duplex_link("tester", "victim", SimLink{0.001, 0.0});
    net.send("tester", "victim", {0x01, 0x02}, 0.0);
    auto reply = net.wait_inbox("tester", 1.0);
    REQUIRE(reply);
    auto msg = decode_message(decode_frame(reply->frame));
    const auto* close = std::get_if<CloseMsg>(&msg);
    REQUIRE(close);
    REQUIRE(close->reason == "protocol-error");
    REQUIRE(ctx.closed);
}

TEST_CASE("identical seeds replay byte-identical metrics", "[protocol]") {
    auto cfg = base_cfg();
    cfg.seed = 31337;
    const std::string a = serialize_metrics(run_enfed_sim(cfg));
    const std::string b = serialize_metrics(run_enfed_sim(cfg));
    REQUIRE(a == b);
    cfg.seed = 31338;
    REQUIRE(serialize_metrics(run_enfed_sim(cfg)) != a);
}

TEST_CASE("pretrained collaborators reach the paper target in early rounds", "[protocol]") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto cfg = base_cfg();
        cfg.seed = 500 + seed;
        cfg.dataset.classes = 6;
        cfg.dataset.sep = 8.0;
        cfg.enfed.requester.desired_accuracy = 0.95;
        RunMetrics m = run_enfed_sim(cfg);
        if (m.stop_reason == StopReason::AccuracyReached && m.rounds_executed <= 2) ++hits;
    }
    REQUIRE(hits >= 4);
}

TEST_CASE("a requester with nothing nearby is rejected", "[protocol]") {
    RequesterConfig rc;
    rc.hp = tiny_hp(1);
    SimNet net;
    net.add_device("requester");
    SimRequesterTransport transport(net, "requester");
    REQUIRE_THROWS_AS(requester_run(rc, {}, transport, synth_generate(3, 30, 4, 6.0, 1),
                                    BatteryState{}, DeviceEnv{}),
                      std::invalid_argument);
}
