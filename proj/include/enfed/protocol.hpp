#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "enfed/aggregate.hpp"
#include "enfed/datasets.hpp"
#include "enfed/energy.hpp"
#include "enfed/metrics.hpp"
#include "enfed/nn.hpp"
#include "enfed/simnet.hpp"
#include "enfed/wire.hpp"

namespace enfed {

struct RequesterConfig {
    std::string app_id = "app";
    double desired_accuracy = 0.95;
    int max_collaborators = 5;
    int max_rounds = 10;
    double battery_min_percent = 20.0;
    double incentive = 1.0;
    double response_timeout_s = 30.0;
    double split_ratio = 0.8;
    Hyperparams hp;

    void validate() const {
        if (!(desired_accuracy > 0.0 && desired_accuracy <= 1.0))
            throw std::invalid_argument("RequesterConfig: desired_accuracy must be in (0,1]");
        if (max_collaborators < 1)
            throw std::invalid_argument("RequesterConfig: max_collaborators must be >= 1");
        if (max_rounds < 1) throw std::invalid_argument("RequesterConfig: max_rounds must be >= 1");
        if (!(battery_min_percent >= 0.0 && battery_min_percent < 100.0) &&
            battery_min_percent != 100.0)
            throw std::invalid_argument("RequesterConfig: battery_min_percent must be in [0,100]");
        if (!(incentive >= 0.0)) throw std::invalid_argument("RequesterConfig: negative incentive");
        if (!(response_timeout_s > 0.0))
            throw std::invalid_argument("RequesterConfig: response_timeout_s must be positive");
        if (!(split_ratio > 0.0 && split_ratio < 1.0))
            throw std::invalid_argument("RequesterConfig: split_ratio must be in (0,1)");
        hp.validate();
    }
};

struct CollaboratorPolicy {
    double reserve_price = 0.0;
    bool retrain_between_rounds = false;
};

// Battery guard per the requester config; StopNow means aggregate what is in
// hand, close all connections, and exit.
inline BatteryDecision check_battery(const BatteryState& battery, const EnergyLedger& ledger,
                                     const RequesterConfig& cfg) {
    return check_battery_level(battery, ledger, cfg.battery_min_percent);
}

// ---- transport abstraction (simulated or framed TCP) ----

class RequesterTransport {
  public:
    struct Incoming {
        std::string from;
        std::optional<ProtocolMessage> msg;  // nullopt: undecodable frame
        double rx_seconds = 0.0;
    };

    virtual ~RequesterTransport() = default;
    virtual double now() = 0;
    // Returns the transmission (radio-active) time of the message.
    virtual double send(const std::string& to, const ProtocolMessage& msg) = 0;
    // Next inbound message, or nullopt once the deadline passes.
    virtual std::optional<Incoming> recv_any(double deadline) = 0;
    // Local compute time passing on this device.
    virtual void advance(double seconds) = 0;
};

class SimRequesterTransport final : public RequesterTransport {
  public:
    SimRequesterTransport(SimNet& net, std::string self) : net_(net), self_(std::move(self)) {}

    double now() override { return net_.now(); }

    double send(const std::string& to, const ProtocolMessage& msg) override {
        auto bytes = encode_frame(encode_message(msg));
        const double tx = net_.transfer_seconds(self_, to, bytes.size());
        net_.send(self_, to, std::move(bytes), net_.now());
        return tx;
    }

    std::optional<Incoming> recv_any(double deadline) override {
        auto d = net_.wait_inbox(self_, deadline);
        if (!d) return std::nullopt;
        Incoming in;
        in.from = d->from;
        in.rx_seconds = net_.transfer_seconds(d->from, self_, d->frame.size());
        try {
            in.msg = decode_message(decode_frame(d->frame));
        } catch (const WireError&) {
            in.msg = std::nullopt;
        }
        return in;
    }

    void advance(double seconds) override { net_.advance_to(net_.now() + seconds); }

  private:
    SimNet& net_;
    std::string self_;
};

// ---- collaborator state machine ----

struct CollaboratorContext {
    std::string id;
    CollaboratorPolicy policy;
    ModelWeights model;
    Dataset train;
    Hyperparams hp;
    CostModel cost;
    bool closed = false;
    int retrains = 0;
    // Failure injection for tests: stop answering pulls after this round
    // (-1 never), as if the device left the neighbourhood.
    int mute_after_round = -1;
};

struct CollabReply {
    ProtocolMessage msg;
    double delay_s = 0.0;  // compute time before the reply leaves
};

// Pure message handler shared by the simulated and TCP servers. Accepts a
// request iff the offered incentive covers the reserve price; replies to a
// pull with the current model, optionally fine-tuned first.
inline std::vector<CollabReply> collaborator_handle(CollaboratorContext& ctx,
                                                    const ProtocolMessage& msg) {
    std::vector<CollabReply> replies;
    if (ctx.closed) return replies;
    if (const auto* req = std::get_if<RequestMsg>(&msg)) {
        if (req->incentive >= ctx.policy.reserve_price) {
            replies.push_back({AcceptMsg{ctx.id}, ctx.cost.proc_delay_s});
            replies.push_back({ModelUpdateMsg{0, ctx.id, ctx.model}, ctx.cost.proc_delay_s});
        } else {
            replies.push_back({RejectMsg{ctx.id}, ctx.cost.proc_delay_s});
        }
    } else if (const auto* pull = std::get_if<PullRequestMsg>(&msg)) {
        if (ctx.mute_after_round >= 0 && static_cast<int>(pull->round) > ctx.mute_after_round)
            return replies;
        double delay = ctx.cost.proc_delay_s;
        if (ctx.policy.retrain_between_rounds) {
            Hyperparams hp = ctx.hp;
            hp.seed = derive_seed(ctx.hp.seed, seed_stream::kRetrain, ++ctx.retrains);
            delay += simulated_duration(
                ctx.cost, PhaseWork{Phase::LocalTrain, static_cast<double>(hp.epochs),
                                    static_cast<double>(ctx.train.rows()),
                                    static_cast<double>(hp.batch_size),
                                    static_cast<double>(ctx.model.weight_count())});
            ctx.model = fit(std::move(ctx.model), ctx.train, hp).net;
        }
        replies.push_back({ModelUpdateMsg{pull->round, ctx.id, ctx.model}, delay});
    } else if (std::holds_alternative<CloseMsg>(msg)) {
        ctx.closed = true;
    } else {
        // Accept/Reject/ModelUpdate are requester->collaborator nonsense.
        replies.push_back({CloseMsg{"protocol-error"}, 0.0});
        ctx.closed = true;
    }
    return replies;
}

// Wire a collaborator into the simulated network as a reactive device.
inline void register_sim_collaborator(SimNet& net, CollaboratorContext& ctx) {
    net.add_device(ctx.id);
    net.set_handler(ctx.id, [&net, &ctx](const Delivery& d) {
        std::vector<CollabReply> replies;
        try {
            replies = collaborator_handle(ctx, decode_message(decode_frame(d.frame)));
        } catch (const WireError&) {
            replies.push_back({CloseMsg{"protocol-error"}, 0.0});
            ctx.closed = true;
        }
        for (auto& r : replies)
            net.send(ctx.id, d.from, encode_frame(encode_message(r.msg)), net.now() + r.delay_s);
    });
}

// ---- requester state machine (the protocol main body) ----

struct RequesterResult {
    ModelWeights model;
    RunMetrics metrics;
};

namespace protodetail {

enum class PeerState { Pending, Accepted, Collected, Rejected, Closed };

struct PeerBook {
    std::map<std::string, PeerState> state;
    std::map<std::string, bool> closed_by_us;

    bool known(const std::string& p) const { return state.count(p) != 0; }
    bool unresolved_remaining() const {
        for (const auto& [p, s] : state)
            if (s == PeerState::Pending || s == PeerState::Accepted) return true;
        return false;
    }
};

}  // namespace protodetail

inline RequesterResult requester_run(const RequesterConfig& cfg,
                                     const std::vector<std::string>& nearby,
                                     RequesterTransport& transport, const Dataset& dataset,
                                     const BatteryState& battery, const DeviceEnv& env) {
    cfg.validate();
    dataset.validate();
    if (nearby.empty()) throw std::invalid_argument("requester_run: no nearby devices");
    if (dataset.dim() != static_cast<std::size_t>(cfg.hp.input_size()))
        throw std::invalid_argument("requester_run: dataset dimension != model input size");
    if (dataset.class_count > cfg.hp.output_size())
        throw std::invalid_argument("requester_run: more classes than model outputs");

    const auto parts = split(dataset, cfg.split_ratio, cfg.hp.seed);
    const Dataset& train = parts.train;
    const Dataset& test = parts.test;

    RunMetrics m;
    m.scenario = "enfed";
    m.seed = cfg.hp.seed;
    m.battery_start = battery.initial_percent;
    EnergyLedger& ledger = m.ledger;
    const double start_time = transport.now();

    protodetail::PeerBook peers;
    auto send_counted = [&](const std::string& to, const ProtocolMessage& msg) {
        const double tx = transport.send(to, msg);
        ledger.charge(Phase::Send, tx, env.power);
        m.msgs.count_sent(message_type(msg));
    };
    auto close_peer = [&](const std::string& p, const std::string& reason) {
        if (peers.closed_by_us[p]) return;
        peers.closed_by_us[p] = true;
        peers.state[p] = protodetail::PeerState::Closed;
        send_counted(p, CloseMsg{reason});
    };

    // (2) broadcast the incentive request to every nearby device
    for (const auto& p : nearby) {
        peers.state[p] = protodetail::PeerState::Pending;
        peers.closed_by_us[p] = false;
        send_counted(p, RequestMsg{cfg.app_id, cfg.incentive,
                                   static_cast<std::uint32_t>(cfg.max_rounds)});
    }

    // (3) collect models in arrival order until N_max, battery stop, deadline,
    // or every peer has answered. The battery guard runs after each arrival.
    std::vector<ModelBundle> bundles;
    std::vector<std::string> addr;  // collaborators, in model-arrival order
    std::optional<StopReason> stop;
    std::optional<StopPhase> stop_phase;
    ModelWeights model;

    const ModelWeights expected_shape = init_mlp(cfg.hp);
    const double model_weights_count = static_cast<double>(expected_shape.weight_count());
    const double collect_deadline = transport.now() + cfg.response_timeout_s;

    while (static_cast<int>(bundles.size()) < cfg.max_collaborators && !stop &&
           peers.unresolved_remaining()) {
        auto in = transport.recv_any(collect_deadline);
        if (!in) break;  // deadline
        ledger.charge(Phase::Recv, in->rx_seconds, env.power);
        if (!in->msg) {
            close_peer(in->from, "protocol-error");
            continue;
        }
        m.msgs.count_recv(message_type(*in->msg));
        const std::string& p = in->from;
        if (auto* acc = std::get_if<AcceptMsg>(&*in->msg)) {
            (void)acc;
            if (peers.known(p) && peers.state[p] == protodetail::PeerState::Pending)
                peers.state[p] = protodetail::PeerState::Accepted;
        } else if (std::get_if<RejectMsg>(&*in->msg)) {
            if (peers.known(p) && peers.state[p] == protodetail::PeerState::Pending)
                peers.state[p] = protodetail::PeerState::Rejected;
        } else if (auto* mu = std::get_if<ModelUpdateMsg>(&*in->msg)) {
            if (!peers.known(p) || peers.state[p] == protodetail::PeerState::Collected ||
                peers.state[p] == protodetail::PeerState::Closed)
                continue;  // duplicate or stray
            if (!congruent(mu->weights, expected_shape)) {
                close_peer(p, "bad-model-shape");
                continue;
            }
            peers.state[p] = protodetail::PeerState::Collected;
            bundles.push_back(ModelBundle{p, mu->weights, 0});
            addr.push_back(p);
            if (bundles.size() == 1) {
                // first arrival seeds the model (constant-time install)
                const double t =
                    measure_phase(env.clock, env.cost, PhaseWork{Phase::Init},
                                  [&] { model = mu->weights; });
                ledger.charge(Phase::Init, t, env.power);
                transport.advance(t);
            }
            if (check_battery(battery, ledger, cfg) == BatteryDecision::StopNow) {
                stop = StopReason::BatteryLow;
                stop_phase = StopPhase::Collection;
            }
        } else if (std::get_if<CloseMsg>(&*in->msg)) {
            if (peers.known(p)) {
                peers.state[p] = protodetail::PeerState::Closed;
                peers.closed_by_us[p] = true;  // peer closed; nothing to send back
            }
        } else {
            close_peer(p, "protocol-error");
        }
    }

    // Accepted peers whose model was not collected are not collaborators.
    for (auto& [p, s] : peers.state)
        if (s == protodetail::PeerState::Accepted) close_peer(p, "not-needed");

    m.collaborators = static_cast<int>(bundles.size());
    if (bundles.empty()) {
        m.outcome = RunOutcome::NoCollaborators;
        m.battery_end = battery_after(battery, ledger);
        m.sim_elapsed = transport.now() - start_time;
        return RequesterResult{ModelWeights{}, std::move(m)};
    }

    const std::size_t n_train = train.rows();
    const auto loc_work = PhaseWork{Phase::LocalTrain, static_cast<double>(cfg.hp.epochs),
                                    static_cast<double>(n_train),
                                    static_cast<double>(cfg.hp.batch_size), model_weights_count};

    // One aggregate+fit step with per-phase accounting (the updateModel of
    // the protocol: average, install, fine-tune).
    auto aggregate_and_fit = [&](const std::vector<ModelBundle>& bs) {
        if (!bs.empty()) {
            ModelWeights averaged;
            const double t_a = measure_phase(
                env.clock, env.cost,
                PhaseWork{Phase::Aggregate, 0, 0, 1, model_weights_count,
                          static_cast<double>(bs.size())},
                [&] { averaged = average_weights(bs); });
            ledger.charge(Phase::Aggregate, t_a, env.power);
            model = std::move(averaged);
            transport.advance(t_a);
        }
        FitResult<float> fitted;
        const double t_l = measure_phase(env.clock, env.cost, loc_work,
                                         [&] { fitted = fit(std::move(model), train, cfg.hp); });
        ledger.charge(Phase::LocalTrain, t_l, env.power);
        model = std::move(fitted.net);
        transport.advance(t_l);
    };

    auto record_round = [&] {
        m.loss_trace.push_back(
            mean_cross_entropy(model, train.features, train.labels));
        m.round_accuracy.push_back(accuracy_score(model, test));
        m.round_battery.push_back(battery_after(battery, ledger));
    };

    // (4)-(5) initial aggregation and evaluation
    aggregate_and_fit(bundles);
    record_round();
    double accuracy = m.round_accuracy.back();

    // (6) rounds until a stop guard fires. Guard order per checkpoint:
    // accuracy, battery, round cap.
    int rounds = 0;
    if (!stop) {
        for (;;) {
            if (accuracy >= cfg.desired_accuracy) {
                stop = StopReason::AccuracyReached;
                stop_phase = StopPhase::Rounds;
                break;
            }
            if (check_battery(battery, ledger, cfg) == BatteryDecision::StopNow) {
                stop = StopReason::BatteryLow;
                stop_phase = StopPhase::Rounds;
                break;
            }
            if (rounds == cfg.max_rounds) {
                stop = StopReason::MaxRoundsReached;
                stop_phase = StopPhase::Rounds;
                break;
            }

            const std::uint32_t round_no = static_cast<std::uint32_t>(rounds + 1);
            for (const auto& p : addr) send_counted(p, PullRequestMsg{round_no});
            std::set<std::string> awaiting(addr.begin(), addr.end());
            std::vector<ModelBundle> fresh;
            const double round_deadline = transport.now() + cfg.response_timeout_s;
            while (!awaiting.empty()) {
                auto in = transport.recv_any(round_deadline);
                if (!in) break;
                ledger.charge(Phase::Recv, in->rx_seconds, env.power);
                if (!in->msg) {
                    close_peer(in->from, "protocol-error");
                    awaiting.erase(in->from);
                    continue;
                }
                m.msgs.count_recv(message_type(*in->msg));
                const std::string& p = in->from;
                if (auto* mu = std::get_if<ModelUpdateMsg>(&*in->msg)) {
                    if (!awaiting.count(p)) continue;
                    if (!congruent(mu->weights, expected_shape)) {
                        close_peer(p, "bad-model-shape");
                        awaiting.erase(p);
                        continue;
                    }
                    fresh.push_back(ModelBundle{p, mu->weights, static_cast<int>(round_no)});
                    awaiting.erase(p);
                } else if (std::get_if<AcceptMsg>(&*in->msg)) {
                    // late accept from the collection phase; not needed now
                    if (peers.known(p) && peers.state[p] == protodetail::PeerState::Pending)
                        close_peer(p, "not-needed");
                } else if (std::get_if<CloseMsg>(&*in->msg)) {
                    if (peers.known(p)) {
                        peers.state[p] = protodetail::PeerState::Closed;
                        peers.closed_by_us[p] = true;
                        awaiting.erase(p);
                    }
                }
            }
            // peers that missed the deadline are dropped for good
            for (const auto& p : awaiting) close_peer(p, "timeout");
            std::vector<std::string> kept;
            for (const auto& p : addr)
                if (peers.state[p] == protodetail::PeerState::Collected) kept.push_back(p);
            addr = std::move(kept);

            // With no fresh models the round degenerates to a local fit; the
            // loop still terminates through the guards above.
            aggregate_and_fit(fresh);
            record_round();
            accuracy = m.round_accuracy.back();
            ++rounds;
        }
    }

    // (7) close every remaining connection
    for (const auto& p : addr) close_peer(p, stop ? stop_reason_name(*stop) : "done");

    m.rounds_executed = rounds;
    m.stop_reason = stop;
    m.stop_phase = stop_phase;
    const auto cls = classification_metrics(model, test);
    m.accuracy = cls.accuracy;
    m.precision = cls.macro_precision;
    m.recall = cls.macro_recall;
    m.f1 = cls.macro_f1;
    m.battery_end = battery_after(battery, ledger);
    m.sim_elapsed = transport.now() - start_time;
    return RequesterResult{std::move(model), std::move(m)};
}

}  // namespace enfed
