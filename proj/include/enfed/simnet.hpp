#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "enfed/errors.hpp"
#include "enfed/rng.hpp"
#include "enfed/wire.hpp"

namespace enfed {

struct SimLink {
    double latency_s = 0.0;
    double drop_prob = 0.0;  // in [0,1)
    double bandwidth_bps = std::numeric_limits<double>::infinity();  // bytes/s
};

struct SimNetConfig {
    std::uint64_t seed = 0;
    SimLink default_link;
};

// A frame delivered to a device, stamped with its arrival time.
struct Delivery {
    std::string from;
    std::string to;
    std::vector<std::uint8_t> frame;
    double time = 0.0;
    std::uint64_t seq = 0;
};

// Deterministic in-process network. Events are ordered by (deliver time,
// sequence number); a link serializes transfers (FIFO) and drops frames with
// a per-link seeded coin. The clock advances only through event processing
// or an explicit advance_to.
class SimNet {
  public:
    using Handler = std::function<void(const Delivery&)>;

    explicit SimNet(SimNetConfig cfg = {}) : cfg_(cfg) {}

    void add_device(const std::string& id) { inbox_[id]; }

    bool has_device(const std::string& id) const { return inbox_.count(id) != 0; }

    // Reactive devices process deliveries inline (and may send replies);
    // devices without a handler accumulate deliveries in an inbox.
    void set_handler(const std::string& id, Handler h) {
        require_device(id);
        handlers_[id] = std::move(h);
    }

    void add_link(const std::string& from, const std::string& to, SimLink link) {
        link_cfg_[{from, to}] = link;
    }

    void add_duplex_link(const std::string& a, const std::string& b, SimLink link) {
        add_link(a, b, link);
        add_link(b, a, link);
    }

    double now() const { return now_; }

    std::size_t pending() const { return queue_.size(); }
    std::uint64_t drops() const { return drops_; }

    const std::vector<std::string>& trace() const { return trace_; }
    void enable_trace(bool on) { trace_on_ = on; }

    // Queue a frame for delivery. `when` is the transmit request time on the
    // sender's own timeline; devices run on local clocks, so it may trail the
    // global event clock.
    void send(const std::string& from, const std::string& to,
              std::vector<std::uint8_t> frame_bytes, double when) {
        require_device(from);
        require_device(to);
        if (!(when >= 0.0)) throw std::invalid_argument("SimNet::send: negative time");
        LinkState& link = link_state(from, to);
        const bool dropped = link.cfg.drop_prob > 0.0 && link.rng.uniform01() < link.cfg.drop_prob;
        if (dropped) {
            ++drops_;
            if (trace_on_) trace_event(when, from, to, frame_bytes, true, 0.0);
            return;
        }
        const double tx = transfer_seconds(from, to, frame_bytes.size());
        const double start = std::max(when, link.busy_until);
        link.busy_until = start + tx;
        const double deliver_at = start + tx + link.cfg.latency_s;
        if (trace_on_) trace_event(when, from, to, frame_bytes, false, deliver_at);
        queue_.insert(Delivery{from, to, std::move(frame_bytes), deliver_at, next_seq_++});
    }

    double transfer_seconds(const std::string& from, const std::string& to,
                            std::size_t bytes) const {
        const SimLink cfg = link_config(from, to);
        if (std::isinf(cfg.bandwidth_bps)) return 0.0;
        if (!(cfg.bandwidth_bps > 0))
            throw std::invalid_argument("SimNet: bandwidth must be positive");
        return static_cast<double>(bytes) / cfg.bandwidth_bps;
    }

    SimLink link_config(const std::string& from, const std::string& to) const {
        auto it = link_cfg_.find({from, to});
        return it != link_cfg_.end() ? it->second : cfg_.default_link;
    }

    // Deliver the earliest pending frame; returns false when idle.
    bool step() {
        if (queue_.empty()) return false;
        Delivery d = *queue_.begin();
        queue_.erase(queue_.begin());
        now_ = std::max(now_, d.time);
        auto h = handlers_.find(d.to);
        if (h != handlers_.end()) {
            h->second(d);
        } else {
            inbox_[d.to].push_back(std::move(d));
        }
        return true;
    }

    // Process everything scheduled up to `t`, then move the clock there.
    void advance_to(double t) {
        while (!queue_.empty() && queue_.begin()->time <= t) step();
        now_ = std::max(now_, t);
    }

    // Pop the next inbox frame for `id`, running the network until one
    // arrives or the deadline passes (in which case the clock rests at the
    // deadline and nullopt is returned).
    std::optional<Delivery> wait_inbox(const std::string& id, double deadline) {
        require_device(id);
        for (;;) {
            auto& box = inbox_[id];
            if (!box.empty()) {
                Delivery d = std::move(box.front());
                box.pop_front();
                return d;
            }
            if (queue_.empty() || queue_.begin()->time > deadline) {
                now_ = std::max(now_, deadline);
                return std::nullopt;
            }
            step();
        }
    }

    void run_all() {
        while (step()) {
        }
    }

  private:
    struct LinkState {
        SimLink cfg;
        Rng rng;
        double busy_until = 0.0;
        LinkState(SimLink c, std::uint64_t seed) : cfg(c), rng(seed) {}
    };

    void require_device(const std::string& id) const {
        if (!has_device(id)) throw std::invalid_argument("SimNet: unknown device '" + id + "'");
    }

    LinkState& link_state(const std::string& from, const std::string& to) {
        auto key = std::make_pair(from, to);
        auto it = links_.find(key);
        if (it == links_.end()) {
            const SimLink cfg = link_config(from, to);
            it = links_.emplace(key, LinkState(cfg, link_seed(from, to))).first;
        }
        return it->second;
    }

    std::uint64_t link_seed(const std::string& from, const std::string& to) const {
        // FNV-1a over "from->to" keys the per-link drop stream.
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 1099511628211ULL;
            }
        };
        mix(from);
        h ^= '>';
        h *= 1099511628211ULL;
        mix(to);
        return derive_seed(cfg_.seed, seed_stream::kLinkDrop, h);
    }

    void trace_event(double when, const std::string& from, const std::string& to,
                     const std::vector<std::uint8_t>& frame, bool dropped, double deliver_at) {
        char buf[160];
        const int type = frame.size() >= 5 ? frame[4] : -1;
        std::snprintf(buf, sizeof(buf), "%.9f %s->%s type=%d bytes=%zu %s%.9f", when, from.c_str(),
                      to.c_str(), type, frame.size(), dropped ? "DROP " : "deliver=", deliver_at);
        trace_.push_back(buf);
    }

    struct Cmp {
        bool operator()(const Delivery& a, const Delivery& b) const {
            if (a.time != b.time) return a.time < b.time;
            return a.seq < b.seq;
        }
    };

    SimNetConfig cfg_;
    double now_ = 0.0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t drops_ = 0;
    std::multiset<Delivery, Cmp> queue_;
    std::map<std::pair<std::string, std::string>, SimLink> link_cfg_;
    std::map<std::pair<std::string, std::string>, LinkState> links_;
    std::map<std::string, std::deque<Delivery>> inbox_;
    std::map<std::string, Handler> handlers_;
    std::vector<std::string> trace_;
    bool trace_on_ = false;
};

}  // namespace enfed
