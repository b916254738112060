#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "enfed/protocol.hpp"
#include "enfed/tcp.hpp"

namespace enfed {

// Requester side of the framed TCP mode: one duplex connection per peer,
// wall-clock timing. Non-deterministic by nature, so excluded from replay
// guarantees.
class TcpRequesterTransport final : public RequesterTransport {
  public:
    struct Peer {
        std::string id;
        TcpConn conn;
    };

    explicit TcpRequesterTransport(std::vector<Peer> peers)
        : peers_(std::move(peers)), epoch_(std::chrono::steady_clock::now()) {}

    double now() override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
    }

    double send(const std::string& to, const ProtocolMessage& msg) override {
        Peer* peer = find(to);
        if (!peer || !peer->conn.valid()) return 0.0;  // peer already gone
        const double t0 = now();
        try {
            peer->conn.send_frame(encode_message(msg));
        } catch (const TcpError&) {
            peer->conn.close();
        }
        return now() - t0;
    }

    std::optional<Incoming> recv_any(double deadline) override {
        for (;;) {
            const double remaining = deadline - now();
            if (remaining <= 0.0) return std::nullopt;
            std::vector<pollfd> fds;
            std::vector<Peer*> order;
            for (auto& p : peers_) {
                if (!p.conn.valid()) continue;
                fds.push_back({p.conn.fd(), POLLIN, 0});
                order.push_back(&p);
            }
            if (fds.empty()) return std::nullopt;
            const int pr = ::poll(fds.data(), fds.size(), static_cast<int>(remaining * 1000.0));
            if (pr == 0) return std::nullopt;
            if (pr < 0) {
                if (errno == EINTR) continue;
                throw TcpError("poll failed");
            }
            for (std::size_t i = 0; i < fds.size(); ++i) {
                if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                Peer* p = order[i];
                Incoming in;
                in.from = p->id;
                const double t0 = now();
                try {
                    Frame frame;
                    const RecvStatus st = p->conn.recv_frame(frame, 0.0);
                    if (st == RecvStatus::Timeout) continue;
                    if (st == RecvStatus::Eof) {
                        p->conn.close();
                        in.msg = CloseMsg{"connection-closed"};
                        in.rx_seconds = now() - t0;
                        return in;
                    }
                    in.msg = decode_message(frame);
                } catch (const WireError&) {
                    in.msg = std::nullopt;  // malformed
                } catch (const TcpError&) {
                    p->conn.close();
                    in.msg = CloseMsg{"connection-error"};
                }
                in.rx_seconds = now() - t0;
                return in;
            }
        }
    }

    void advance(double) override {}  // wall time already elapsed

  private:
    Peer* find(const std::string& id) {
        for (auto& p : peers_)
            if (p.id == id) return &p;
        return nullptr;
    }

    std::vector<Peer> peers_;
    std::chrono::steady_clock::time_point epoch_;
};

// Collaborator service loop for one inbound connection: decode, handle,
// reply, until the peer closes or a Close arrives. Malformed input gets a
// protocol-error Close.
inline void collaborator_serve(CollaboratorContext& ctx, TcpConn& conn) {
    while (!ctx.closed) {
        Frame frame;
        RecvStatus st;
        try {
            st = conn.recv_frame(frame);
        } catch (const WireError&) {
            try {
                conn.send_frame(encode_message(CloseMsg{"protocol-error"}));
            } catch (...) {
            }
            return;
        }
        if (st != RecvStatus::Ok) return;  // peer went away
        std::vector<CollabReply> replies;
        try {
            replies = collaborator_handle(ctx, decode_message(frame));
        } catch (const WireError&) {
            replies.push_back({CloseMsg{"protocol-error"}, 0.0});
            ctx.closed = true;
        }
        for (const auto& r : replies) {
            try {
                conn.send_frame(encode_message(r.msg));
            } catch (const TcpError&) {
                return;
            }
        }
    }
}

}  // namespace enfed
