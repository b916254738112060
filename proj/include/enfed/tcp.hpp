#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "enfed/wire.hpp"

namespace enfed {

struct TcpError : EnfedError {
    using EnfedError::EnfedError;
};

enum class RecvStatus { Ok, Timeout, Eof };

// Blocking framed stream over a connected socket. Frames are exactly the
// WireFrame layout; partial reads are reassembled and a connection that
// closes mid-frame is a truncation error.
class TcpConn {
  public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) {}
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;
    TcpConn(TcpConn&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    TcpConn& operator=(TcpConn&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    ~TcpConn() { close(); }

    bool valid() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    static TcpConn connect_to(const std::string& host, std::uint16_t port) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw TcpError("socket: " + std::string(std::strerror(errno)));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw TcpError("bad address '" + host + "'");
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw TcpError("connect " + host + ":" + std::to_string(port) + ": " + err);
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return TcpConn(fd);
    }

    void send_bytes(const std::uint8_t* data, std::size_t len) {
        std::size_t sent = 0;
        while (sent < len) {
            const ssize_t n = ::send(fd_, data + sent, len - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TcpError("send: " + std::string(std::strerror(errno)));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    void send_frame(const Frame& frame) {
        const auto bytes = encode_frame(frame);
        send_bytes(bytes.data(), bytes.size());
    }

    // timeout_s < 0 blocks indefinitely. Timeout only applies before the
    // first header byte; once a frame starts it is read to completion.
    RecvStatus recv_frame(Frame& out, double timeout_s = -1.0,
                          std::size_t max_payload = kMaxFramePayload) {
        std::uint8_t header[5];
        const RecvStatus first = recv_exact(header, 1, timeout_s, true);
        if (first != RecvStatus::Ok) return first;
        if (recv_exact(header + 1, 4, -1.0, false) != RecvStatus::Ok)
            throw WireError(WireErrc::Truncated, "connection closed mid-header");
        const std::uint32_t len = (static_cast<std::uint32_t>(header[0]) << 24) |
                                  (static_cast<std::uint32_t>(header[1]) << 16) |
                                  (static_cast<std::uint32_t>(header[2]) << 8) |
                                  static_cast<std::uint32_t>(header[3]);
        if (len > max_payload) throw WireError(WireErrc::Oversize, "frame length exceeds maximum");
        if (!valid_msg_type(header[4]))
            throw WireError(WireErrc::BadType, "unknown message type " + std::to_string(header[4]));
        out.type = static_cast<MsgType>(header[4]);
        out.payload.resize(len);
        if (len > 0 && recv_exact(out.payload.data(), len, -1.0, false) != RecvStatus::Ok)
            throw WireError(WireErrc::Truncated, "connection closed mid-frame");
        return RecvStatus::Ok;
    }

    int fd() const { return fd_; }

  private:
    RecvStatus recv_exact(std::uint8_t* dst, std::size_t len, double timeout_s, bool eof_ok) {
        std::size_t got = 0;
        while (got < len) {
            if (got == 0 && timeout_s >= 0.0) {
                pollfd pfd{fd_, POLLIN, 0};
                const int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
                if (pr == 0) return RecvStatus::Timeout;
                if (pr < 0) {
                    if (errno == EINTR) continue;
                    throw TcpError("poll: " + std::string(std::strerror(errno)));
                }
            }
            const ssize_t n = ::recv(fd_, dst + got, len - got, 0);
            if (n == 0) {
                if (got == 0 && eof_ok) return RecvStatus::Eof;
                return RecvStatus::Eof;
            }
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TcpError("recv: " + std::string(std::strerror(errno)));
            }
            got += static_cast<std::size_t>(n);
        }
        return RecvStatus::Ok;
    }

    int fd_ = -1;
};

class TcpListener {
  public:
    explicit TcpListener(std::uint16_t port = 0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw TcpError("socket: " + std::string(std::strerror(errno)));
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            throw TcpError("bind: " + err);
        }
        if (::listen(fd_, 16) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd_);
            throw TcpError("listen: " + err);
        }
        socklen_t slen = sizeof(addr);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &slen);
        port_ = ntohs(addr.sin_port);
    }

    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() {
        if (fd_ >= 0) ::close(fd_);
    }

    std::uint16_t port() const { return port_; }

    TcpConn accept_conn(double timeout_s = -1.0) {
        if (timeout_s >= 0.0) {
            pollfd pfd{fd_, POLLIN, 0};
            const int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
            if (pr == 0) throw TcpError("accept: timed out");
            if (pr < 0) throw TcpError("poll: " + std::string(std::strerror(errno)));
        }
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd < 0) throw TcpError("accept: " + std::string(std::strerror(errno)));
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return TcpConn(fd);
    }

  private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

}  // namespace enfed
