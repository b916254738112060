#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "enfed/errors.hpp"
#include "enfed/nn.hpp"

namespace enfed {

// Wire contract, bit-exact:
//   frame    = u32be payload length | u8 message type | payload
//   model    = "ENFD" | u8 version(1) | u16be layer count |
//              per layer: u32be rows | u32be cols | u8 activation |
//                         rows*cols f32le weights (row-major) | rows f32le biases
// Frame headers are big-endian by network convention; model values are
// little-endian f32 for cheap bulk copies on common hardware.

constexpr std::size_t kMaxFramePayload = 64ull * 1024 * 1024;
constexpr std::uint8_t kModelBlobVersion = 1;

enum class MsgType : std::uint8_t {
    Request = 1,
    Accept = 2,
    Reject = 3,
    ModelUpdate = 4,
    PullRequest = 5,
    Close = 6,
};

inline const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::Request: return "request";
        case MsgType::Accept: return "accept";
        case MsgType::Reject: return "reject";
        case MsgType::ModelUpdate: return "model_update";
        case MsgType::PullRequest: return "pull_request";
        case MsgType::Close: return "close";
    }
    return "unknown";
}

enum class WireErrc {
    Truncated,
    BadMagic,
    BadVersion,
    BadShape,
    BadType,
    Oversize,
    BadPayload,
};

class WireError : public EnfedError {
  public:
    WireError(WireErrc code, const std::string& what) : EnfedError(what), code_(code) {}
    WireErrc code() const { return code_; }

  private:
    WireErrc code_;
};

namespace wiredetail {

inline void put_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_f64be(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
}

inline void put_f32le(std::vector<std::uint8_t>& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<std::uint8_t>(bits));
    out.push_back(static_cast<std::uint8_t>(bits >> 8));
    out.push_back(static_cast<std::uint8_t>(bits >> 16));
    out.push_back(static_cast<std::uint8_t>(bits >> 24));
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    if (s.size() > 0xffff) throw WireError(WireErrc::Oversize, "string field too long");
    put_u16be(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct ByteReader {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    const std::uint8_t* need(std::size_t n) {
        if (pos + n > data.size())
            throw WireError(WireErrc::Truncated, "truncated at byte " + std::to_string(pos));
        const std::uint8_t* p = data.data() + pos;
        pos += n;
        return p;
    }

    std::uint8_t u8() { return *need(1); }

    std::uint16_t u16be() {
        const auto* p = need(2);
        return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
    }

    std::uint32_t u32be() {
        const auto* p = need(4);
        return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
               (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
    }

    double f64be() {
        const auto* p = need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits = (bits << 8) | p[i];
        return std::bit_cast<double>(bits);
    }

    float f32le() {
        const auto* p = need(4);
        const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                   (static_cast<std::uint32_t>(p[1]) << 8) |
                                   (static_cast<std::uint32_t>(p[2]) << 16) |
                                   (static_cast<std::uint32_t>(p[3]) << 24);
        return std::bit_cast<float>(bits);
    }

    std::string string_field() {
        const std::size_t n = u16be();
        const auto* p = need(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

    void expect_done(const char* what) {
        if (pos != data.size())
            throw WireError(WireErrc::BadPayload, std::string(what) + ": trailing bytes");
    }
};

}  // namespace wiredetail

struct Frame {
    MsgType type;
    std::vector<std::uint8_t> payload;
};

inline std::size_t frame_size(const Frame& f) { return 5 + f.payload.size(); }

inline std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > kMaxFramePayload)
        throw WireError(WireErrc::Oversize, "frame payload exceeds maximum");
    std::vector<std::uint8_t> out;
    out.reserve(5 + frame.payload.size());
    wiredetail::put_u32be(out, static_cast<std::uint32_t>(frame.payload.size()));
    out.push_back(static_cast<std::uint8_t>(frame.type));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

inline bool valid_msg_type(std::uint8_t t) { return t >= 1 && t <= 6; }

// Decodes one frame occupying the whole buffer.
inline Frame decode_frame(std::span<const std::uint8_t> bytes,
                          std::size_t max_payload = kMaxFramePayload) {
    wiredetail::ByteReader r{bytes};
    const std::uint32_t len = r.u32be();
    if (len > max_payload) throw WireError(WireErrc::Oversize, "frame length exceeds maximum");
    const std::uint8_t type = r.u8();
    if (!valid_msg_type(type))
        throw WireError(WireErrc::BadType, "unknown message type " + std::to_string(type));
    const auto* p = r.need(len);
    r.expect_done("frame");
    Frame f;
    f.type = static_cast<MsgType>(type);
    f.payload.assign(p, p + len);
    return f;
}

// ---- model blob ----

inline std::vector<std::uint8_t> encode_model(const ModelWeights& net) {
    validate_weights(net);
    std::vector<std::uint8_t> out;
    out.push_back('E');
    out.push_back('N');
    out.push_back('F');
    out.push_back('D');
    out.push_back(kModelBlobVersion);
    wiredetail::put_u16be(out, static_cast<std::uint16_t>(net.layers.size()));
    for (const auto& layer : net.layers) {
        wiredetail::put_u32be(out, static_cast<std::uint32_t>(layer.w.rows));
        wiredetail::put_u32be(out, static_cast<std::uint32_t>(layer.w.cols));
        out.push_back(static_cast<std::uint8_t>(layer.act));
        for (float v : layer.w.a) wiredetail::put_f32le(out, v);
        for (float v : layer.b) wiredetail::put_f32le(out, v);
    }
    return out;
}

namespace wiredetail {

inline ModelWeights read_model(ByteReader& r) {
    const auto* magic = r.need(4);
    if (std::memcmp(magic, "ENFD", 4) != 0)
        throw WireError(WireErrc::BadMagic, "model blob: bad magic");
    const std::uint8_t version = r.u8();
    if (version != kModelBlobVersion)
        throw WireError(WireErrc::BadVersion,
                        "model blob: unsupported version " + std::to_string(version));
    const std::uint16_t layer_count = r.u16be();
    if (layer_count == 0) throw WireError(WireErrc::BadShape, "model blob: zero layers");
    ModelWeights net;
    net.layers.resize(layer_count);
    for (std::uint16_t k = 0; k < layer_count; ++k) {
        const std::uint32_t rows = r.u32be();
        const std::uint32_t cols = r.u32be();
        if (rows == 0 || cols == 0)
            throw WireError(WireErrc::BadShape, "model blob: degenerate layer shape");
        if (k > 0 && cols != net.layers[k - 1].w.rows)
            throw WireError(WireErrc::BadShape,
                            "model blob: layer " + std::to_string(k) + " does not chain");
        const std::uint8_t act = r.u8();
        if (act > 1)
            throw WireError(WireErrc::BadPayload, "model blob: unknown activation tag");
        auto& layer = net.layers[k];
        layer.w = Mat<float>(rows, cols);
        for (auto& v : layer.w.a) v = r.f32le();
        layer.b.resize(rows);
        for (auto& v : layer.b) v = r.f32le();
        layer.act = static_cast<Activation>(act);
    }
    return net;
}

}  // namespace wiredetail

inline ModelWeights decode_model(std::span<const std::uint8_t> bytes) {
    wiredetail::ByteReader r{bytes};
    ModelWeights net = wiredetail::read_model(r);
    r.expect_done("model blob");
    return net;
}

// ---- protocol messages ----

struct RequestMsg {
    std::string app_id;
    double incentive = 0.0;
    std::uint32_t round_cap = 0;
};

struct AcceptMsg {
    std::string device_id;
};

struct RejectMsg {
    std::string device_id;
};

struct ModelUpdateMsg {
    std::uint32_t round = 0;
    std::string source;
    ModelWeights weights;
};

struct PullRequestMsg {
    std::uint32_t round = 0;
};

struct CloseMsg {
    std::string reason;
};

using ProtocolMessage =
    std::variant<RequestMsg, AcceptMsg, RejectMsg, ModelUpdateMsg, PullRequestMsg, CloseMsg>;

inline MsgType message_type(const ProtocolMessage& msg) {
    return std::visit(
        [](const auto& m) -> MsgType {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RequestMsg>) return MsgType::Request;
            if constexpr (std::is_same_v<T, AcceptMsg>) return MsgType::Accept;
            if constexpr (std::is_same_v<T, RejectMsg>) return MsgType::Reject;
            if constexpr (std::is_same_v<T, ModelUpdateMsg>) return MsgType::ModelUpdate;
            if constexpr (std::is_same_v<T, PullRequestMsg>) return MsgType::PullRequest;
            if constexpr (std::is_same_v<T, CloseMsg>) return MsgType::Close;
        },
        msg);
}

inline Frame encode_message(const ProtocolMessage& msg) {
    Frame frame;
    frame.type = message_type(msg);
    auto& out = frame.payload;
    std::visit(
        [&out](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RequestMsg>) {
                wiredetail::put_string(out, m.app_id);
                wiredetail::put_f64be(out, m.incentive);
                wiredetail::put_u32be(out, m.round_cap);
            } else if constexpr (std::is_same_v<T, AcceptMsg>) {
                wiredetail::put_string(out, m.device_id);
            } else if constexpr (std::is_same_v<T, RejectMsg>) {
                wiredetail::put_string(out, m.device_id);
            } else if constexpr (std::is_same_v<T, ModelUpdateMsg>) {
                wiredetail::put_u32be(out, m.round);
                wiredetail::put_string(out, m.source);
                const auto blob = encode_model(m.weights);
                out.insert(out.end(), blob.begin(), blob.end());
            } else if constexpr (std::is_same_v<T, PullRequestMsg>) {
                wiredetail::put_u32be(out, m.round);
            } else if constexpr (std::is_same_v<T, CloseMsg>) {
                wiredetail::put_string(out, m.reason);
            }
        },
        msg);
    return frame;
}

inline ProtocolMessage decode_message(const Frame& frame) {
    wiredetail::ByteReader r{frame.payload};
    switch (frame.type) {
        case MsgType::Request: {
            RequestMsg m;
            m.app_id = r.string_field();
            m.incentive = r.f64be();
            m.round_cap = r.u32be();
            r.expect_done("request");
            return m;
        }
        case MsgType::Accept: {
            AcceptMsg m{r.string_field()};
            r.expect_done("accept");
            return m;
        }
        case MsgType::Reject: {
            RejectMsg m{r.string_field()};
            r.expect_done("reject");
            return m;
        }
        case MsgType::ModelUpdate: {
            ModelUpdateMsg m;
            m.round = r.u32be();
            m.source = r.string_field();
            m.weights = wiredetail::read_model(r);
            r.expect_done("model_update");
            return m;
        }
        case MsgType::PullRequest: {
            PullRequestMsg m{r.u32be()};
            r.expect_done("pull_request");
            return m;
        }
        case MsgType::Close: {
            CloseMsg m{r.string_field()};
            r.expect_done("close");
            return m;
        }
    }
    throw WireError(WireErrc::BadType, "unknown message type");
}

}  // namespace enfed
