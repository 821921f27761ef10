#include "clmac/serialize.hpp"

#include <bit>
#include <cstring>

#include "clmac/error.hpp"
#include "clmac/nn.hpp"

namespace clmac {

void ByteWriter::f64(double v) {
    u64(std::bit_cast<std::uint64_t>(v));
}

void ByteWriter::f64s(std::span<const double> vs) {
    out_.reserve(out_.size() + vs.size() * 8);
    for (double v : vs) {
        f64(v);
    }
}

void ByteWriter::tag(std::string_view s) {
    if (s.size() > 0xffff) {
        throw Error("tag too long");
    }
    u16(static_cast<std::uint16_t>(s.size()));
    for (char c : s) {
        u8(static_cast<std::uint8_t>(c));
    }
}

std::uint64_t ByteReader::get(int bytes) {
    if (remaining() < static_cast<std::size_t>(bytes)) {
        throw Error("truncated input");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in_[pos_ + static_cast<std::size_t>(i)]))
             << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
}

double ByteReader::f64() {
    return std::bit_cast<double>(u64());
}

void ByteReader::f64s(std::span<double> out) {
    if (remaining() < out.size() * 8) {
        throw Error("truncated input");
    }
    for (double& v : out) {
        v = f64();
    }
}

std::string ByteReader::tag() {
    const std::uint16_t n = u16();
    auto bytes = raw(n);
    std::string s(n, '\0');
    std::memcpy(s.data(), bytes.data(), n);
    return s;
}

std::span<const std::byte> ByteReader::raw(std::size_t n) {
    if (remaining() < n) {
        throw Error("truncated input");
    }
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
}

namespace nn {

namespace {
constexpr std::uint32_t kNetMagic = 0x4e4e4c43;  // "CLNN" little-endian
constexpr std::uint32_t kNetVersion = 1;
}  // namespace

std::vector<std::byte> serialize(const DuelingNet& net) {
    ByteWriter w;
    const NetShape& s = net.shape();
    w.u32(kNetMagic);
    w.u32(kNetVersion);
    w.i32(s.input_dim);
    w.i32(s.history);
    w.i32(s.lstm_units);
    w.i32(s.dense_units);
    w.i32(s.actions);
    w.u32(static_cast<std::uint32_t>(kTensorCount));
    for (std::size_t i = 0; i < kTensorCount; ++i) {
        const auto id = static_cast<TensorId>(i);
        const TensorInfo& t = net.info(id);
        w.tag(t.tag);
        w.u32(static_cast<std::uint32_t>(t.rows));
        w.u32(static_cast<std::uint32_t>(t.cols));
        w.f64s(net.tensor(id));
    }
    return w.take();
}

DuelingNet deserialize(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    if (r.u32() != kNetMagic) {
        throw Error("network blob: bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kNetVersion) {
        throw Error("network blob: unsupported version " + std::to_string(version));
    }
    NetShape s;
    s.input_dim = r.i32();
    s.history = r.i32();
    s.lstm_units = r.i32();
    s.dense_units = r.i32();
    s.actions = r.i32();
    DuelingNet net(s);
    if (r.u32() != kTensorCount) {
        throw Error("network blob: unexpected tensor count");
    }
    for (std::size_t i = 0; i < kTensorCount; ++i) {
        const auto id = static_cast<TensorId>(i);
        const TensorInfo& t = net.info(id);
        const std::string tag = r.tag();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        if (tag != t.tag || rows != t.rows || cols != t.cols) {
            throw Error("network blob: tensor " + tag + " does not match the declared shape");
        }
        r.f64s(net.tensor(id));
    }
    if (!r.done()) {
        throw Error("network blob: trailing bytes");
    }
    return net;
}

}  // namespace nn

}  // namespace clmac
