#pragma once

// Little-endian byte streams shared by the network and snapshot formats.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clmac {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void f64(double v);
    void f64s(std::span<const double> vs);
    void tag(std::string_view s);  // u16 length + bytes
    void raw(std::span<const std::byte> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

    std::vector<std::byte> take() { return std::move(out_); }
    std::size_t size() const { return out_.size(); }

private:
    void put(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffU));
        }
    }
    std::vector<std::byte> out_;
};

// Reads what ByteWriter wrote; throws clmac::Error on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
    double f64();
    void f64s(std::span<double> out);
    std::string tag();
    std::span<const std::byte> raw(std::size_t n);

    bool done() const { return pos_ == in_.size(); }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    std::uint64_t get(int bytes);
    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

}  // namespace clmac
