#pragma once

// Little-endian binary helpers shared by the FNET1 and MREP1 containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advface/error.hpp"

namespace advface::binio {

class Writer {
public:
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::vector<std::uint8_t>& data() noexcept { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> in, std::string context) : in_(in), context_(std::move(context)) {}

    bool at_end() const noexcept { return pos_ == in_.size(); }
    std::size_t offset() const noexcept { return pos_; }

    void expect_magic(std::string_view magic) {
        need(magic.size(), "magic");
        if (std::memcmp(in_.data() + pos_, magic.data(), magic.size()) != 0) {
            throw FormatError(context_ + ": magic mismatch, expected \"" + std::string(magic) + "\"");
        }
        pos_ += magic.size();
    }
    bool peek_magic(std::string_view magic) const {
        return in_.size() - pos_ >= magic.size() && std::memcmp(in_.data() + pos_, magic.data(), magic.size()) == 0;
    }
    std::uint8_t u8(std::string_view what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(std::string_view what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(std::string_view what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError(context_ + ": " + msg + " (byte offset " + std::to_string(pos_) + ")");
    }

private:
    void need(std::size_t n, std::string_view what) const {
        if (in_.size() - pos_ < n) fail("truncated while reading " + std::string(what));
    }

    std::span<const std::uint8_t> in_;
    std::string context_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace advface::binio
