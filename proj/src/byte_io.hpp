#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lopro::detail {

inline constexpr std::size_t kAlignment = 64;

constexpr std::size_t align_up(std::size_t x) noexcept { return (x + kAlignment - 1) / kAlignment * kAlignment; }

class ByteWriter {
public:
    std::vector<std::uint8_t>& bytes() noexcept { return out_; }
    [[nodiscard]] std::size_t size() const noexcept { return out_.size(); }

    template <class T>
    void put_le(T value) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
        }
    }
    void put_f32(double x) { put_le(std::bit_cast<std::uint32_t>(static_cast<float>(x))); }
    void put_f64(double x) { put_le(std::bit_cast<std::uint64_t>(x)); }
    void put_raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void put_text(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void pad_to(std::size_t pos) { out_.resize(std::max(out_.size(), pos), 0); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

    [[nodiscard]] std::size_t pos() const noexcept { return pos_; }
    void seek(std::size_t pos) {
        if (pos > in_.size()) {
            fail("offset " + std::to_string(pos) + " beyond end (" + std::to_string(in_.size()) + " bytes)");
        }
        pos_ = pos;
    }

    template <class T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(T);
        return v;
    }
    double get_f32() { return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>())); }
    double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::span<const std::uint8_t> get_raw(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw std::runtime_error(std::string(what_) + ": " + msg); }

private:
    void need(std::size_t n) const {
        if (n > in_.size() - pos_) {
            fail("truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + " more)");
        }
    }

    std::span<const std::uint8_t> in_;
    const char* what_;
    std::size_t pos_ = 0;
};

} // namespace lopro::detail
