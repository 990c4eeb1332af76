#pragma once

// Little-endian byte buffers shared by the tensor and model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mva/common.hpp"

namespace mva {

static_assert(std::endian::native == std::endian::little,
              "file formats are written by memcpy and assume a little-endian host");

class ByteWriter {
  public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(std::span<const double> v) {
        if (!v.empty()) {
            raw(v.data(), v.size_bytes());
        }
    }
    void chars(std::string_view s) { raw(s.data(), s.size()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    const std::vector<std::uint8_t>& data() const { return bytes_; }
    std::vector<std::uint8_t>& data() { return bytes_; }

  private:
    void raw(const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), c, c + n);
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
  public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    std::uint8_t u8() { return take<std::uint8_t>(); }
    std::uint32_t u32() { return take<std::uint32_t>(); }
    std::uint64_t u64() { return take<std::uint64_t>(); }
    double f64() { return take<double>(); }
    std::vector<double> f64s(std::size_t count) {
        require(count * sizeof(double));
        std::vector<double> out(count);
        if (count > 0) {
            std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(double));
        }
        pos_ += count * sizeof(double);
        return out;
    }
    std::string fixed(std::size_t n) {
        require(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string str() { return fixed(u32()); }
    std::span<const std::uint8_t> take_bytes(std::size_t n) {
        require(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

  private:
    template <class T>
    T take() {
        require(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void require(std::size_t n) const {
        if (n > remaining()) {
            throw FormatError(context_ + ": truncated at byte " + std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Shortest round-trip decimal representation.
std::string format_double(double v);
/// Strict parse of a full string as double; throws InvalidInput naming `what`.
double parse_double(std::string_view s, std::string_view what);

}  // namespace mva
