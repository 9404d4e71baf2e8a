#pragma once

// Little-endian record writer/reader shared by the dataset and checkpoint formats.

#include "vbdo/error.hpp"
#include "vbdo/grf.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace vbdo::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void magic(std::string_view m) { bytes(m.data(), m.size()); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void f64s(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
    void vec(const Vector& v) { f64s(v.data(), static_cast<std::size_t>(v.size())); }

    /// Appends CRC32 of everything written so far and writes the file.
    void finish(const std::filesystem::path& path) {
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, buf_.data(), static_cast<uInt>(buf_.size())));
        u32(crc);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    /// Reads the whole file and checks the magic.
    Reader(const std::filesystem::path& path, std::string_view magic) : name_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + name_);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        if (buf_.size() < magic.size() || std::memcmp(buf_.data(), magic.data(), magic.size()) != 0)
            throw FormatError(name_ + ": bad magic, expected " + std::string(magic));
        pos_ = magic.size();
        end_ = buf_.size();
    }

    /// Reads the version byte, then checks the trailing CRC32 over the whole body.
    std::uint8_t version(std::uint8_t expected) {
        const std::uint8_t v = u8();
        if (v != expected)
            throw FormatError(name_ + ": unsupported format version " + std::to_string(v) + " (expected " +
                              std::to_string(expected) + ")");
        if (buf_.size() < pos_ + 4) throw FormatError(name_ + ": checksum failure (file truncated)");
        const std::size_t body = buf_.size() - 4;
        std::uint32_t stored = 0;
        std::memcpy(&stored, buf_.data() + body, 4);
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(body)));
        if (crc != stored) throw FormatError(name_ + ": checksum failure");
        end_ = body;
        return v;
    }

    void bytes(void* p, std::size_t n) {
        if (pos_ + n > end_) throw FormatError(name_ + ": unexpected end of data");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    void f64s(double* p, std::size_t n) {
        if (n > (end_ - pos_) / sizeof(double)) throw FormatError(name_ + ": dimension mismatch, block exceeds file");
        bytes(p, n * sizeof(double));
    }
    Vector vec(std::size_t n) {
        Vector v(static_cast<Eigen::Index>(n));
        f64s(v.data(), n);
        return v;
    }
    void expect_end() const {
        if (pos_ != end_) throw FormatError(name_ + ": dimension mismatch, trailing bytes");
    }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

}  // namespace vbdo::io
