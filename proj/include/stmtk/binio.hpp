#ifndef STMTK_BINIO_HPP
#define STMTK_BINIO_HPP

// Little-endian primitives for the binary artifact formats (STMP, DMDM,
// RUNP, GRYF). Byte order is composed explicitly so the files are bit-exact
// across platforms.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "stmtk/errors.hpp"

namespace stmtk::binio {

class Writer {
public:
    explicit Writer(const std::string& path) : f_(path, std::ios::binary | std::ios::trunc) {
        if (!f_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }

    void magic(const char m[4]) { f_.write(m, 4); }

    void u8(std::uint8_t v) { f_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                     static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
        f_.write(b, 4);
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void bytes(const std::uint8_t* p, std::size_t n) {
        f_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        f_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void close() {
        f_.close();
        if (!f_) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream f_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : f_(path, std::ios::binary) {
        if (!f_) throw IoError("cannot open: " + path);
        path_ = path;
    }

    void expect_magic(const char m[4], const std::string& what) {
        char b[4];
        f_.read(b, 4);
        if (!f_ || std::memcmp(b, m, 4) != 0)
            throw ParseError("bad magic in " + what + " file: " + path_);
    }

    std::uint8_t u8() {
        const int c = f_.get();
        check();
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        f_.read(reinterpret_cast<char*>(b), 4);
        check();
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void bytes(std::uint8_t* p, std::size_t n) {
        f_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        check();
    }

    std::string str() {
        const std::uint32_t n = u32();
        std::string s(n, '\0');
        f_.read(s.data(), n);
        check();
        return s;
    }

private:
    void check() {
        if (!f_) throw ParseError("truncated file: " + path_);
    }

    std::ifstream f_;
    std::string path_;
};

}  // namespace stmtk::binio

#endif
