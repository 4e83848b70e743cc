#ifndef STMTK_IMAGE_IO_HPP
#define STMTK_IMAGE_IO_HPP

// Minimal PNG (8-bit gray/RGB/RGBA, non-interlaced) and binary PPM/PGM codec.
// PNG compression is delegated to zlib; encoding always uses filter "None",
// which keeps outputs byte-reproducible for identical inputs.

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stmtk/errors.hpp"
#include "stmtk/image.hpp"

namespace stmtk {

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t len) {
    put_u32_be(out, static_cast<std::uint32_t>(len));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len > 0) out.insert(out.end(), data, data + len);
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, static_cast<uInt>(4 + len));
    put_u32_be(out, crc);
}

inline std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
    if (img.empty()) throw InvalidArgument("encode_png: empty image");
    int color_type;
    switch (img.channels) {
        case 1: color_type = 0; break;
        case 2: color_type = 4; break;
        case 3: color_type = 2; break;
        case 4: color_type = 6; break;
        default: throw InvalidArgument("encode_png: unsupported channel count");
    }
    const std::size_t stride = static_cast<std::size_t>(img.cols) * img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.rows);
    for (int r = 0; r < img.rows; ++r) {
        raw.push_back(0);  // filter: None
        const std::uint8_t* row = img.data.data() + static_cast<std::size_t>(r) * stride;
        raw.insert(raw.end(), row, row + stride);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("encode_png: zlib compression failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.cols >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.cols >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.cols >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.cols);
    ihdr[4] = static_cast<std::uint8_t>(img.rows >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.rows >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.rows >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.rows);
    ihdr[8] = 8;  // bit depth
    ihdr[9] = static_cast<std::uint8_t>(color_type);
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::append_chunk(out, "IHDR", ihdr, 13);
    detail::append_chunk(out, "IDAT", comp.data(), comp.size());
    detail::append_chunk(out, "IEND", nullptr, 0);
    return out;
}

inline Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw ParseError("decode_png: bad signature");
    std::size_t pos = 8;
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 8 <= bytes.size() && !seen_iend) {
        const std::uint32_t len = detail::get_u32_be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw ParseError("decode_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ParseError("decode_png: bad IHDR");
            width = static_cast<int>(detail::get_u32_be(data));
            height = static_cast<int>(detail::get_u32_be(data + 4));
            const int bit_depth = data[8], color_type = data[9], interlace = data[12];
            if (bit_depth != 8) throw ParseError("decode_png: only 8-bit supported");
            if (interlace != 0) throw ParseError("decode_png: interlaced PNG not supported");
            switch (color_type) {
                case 0: channels = 1; break;
                case 2: channels = 3; break;
                case 4: channels = 2; break;
                case 6: channels = 4; break;
                default: throw ParseError("decode_png: palette/unknown color type not supported");
            }
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || width <= 0 || height <= 0) throw ParseError("decode_png: missing IHDR");
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<std::uint8_t> raw((stride + 1) * height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size()) throw ParseError("decode_png: inflate failed");

    Image8 img(height, width, channels);
    const int bpp = channels;  // bytes per pixel at bit depth 8
    std::vector<std::uint8_t> prev(stride, 0);
    for (int r = 0; r < height; ++r) {
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(r) * (stride + 1);
        const std::uint8_t filter = src[0];
        std::uint8_t* dst = img.data.data() + static_cast<std::size_t>(r) * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = src[1 + i];
            const int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + detail::paeth(a, b, c); break;
                default: throw ParseError("decode_png: unknown filter type");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw IoError("read failed: " + path);
    return bytes;
}

inline void write_png(const std::string& path, const Image8& img) {
    write_file_bytes(path, encode_png(img));
}

inline Image8 read_png(const std::string& path) { return decode_png(read_file_bytes(path)); }

inline void write_ppm(const std::string& path, const Image8& img) {
    if (img.channels != 3 && img.channels != 1)
        throw InvalidArgument("write_ppm: need 1 or 3 channels");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.cols << " " << img.rows << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline Image8 read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    auto next_token = [&f, &path]() {
        std::string tok;
        int c;
        while ((c = f.get()) != EOF) {
            if (c == '#') {  // comment to end of line
                while ((c = f.get()) != EOF && c != '\n') {}
            } else if (!std::isspace(c)) {
                tok.push_back(static_cast<char>(c));
                while ((c = f.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
                return tok;
            }
        }
        throw ParseError("read_ppm: truncated header in " + path);
    };
    const std::string magic = next_token();
    int channels;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw ParseError("read_ppm: unsupported magic '" + magic + "'");
    const int cols = std::stoi(next_token());
    const int rows = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw ParseError("read_ppm: only maxval 255 supported");
    Image8 img(rows, cols, channels);
    f.read(reinterpret_cast<char*>(img.data.data()),
           static_cast<std::streamsize>(img.data.size()));
    if (!f) throw ParseError("read_ppm: truncated pixel data in " + path);
    return img;
}

// Dispatch on extension; time-ordered frame loading uses this.
inline Image8 read_image(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".png" || ext == ".PNG") return read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".PPM" || ext == ".PGM") return read_ppm(path);
    throw InvalidArgument("unsupported image extension: " + path);
}

}  // namespace stmtk

#endif
