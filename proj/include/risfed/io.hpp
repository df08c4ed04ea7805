#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "risfed/core.hpp"
#include "risfed/rng.hpp"

namespace risfed {

inline uint64_t content_hash(std::string_view bytes) { return fnv1a64(bytes); }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return data;
}

// Write-to-temp plus rename; an interrupted run never leaves a partial
// file under the final name.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline uint64_t hash_file(const std::filesystem::path& path) {
    return content_hash(read_file(path));
}

inline std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Little-endian binary scratch buffers for the container formats.
struct ByteWriter {
    std::string bytes;

    void raw(const void* p, size_t n) {
        bytes.append(static_cast<const char*>(p), n);
    }
    void u8(uint8_t v) { raw(&v, 1); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void magic(const char tag[5]) { raw(tag, 4); }
};

struct ByteReader {
    std::string_view bytes;
    size_t pos = 0;
    std::string context;

    explicit ByteReader(std::string_view b, std::string ctx = "buffer")
        : bytes(b), context(std::move(ctx)) {}

    void raw(void* p, size_t n) {
        if (pos + n > bytes.size())
            throw FormatError(context + ": truncated (needed " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos) + ")");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
    uint16_t u16() { uint16_t v; raw(&v, 2); return v; }
    uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
    uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
    float f32() { float v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    void expect_magic(const char tag[5]) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, tag, 4) != 0)
            throw FormatError(context + ": bad magic, expected '" + std::string(tag, 4) +
                              "'");
    }
    bool exhausted() const { return pos == bytes.size(); }
};

}  // namespace risfed
