#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "poselab/errors.hpp"

namespace poselab {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path.string());
    }
    std::vector<std::uint8_t> bytes;
    in.seekg(0, std::ios::end);
    bytes.resize(static_cast<std::size_t>(in.tellg()));
    in.seekg(0, std::ios::beg);
    if (!bytes.empty()) {
        in.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
    if (!in) {
        throw IoError("read failed: " + path.string());
    }
    return bytes;
}

// Writes atomically: data goes to a sibling temp file which is then renamed
// onto the destination, so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path, const void* data,
                              std::size_t size) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open file for writing: " + tmp.string());
        }
        if (size > 0) {
            out.write(static_cast<const char*>(data),
                      static_cast<std::streamsize>(size));
        }
        out.flush();
        if (!out) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed: " + tmp.string() + " -> " + path.string() +
                      ": " + ec.message());
    }
}

inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& text) {
    atomic_write_file(path, text.data(), text.size());
}

// Formats a double with enough digits to round-trip bit-exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace poselab
