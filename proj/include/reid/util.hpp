#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "reid/errors.hpp"

namespace reid {

// FNV-1a over raw bytes; used for parameter checksums (bit-exact identity).
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
std::uint64_t checksum_values(const std::vector<T>& v,
                              std::uint64_t h = 0xcbf29ce484222325ull) {
    return v.empty() ? h : fnv1a64(v.data(), v.size() * sizeof(T), h);
}

// Writes a file atomically: stream into <path>.tmp, then rename over <path>.
// Interrupted runs never leave a partial artifact at the final path.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        writer(out);
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    atomic_write_file(path, [&](std::ostream& os) { os << content; });
}

}  // namespace reid
