#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "uqbench/error.hpp"

namespace uqbench {

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::io, "SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

/// On-disk store of double vectors keyed by a digest of a descriptive key
/// string. Writes go to a unique temporary file and are renamed into place,
/// so concurrent writers of the same key never expose a partial entry.
class VectorCache {
public:
    explicit VectorCache(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const noexcept { return root_; }

    std::filesystem::path path_for(std::string_view kind, std::string_view key) const {
        return root_ / std::string(kind) / (sha256_hex(key) + ".bin");
    }

    std::optional<std::vector<double>> get(std::string_view kind, std::string_view key) const {
        const auto path = path_for(kind, key);
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            return std::nullopt;
        }
        char magic[4];
        std::uint64_t key_len = 0;
        in.read(magic, 4);
        in.read(reinterpret_cast<char*>(&key_len), sizeof(key_len));
        if (!in || std::memcmp(magic, "UQC1", 4) != 0 || key_len > (1u << 20)) {
            return std::nullopt;
        }
        std::string stored(key_len, '\0');
        in.read(stored.data(), static_cast<std::streamsize>(key_len));
        std::uint64_t count = 0;
        in.read(reinterpret_cast<char*>(&count), sizeof(count));
        if (!in || stored != key || count > (1u << 28)) {
            return std::nullopt;
        }
        std::vector<double> values(count);
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) {
            return std::nullopt;
        }
        return values;
    }

    void put(std::string_view kind, std::string_view key, const std::vector<double>& values) const {
        const auto path = path_for(kind, key);
        std::filesystem::create_directories(path.parent_path());
        const auto tmp = path.parent_path() / (path.filename().string() + ".tmp" + unique_suffix());
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) {
                fail(ErrorKind::io, "cannot write cache entry " + tmp.string());
            }
            const std::uint64_t key_len = key.size();
            const std::uint64_t count = values.size();
            out.write("UQC1", 4);
            out.write(reinterpret_cast<const char*>(&key_len), sizeof(key_len));
            out.write(key.data(), static_cast<std::streamsize>(key.size()));
            out.write(reinterpret_cast<const char*>(&count), sizeof(count));
            out.write(reinterpret_cast<const char*>(values.data()),
                      static_cast<std::streamsize>(values.size() * sizeof(double)));
            if (!out) {
                fail(ErrorKind::io, "failed writing cache entry " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, path);
    }

private:
    static std::string unique_suffix() {
        static std::atomic<std::uint64_t> counter{0};
        static const std::uint64_t nonce = std::random_device{}();
        return std::to_string(nonce) + "." + std::to_string(counter++);
    }

    std::filesystem::path root_;
};

} // namespace uqbench
