#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "uqbench/labelspace.hpp"
#include "uqbench/modelzoo.hpp"

namespace uqtest {

namespace fs = std::filesystem;

inline fs::path data_dir() { return UQBENCH_DATA_DIR; }

inline const uqbench::LabelCatalog& imagenet() {
    static const uqbench::LabelCatalog catalog = uqbench::load_label_catalog(data_dir() / "imagenet_labels.tsv");
    return catalog;
}

/// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = fs::temp_directory_path() /
                ("uqbench_" + tag + "_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Random point of the probability simplex, optionally sparse.
inline uqbench::ProbabilityVector random_simplex(std::mt19937_64& rng, std::size_t k) {
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution zero(0.2);
    uqbench::ProbabilityVector p(k);
    double sum = 0.0;
    for (auto& v : p) {
        v = zero(rng) ? 0.0 : e(rng);
        sum += v;
    }
    if (sum == 0.0) {
        p[0] = sum = 1.0;
    }
    for (auto& v : p) v /= sum;
    return p;
}

/// Synthetic catalog "c0".."c{n-1}".
inline uqbench::LabelCatalog small_catalog(std::size_t n) {
    std::vector<uqbench::LabelEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
        entries.push_back({i, "c" + std::to_string(i), {}});
    }
    return uqbench::LabelCatalog::from_entries(std::move(entries), n);
}

inline uqbench::Image random_image(std::mt19937_64& rng, int w, int h, int channels = 3) {
    uqbench::Image im(w, h, channels);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : im.data) v = static_cast<std::uint8_t>(d(rng));
    return im;
}

} // namespace uqtest
