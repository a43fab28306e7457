#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uqbench/error.hpp"
#include "uqbench/image.hpp"
#include "uqbench/labelspace.hpp"
#include "uqbench/modelzoo.hpp"
#include "uqbench/tensor.hpp"

namespace uqbench {

enum class SaliencyMethod { vanilla, smoothgrad, ensemble_smoothgrad };

inline std::string_view to_string(SaliencyMethod m) {
    switch (m) {
    case SaliencyMethod::vanilla: return "vanilla";
    case SaliencyMethod::smoothgrad: return "smoothgrad";
    case SaliencyMethod::ensemble_smoothgrad: return "ensemble_smoothgrad";
    }
    return "unknown";
}

struct SaliencyParams {
    int n_samples = 25;
    double sigma_fraction = 0.15;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 1) {
            fail(ErrorKind::invalid_input, "smoothgrad needs at least one sample");
        }
        if (!(sigma_fraction >= 0.0) || !std::isfinite(sigma_fraction)) {
            fail(ErrorKind::invalid_input, "smoothgrad noise fraction must be finite and >= 0");
        }
    }
};

/// Per-pixel attribution on the classifier's input grid, values in [0, 1].
struct SaliencyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    std::string image_id;
    ClassIndex target_class = 0;
    SaliencyMethod method = SaliencyMethod::vanilla;
    SaliencyParams params{1, 0.0, 0};

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Max over channels of |gradient| at each pixel.
template <typename T>
std::vector<double> pixel_magnitude(const Tensor<T>& grad) {
    if (grad.rank() != 3) {
        fail(ErrorKind::shape_mismatch, "gradient must be C x H x W");
    }
    const std::size_t plane = grad.height() * grad.width();
    std::vector<double> out(plane, 0.0);
    for (std::size_t c = 0; c < grad.channels(); ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            out[i] = std::max(out[i], std::abs(static_cast<double>(grad[c * plane + i])));
        }
    }
    return out;
}

/// Clips at the 99th percentile (nearest rank), then scales into [0, 1].
/// When the percentile is zero the maximum is used instead so a non-zero map
/// always reaches 1; an all-zero map stays all-zero.
inline std::vector<double> normalize_saliency(std::vector<double> raw) {
    if (raw.empty()) {
        return raw;
    }
    std::vector<double> sorted = raw;
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size())));
    const std::size_t k = std::clamp<std::size_t>(rank, 1, sorted.size()) - 1;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    double ceiling = sorted[k];
    if (!(ceiling > 0.0)) {
        ceiling = *std::max_element(raw.begin(), raw.end());
    }
    if (!(ceiling > 0.0)) {
        std::fill(raw.begin(), raw.end(), 0.0);
        return raw;
    }
    for (auto& v : raw) {
        v = std::min(v, ceiling) / ceiling;
    }
    return raw;
}

/// Gradient of the pre-softmax class score with respect to the input.
template <typename T>
Tensor<T> input_gradient(BasicClassifier<T>& member, const Tensor<T>& input, ClassIndex cls) {
    if (cls >= member.num_classes()) {
        fail(ErrorKind::out_of_range, "class index " + std::to_string(cls) + " out of range");
    }
    return member.score_gradient(input, cls);
}

template <typename T>
SaliencyMap vanilla_gradient(BasicClassifier<T>& member, const Tensor<T>& input, ClassIndex cls,
                             std::string image_id = {}) {
    const Tensor<T> grad = input_gradient(member, input, cls);
    SaliencyMap map;
    map.height = input.height();
    map.width = input.width();
    map.values = normalize_saliency(pixel_magnitude(grad));
    map.image_id = std::move(image_id);
    map.target_class = cls;
    map.method = SaliencyMethod::vanilla;
    return map;
}

/// Noise for sample `index` depends only on (seed, index).
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename T>
std::vector<double> smoothgrad_raw(BasicClassifier<T>& member, const Tensor<T>& input, ClassIndex cls,
                                   const SaliencyParams& params) {
    params.validate();
    const auto [lo, hi] = std::minmax_element(input.values().begin(), input.values().end());
    const double stddev = params.sigma_fraction * (static_cast<double>(*hi) - static_cast<double>(*lo));
    std::vector<double> sum(input.height() * input.width(), 0.0);
    for (int s = 0; s < params.n_samples; ++s) {
        Tensor<T> noisy = input;
        if (stddev > 0.0) {
            std::mt19937_64 rng(sample_seed(params.seed, static_cast<std::uint64_t>(s)));
            std::normal_distribution<double> noise(0.0, stddev);
            for (auto& v : noisy.storage()) {
                v = static_cast<T>(static_cast<double>(v) + noise(rng));
            }
        }
        const auto magnitude = pixel_magnitude(input_gradient(member, noisy, cls));
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += magnitude[i];
        }
    }
    for (auto& v : sum) {
        v /= static_cast<double>(params.n_samples);
    }
    return sum;
}

/// Mean per-pixel gradient magnitude over Gaussian-noised copies of the
/// input (noise std = sigma_fraction x input range), then normalized.
template <typename T>
SaliencyMap smoothgrad(BasicClassifier<T>& member, const Tensor<T>& input, ClassIndex cls,
                       const SaliencyParams& params, std::string image_id = {}) {
    SaliencyMap map;
    map.height = input.height();
    map.width = input.width();
    map.values = normalize_saliency(smoothgrad_raw(member, input, cls, params));
    map.image_id = std::move(image_id);
    map.target_class = cls;
    map.method = SaliencyMethod::smoothgrad;
    map.params = params;
    return map;
}

/// Scales so the largest value is 1; all-zero stays all-zero.
inline std::vector<double> rescale_to_unit_max(std::vector<double> values) {
    const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    if (peak > 0.0) {
        for (auto& v : values) {
            v /= peak;
        }
    }
    return values;
}

/// Elementwise mean of already-normalized maps, rescaled to a unit maximum.
inline SaliencyMap average_maps(const std::vector<SaliencyMap>& maps) {
    if (maps.empty()) {
        fail(ErrorKind::invalid_input, "cannot average zero saliency maps");
    }
    SaliencyMap out = maps.front();
    for (std::size_t m = 1; m < maps.size(); ++m) {
        if (maps[m].height != out.height || maps[m].width != out.width) {
            fail(ErrorKind::shape_mismatch, "saliency maps to average differ in size");
        }
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] += maps[m].values[i];
        }
    }
    for (auto& v : out.values) {
        v /= static_cast<double>(maps.size());
    }
    out.values = rescale_to_unit_max(std::move(out.values));
    out.method = SaliencyMethod::ensemble_smoothgrad;
    return out;
}

template <typename T>
SaliencyMap ensemble_saliency(std::span<BasicClassifier<T>* const> members, const Tensor<T>& input, ClassIndex cls,
                              const SaliencyParams& params, std::string image_id = {}) {
    if (members.empty()) {
        fail(ErrorKind::invalid_input, "ensemble saliency needs at least one member");
    }
    std::vector<SaliencyMap> maps;
    maps.reserve(members.size());
    for (auto* m : members) {
        maps.push_back(smoothgrad(*m, input, cls, params, image_id));
    }
    return average_maps(maps);
}

/// Piecewise-linear jet colormap.
inline std::array<std::uint8_t, 3> heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto ramp = [v](double center) { return std::clamp(1.5 - std::abs(4.0 * v - center), 0.0, 1.0); };
    return {static_cast<std::uint8_t>(std::lround(255.0 * ramp(3.0))),
            static_cast<std::uint8_t>(std::lround(255.0 * ramp(2.0))),
            static_cast<std::uint8_t>(std::lround(255.0 * ramp(1.0)))};
}

/// Alpha-blends a heat-colored map over the image. The map is resized to the
/// image; both must have the same aspect ratio (to within one pixel).
inline Image overlay(const SaliencyMap& map, const Image& image, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        fail(ErrorKind::invalid_input, "overlay alpha must lie in [0, 1]");
    }
    if (map.values.empty() || map.values.size() != map.height * map.width) {
        fail(ErrorKind::invalid_input, "overlay needs a non-empty saliency map");
    }
    const Image base = to_rgb(image);
    const double expected_h = static_cast<double>(map.height) * base.width / static_cast<double>(map.width);
    if (std::abs(expected_h - base.height) > 1.0) {
        fail(ErrorKind::shape_mismatch, "saliency map " + std::to_string(map.width) + "x" +
                                            std::to_string(map.height) + " cannot be resized onto a " +
                                            std::to_string(base.width) + "x" + std::to_string(base.height) + " image");
    }
    cv::Mat grid(static_cast<int>(map.height), static_cast<int>(map.width), CV_64F,
                 const_cast<double*>(map.values.data()));
    cv::Mat resized = grid;
    if (static_cast<int>(map.width) != base.width || static_cast<int>(map.height) != base.height) {
        cv::resize(grid, resized, cv::Size(base.width, base.height), 0, 0, cv::INTER_LINEAR);
    }
    Image out(base.width, base.height, 3);
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            const auto heat = heat_color(resized.at<double>(y, x));
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - alpha) * base.at(x, y, c) + alpha * heat[static_cast<std::size_t>(c)];
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

/// CSV grid: first line "H,W", then H rows of W values.
inline void write_grid_csv(const std::filesystem::path& path, const SaliencyMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "cannot write " + path.string());
    }
    out << map.height << ',' << map.width << '\n';
    char buf[32];
    for (std::size_t y = 0; y < map.height; ++y) {
        for (std::size_t x = 0; x < map.width; ++x) {
            std::snprintf(buf, sizeof(buf), "%.6f", map.at(y, x));
            out << (x ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) {
        fail(ErrorKind::io, "failed writing " + path.string());
    }
}

inline SaliencyMap read_grid_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open " + path.string());
    }
    SaliencyMap map;
    char comma = 0;
    if (!(in >> map.height >> comma >> map.width) || comma != ',') {
        fail(ErrorKind::invalid_input, "malformed grid header in " + path.string());
    }
    map.values.reserve(map.height * map.width);
    for (std::size_t i = 0; i < map.height * map.width; ++i) {
        double v = 0.0;
        if (i % map.width != 0 && !(in >> comma)) {
            fail(ErrorKind::invalid_input, "truncated grid in " + path.string());
        }
        if (!(in >> v)) {
            fail(ErrorKind::invalid_input, "truncated grid in " + path.string());
        }
        map.values.push_back(v);
    }
    return map;
}

} // namespace uqbench
