#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "uqbench/error.hpp"
#include "uqbench/nn/layers.hpp"
#include "uqbench/tensor.hpp"

namespace uqbench::nn {

/// A named tensor as stored in a weights file (always float32 on disk).
using StateDict = std::map<std::string, Tensor<float>>;

/// Root container that owns a layer graph and exposes its parameters by
/// their fully qualified names.
template <typename T>
class Network {
public:
    Sequential<T>& root() { return root_; }

    Tensor<T> forward(const Tensor<T>& x) { return root_.forward(x); }
    Tensor<T> backward(const Tensor<T>& grad_out) { return root_.backward(grad_out); }

    ParamList<T> parameters() {
        ParamList<T> params;
        root_.parameters("", params);
        return params;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : parameters()) {
            n += p.tensor->size();
        }
        return n;
    }

    /// Copies every parameter from `state`. Missing names, extra names and
    /// shape disagreements are all errors.
    void load_state(const StateDict& state) {
        auto params = parameters();
        std::size_t matched = 0;
        for (auto& p : params) {
            auto it = state.find(p.name);
            if (it == state.end()) {
                fail(ErrorKind::weights_unavailable, "weights file lacks parameter '" + p.name + "'");
            }
            if (it->second.size() != p.tensor->size()) {
                fail(ErrorKind::weights_unavailable,
                     "parameter '" + p.name + "' has shape " + Tensor<float>::shape_string(it->second.shape()) +
                         ", expected " + Tensor<float>::shape_string(p.tensor->shape()));
            }
            const auto& src = it->second.storage();
            std::copy(src.begin(), src.end(), p.tensor->storage().begin());
            ++matched;
        }
        if (matched != state.size()) {
            for (const auto& [name, tensor] : state) {
                const bool known = std::any_of(params.begin(), params.end(),
                                               [&](const NamedParam<T>& p) { return p.name == name; });
                if (!known) {
                    fail(ErrorKind::weights_unavailable, "weights file has unexpected parameter '" + name + "'");
                }
            }
        }
    }

    /// Deterministic stand-in weights: He-normal conv/linear weights, zero
    /// biases, identity batch-norm statistics.
    void seed_parameters(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& p : parameters()) {
            auto& values = p.tensor->storage();
            switch (p.role) {
            case ParamRole::weight: {
                std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in)));
                for (auto& v : values) {
                    v = static_cast<T>(normal(rng));
                }
                break;
            }
            case ParamRole::bn_weight:
            case ParamRole::running_var:
                std::fill(values.begin(), values.end(), T{1});
                break;
            case ParamRole::bias:
            case ParamRole::bn_bias:
            case ParamRole::running_mean:
                std::fill(values.begin(), values.end(), T{0});
                break;
            }
        }
    }

private:
    Sequential<T> root_;
};

// Weights file layout (little-endian):
//   "UQW1" | u32 count | count x { u32 name_len | name | u32 rank | i64 dims[rank] | f32 data[] }
namespace weights_format {

inline constexpr char magic[4] = {'U', 'Q', 'W', '1'};

template <typename V>
void read_pod(std::istream& in, V& v, const std::string& path) {
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) {
        fail(ErrorKind::weights_unavailable, "truncated weights file " + path);
    }
}

} // namespace weights_format

inline StateDict read_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::weights_unavailable, "cannot open weights file " + path.string());
    }
    const std::string p = path.string();
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, weights_format::magic, 4) != 0) {
        fail(ErrorKind::weights_unavailable, "not a weights file: " + p);
    }
    std::uint32_t count = 0;
    weights_format::read_pod(in, count, p);
    StateDict state;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = 0;
        weights_format::read_pod(in, name_len, p);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t rank = 0;
        weights_format::read_pod(in, rank, p);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::int64_t dim = 0;
            weights_format::read_pod(in, dim, p);
            if (dim < 0) {
                fail(ErrorKind::weights_unavailable, "negative dimension in " + p);
            }
            d = static_cast<std::size_t>(dim);
        }
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) {
            fail(ErrorKind::weights_unavailable, "truncated weights file " + p);
        }
        state.emplace(std::move(name), std::move(t));
    }
    return state;
}

inline void write_weights(const std::filesystem::path& path, const StateDict& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "cannot write weights file " + path.string());
    }
    out.write(weights_format::magic, 4);
    const auto count = static_cast<std::uint32_t>(state.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : state) {
        const auto len = static_cast<std::uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(name.data(), len);
        const auto rank = static_cast<std::uint32_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (std::size_t d : t.shape()) {
            const auto dim = static_cast<std::int64_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
        }
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) {
        fail(ErrorKind::io, "failed writing weights file " + path.string());
    }
}

template <typename T>
StateDict state_of(Network<T>& net) {
    StateDict state;
    for (const auto& p : net.parameters()) {
        state.emplace(p.name, p.tensor->template cast<float>());
    }
    return state;
}

} // namespace uqbench::nn
