#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "uqbench/error.hpp"
#include "uqbench/image.hpp"
#include "uqbench/labelspace.hpp"
#include "uqbench/nn/architectures.hpp"
#include "uqbench/nn/network.hpp"
#include "uqbench/tensor.hpp"

namespace uqbench {

enum class MemberId { resnet50, vgg16, densenet121, alexnet, googlenet };

inline constexpr std::array<MemberId, 5> all_members{MemberId::resnet50, MemberId::vgg16, MemberId::densenet121,
                                                     MemberId::alexnet, MemberId::googlenet};

inline std::vector<MemberId> list_members() { return {all_members.begin(), all_members.end()}; }

inline std::string_view to_string(MemberId id) {
    switch (id) {
    case MemberId::resnet50: return "resnet50";
    case MemberId::vgg16: return "vgg16";
    case MemberId::densenet121: return "densenet121";
    case MemberId::alexnet: return "alexnet";
    case MemberId::googlenet: return "googlenet";
    }
    return "unknown";
}

inline MemberId parse_member(std::string_view name) {
    for (MemberId id : all_members) {
        if (to_string(id) == name) {
            return id;
        }
    }
    fail(ErrorKind::invalid_input, "unknown member '" + std::string(name) + "'");
}

struct PreprocessSpec {
    int resize_short_side = 256;
    int center_crop = 224;
    std::array<double, 3> channel_means{0.485, 0.456, 0.406};
    std::array<double, 3> channel_stds{0.229, 0.224, 0.225};

    void validate() const {
        if (center_crop <= 0 || resize_short_side <= 0 || center_crop > resize_short_side) {
            fail(ErrorKind::invalid_input, "preprocess: need 0 < center_crop <= resize_short_side");
        }
        for (double s : channel_stds) {
            if (!(s > 0.0)) {
                fail(ErrorKind::invalid_input, "preprocess: channel stds must be strictly positive");
            }
        }
    }

    std::string describe() const {
        std::string s = "resize=" + std::to_string(resize_short_side) + ",crop=" + std::to_string(center_crop);
        for (double m : channel_means) s += "," + std::to_string(m);
        for (double d : channel_stds) s += "," + std::to_string(d);
        return s;
    }
};

/// Resize the short side, then center-crop; returns the RGB pixels the
/// classifier will see.
inline Image preprocess_view(const Image& image, const PreprocessSpec& spec) {
    spec.validate();
    const Image rgb = to_rgb(image);
    const int short_side = std::min(rgb.width, rgb.height);
    int w = spec.resize_short_side, h = spec.resize_short_side;
    if (rgb.width > rgb.height) {
        w = static_cast<int>(static_cast<long long>(spec.resize_short_side) * rgb.width / short_side);
    } else if (rgb.height > rgb.width) {
        h = static_cast<int>(static_cast<long long>(spec.resize_short_side) * rgb.height / short_side);
    }
    const Image resized = resize(rgb, w, h);
    // Half-way offsets round to even.
    auto offset = [](int slack) { return slack / 2 + ((slack % 2 == 1 && (slack / 2) % 2 == 1) ? 1 : 0); };
    const int x0 = offset(w - spec.center_crop);
    const int y0 = offset(h - spec.center_crop);
    return crop(resized, x0, y0, spec.center_crop, spec.center_crop);
}

/// Per-channel (value/255 - mean) / std over a 3 x crop x crop tensor.
template <typename T = float>
Tensor<T> normalize_view(const Image& view, const PreprocessSpec& spec) {
    if (view.channels != 3) {
        fail(ErrorKind::invalid_input, "normalize_view expects an RGB image");
    }
    const auto h = static_cast<std::size_t>(view.height), w = static_cast<std::size_t>(view.width);
    Tensor<T> out({3, h, w});
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double v = view.data[(y * w + x) * 3 + c] / 255.0;
                out.at(c, y, x) = static_cast<T>((v - spec.channel_means[c]) / spec.channel_stds[c]);
            }
        }
    }
    return out;
}

template <typename T = float>
Tensor<T> preprocess(const Image& image, const PreprocessSpec& spec) {
    return normalize_view<T>(preprocess_view(image, spec), spec);
}

/// Anything that maps a normalized input array to class scores and can
/// differentiate a class score with respect to that input.
template <typename T>
class BasicClassifier {
public:
    virtual ~BasicClassifier() = default;

    virtual std::string name() const = 0;
    virtual const PreprocessSpec& input_spec() const = 0;
    virtual std::size_t num_classes() const = 0;

    /// Pre-softmax class scores.
    virtual Tensor<T> logits(const Tensor<T>& input) = 0;

    /// d logits[cls] / d input, shaped like the input.
    virtual Tensor<T> score_gradient(const Tensor<T>& input, ClassIndex cls) = 0;

protected:
    void check_input(const Tensor<T>& input) const {
        const auto crop = static_cast<std::size_t>(input_spec().center_crop);
        if (input.shape() != std::vector<std::size_t>{3, crop, crop}) {
            fail(ErrorKind::shape_mismatch, name() + ": expected input " +
                                                Tensor<T>::shape_string({3, crop, crop}) + ", got " +
                                                Tensor<T>::shape_string(input.shape()));
        }
    }

    void check_class(ClassIndex cls) const {
        if (cls >= num_classes()) {
            fail(ErrorKind::out_of_range, "class index " + std::to_string(cls) + " out of range for " + name());
        }
    }
};

using Classifier = BasicClassifier<float>;

/// Classifier backed by a layer graph.
template <typename T>
class NetworkClassifier : public BasicClassifier<T> {
public:
    NetworkClassifier(std::string name, std::unique_ptr<nn::Network<T>> net, PreprocessSpec spec,
                      std::size_t num_classes)
        : name_(std::move(name)), net_(std::move(net)), spec_(spec), num_classes_(num_classes) {}

    std::string name() const override { return name_; }
    const PreprocessSpec& input_spec() const override { return spec_; }
    std::size_t num_classes() const override { return num_classes_; }

    Tensor<T> logits(const Tensor<T>& input) override {
        this->check_input(input);
        ++invocations_;
        Tensor<T> out = net_->forward(input);
        if (out.size() != num_classes_) {
            fail(ErrorKind::shape_mismatch, name_ + ": network produced " + std::to_string(out.size()) + " scores");
        }
        return out;
    }

    Tensor<T> score_gradient(const Tensor<T>& input, ClassIndex cls) override {
        this->check_class(cls);
        const Tensor<T> out = logits(input);
        Tensor<T> seed(out.shape());
        seed[cls] = T{1};
        return net_->backward(seed);
    }

    nn::Network<T>& network() { return *net_; }
    std::size_t invocations() const noexcept { return invocations_; }

private:
    std::string name_;
    std::unique_ptr<nn::Network<T>> net_;
    PreprocessSpec spec_;
    std::size_t num_classes_;
    std::size_t invocations_ = 0;
};

/// Numerically stable softmax in double precision.
template <typename T>
ProbabilityVector softmax(const Tensor<T>& scores) {
    ProbabilityVector p(scores.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double v = static_cast<double>(scores[i]);
        if (!std::isfinite(v)) {
            fail(ErrorKind::invalid_input, "softmax: non-finite class scores");
        }
        peak = std::max(peak, v);
    }
    if (scores.size() == 0) {
        fail(ErrorKind::invalid_input, "softmax of an empty score vector");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(static_cast<double>(scores[i]) - peak);
        sum += p[i];
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

template <typename T>
ProbabilityVector predict(BasicClassifier<T>& member, const Tensor<T>& input) {
    return softmax(member.logits(input));
}

template <typename T>
std::unique_ptr<nn::Network<T>> make_architecture(MemberId id, std::size_t num_classes = imagenet_classes) {
    switch (id) {
    case MemberId::resnet50: return nn::make_resnet50<T>(num_classes);
    case MemberId::vgg16: return nn::make_vgg16<T>(num_classes);
    case MemberId::densenet121: return nn::make_densenet121<T>(num_classes);
    case MemberId::alexnet: return nn::make_alexnet<T>(num_classes);
    case MemberId::googlenet: return nn::make_googlenet<T>(num_classes);
    }
    fail(ErrorKind::invalid_input, "unknown member");
}

/// Where a member's parameters come from:
///   "seeded:<n>"  deterministic stand-in weights (no download, not pretrained)
///   "file:<path>" an explicit weights file
///   anything else a cached export at <weights_dir>/<member>__<source>.uqw
struct WeightsSource {
    std::string id = "torchvision";

    bool seeded() const { return id.rfind("seeded:", 0) == 0; }
    bool explicit_file() const { return id.rfind("file:", 0) == 0; }

    std::uint64_t seed() const {
        try {
            return std::stoull(id.substr(7));
        } catch (const std::exception&) {
            fail(ErrorKind::invalid_input, "malformed seeded weights source '" + id + "'");
        }
    }

    std::filesystem::path path_for(MemberId member, const std::filesystem::path& weights_dir) const {
        if (explicit_file()) {
            return id.substr(5);
        }
        return weights_dir / (std::string(to_string(member)) + "__" + id + ".uqw");
    }
};

inline std::filesystem::path default_weights_dir() {
    if (const char* env = std::getenv("UQBENCH_WEIGHTS_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "weights";
}

class ModelMember : public NetworkClassifier<float> {
public:
    ModelMember(MemberId id, WeightsSource source, std::unique_ptr<nn::Network<float>> net, PreprocessSpec spec = {})
        : NetworkClassifier<float>(std::string(to_string(id)), std::move(net), spec, imagenet_classes), id_(id),
          source_(std::move(source)) {}

    MemberId id() const noexcept { return id_; }
    const WeightsSource& weights_source() const noexcept { return source_; }

private:
    MemberId id_;
    WeightsSource source_;
};

inline std::unique_ptr<ModelMember> load_member(MemberId id, const WeightsSource& source,
                                                const std::filesystem::path& weights_dir = default_weights_dir(),
                                                const PreprocessSpec& spec = {}) {
    spec.validate();
    auto net = make_architecture<float>(id);
    if (source.seeded()) {
        net->seed_parameters(source.seed() ^ (static_cast<std::uint64_t>(id) + 1) * 0x9E3779B97F4A7C15ULL);
    } else {
        const auto path = source.path_for(id, weights_dir);
        if (!std::filesystem::exists(path)) {
            fail(ErrorKind::weights_unavailable,
                 "weights for " + std::string(to_string(id)) + " not found at " + path.string() +
                     " (export them with tools/export_torchvision_weights.py)");
        }
        net->load_state(nn::read_weights(path));
    }
    return std::make_unique<ModelMember>(id, source, std::move(net), spec);
}

} // namespace uqbench
