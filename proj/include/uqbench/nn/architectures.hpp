#pragma once

// ImageNet classifier graphs. Parameter names follow the torchvision
// state-dict layout so exported weights load without renaming.

#include <array>
#include <memory>
#include <string>

#include "uqbench/nn/layers.hpp"
#include "uqbench/nn/network.hpp"

namespace uqbench::nn {

namespace detail {

template <typename T>
void bottleneck(Sequential<T>& stage, const std::string& name, std::size_t in, std::size_t width, std::size_t stride) {
    constexpr std::size_t expansion = 4;
    auto& block = stage.template add<Residual<T>>(name);
    auto& m = block.main();
    m.template add<Conv2d<T>>("conv1", in, width, 1, 1, 0, false);
    m.template add<BatchNorm2d<T>>("bn1", width);
    m.template add<ReLU<T>>("relu1");
    // Stride sits on the 3x3 convolution.
    m.template add<Conv2d<T>>("conv2", width, width, 3, stride, 1, false);
    m.template add<BatchNorm2d<T>>("bn2", width);
    m.template add<ReLU<T>>("relu2");
    m.template add<Conv2d<T>>("conv3", width, width * expansion, 1, 1, 0, false);
    m.template add<BatchNorm2d<T>>("bn3", width * expansion);
    if (stride != 1 || in != width * expansion) {
        auto& s = block.shortcut();
        s.template add<Conv2d<T>>("0", in, width * expansion, 1, stride, 0, false);
        s.template add<BatchNorm2d<T>>("1", width * expansion);
    }
}

template <typename T>
void basic_conv(Sequential<T>& parent, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                std::size_t stride = 1, std::size_t padding = 0) {
    auto& s = parent.add_sequential(name);
    s.template add<Conv2d<T>>("conv", in, out, kernel, stride, padding, false);
    s.template add<BatchNorm2d<T>>("bn", out, 1e-3);
    s.template add<ReLU<T>>("relu");
}

template <typename T>
void inception(Sequential<T>& parent, const std::string& name, std::size_t in, std::size_t ch1x1, std::size_t ch3x3red,
               std::size_t ch3x3, std::size_t ch5x5red, std::size_t ch5x5, std::size_t pool_proj) {
    auto& block = parent.template add<ConcatBranches<T>>(name);
    basic_conv(block.add_branch("branch1"), "", in, ch1x1, 1);
    auto& b2 = block.add_branch("branch2");
    basic_conv(b2, "0", in, ch3x3red, 1);
    basic_conv(b2, "1", ch3x3red, ch3x3, 3, 1, 1);
    // The reference "5x5" branch uses a 3x3 kernel.
    auto& b3 = block.add_branch("branch3");
    basic_conv(b3, "0", in, ch5x5red, 1);
    basic_conv(b3, "1", ch5x5red, ch5x5, 3, 1, 1);
    auto& b4 = block.add_branch("branch4");
    b4.template add<MaxPool2d<T>>("0", 3, 1, 1, true);
    basic_conv(b4, "1", in, pool_proj, 1);
}

} // namespace detail

template <typename T>
std::unique_ptr<Network<T>> make_resnet50(std::size_t num_classes = 1000) {
    auto net = std::make_unique<Network<T>>();
    auto& r = net->root();
    r.template add<Conv2d<T>>("conv1", 3, 64, 7, 2, 3, false);
    r.template add<BatchNorm2d<T>>("bn1", 64);
    r.template add<ReLU<T>>("relu");
    r.template add<MaxPool2d<T>>("maxpool", 3, 2, 1);
    constexpr std::array<std::size_t, 4> depths{3, 4, 6, 3};
    std::size_t in = 64;
    for (std::size_t stage = 0; stage < depths.size(); ++stage) {
        const std::size_t width = std::size_t{64} << stage;
        auto& layer = r.add_sequential("layer" + std::to_string(stage + 1));
        for (std::size_t b = 0; b < depths[stage]; ++b) {
            detail::bottleneck(layer, std::to_string(b), in, width, (b == 0 && stage > 0) ? 2 : 1);
            in = width * 4;
        }
    }
    r.template add<AdaptiveAvgPool2d<T>>("avgpool", 1, 1);
    r.template add<Linear<T>>("fc", 2048, num_classes);
    return net;
}

template <typename T>
std::unique_ptr<Network<T>> make_vgg16(std::size_t num_classes = 1000) {
    auto net = std::make_unique<Network<T>>();
    auto& r = net->root();
    auto& features = r.add_sequential("features");
    constexpr std::array<int, 18> cfg{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    std::size_t in = 3;
    std::size_t index = 0;
    for (int v : cfg) {
        if (v == 0) {
            features.template add<MaxPool2d<T>>(std::to_string(index++), 2, 2);
        } else {
            const auto out = static_cast<std::size_t>(v);
            features.template add<Conv2d<T>>(std::to_string(index++), in, out, 3, 1, 1);
            features.template add<ReLU<T>>(std::to_string(index++));
            in = out;
        }
    }
    r.template add<AdaptiveAvgPool2d<T>>("avgpool", 7, 7);
    auto& classifier = r.add_sequential("classifier");
    classifier.template add<Linear<T>>("0", 512 * 7 * 7, 4096);
    classifier.template add<ReLU<T>>("1");
    classifier.template add<Linear<T>>("3", 4096, 4096);
    classifier.template add<ReLU<T>>("4");
    classifier.template add<Linear<T>>("6", 4096, num_classes);
    return net;
}

template <typename T>
std::unique_ptr<Network<T>> make_alexnet(std::size_t num_classes = 1000) {
    auto net = std::make_unique<Network<T>>();
    auto& r = net->root();
    auto& f = r.add_sequential("features");
    f.template add<Conv2d<T>>("0", 3, 64, 11, 4, 2);
    f.template add<ReLU<T>>("1");
    f.template add<MaxPool2d<T>>("2", 3, 2);
    f.template add<Conv2d<T>>("3", 64, 192, 5, 1, 2);
    f.template add<ReLU<T>>("4");
    f.template add<MaxPool2d<T>>("5", 3, 2);
    f.template add<Conv2d<T>>("6", 192, 384, 3, 1, 1);
    f.template add<ReLU<T>>("7");
    f.template add<Conv2d<T>>("8", 384, 256, 3, 1, 1);
    f.template add<ReLU<T>>("9");
    f.template add<Conv2d<T>>("10", 256, 256, 3, 1, 1);
    f.template add<ReLU<T>>("11");
    f.template add<MaxPool2d<T>>("12", 3, 2);
    r.template add<AdaptiveAvgPool2d<T>>("avgpool", 6, 6);
    auto& c = r.add_sequential("classifier");
    c.template add<Linear<T>>("1", 256 * 6 * 6, 4096);
    c.template add<ReLU<T>>("2");
    c.template add<Linear<T>>("4", 4096, 4096);
    c.template add<ReLU<T>>("5");
    c.template add<Linear<T>>("6", 4096, num_classes);
    return net;
}

template <typename T>
std::unique_ptr<Network<T>> make_densenet121(std::size_t num_classes = 1000) {
    constexpr std::size_t growth = 32;
    constexpr std::size_t bottleneck_width = 4 * growth;
    constexpr std::array<std::size_t, 4> blocks{6, 12, 24, 16};

    auto net = std::make_unique<Network<T>>();
    auto& r = net->root();
    auto& f = r.add_sequential("features");
    f.template add<Conv2d<T>>("conv0", 3, 64, 7, 2, 3, false);
    f.template add<BatchNorm2d<T>>("norm0", 64);
    f.template add<ReLU<T>>("relu0");
    f.template add<MaxPool2d<T>>("pool0", 3, 2, 1);
    std::size_t channels = 64;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        auto& block = f.template add<DenseBlock<T>>("denseblock" + std::to_string(b + 1));
        for (std::size_t l = 0; l < blocks[b]; ++l) {
            auto& layer = block.add_layer("denselayer" + std::to_string(l + 1));
            layer.template add<BatchNorm2d<T>>("norm1", channels);
            layer.template add<ReLU<T>>("relu1");
            layer.template add<Conv2d<T>>("conv1", channels, bottleneck_width, 1, 1, 0, false);
            layer.template add<BatchNorm2d<T>>("norm2", bottleneck_width);
            layer.template add<ReLU<T>>("relu2");
            layer.template add<Conv2d<T>>("conv2", bottleneck_width, growth, 3, 1, 1, false);
            channels += growth;
        }
        if (b + 1 != blocks.size()) {
            auto& t = f.add_sequential("transition" + std::to_string(b + 1));
            t.template add<BatchNorm2d<T>>("norm", channels);
            t.template add<ReLU<T>>("relu");
            t.template add<Conv2d<T>>("conv", channels, channels / 2, 1, 1, 0, false);
            t.template add<AvgPool2d<T>>("pool", 2);
            channels /= 2;
        }
    }
    f.template add<BatchNorm2d<T>>("norm5", channels);
    r.template add<ReLU<T>>("relu");
    r.template add<AdaptiveAvgPool2d<T>>("avgpool", 1, 1);
    r.template add<Linear<T>>("classifier", channels, num_classes);
    return net;
}

/// GoogLeNet in evaluation mode (auxiliary heads dropped). The leading affine
/// maps mean/std-normalized input to the [-1, 1] scaling the weights expect.
template <typename T>
std::unique_ptr<Network<T>> make_googlenet(std::size_t num_classes = 1000) {
    auto net = std::make_unique<Network<T>>();
    auto& r = net->root();
    r.template add<ChannelAffine<T>>(
        "transform_input",
        std::vector<T>{static_cast<T>(0.229 / 0.5), static_cast<T>(0.224 / 0.5), static_cast<T>(0.225 / 0.5)},
        std::vector<T>{static_cast<T>((0.485 - 0.5) / 0.5), static_cast<T>((0.456 - 0.5) / 0.5),
                       static_cast<T>((0.406 - 0.5) / 0.5)});
    detail::basic_conv(r, "conv1", 3, 64, 7, 2, 3);
    r.template add<MaxPool2d<T>>("maxpool1", 3, 2, 0, true);
    detail::basic_conv(r, "conv2", 64, 64, 1);
    detail::basic_conv(r, "conv3", 64, 192, 3, 1, 1);
    r.template add<MaxPool2d<T>>("maxpool2", 3, 2, 0, true);
    detail::inception(r, "inception3a", 192, 64, 96, 128, 16, 32, 32);
    detail::inception(r, "inception3b", 256, 128, 128, 192, 32, 96, 64);
    r.template add<MaxPool2d<T>>("maxpool3", 3, 2, 0, true);
    detail::inception(r, "inception4a", 480, 192, 96, 208, 16, 48, 64);
    detail::inception(r, "inception4b", 512, 160, 112, 224, 24, 64, 64);
    detail::inception(r, "inception4c", 512, 128, 128, 256, 24, 64, 64);
    detail::inception(r, "inception4d", 512, 112, 144, 288, 32, 64, 64);
    detail::inception(r, "inception4e", 528, 256, 160, 320, 32, 128, 128);
    r.template add<MaxPool2d<T>>("maxpool4", 2, 2, 0, true);
    detail::inception(r, "inception5a", 832, 256, 160, 320, 32, 128, 128);
    detail::inception(r, "inception5b", 832, 384, 192, 384, 48, 128, 128);
    r.template add<AdaptiveAvgPool2d<T>>("avgpool", 1, 1);
    r.template add<Linear<T>>("fc", 1024, num_classes);
    return net;
}

} // namespace uqbench::nn
