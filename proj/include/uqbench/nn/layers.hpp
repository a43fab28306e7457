#pragma once

// Inference-mode layers with input-gradient backpropagation.
//
// Every module records what it needs during forward() so that backward() can
// return d(loss)/d(input) for the most recent forward call. Parameter
// gradients are never computed; saliency only needs the input gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "uqbench/error.hpp"
#include "uqbench/tensor.hpp"

namespace uqbench::nn {

enum class ParamRole { weight, bias, bn_weight, bn_bias, running_mean, running_var };

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
    ParamRole role;
    std::size_t fan_in; // only meaningful for weight
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
class Module {
public:
    virtual ~Module() = default;

    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void parameters(const std::string& /*prefix*/, ParamList<T>& /*out*/) {}
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_chw(const std::vector<std::size_t>& shape, std::size_t channels, const char* layer) {
    if (shape.size() != 3 || shape[0] != channels) {
        fail(ErrorKind::shape_mismatch, std::string(layer) + ": expected " + std::to_string(channels) +
                                            " x H x W input, got " + Tensor<float>::shape_string(shape));
    }
}

inline std::size_t window_count(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding,
                                bool ceil_mode) {
    const std::size_t padded = extent + 2 * padding;
    if (padded < kernel) {
        fail(ErrorKind::shape_mismatch, "spatial extent " + std::to_string(extent) + " smaller than kernel");
    }
    std::size_t out = (padded - kernel + (ceil_mode ? stride - 1 : 0)) / stride + 1;
    // The last window must start inside the input or left padding.
    if (ceil_mode && (out - 1) * stride >= extent + padding) {
        --out;
    }
    return out;
}

} // namespace detail

template <typename T>
class Conv2d final : public Module<T> {
public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
           std::size_t padding = 0, bool bias = true)
        : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding),
          weight_({out_channels, in_channels, kernel, kernel}), has_bias_(bias) {
        if (bias) {
            bias_ = Tensor<T>({out_channels});
        }
    }

    Tensor<T> forward(const Tensor<T>& x) override {
        detail::require_chw(x.shape(), in_, "conv2d");
        height_ = x.height();
        width_ = x.width();
        out_h_ = detail::window_count(height_, kernel_, stride_, padding_, false);
        out_w_ = detail::window_count(width_, kernel_, stride_, padding_, false);
        const std::size_t patch = in_ * kernel_ * kernel_;
        const std::size_t pixels = out_h_ * out_w_;

        Tensor<T> y({out_, out_h_, out_w_});
        Eigen::Map<const detail::RowMatrix<T>> w(weight_.data(), out_, patch);
        Eigen::Map<detail::RowMatrix<T>> out(y.data(), out_, pixels);
        if (pointwise()) {
            Eigen::Map<const detail::RowMatrix<T>> cols(x.data(), patch, pixels);
            out.noalias() = w * cols;
        } else {
            std::vector<T> buffer(patch * pixels);
            im2col(x.data(), buffer.data());
            Eigen::Map<const detail::RowMatrix<T>> cols(buffer.data(), patch, pixels);
            out.noalias() = w * cols;
        }
        if (has_bias_) {
            for (std::size_t c = 0; c < out_; ++c) {
                out.row(c).array() += bias_[c];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const std::size_t patch = in_ * kernel_ * kernel_;
        const std::size_t pixels = out_h_ * out_w_;
        if (grad_out.size() != out_ * pixels) {
            fail(ErrorKind::shape_mismatch, "conv2d backward: gradient does not match last forward output");
        }
        Eigen::Map<const detail::RowMatrix<T>> w(weight_.data(), out_, patch);
        Eigen::Map<const detail::RowMatrix<T>> g(grad_out.data(), out_, pixels);
        Tensor<T> grad_in({in_, height_, width_});
        if (pointwise()) {
            Eigen::Map<detail::RowMatrix<T>> gin(grad_in.data(), patch, pixels);
            gin.noalias() = w.transpose() * g;
        } else {
            detail::RowMatrix<T> cols = w.transpose() * g;
            col2im(cols.data(), grad_in.data());
        }
        return grad_in;
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        out.push_back({prefix + "weight", &weight_, ParamRole::weight, in_ * kernel_ * kernel_});
        if (has_bias_) {
            out.push_back({prefix + "bias", &bias_, ParamRole::bias, 0});
        }
    }

private:
    bool pointwise() const { return kernel_ == 1 && stride_ == 1 && padding_ == 0; }

    void im2col(const T* src, T* cols) const {
        const std::size_t pixels = out_h_ * out_w_;
        for (std::size_t c = 0; c < in_; ++c) {
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    T* row = cols + ((c * kernel_ + ky) * kernel_ + kx) * pixels;
                    for (std::size_t oy = 0; oy < out_h_; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                                        static_cast<std::ptrdiff_t>(padding_);
                        T* dst = row + oy * out_w_;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height_)) {
                            std::fill(dst, dst + out_w_, T{});
                            continue;
                        }
                        const T* line = src + (c * height_ + static_cast<std::size_t>(iy)) * width_;
                        for (std::size_t ox = 0; ox < out_w_; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                            static_cast<std::ptrdiff_t>(padding_);
                            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width_))
                                          ? T{}
                                          : line[static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }

    void col2im(const T* cols, T* dst) const {
        const std::size_t pixels = out_h_ * out_w_;
        for (std::size_t c = 0; c < in_; ++c) {
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    const T* row = cols + ((c * kernel_ + ky) * kernel_ + kx) * pixels;
                    for (std::size_t oy = 0; oy < out_h_; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                                        static_cast<std::ptrdiff_t>(padding_);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height_)) {
                            continue;
                        }
                        T* line = dst + (c * height_ + static_cast<std::size_t>(iy)) * width_;
                        const T* src = row + oy * out_w_;
                        for (std::size_t ox = 0; ox < out_w_; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                            static_cast<std::ptrdiff_t>(padding_);
                            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(width_)) {
                                line[static_cast<std::size_t>(ix)] += src[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    std::size_t in_, out_, kernel_, stride_, padding_;
    Tensor<T> weight_;
    Tensor<T> bias_;
    bool has_bias_;
    std::size_t height_ = 0, width_ = 0, out_h_ = 0, out_w_ = 0;
};

/// Eval-mode batch normalization using running statistics.
template <typename T>
class BatchNorm2d final : public Module<T> {
public:
    explicit BatchNorm2d(std::size_t channels, double eps = 1e-5)
        : channels_(channels), eps_(eps), weight_({channels}, T{1}), bias_({channels}),
          running_mean_({channels}), running_var_({channels}, T{1}) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        detail::require_chw(x.shape(), channels_, "batch_norm");
        refresh();
        Tensor<T> y = x;
        const std::size_t plane = x.height() * x.width();
        for (std::size_t c = 0; c < channels_; ++c) {
            T* p = y.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                p[i] = p[i] * scale_[c] + shift_[c];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        const std::size_t plane = g.size() / channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
            T* p = g.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                p[i] *= scale_[c];
            }
        }
        return g;
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        out.push_back({prefix + "weight", &weight_, ParamRole::bn_weight, 0});
        out.push_back({prefix + "bias", &bias_, ParamRole::bn_bias, 0});
        out.push_back({prefix + "running_mean", &running_mean_, ParamRole::running_mean, 0});
        out.push_back({prefix + "running_var", &running_var_, ParamRole::running_var, 0});
    }

private:
    void refresh() {
        scale_.resize(channels_);
        shift_.resize(channels_);
        for (std::size_t c = 0; c < channels_; ++c) {
            const double s = static_cast<double>(weight_[c]) / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
            scale_[c] = static_cast<T>(s);
            shift_[c] = static_cast<T>(static_cast<double>(bias_[c]) - static_cast<double>(running_mean_[c]) * s);
        }
    }

    std::size_t channels_;
    double eps_;
    Tensor<T> weight_, bias_, running_mean_, running_var_;
    std::vector<T> scale_, shift_;
};

template <typename T>
class ReLU final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override {
        Tensor<T> y = x;
        mask_.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            mask_[i] = y[i] > T{0};
            if (!mask_[i]) {
                y[i] = T{0};
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!mask_[i]) {
                g[i] = T{0};
            }
        }
        return g;
    }

private:
    std::vector<std::uint8_t> mask_;
};

template <typename T>
class Tanh final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override {
        output_ = x;
        for (auto& v : output_.storage()) {
            v = std::tanh(v);
        }
        return output_;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] *= T{1} - output_[i] * output_[i];
        }
        return g;
    }

private:
    Tensor<T> output_;
};

template <typename T>
class MaxPool2d final : public Module<T> {
public:
    MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding = 0, bool ceil_mode = false)
        : kernel_(kernel), stride_(stride), padding_(padding), ceil_mode_(ceil_mode) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        if (x.rank() != 3) {
            fail(ErrorKind::shape_mismatch, "max_pool: expected C x H x W input");
        }
        input_shape_ = x.shape();
        const std::size_t channels = x.channels(), h = x.height(), w = x.width();
        const std::size_t oh = detail::window_count(h, kernel_, stride_, padding_, ceil_mode_);
        const std::size_t ow = detail::window_count(w, kernel_, stride_, padding_, ceil_mode_);
        Tensor<T> y({channels, oh, ow});
        argmax_.assign(y.size(), 0);
        const auto pad = static_cast<std::ptrdiff_t>(padding_);
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride_) - pad;
                const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(kernel_),
                                                                   static_cast<std::ptrdiff_t>(h));
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride_) - pad;
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(kernel_),
                                                                       static_cast<std::ptrdiff_t>(w));
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_index = 0;
                    for (std::ptrdiff_t iy = std::max<std::ptrdiff_t>(y0, 0); iy < y1; ++iy) {
                        for (std::ptrdiff_t ix = std::max<std::ptrdiff_t>(x0, 0); ix < x1; ++ix) {
                            const std::size_t idx = (c * h + static_cast<std::size_t>(iy)) * w +
                                                    static_cast<std::size_t>(ix);
                            if (x[idx] > best) {
                                best = x[idx];
                                best_index = idx;
                            }
                        }
                    }
                    const std::size_t o = (c * oh + oy) * ow + ox;
                    y[o] = best;
                    argmax_[o] = best_index;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g(input_shape_);
        for (std::size_t i = 0; i < grad_out.size(); ++i) {
            g[argmax_[i]] += grad_out[i];
        }
        return g;
    }

private:
    std::size_t kernel_, stride_, padding_;
    bool ceil_mode_;
    std::vector<std::size_t> input_shape_;
    std::vector<std::size_t> argmax_;
};

/// Average pooling over [floor(i*n/o), ceil((i+1)*n/o)) windows. A fixed
/// kernel/stride pool without padding is expressed through the same windows.
template <typename T>
class AdaptiveAvgPool2d final : public Module<T> {
public:
    AdaptiveAvgPool2d(std::size_t out_h, std::size_t out_w) : out_h_(out_h), out_w_(out_w) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        if (x.rank() != 3) {
            fail(ErrorKind::shape_mismatch, "adaptive_avg_pool: expected C x H x W input");
        }
        input_shape_ = x.shape();
        const std::size_t channels = x.channels(), h = x.height(), w = x.width();
        Tensor<T> y({channels, out_h_, out_w_});
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t oy = 0; oy < out_h_; ++oy) {
                const auto [y0, y1] = bounds(oy, h, out_h_);
                for (std::size_t ox = 0; ox < out_w_; ++ox) {
                    const auto [x0, x1] = bounds(ox, w, out_w_);
                    T sum{};
                    for (std::size_t iy = y0; iy < y1; ++iy) {
                        for (std::size_t ix = x0; ix < x1; ++ix) {
                            sum += x.at(c, iy, ix);
                        }
                    }
                    y.at(c, oy, ox) = sum / static_cast<T>((y1 - y0) * (x1 - x0));
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g(input_shape_);
        const std::size_t channels = input_shape_[0], h = input_shape_[1], w = input_shape_[2];
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t oy = 0; oy < out_h_; ++oy) {
                const auto [y0, y1] = bounds(oy, h, out_h_);
                for (std::size_t ox = 0; ox < out_w_; ++ox) {
                    const auto [x0, x1] = bounds(ox, w, out_w_);
                    const T share = grad_out[(c * out_h_ + oy) * out_w_ + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (std::size_t iy = y0; iy < y1; ++iy) {
                        for (std::size_t ix = x0; ix < x1; ++ix) {
                            g.at(c, iy, ix) += share;
                        }
                    }
                }
            }
        }
        return g;
    }

private:
    static std::pair<std::size_t, std::size_t> bounds(std::size_t i, std::size_t in, std::size_t out) {
        return {(i * in) / out, ((i + 1) * in + out - 1) / out};
    }

    std::size_t out_h_, out_w_;
    std::vector<std::size_t> input_shape_;
};

/// Non-overlapping average pooling (kernel == stride, no padding).
template <typename T>
class AvgPool2d final : public Module<T> {
public:
    explicit AvgPool2d(std::size_t kernel) : kernel_(kernel) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        if (x.rank() != 3) {
            fail(ErrorKind::shape_mismatch, "avg_pool: expected C x H x W input");
        }
        input_shape_ = x.shape();
        const std::size_t oh = detail::window_count(x.height(), kernel_, kernel_, 0, false);
        const std::size_t ow = detail::window_count(x.width(), kernel_, kernel_, 0, false);
        Tensor<T> y({x.channels(), oh, ow});
        const T norm = static_cast<T>(kernel_ * kernel_);
        for (std::size_t c = 0; c < x.channels(); ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T sum{};
                    for (std::size_t ky = 0; ky < kernel_; ++ky) {
                        for (std::size_t kx = 0; kx < kernel_; ++kx) {
                            sum += x.at(c, oy * kernel_ + ky, ox * kernel_ + kx);
                        }
                    }
                    y.at(c, oy, ox) = sum / norm;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g(input_shape_);
        const std::size_t oh = grad_out.height(), ow = grad_out.width();
        const T norm = static_cast<T>(kernel_ * kernel_);
        for (std::size_t c = 0; c < input_shape_[0]; ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const T share = grad_out.at(c, oy, ox) / norm;
                    for (std::size_t ky = 0; ky < kernel_; ++ky) {
                        for (std::size_t kx = 0; kx < kernel_; ++kx) {
                            g.at(c, oy * kernel_ + ky, ox * kernel_ + kx) += share;
                        }
                    }
                }
            }
        }
        return g;
    }

private:
    std::size_t kernel_;
    std::vector<std::size_t> input_shape_;
};

/// Fully connected layer; flattens its input.
template <typename T>
class Linear final : public Module<T> {
public:
    Linear(std::size_t in_features, std::size_t out_features)
        : in_(in_features), out_(out_features), weight_({out_features, in_features}), bias_({out_features}) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        if (x.size() != in_) {
            fail(ErrorKind::shape_mismatch, "linear: expected " + std::to_string(in_) + " input features, got " +
                                                std::to_string(x.size()));
        }
        input_shape_ = x.shape();
        Tensor<T> y({out_});
        Eigen::Map<const detail::RowMatrix<T>> w(weight_.data(), out_, in_);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> v(x.data(), in_);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.data(), out_);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> o(y.data(), out_);
        o.noalias() = w * v;
        o += b;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g(input_shape_);
        Eigen::Map<const detail::RowMatrix<T>> w(weight_.data(), out_, in_);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> go(grad_out.data(), out_);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gi(g.data(), in_);
        gi.noalias() = w.transpose() * go;
        return g;
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        out.push_back({prefix + "weight", &weight_, ParamRole::weight, in_});
        out.push_back({prefix + "bias", &bias_, ParamRole::bias, 0});
    }

private:
    std::size_t in_, out_;
    Tensor<T> weight_, bias_;
    std::vector<std::size_t> input_shape_;
};

/// y[c] = x[c] * scale[c] + offset[c]; fixed, not loaded from weights.
template <typename T>
class ChannelAffine final : public Module<T> {
public:
    ChannelAffine(std::vector<T> scale, std::vector<T> offset) : scale_(std::move(scale)), offset_(std::move(offset)) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        detail::require_chw(x.shape(), scale_.size(), "channel_affine");
        Tensor<T> y = x;
        const std::size_t plane = x.height() * x.width();
        for (std::size_t c = 0; c < scale_.size(); ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                y[c * plane + i] = y[c * plane + i] * scale_[c] + offset_[c];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        const std::size_t plane = g.size() / scale_.size();
        for (std::size_t c = 0; c < scale_.size(); ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                g[c * plane + i] *= scale_[c];
            }
        }
        return g;
    }

private:
    std::vector<T> scale_, offset_;
};

template <typename T>
class Sequential final : public Module<T> {
public:
    template <typename M, typename... Args>
    M& add(std::string name, Args&&... args) {
        auto module = std::make_unique<M>(std::forward<Args>(args)...);
        M& ref = *module;
        children_.emplace_back(std::move(name), std::move(module));
        return ref;
    }

    Sequential& add_sequential(std::string name) { return add<Sequential>(std::move(name)); }

    Tensor<T> forward(const Tensor<T>& x) override {
        if (children_.empty()) {
            return x;
        }
        Tensor<T> h = children_.front().second->forward(x);
        for (std::size_t i = 1; i < children_.size(); ++i) {
            h = children_[i].second->forward(h);
        }
        return h;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        for (auto it = children_.rbegin(); it != children_.rend(); ++it) {
            g = it->second->backward(g);
        }
        return g;
    }

    // An empty child name registers the child's parameters at this level.
    void parameters(const std::string& prefix, ParamList<T>& out) override {
        for (auto& [name, child] : children_) {
            child->parameters(name.empty() ? prefix : prefix + name + ".", out);
        }
    }

    bool empty() const noexcept { return children_.empty(); }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Module<T>>>> children_;
};

/// relu(main(x) + shortcut(x)); an empty shortcut is the identity.
template <typename T>
class Residual final : public Module<T> {
public:
    Sequential<T>& main() { return main_; }
    Sequential<T>& shortcut() { return shortcut_; }

    Tensor<T> forward(const Tensor<T>& x) override {
        Tensor<T> sum = main_.forward(x);
        Tensor<T> skip = shortcut_.empty() ? x : shortcut_.forward(x);
        if (sum.shape() != skip.shape()) {
            fail(ErrorKind::shape_mismatch, "residual: branch shapes differ");
        }
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += skip[i];
        }
        return relu_.forward(sum);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T> g = relu_.backward(grad_out);
        Tensor<T> grad_in = main_.backward(g);
        const Tensor<T> skip = shortcut_.empty() ? g : shortcut_.backward(g);
        for (std::size_t i = 0; i < grad_in.size(); ++i) {
            grad_in[i] += skip[i];
        }
        return grad_in;
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        main_.parameters(prefix, out);
        shortcut_.parameters(prefix + "downsample.", out);
    }

private:
    Sequential<T> main_;
    Sequential<T> shortcut_;
    ReLU<T> relu_;
};

/// Runs named branches on the same input and concatenates their outputs
/// along the channel axis.
template <typename T>
class ConcatBranches final : public Module<T> {
public:
    Sequential<T>& add_branch(std::string name) {
        branches_.emplace_back(std::move(name), std::make_unique<Sequential<T>>());
        return *branches_.back().second;
    }

    Tensor<T> forward(const Tensor<T>& x) override {
        std::vector<Tensor<T>> outputs;
        outputs.reserve(branches_.size());
        for (auto& [name, branch] : branches_) {
            outputs.push_back(branch->forward(x));
        }
        const std::size_t h = outputs.front().height(), w = outputs.front().width();
        sizes_.clear();
        std::size_t channels = 0;
        for (const auto& o : outputs) {
            if (o.height() != h || o.width() != w) {
                fail(ErrorKind::shape_mismatch, "concat: branch spatial sizes differ");
            }
            channels += o.channels();
            sizes_.push_back(o.size());
        }
        Tensor<T> y({channels, h, w});
        T* dst = y.data();
        for (const auto& o : outputs) {
            dst = std::copy(o.data(), o.data() + o.size(), dst);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> grad_in;
        std::size_t offset = 0;
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            std::vector<T> slice(grad_out.data() + offset, grad_out.data() + offset + sizes_[b]);
            offset += sizes_[b];
            const std::size_t plane = grad_out.height() * grad_out.width();
            Tensor<T> g({sizes_[b] / plane, grad_out.height(), grad_out.width()}, std::move(slice));
            Tensor<T> gi = branches_[b].second->backward(g);
            if (b == 0) {
                grad_in = std::move(gi);
            } else {
                for (std::size_t i = 0; i < grad_in.size(); ++i) {
                    grad_in[i] += gi[i];
                }
            }
        }
        return grad_in;
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        for (auto& [name, branch] : branches_) {
            branch->parameters(prefix + name + ".", out);
        }
    }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Sequential<T>>>> branches_;
    std::vector<std::size_t> sizes_;
};

/// Densely connected block: each layer sees the channel concatenation of the
/// block input and all earlier layer outputs.
template <typename T>
class DenseBlock final : public Module<T> {
public:
    Sequential<T>& add_layer(std::string name) {
        layers_.emplace_back(std::move(name), std::make_unique<Sequential<T>>());
        return *layers_.back().second;
    }

    Tensor<T> forward(const Tensor<T>& x) override {
        if (x.rank() != 3) {
            fail(ErrorKind::shape_mismatch, "dense_block: expected C x H x W input");
        }
        const std::size_t h = x.height(), w = x.width();
        Tensor<T> features = x;
        input_channels_.clear();
        for (auto& [name, layer] : layers_) {
            input_channels_.push_back(features.channels());
            Tensor<T> fresh = layer->forward(features);
            std::vector<T> joined = std::move(features.storage());
            joined.insert(joined.end(), fresh.values().begin(), fresh.values().end());
            const std::size_t channels = input_channels_.back() + fresh.channels();
            features = Tensor<T>({channels, h, w}, std::move(joined));
        }
        return features;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const std::size_t h = grad_out.height(), w = grad_out.width(), plane = h * w;
        std::vector<T> grad = grad_out.storage();
        std::size_t end = grad_out.channels();
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const std::size_t begin = input_channels_[i];
            Tensor<T> g({end - begin, h, w},
                        std::vector<T>(grad.begin() + static_cast<std::ptrdiff_t>(begin * plane),
                                       grad.begin() + static_cast<std::ptrdiff_t>(end * plane)));
            const Tensor<T> gi = layers_[i].second->backward(g);
            for (std::size_t k = 0; k < gi.size(); ++k) {
                grad[k] += gi[k];
            }
            end = begin;
        }
        grad.resize(end * plane);
        return Tensor<T>({end, h, w}, std::move(grad));
    }

    void parameters(const std::string& prefix, ParamList<T>& out) override {
        for (auto& [name, layer] : layers_) {
            layer->parameters(prefix + name + ".", out);
        }
    }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Sequential<T>>>> layers_;
    std::vector<std::size_t> input_channels_;
};

} // namespace uqbench::nn
