#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uqbench/error.hpp"

namespace uqbench {

/// Dense row-major tensor. Images flow through the engine as C x H x W with an
/// implicit batch of one; logits are rank-1.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T{})
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_)) {
            fail(ErrorKind::shape_mismatch, "tensor data size does not match shape " + shape_string(shape_));
        }
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    // C x H x W accessors; only meaningful for rank-3 tensors.
    std::size_t channels() const { return shape_.at(0); }
    std::size_t height() const { return shape_.at(1); }
    std::size_t width() const { return shape_.at(2); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    Tensor reshaped(std::vector<std::size_t> shape) const& {
        if (element_count(shape) != data_.size()) {
            fail(ErrorKind::shape_mismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    Tensor reshaped(std::vector<std::size_t> shape) && {
        if (element_count(shape) != data_.size()) {
            fail(ErrorKind::shape_mismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
        return std::move(*this);
    }

    bool operator==(const Tensor&) const = default;

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            os << (i ? "x" : "") << shape[i];
        }
        os << ']';
        return os.str();
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

} // namespace uqbench
