#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uqbench/error.hpp"

namespace uqbench {

/// 8-bit interleaved image, row-major, channel order RGB or RGBA (1 channel
/// for grayscale).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    bool empty() const noexcept { return width <= 0 || height <= 0 || data.empty(); }

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

namespace detail {

inline cv::Mat as_mat(const Image& im) {
    return cv::Mat(im.height, im.width, CV_8UC(im.channels), const_cast<std::uint8_t*>(im.data.data()));
}

inline Image from_mat(const cv::Mat& m) {
    cv::Mat c = m.isContinuous() ? m : m.clone();
    Image im(c.cols, c.rows, c.channels());
    std::copy(c.datastart, c.dataend, im.data.begin());
    return im;
}

} // namespace detail

/// Decodes PNG or JPEG bytes, keeping 1, 3 or 4 channels.
inline Image decode_image(const std::vector<std::uint8_t>& bytes, const std::string& label = "image") {
    if (bytes.empty()) {
        fail(ErrorKind::invalid_input, "cannot decode " + label + ": empty file");
    }
    cv::Mat raw = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
    if (raw.empty() || raw.cols == 0 || raw.rows == 0) {
        fail(ErrorKind::invalid_input, "cannot decode " + label);
    }
    if (raw.depth() != CV_8U) {
        cv::Mat converted;
        raw.convertTo(converted, CV_8U, raw.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
        raw = converted;
    }
    cv::Mat rgb;
    switch (raw.channels()) {
    case 1:
        rgb = raw;
        break;
    case 3:
        cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
        break;
    case 4:
        cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGBA);
        break;
    default:
        fail(ErrorKind::invalid_input, "unsupported channel count in " + label);
    }
    return detail::from_mat(rgb);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Image load_image(const std::filesystem::path& path) { return decode_image(read_file_bytes(path), path.string()); }

inline void save_png(const std::filesystem::path& path, const Image& im) {
    if (im.empty()) {
        fail(ErrorKind::invalid_input, "cannot write empty image to " + path.string());
    }
    cv::Mat out;
    switch (im.channels) {
    case 1:
        out = detail::as_mat(im);
        break;
    case 3:
        cv::cvtColor(detail::as_mat(im), out, cv::COLOR_RGB2BGR);
        break;
    case 4:
        cv::cvtColor(detail::as_mat(im), out, cv::COLOR_RGBA2BGRA);
        break;
    default:
        fail(ErrorKind::invalid_input, "unsupported channel count");
    }
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", out, bytes)) {
        fail(ErrorKind::io, "PNG encoding failed for " + path.string());
    }
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        fail(ErrorKind::io, "cannot write " + path.string());
    }
}

/// Grayscale is replicated, alpha is dropped.
inline Image to_rgb(const Image& im) {
    if (im.empty()) {
        fail(ErrorKind::invalid_input, "zero-size image");
    }
    if (im.channels == 3) {
        return im;
    }
    if (im.channels != 1 && im.channels != 4) {
        fail(ErrorKind::invalid_input, "images must have 1, 3 or 4 channels");
    }
    Image out(im.width, im.height, 3);
    const std::size_t pixels = static_cast<std::size_t>(im.width) * im.height;
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int c = 0; c < 3; ++c) {
            out.data[i * 3 + c] = im.channels == 1 ? im.data[i] : im.data[i * 4 + c];
        }
    }
    return out;
}

/// Bilinear when enlarging, area averaging when shrinking.
inline Image resize(const Image& im, int width, int height) {
    if (im.empty() || width <= 0 || height <= 0) {
        fail(ErrorKind::invalid_input, "resize of or to an empty image");
    }
    if (width == im.width && height == im.height) {
        return im;
    }
    const bool shrinking = width < im.width || height < im.height;
    cv::Mat out;
    cv::resize(detail::as_mat(im), out, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    return detail::from_mat(out);
}

inline Image crop(const Image& im, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > im.width || y0 + height > im.height) {
        fail(ErrorKind::invalid_input, "crop window outside image");
    }
    Image out(width, height, im.channels);
    const std::size_t row = static_cast<std::size_t>(width) * im.channels;
    for (int y = 0; y < height; ++y) {
        const auto* src = im.data.data() + ((static_cast<std::size_t>(y0 + y) * im.width) + x0) * im.channels;
        std::copy(src, src + row, out.data.begin() + static_cast<std::ptrdiff_t>(y * row));
    }
    return out;
}

} // namespace uqbench
