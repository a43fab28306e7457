#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqbench/ensemble.hpp"
#include "uqbench/error.hpp"
#include "uqbench/image.hpp"
#include "uqbench/labelspace.hpp"
#include "uqbench/modelzoo.hpp"

namespace uqbench {

struct PerturbationSpec {
    enum class Kind { rotate, grayscale, sepia, gaussian_blur, hue_shift };

    Kind kind = Kind::rotate;
    std::optional<double> degrees; // rotate
    std::optional<double> sigma;   // gaussian_blur, pixels
    std::optional<double> shift;   // hue_shift, degrees in [-180, 180]

    static PerturbationSpec rotation(double deg) { return {Kind::rotate, deg, {}, {}}; }
    static PerturbationSpec grayscale() { return {Kind::grayscale, {}, {}, {}}; }
    static PerturbationSpec sepia() { return {Kind::sepia, {}, {}, {}}; }
    static PerturbationSpec gaussian_blur(double s) { return {Kind::gaussian_blur, {}, s, {}}; }
    static PerturbationSpec hue_shift(double s) { return {Kind::hue_shift, {}, {}, s}; }

    bool is_filter() const { return kind != Kind::rotate; }

    void validate() const {
        const bool want_degrees = kind == Kind::rotate;
        const bool want_sigma = kind == Kind::gaussian_blur;
        const bool want_shift = kind == Kind::hue_shift;
        if (degrees.has_value() != want_degrees || sigma.has_value() != want_sigma ||
            shift.has_value() != want_shift) {
            fail(ErrorKind::invalid_input, "perturbation '" + std::string(kind_name(kind)) +
                                               "' has missing or unexpected parameters");
        }
        if (degrees && !std::isfinite(*degrees)) {
            fail(ErrorKind::invalid_input, "rotation angle must be finite");
        }
        if (sigma && !(*sigma >= 0.0 && std::isfinite(*sigma))) {
            fail(ErrorKind::invalid_input, "blur sigma must be a finite value >= 0");
        }
        if (shift && !(*shift >= -180.0 && *shift <= 180.0)) {
            fail(ErrorKind::invalid_input, "hue shift must lie in [-180, 180]");
        }
    }

    static std::string_view kind_name(Kind k) {
        switch (k) {
        case Kind::rotate: return "rotate";
        case Kind::grayscale: return "grayscale";
        case Kind::sepia: return "sepia";
        case Kind::gaussian_blur: return "gaussian_blur";
        case Kind::hue_shift: return "hue_shift";
        }
        return "unknown";
    }

    static Kind parse_kind(std::string_view name) {
        for (Kind k : {Kind::rotate, Kind::grayscale, Kind::sepia, Kind::gaussian_blur, Kind::hue_shift}) {
            if (kind_name(k) == name) {
                return k;
            }
        }
        fail(ErrorKind::invalid_input, "unknown perturbation kind '" + std::string(name) + "'");
    }

    /// Stable textual form, used in reports and cache keys.
    std::string describe() const {
        auto num = [](double v) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        std::string s(kind_name(kind));
        if (degrees) s += "(degrees=" + num(*degrees) + ")";
        if (sigma) s += "(sigma=" + num(*sigma) + ")";
        if (shift) s += "(shift=" + num(*shift) + ")";
        return s;
    }

    bool operator==(const PerturbationSpec&) const = default;
};

namespace detail {

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline int color_channels(const Image& im) { return im.channels == 4 ? 3 : im.channels; }

inline Image rotate_quarter_turns(const Image& im, int quarters) {
    if (quarters == 0) {
        return im;
    }
    const bool swap = quarters % 2 != 0;
    Image out(swap ? im.height : im.width, swap ? im.width : im.height, im.channels);
    for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) {
            // Counter-clockwise turns.
            int nx = x, ny = y;
            switch (quarters) {
            case 1: nx = y; ny = im.width - 1 - x; break;
            case 2: nx = im.width - 1 - x; ny = im.height - 1 - y; break;
            case 3: nx = im.height - 1 - y; ny = x; break;
            default: break;
            }
            for (int c = 0; c < im.channels; ++c) {
                out.at(nx, ny, c) = im.at(x, y, c);
            }
        }
    }
    return out;
}

} // namespace detail

/// Counter-clockwise rotation. Multiples of 90 degrees permute pixels
/// exactly; other angles resample bilinearly onto a canvas large enough for
/// the rotated extent, filling uncovered area with zeros.
inline Image rotate(const Image& im, double degrees) {
    if (im.empty()) {
        fail(ErrorKind::invalid_input, "cannot rotate an empty image");
    }
    if (!std::isfinite(degrees)) {
        fail(ErrorKind::invalid_input, "rotation angle must be finite");
    }
    const double turns = degrees / 90.0;
    if (turns == std::floor(turns)) {
        const long q = static_cast<long>(std::fmod(turns, 4.0));
        return detail::rotate_quarter_turns(im, static_cast<int>((q % 4 + 4) % 4));
    }

    const double theta = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double w = im.width, h = im.height;
    const int out_w = static_cast<int>(std::ceil(std::abs(w * c) + std::abs(h * s) - 1e-9));
    const int out_h = static_cast<int>(std::ceil(std::abs(w * s) + std::abs(h * c) - 1e-9));
    Image out(out_w, out_h, im.channels);
    std::vector<double> acc(static_cast<std::size_t>(im.channels));
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const double dx = ox + 0.5 - out_w / 2.0;
            const double dy = oy + 0.5 - out_h / 2.0;
            // Inverse of the counter-clockwise map in y-down coordinates.
            const double sx = dx * c - dy * s + w / 2.0 - 0.5;
            const double sy = dx * s + dy * c + h / 2.0 - 0.5;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double ax = sx - fx, ay = sy - fy;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int j = 0; j < 2; ++j) {
                for (int i = 0; i < 2; ++i) {
                    const int px = static_cast<int>(fx) + i, py = static_cast<int>(fy) + j;
                    if (px < 0 || py < 0 || px >= im.width || py >= im.height) {
                        continue;
                    }
                    const double wgt = (i ? ax : 1.0 - ax) * (j ? ay : 1.0 - ay);
                    for (int ch = 0; ch < im.channels; ++ch) {
                        acc[static_cast<std::size_t>(ch)] += wgt * im.at(px, py, ch);
                    }
                }
            }
            for (int ch = 0; ch < im.channels; ++ch) {
                out.at(ox, oy, ch) = detail::to_byte(acc[static_cast<std::size_t>(ch)]);
            }
        }
    }
    return out;
}

/// ITU-R BT.601 luma written to every color channel.
inline Image grayscale(const Image& im) {
    Image out = im;
    if (detail::color_channels(im) < 3) {
        return out;
    }
    for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) {
            const double luma = 0.299 * im.at(x, y, 0) + 0.587 * im.at(x, y, 1) + 0.114 * im.at(x, y, 2);
            const std::uint8_t v = detail::to_byte(luma);
            out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = v;
        }
    }
    return out;
}

inline constexpr std::array<std::array<double, 3>, 3> sepia_matrix{{
    {0.393, 0.769, 0.189},
    {0.349, 0.686, 0.168},
    {0.272, 0.534, 0.131},
}};

inline Image sepia(const Image& im) {
    Image src = detail::color_channels(im) < 3 ? to_rgb(im) : im;
    Image out = src;
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            const double r = src.at(x, y, 0), g = src.at(x, y, 1), b = src.at(x, y, 2);
            for (int c = 0; c < 3; ++c) {
                const auto& row = sepia_matrix[static_cast<std::size_t>(c)];
                out.at(x, y, c) = detail::to_byte(row[0] * r + row[1] * g + row[2] * b);
            }
        }
    }
    return out;
}

/// Separable Gaussian truncated at 3 sigma with replicated borders.
/// sigma == 0 returns the input unchanged.
inline Image gaussian_blur(const Image& im, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        fail(ErrorKind::invalid_input, "blur sigma must be a finite value >= 0");
    }
    if (sigma == 0.0 || im.empty()) {
        return im;
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : kernel) {
        v /= total;
    }
    const int w = im.width, h = im.height, ch = im.channels;
    std::vector<double> horizontal(im.data.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int sx = std::clamp(x + k, 0, w - 1);
                    acc += kernel[static_cast<std::size_t>(k + radius)] * im.at(sx, y, c);
                }
                horizontal[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
            }
        }
    }
    Image out(w, h, ch);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int sy = std::clamp(y + k, 0, h - 1);
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           horizontal[(static_cast<std::size_t>(sy) * w + x) * ch + c];
                }
                out.at(x, y, c) = detail::to_byte(acc);
            }
        }
    }
    return out;
}

/// Rotates hue in HSV space by `shift` degrees.
inline Image hue_shift(const Image& im, double shift) {
    if (!(shift >= -180.0 && shift <= 180.0)) {
        fail(ErrorKind::invalid_input, "hue shift must lie in [-180, 180]");
    }
    Image out = im;
    if (detail::color_channels(im) < 3) {
        return out;
    }
    for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) {
            const double r = im.at(x, y, 0) / 255.0, g = im.at(x, y, 1) / 255.0, b = im.at(x, y, 2) / 255.0;
            const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
            const double delta = mx - mn;
            double hue = 0.0;
            if (delta > 0.0) {
                if (mx == r) {
                    hue = 60.0 * std::fmod((g - b) / delta, 6.0);
                } else if (mx == g) {
                    hue = 60.0 * ((b - r) / delta + 2.0);
                } else {
                    hue = 60.0 * ((r - g) / delta + 4.0);
                }
            }
            const double sat = mx > 0.0 ? delta / mx : 0.0;
            const double val = mx;
            hue = std::fmod(hue + shift, 360.0);
            if (hue < 0.0) {
                hue += 360.0;
            }
            const double chroma = val * sat;
            const double hp = hue / 60.0;
            const double xc = chroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
            double r1 = 0, g1 = 0, b1 = 0;
            switch (static_cast<int>(hp) % 6) {
            case 0: r1 = chroma; g1 = xc; break;
            case 1: r1 = xc; g1 = chroma; break;
            case 2: g1 = chroma; b1 = xc; break;
            case 3: g1 = xc; b1 = chroma; break;
            case 4: r1 = xc; b1 = chroma; break;
            default: r1 = chroma; b1 = xc; break;
            }
            const double m = val - chroma;
            out.at(x, y, 0) = detail::to_byte((r1 + m) * 255.0);
            out.at(x, y, 1) = detail::to_byte((g1 + m) * 255.0);
            out.at(x, y, 2) = detail::to_byte((b1 + m) * 255.0);
        }
    }
    return out;
}

inline Image apply_filter(const Image& im, const PerturbationSpec& spec) {
    spec.validate();
    switch (spec.kind) {
    case PerturbationSpec::Kind::grayscale: return grayscale(im);
    case PerturbationSpec::Kind::sepia: return sepia(im);
    case PerturbationSpec::Kind::gaussian_blur: return gaussian_blur(im, *spec.sigma);
    case PerturbationSpec::Kind::hue_shift: return hue_shift(im, *spec.shift);
    case PerturbationSpec::Kind::rotate: break;
    }
    fail(ErrorKind::invalid_input, "'" + std::string(PerturbationSpec::kind_name(spec.kind)) + "' is not a filter");
}

inline Image apply_perturbation(const Image& im, const PerturbationSpec& spec) {
    spec.validate();
    return spec.kind == PerturbationSpec::Kind::rotate ? rotate(im, *spec.degrees) : apply_filter(im, spec);
}

/// The rotation and filter pair used when a run does not configure its own.
inline std::vector<PerturbationSpec> default_perturbations() {
    return {PerturbationSpec::rotation(180.0), PerturbationSpec::sepia()};
}

struct RobustnessRecord {
    std::string image_id;
    std::string ground_truth;
    Prediction original_prediction;
    Prediction perturbed_prediction;
    PerturbationSpec spec;
    bool flipped = false;
    bool originally_correct = false;
    bool perturbed_correct = false;
};

/// Maps an image to a probability vector; lets callers put a cache in front
/// of the model.
using ImagePredictor = std::function<ProbabilityVector(const Image&, const std::optional<PerturbationSpec>&)>;

/// Predicts the unperturbed image once, then each perturbed variant.
inline std::vector<RobustnessRecord> robustness_eval(const ImagePredictor& predictor, const std::string& image_id,
                                                     const Image& image, const std::vector<PerturbationSpec>& specs,
                                                     const AcceptedClassSet& accepted, const LabelCatalog& catalog) {
    if (image.empty()) {
        fail(ErrorKind::invalid_input, "robustness evaluation needs a non-empty image");
    }
    std::vector<RobustnessRecord> records;
    if (specs.empty()) {
        return records;
    }
    const ProbabilityVector before = predictor(image, std::nullopt);
    const ClassIndex original = argmax(before);
    const Prediction original_prediction{original, catalog.name(original), before[original]};
    for (const auto& spec : specs) {
        const ProbabilityVector after = predictor(apply_perturbation(image, spec), spec);
        const ClassIndex perturbed = argmax(after);
        RobustnessRecord r;
        r.image_id = image_id;
        r.ground_truth = accepted.ground_truth_name;
        r.original_prediction = original_prediction;
        r.perturbed_prediction = {perturbed, catalog.name(perturbed), after[perturbed]};
        r.spec = spec;
        r.flipped = original != perturbed;
        r.originally_correct = is_correct(original, accepted);
        r.perturbed_correct = is_correct(perturbed, accepted);
        records.push_back(std::move(r));
    }
    return records;
}

template <typename T>
std::vector<RobustnessRecord> robustness_eval(BasicClassifier<T>& member, const std::string& image_id,
                                              const Image& image, const std::vector<PerturbationSpec>& specs,
                                              const AcceptedClassSet& accepted, const LabelCatalog& catalog) {
    ImagePredictor predictor = [&member](const Image& im, const std::optional<PerturbationSpec>&) {
        return predict(member, preprocess<T>(im, member.input_spec()));
    };
    return robustness_eval(predictor, image_id, image, specs, accepted, catalog);
}

} // namespace uqbench
