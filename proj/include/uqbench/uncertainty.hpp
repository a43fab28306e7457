#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "uqbench/ensemble.hpp"
#include "uqbench/error.hpp"
#include "uqbench/labelspace.hpp"

namespace uqbench {

enum class VarianceKind { population, sample };

struct UncertaintyRecord {
    std::string image_id;
    std::string ground_truth;
    ClassIndex ensemble_class = 0;
    std::string ensemble_name;
    double avg_probability = 0.0;
    double variance = 0.0;
    double entropy_bits = 0.0;
};

namespace detail {

inline std::vector<double> class_column(const MemberPredictionSet& set, ClassIndex cls) {
    set.validate();
    if (cls >= set.num_classes()) {
        fail(ErrorKind::out_of_range, "class index " + std::to_string(cls) + " out of range");
    }
    std::vector<double> column;
    column.reserve(set.entries.size());
    for (const auto& e : set.entries) {
        column.push_back(e.probs[cls]);
    }
    return column;
}

inline double column_mean(const std::vector<double>& column) {
    double mean = 0.0;
    for (std::size_t i = 0; i < column.size(); ++i) {
        mean += (column[i] - mean) / static_cast<double>(i + 1);
    }
    return mean;
}

} // namespace detail

inline double average_probability(const MemberPredictionSet& set, ClassIndex cls) {
    return detail::column_mean(detail::class_column(set, cls));
}

/// Two-pass variance of the members' probabilities for one class. Sample
/// variance of a single member is defined as 0.
inline double probability_variance(const MemberPredictionSet& set, ClassIndex cls,
                                   VarianceKind kind = VarianceKind::population) {
    const auto column = detail::class_column(set, cls);
    const double n = static_cast<double>(column.size());
    const double mean = detail::column_mean(column);
    double ss = 0.0;
    for (double v : column) {
        ss += (v - mean) * (v - mean);
    }
    if (kind == VarianceKind::sample) {
        return column.size() > 1 ? ss / (n - 1.0) : 0.0;
    }
    return ss / n;
}

inline constexpr double normalization_tolerance = 1e-6;

/// Shannon entropy in bits, with 0 log 0 = 0.
inline double entropy(const ProbabilityVector& p) {
    if (p.empty()) {
        fail(ErrorKind::invalid_input, "entropy of an empty vector");
    }
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            fail(ErrorKind::invalid_input, "entropy: probabilities must be finite and non-negative");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > normalization_tolerance) {
        fail(ErrorKind::invalid_input, "entropy: vector sums to " + std::to_string(sum) + ", not 1");
    }
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log2(v);
        }
    }
    return h > 0.0 ? h : 0.0;
}

/// Entropy of the uniform distribution over k classes.
inline double max_entropy(std::size_t k) { return std::log2(static_cast<double>(k)); }

inline UncertaintyRecord build_record(const MemberPredictionSet& set, std::string ground_truth,
                                      VarianceKind kind = VarianceKind::population) {
    const ProbabilityVector mean = probabilistic_average(set);
    UncertaintyRecord r;
    r.image_id = set.image_id;
    r.ground_truth = std::move(ground_truth);
    r.ensemble_class = argmax(mean);
    r.avg_probability = average_probability(set, r.ensemble_class);
    r.variance = probability_variance(set, r.ensemble_class, kind);
    r.entropy_bits = entropy(mean);
    return r;
}

inline UncertaintyRecord build_record(const MemberPredictionSet& set, std::string ground_truth,
                                      const LabelCatalog& catalog, VarianceKind kind = VarianceKind::population) {
    UncertaintyRecord r = build_record(set, std::move(ground_truth), kind);
    r.ensemble_name = catalog.name(r.ensemble_class);
    return r;
}

/// Most uncertain first: entropy descending, then average probability
/// ascending, then input order.
inline std::vector<UncertaintyRecord> rank_by_uncertainty(std::vector<UncertaintyRecord> records) {
    std::stable_sort(records.begin(), records.end(), [](const UncertaintyRecord& a, const UncertaintyRecord& b) {
        if (a.entropy_bits != b.entropy_bits) {
            return a.entropy_bits > b.entropy_bits;
        }
        return a.avg_probability < b.avg_probability;
    });
    return records;
}

} // namespace uqbench
