#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uqbench/error.hpp"
#include "uqbench/labelspace.hpp"

namespace uqbench {

struct MemberPrediction {
    std::string member;
    ProbabilityVector probs;
};

/// One image's probability vectors, one per committee member.
struct MemberPredictionSet {
    std::string image_id;
    std::vector<MemberPrediction> entries;

    std::size_t num_classes() const { return entries.empty() ? 0 : entries.front().probs.size(); }

    void validate() const {
        if (entries.empty()) {
            fail(ErrorKind::invalid_input, "prediction set for '" + image_id + "' has no members");
        }
        std::set<std::string> seen;
        const std::size_t k = entries.front().probs.size();
        if (k == 0) {
            fail(ErrorKind::invalid_input, "empty probability vector");
        }
        for (const auto& e : entries) {
            if (e.probs.size() != k) {
                fail(ErrorKind::invalid_input, "member '" + e.member + "' has a probability vector of length " +
                                                   std::to_string(e.probs.size()) + ", expected " + std::to_string(k));
            }
            if (!seen.insert(e.member).second) {
                fail(ErrorKind::invalid_input, "duplicate member '" + e.member + "'");
            }
        }
    }
};

/// Weighted elementwise mean of the member vectors, renormalized to sum to 1.
/// Uniform weights when none are given.
inline ProbabilityVector probabilistic_average(const MemberPredictionSet& set,
                                               const std::optional<std::vector<double>>& weights = std::nullopt) {
    set.validate();
    const std::size_t n = set.entries.size();
    std::vector<double> w(n, 1.0);
    if (weights) {
        if (weights->size() != n) {
            fail(ErrorKind::invalid_input, "expected " + std::to_string(n) + " member weights, got " +
                                               std::to_string(weights->size()));
        }
        w = *weights;
        double total = 0.0;
        for (double v : w) {
            if (!(v >= 0.0)) {
                fail(ErrorKind::invalid_input, "member weights must be non-negative");
            }
            total += v;
        }
        if (!(total > 0.0)) {
            fail(ErrorKind::invalid_input, "member weights must have a positive sum");
        }
    }
    // Running weighted mean; exact when every member agrees.
    const std::size_t k = set.num_classes();
    ProbabilityVector mean(k, 0.0);
    double seen = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        if (w[m] == 0.0) {
            continue;
        }
        seen += w[m];
        const double step = w[m] / seen;
        for (std::size_t i = 0; i < k; ++i) {
            mean[i] += step * (set.entries[m].probs[i] - mean[i]);
        }
    }
    double sum = 0.0;
    for (double v : mean) {
        sum += v;
    }
    if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12) {
        for (auto& v : mean) {
            v /= sum;
        }
    }
    return mean;
}

/// Lowest index wins ties.
inline ClassIndex argmax(const ProbabilityVector& p) {
    if (p.empty()) {
        fail(ErrorKind::invalid_input, "argmax of an empty vector");
    }
    return static_cast<ClassIndex>(std::max_element(p.begin(), p.end()) - p.begin());
}

inline Prediction ensemble_predict(const MemberPredictionSet& set) {
    const ProbabilityVector mean = probabilistic_average(set);
    const ClassIndex c = argmax(mean);
    return {c, {}, mean[c]};
}

inline Prediction ensemble_predict(const MemberPredictionSet& set, const LabelCatalog& catalog) {
    Prediction p = ensemble_predict(set);
    p.name = catalog.name(p.index);
    return p;
}

/// Each member's own argmax, in entry order.
inline std::vector<ClassIndex> member_votes(const MemberPredictionSet& set) {
    set.validate();
    std::vector<ClassIndex> votes;
    votes.reserve(set.entries.size());
    for (const auto& e : set.entries) {
        votes.push_back(argmax(e.probs));
    }
    return votes;
}

struct VoteOutcome {
    enum class Kind { decision, tie, no_majority };

    Kind kind = Kind::no_majority;
    std::optional<ClassIndex> decided_class;
    std::optional<std::set<ClassIndex>> tied_classes;

    static VoteOutcome decision(ClassIndex c) { return {Kind::decision, c, std::nullopt}; }
    static VoteOutcome tie(std::set<ClassIndex> classes) { return {Kind::tie, std::nullopt, std::move(classes)}; }
    static VoteOutcome no_majority() { return {}; }

    bool operator==(const VoteOutcome&) const = default;
};

namespace detail {

inline std::map<ClassIndex, std::size_t> tally(const std::vector<ClassIndex>& labels) {
    if (labels.empty()) {
        fail(ErrorKind::invalid_input, "cannot vote on an empty label list");
    }
    std::map<ClassIndex, std::size_t> counts;
    for (ClassIndex c : labels) {
        ++counts[c];
    }
    return counts;
}

} // namespace detail

/// Decision only when one class holds strictly more than half the votes.
inline VoteOutcome majority_vote(const std::vector<ClassIndex>& labels) {
    for (const auto& [cls, count] : detail::tally(labels)) {
        if (2 * count > labels.size()) {
            return VoteOutcome::decision(cls);
        }
    }
    return VoteOutcome::no_majority();
}

/// Decision for a unique mode, otherwise a tie over every modal class.
inline VoteOutcome plurality_vote(const std::vector<ClassIndex>& labels) {
    const auto counts = detail::tally(labels);
    std::size_t best = 0;
    for (const auto& [cls, count] : counts) {
        best = std::max(best, count);
    }
    std::set<ClassIndex> modes;
    for (const auto& [cls, count] : counts) {
        if (count == best) {
            modes.insert(cls);
        }
    }
    if (modes.size() == 1) {
        return VoteOutcome::decision(*modes.begin());
    }
    return VoteOutcome::tie(std::move(modes));
}

inline std::string describe(const VoteOutcome& outcome, const LabelCatalog& catalog) {
    switch (outcome.kind) {
    case VoteOutcome::Kind::decision:
        return catalog.name(*outcome.decided_class);
    case VoteOutcome::Kind::no_majority:
        return "no majority";
    case VoteOutcome::Kind::tie: {
        std::string s = "tie:";
        bool first = true;
        for (ClassIndex c : *outcome.tied_classes) {
            s += (first ? " " : " / ") + catalog.name(c);
            first = false;
        }
        return s;
    }
    }
    return {};
}

} // namespace uqbench
