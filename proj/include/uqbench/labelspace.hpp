#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uqbench/error.hpp"

namespace uqbench {

using ClassIndex = std::size_t;
using ProbabilityVector = std::vector<double>;

inline constexpr std::size_t imagenet_classes = 1000;

/// ASCII case folding, trimming and whitespace collapsing; class names are
/// matched on this key.
inline std::string fold_name(std::string_view s) {
    std::string out;
    bool gap = false;
    for (unsigned char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            gap = !out.empty();
            continue;
        }
        if (gap) {
            out += ' ';
            gap = false;
        }
        out += static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c);
    }
    return out;
}

struct LabelEntry {
    ClassIndex index = 0;
    std::string canonical_name;
    std::vector<std::string> synonyms;
};

class LabelCatalog {
public:
    LabelCatalog() = default;

    /// Validates that `entries` cover exactly 0..expected-1 with unique
    /// (case-folded) canonical names.
    static LabelCatalog from_entries(std::vector<LabelEntry> entries, std::size_t expected = imagenet_classes) {
        if (entries.size() != expected) {
            fail(ErrorKind::invalid_input, "label catalog has " + std::to_string(entries.size()) +
                                               " entries, expected " + std::to_string(expected));
        }
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
        LabelCatalog catalog;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (i > 0 && entries[i].index == entries[i - 1].index) {
                fail(ErrorKind::invalid_input, "duplicate class index " + std::to_string(entries[i].index));
            }
            if (entries[i].index != i) {
                fail(ErrorKind::invalid_input, "class index " + std::to_string(i) + " missing from label catalog");
            }
            const std::string key = fold_name(entries[i].canonical_name);
            if (key.empty()) {
                fail(ErrorKind::invalid_input, "empty class name at index " + std::to_string(i));
            }
            if (!catalog.canonical_.emplace(key, i).second) {
                fail(ErrorKind::invalid_input, "duplicate class name '" + entries[i].canonical_name + "'");
            }
        }
        // Synonyms resolve only when unambiguous and not shadowed by a canonical name.
        for (const auto& e : entries) {
            for (const auto& syn : e.synonyms) {
                const std::string key = fold_name(syn);
                if (key.empty() || catalog.canonical_.count(key) != 0) {
                    continue;
                }
                auto [it, inserted] = catalog.synonyms_.emplace(key, e.index);
                if (!inserted && it->second != e.index) {
                    catalog.ambiguous_.insert(key);
                }
            }
        }
        catalog.entries_ = std::move(entries);
        return catalog;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<LabelEntry>& entries() const noexcept { return entries_; }

    const std::string& name(ClassIndex i) const {
        if (i >= entries_.size()) {
            fail(ErrorKind::out_of_range, "class index " + std::to_string(i) + " out of range");
        }
        return entries_[i].canonical_name;
    }

    /// Canonical names first, then unambiguous synonyms.
    std::optional<ClassIndex> lookup(std::string_view name) const {
        const std::string key = fold_name(name);
        if (auto it = canonical_.find(key); it != canonical_.end()) {
            return it->second;
        }
        if (ambiguous_.count(key) != 0) {
            return std::nullopt;
        }
        if (auto it = synonyms_.find(key); it != synonyms_.end()) {
            return it->second;
        }
        return std::nullopt;
    }

    ClassIndex resolve(std::string_view name) const {
        if (auto idx = lookup(name)) {
            return *idx;
        }
        const std::string key = fold_name(name);
        if (ambiguous_.count(key) != 0) {
            fail(ErrorKind::invalid_input, "class name '" + std::string(name) + "' is ambiguous");
        }
        fail(ErrorKind::invalid_input, "unknown class name '" + std::string(name) + "'");
    }

private:
    std::vector<LabelEntry> entries_;
    std::unordered_map<std::string, ClassIndex> canonical_;
    std::unordered_map<std::string, ClassIndex> synonyms_;
    std::set<std::string> ambiguous_;
};

/// Reads `index<TAB>canonical_name[<TAB>syn1|syn2|...]` lines.
inline LabelCatalog load_label_catalog(const std::filesystem::path& path, std::size_t expected = imagenet_classes) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open label catalog " + path.string());
    }
    std::vector<LabelEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto where = path.string() + ":" + std::to_string(line_no);
        const auto tab1 = line.find('\t');
        if (tab1 == std::string::npos) {
            fail(ErrorKind::invalid_input, "malformed label row at " + where);
        }
        const auto tab2 = line.find('\t', tab1 + 1);
        LabelEntry e;
        const std::string index_text = line.substr(0, tab1);
        if (index_text.empty() || !std::all_of(index_text.begin(), index_text.end(),
                                               [](unsigned char c) { return c >= '0' && c <= '9'; })) {
            fail(ErrorKind::invalid_input, "malformed class index at " + where);
        }
        e.index = std::stoul(index_text);
        e.canonical_name = line.substr(tab1 + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab1 - 1);
        if (fold_name(e.canonical_name).empty()) {
            fail(ErrorKind::invalid_input, "missing class name at " + where);
        }
        if (tab2 != std::string::npos) {
            const std::string syn = line.substr(tab2 + 1);
            std::size_t start = 0;
            while (start <= syn.size()) {
                const auto bar = syn.find('|', start);
                std::string token = syn.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
                if (!fold_name(token).empty()) {
                    e.synonyms.push_back(std::move(token));
                }
                if (bar == std::string::npos) {
                    break;
                }
                start = bar + 1;
            }
        }
        entries.push_back(std::move(e));
    }
    // Duplicate indices are reported before the count check so the message names the real problem.
    std::vector<ClassIndex> seen;
    seen.reserve(entries.size());
    for (const auto& e : entries) {
        seen.push_back(e.index);
    }
    std::sort(seen.begin(), seen.end());
    if (auto dup = std::adjacent_find(seen.begin(), seen.end()); dup != seen.end()) {
        fail(ErrorKind::invalid_input, "duplicate class index " + std::to_string(*dup) + " in " + path.string());
    }
    return LabelCatalog::from_entries(std::move(entries), expected);
}

/// Classes that count as a correct answer for one ground-truth label.
struct AcceptedClassSet {
    std::string ground_truth_name;
    std::set<ClassIndex> accepted_indices;
};

inline AcceptedClassSet make_accepted_set(const LabelCatalog& catalog, std::string ground_truth,
                                          const std::vector<ClassIndex>& indices) {
    if (indices.empty()) {
        fail(ErrorKind::invalid_input, "accepted class set for '" + ground_truth + "' is empty");
    }
    AcceptedClassSet set{std::move(ground_truth), {}};
    for (ClassIndex i : indices) {
        if (i >= catalog.size()) {
            fail(ErrorKind::out_of_range, "accepted class index " + std::to_string(i) + " out of range");
        }
        set.accepted_indices.insert(i);
    }
    return set;
}

inline bool is_correct(ClassIndex predicted, const AcceptedClassSet& accepted) {
    return accepted.accepted_indices.count(predicted) != 0;
}

struct RankedClass {
    ClassIndex index;
    double probability;

    bool operator==(const RankedClass&) const = default;
};

/// Highest-probability classes first; equal probabilities keep the lower index first.
inline std::vector<RankedClass> top_k(const ProbabilityVector& p, std::size_t k) {
    if (k == 0 || k > p.size()) {
        fail(ErrorKind::out_of_range,
             "top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(p.size()) + "]");
    }
    std::vector<ClassIndex> order(p.size());
    std::iota(order.begin(), order.end(), ClassIndex{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](ClassIndex a, ClassIndex b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    std::vector<RankedClass> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({order[i], p[order[i]]});
    }
    return out;
}

/// A model or ensemble decision.
struct Prediction {
    ClassIndex index = 0;
    std::string name;
    double probability = 0.0;
};

} // namespace uqbench
