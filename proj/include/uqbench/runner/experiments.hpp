#pragma once

// Orchestration of the three experiments over a manifest, with a
// probability/saliency cache in front of every model invocation.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uqbench/ensemble.hpp"
#include "uqbench/error.hpp"
#include "uqbench/image.hpp"
#include "uqbench/labelspace.hpp"
#include "uqbench/modelzoo.hpp"
#include "uqbench/perturb.hpp"
#include "uqbench/runner/cache.hpp"
#include "uqbench/runner/config.hpp"
#include "uqbench/runner/manifest.hpp"
#include "uqbench/runner/report.hpp"
#include "uqbench/saliency.hpp"
#include "uqbench/uncertainty.hpp"

namespace uqbench {

struct RunStats {
    std::size_t model_invocations = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

struct ImageFailure {
    std::string image_id;
    int experiment = 0;
    std::string message;
};

struct RunResult {
    std::vector<std::filesystem::path> files;
    std::vector<ImageFailure> failures;

    bool partial() const { return !failures.empty(); }

    void merge(RunResult other) {
        files.insert(files.end(), other.files.begin(), other.files.end());
        failures.insert(failures.end(), other.failures.begin(), other.failures.end());
    }
};

using MemberFactory = std::function<std::unique_ptr<Classifier>(MemberId)>;

/// Filesystem-safe form of an identifier.
inline std::string file_stem(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                          c == '_' || c == '.';
        out += keep ? c : '_';
    }
    return out.empty() ? "_" : out;
}

class Runner {
public:
    Runner(RunConfig config, LabelCatalog catalog, ReportFormat format = ReportFormat::csv,
           MemberFactory factory = {})
        : config_(std::move(config)), catalog_(std::move(catalog)), format_(format), factory_(std::move(factory)),
          cache_(config_.cache_dir) {
        config_.validate();
        if (!factory_) {
            factory_ = [src = config_.weights_source, dir = config_.weights_dir, ps = config_.preprocess](MemberId id) {
                return std::unique_ptr<Classifier>(load_member(id, src, dir, ps));
            };
        }
    }

    const RunConfig& config() const noexcept { return config_; }
    const RunStats& stats() const noexcept { return stats_; }
    const LabelCatalog& catalog() const noexcept { return catalog_; }

    RunResult run(const Manifest& manifest) {
        RunResult result;
        for (int e : config_.experiments) {
            result.merge(run_experiment(manifest, e));
        }
        return result;
    }

    RunResult run_experiment(const Manifest& manifest, int which) {
        std::filesystem::create_directories(config_.output_dir);
        switch (which) {
        case 1: return classify(manifest);
        case 2: return quantify(manifest);
        case 3: return perturb(manifest);
        default: fail(ErrorKind::invalid_input, "experiment must be 1, 2 or 3");
        }
    }

    /// Probability vector for one member on one (optionally perturbed) image.
    ProbabilityVector probabilities(MemberId id, const ManifestEntry& entry,
                                    const std::optional<PerturbationSpec>& spec) {
        const auto& img = image(entry);
        const std::string key = "probs|v1|member=" + std::string(to_string(id)) +
                                "|weights=" + config_.weights_source.id + "|preprocess=" + config_.preprocess.describe() +
                                "|image=" + img.digest + "|perturb=" + (spec ? spec->describe() : "none");
        if (auto hit = cache_.get("probs", key); hit && hit->size() == catalog_.size()) {
            ++stats_.cache_hits;
            return *hit;
        }
        ++stats_.cache_misses;
        Classifier& m = member(id);
        const Image input = spec ? apply_perturbation(img.image, *spec) : img.image;
        ++stats_.model_invocations;
        ProbabilityVector p = predict(m, preprocess<float>(input, config_.preprocess));
        cache_.put("probs", key, p);
        return p;
    }

    MemberPredictionSet prediction_set(const ManifestEntry& entry, const std::optional<PerturbationSpec>& spec = {}) {
        MemberPredictionSet set{entry.image_id, {}};
        for (MemberId id : config_.members) {
            set.entries.push_back({std::string(to_string(id)), probabilities(id, entry, spec)});
        }
        return set;
    }

    /// Ensemble SmoothGrad map over `members` for `cls`.
    SaliencyMap saliency(const std::vector<MemberId>& members, const ManifestEntry& entry,
                         const std::optional<PerturbationSpec>& spec, ClassIndex cls) {
        if (members.empty()) {
            fail(ErrorKind::invalid_input, "saliency needs at least one member");
        }
        const auto& img = image(entry);
        std::string names;
        for (MemberId id : members) {
            names += (names.empty() ? "" : ",") + std::string(to_string(id));
        }
        const PreprocessSpec& ps = config_.preprocess;
        const auto& sp = config_.saliency_params;
        char sigma[64];
        std::snprintf(sigma, sizeof(sigma), "%.17g", sp.sigma_fraction);
        const std::string key = "saliency|v1|members=" + names + "|weights=" + config_.weights_source.id +
                                "|preprocess=" + ps.describe() + "|image=" + img.digest +
                                "|perturb=" + (spec ? spec->describe() : "none") + "|class=" + std::to_string(cls) +
                                "|n=" + std::to_string(sp.n_samples) + "|sigma=" + sigma +
                                "|seed=" + std::to_string(sp.seed);
        const auto side = static_cast<std::size_t>(ps.center_crop);
        SaliencyMap map;
        if (auto hit = cache_.get("saliency", key); hit && hit->size() == side * side) {
            ++stats_.cache_hits;
            map.height = map.width = side;
            map.values = std::move(*hit);
            map.method = SaliencyMethod::ensemble_smoothgrad;
        } else {
            ++stats_.cache_misses;
            std::vector<Classifier*> handles;
            for (MemberId id : members) {
                handles.push_back(&member(id));
            }
            const Image input = spec ? apply_perturbation(img.image, *spec) : img.image;
            const Tensor<float> x = preprocess<float>(input, ps);
            stats_.model_invocations += handles.size() * static_cast<std::size_t>(sp.n_samples);
            map = ensemble_saliency<float>(std::span<Classifier* const>(handles), x, cls, sp);
            cache_.put("saliency", key, map.values);
        }
        map.image_id = entry.image_id;
        map.target_class = cls;
        map.params = sp;
        return map;
    }

    /// Saliency maps for every manifest image at the ensemble decision of
    /// `members` (all configured members when empty).
    RunResult saliency_maps(const Manifest& manifest, std::vector<MemberId> members = {},
                            std::optional<ClassIndex> target = std::nullopt) {
        if (members.empty()) {
            members = config_.members;
        }
        const auto dir = config_.output_dir / "saliency";
        std::filesystem::create_directories(dir);
        RunResult result;
        for (const auto& entry : manifest.entries) {
            try {
                ClassIndex cls = 0;
                if (target) {
                    cls = *target;
                } else {
                    MemberPredictionSet set{entry.image_id, {}};
                    for (MemberId id : members) {
                        set.entries.push_back({std::string(to_string(id)), probabilities(id, entry, std::nullopt)});
                    }
                    cls = ensemble_predict(set).index;
                }
                const SaliencyMap map = saliency(members, entry, std::nullopt, cls);
                write_saliency(dir, file_stem(entry.image_id), map, entry, std::nullopt, result);
            } catch (const std::exception& e) {
                result.failures.push_back({entry.image_id, 0, e.what()});
            }
        }
        return result;
    }

private:
    struct LoadedImage {
        Image image;
        std::string digest;
    };

    const LoadedImage& image(const ManifestEntry& entry) {
        auto it = images_.find(entry.image_id);
        if (it != images_.end()) {
            return it->second;
        }
        const auto bytes = read_file_bytes(entry.path);
        LoadedImage loaded{decode_image(bytes, entry.path.string()), sha256_hex(bytes)};
        return images_.emplace(entry.image_id, std::move(loaded)).first->second;
    }

    Classifier& member(MemberId id) {
        auto it = members_.find(id);
        if (it == members_.end()) {
            auto handle = factory_(id);
            if (!handle) {
                fail(ErrorKind::weights_unavailable, "no model available for " + std::string(to_string(id)));
            }
            if (handle->input_spec().describe() != config_.preprocess.describe() ||
                handle->num_classes() != catalog_.size()) {
                fail(ErrorKind::invalid_input, handle->name() + " does not match the run's preprocessing or label space");
            }
            it = members_.emplace(id, std::move(handle)).first;
        }
        return *it->second;
    }

    std::filesystem::path report_path(const std::string& stem) const {
        return config_.output_dir / (stem + std::string(extension(format_)));
    }

    void write_table(const ReportTable& table, const std::string& stem, RunResult& result) const {
        const auto path = report_path(stem);
        emit_report(table, format_, path);
        result.files.push_back(path);
    }

    void write_failures(int experiment, RunResult& result) const {
        ReportTable t{{"Image", "Experiment", "Message"}, {}};
        for (const auto& f : result.failures) {
            if (f.experiment == experiment) {
                t.add_row({f.image_id, std::to_string(f.experiment), f.message});
            }
        }
        write_table(t, "exp" + std::to_string(experiment) + "_errors", result);
    }

    void write_saliency(const std::filesystem::path& dir, const std::string& stem, const SaliencyMap& map,
                        const ManifestEntry& entry, const std::optional<PerturbationSpec>& spec,
                        RunResult& result) {
        const auto& img = image(entry);
        const Image shown = spec ? apply_perturbation(img.image, *spec) : img.image;
        const Image view = preprocess_view(shown, config_.preprocess);
        const auto csv = dir / (stem + ".csv");
        const auto png = dir / (stem + ".png");
        write_grid_csv(csv, map);
        save_png(png, overlay(map, view, config_.overlay_alpha));
        result.files.push_back(csv);
        result.files.push_back(png);
    }

    // Per-model predictions (one row per member, one column per image) plus
    // per-image voting outcomes and accuracy counts.
    RunResult classify(const Manifest& manifest) {
        RunResult result;
        std::vector<std::optional<MemberPredictionSet>> sets;
        for (const auto& entry : manifest.entries) {
            try {
                sets.emplace_back(prediction_set(entry));
            } catch (const std::exception& e) {
                sets.emplace_back(std::nullopt);
                result.failures.push_back({entry.image_id, 1, e.what()});
            }
        }

        ReportTable predictions{{"Model"}, {}};
        for (const auto& entry : manifest.entries) {
            predictions.columns.push_back(entry.image_id);
        }
        std::vector<std::size_t> correct(config_.members.size() + 1, 0);
        std::size_t evaluated = 0;
        for (std::size_t m = 0; m < config_.members.size(); ++m) {
            std::vector<std::string> row{std::string(to_string(config_.members[m]))};
            for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
                if (!sets[i]) {
                    row.emplace_back("ERROR");
                    continue;
                }
                const ClassIndex c = argmax(sets[i]->entries[m].probs);
                row.push_back(catalog_.name(c));
                correct[m] += is_correct(c, manifest.entries[i].accepted) ? 1 : 0;
            }
            predictions.add_row(std::move(row));
        }

        ReportTable votes{{"Image", "Ground Truth"}, {}};
        for (MemberId id : config_.members) {
            votes.columns.emplace_back(to_string(id));
        }
        for (const char* c : {"Majority vote", "Plurality vote", "Ensemble", "Ensemble probability"}) {
            votes.columns.emplace_back(c);
        }
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            if (!sets[i]) {
                continue;
            }
            ++evaluated;
            const auto labels = member_votes(*sets[i]);
            std::vector<std::string> row{manifest.entries[i].image_id, manifest.entries[i].ground_truth};
            for (ClassIndex c : labels) {
                row.push_back(catalog_.name(c));
            }
            const Prediction ens = ensemble_predict(*sets[i], catalog_);
            correct.back() += is_correct(ens.index, manifest.entries[i].accepted) ? 1 : 0;
            row.push_back(describe(majority_vote(labels), catalog_));
            row.push_back(describe(plurality_vote(labels), catalog_));
            row.push_back(ens.name);
            row.push_back(format_fixed(ens.probability));
            votes.add_row(std::move(row));
        }

        ReportTable accuracy{{"Model", "Correct", "Evaluated"}, {}};
        for (std::size_t m = 0; m <= config_.members.size(); ++m) {
            const std::string name = m < config_.members.size() ? std::string(to_string(config_.members[m])) : "ensemble";
            accuracy.add_row({name, std::to_string(correct[m]), std::to_string(evaluated)});
        }

        write_table(predictions, "exp1_predictions", result);
        write_table(votes, "exp1_votes", result);
        write_table(accuracy, "exp1_accuracy", result);
        write_failures(1, result);
        return result;
    }

    // Uncertainty records ranked most-uncertain first, plus ensemble saliency maps.
    RunResult quantify(const Manifest& manifest) {
        RunResult result;
        std::vector<UncertaintyRecord> records;
        const auto dir = config_.output_dir / "exp2_saliency";
        std::filesystem::create_directories(dir);
        for (const auto& entry : manifest.entries) {
            try {
                const auto set = prediction_set(entry);
                UncertaintyRecord record = build_record(set, entry.ground_truth, catalog_, config_.variance);
                const SaliencyMap map = saliency(config_.members, entry, std::nullopt, record.ensemble_class);
                write_saliency(dir, file_stem(entry.image_id), map, entry, std::nullopt, result);
                records.push_back(std::move(record));
            } catch (const std::exception& e) {
                result.failures.push_back({entry.image_id, 2, e.what()});
            }
        }
        write_table(uncertainty_table(rank_by_uncertainty(std::move(records))), "exp2_uncertainty", result);
        write_failures(2, result);
        return result;
    }

    // Robustness of a single member under each configured perturbation, with
    // before/after saliency maps.
    RunResult perturb(const Manifest& manifest) {
        RunResult result;
        std::vector<RobustnessRecord> records;
        const auto dir = config_.output_dir / "exp3_saliency";
        std::filesystem::create_directories(dir);
        const MemberId id = config_.robustness_member;
        for (const auto& entry : manifest.entries) {
            try {
                ImagePredictor predictor = [&](const Image&, const std::optional<PerturbationSpec>& spec) {
                    return probabilities(id, entry, spec);
                };
                auto rows = robustness_eval(predictor, entry.image_id, image(entry).image, config_.perturbations,
                                            entry.accepted, catalog_);
                if (!rows.empty()) {
                    const std::string stem = file_stem(entry.image_id);
                    const SaliencyMap before = saliency({id}, entry, std::nullopt, rows.front().original_prediction.index);
                    write_saliency(dir, stem + "__original", before, entry, std::nullopt, result);
                    for (const auto& r : rows) {
                        const SaliencyMap after = saliency({id}, entry, r.spec, r.perturbed_prediction.index);
                        write_saliency(dir, stem + "__" + file_stem(r.spec.describe()), after, entry, r.spec, result);
                    }
                }
                records.insert(records.end(), rows.begin(), rows.end());
            } catch (const std::exception& e) {
                result.failures.push_back({entry.image_id, 3, e.what()});
            }
        }
        write_table(robustness_table(records), "exp3_robustness", result);
        write_failures(3, result);
        return result;
    }

    RunConfig config_;
    LabelCatalog catalog_;
    ReportFormat format_;
    MemberFactory factory_;
    VectorCache cache_;
    RunStats stats_;
    std::map<MemberId, std::unique_ptr<Classifier>> members_;
    std::map<std::string, LoadedImage> images_;
};

} // namespace uqbench
