#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "uqbench/error.hpp"
#include "uqbench/modelzoo.hpp"
#include "uqbench/perturb.hpp"
#include "uqbench/runner/manifest.hpp"
#include "uqbench/saliency.hpp"
#include "uqbench/uncertainty.hpp"

namespace uqbench {

inline constexpr const char* config_version = "1";

struct RunConfig {
    std::vector<MemberId> members = list_members();
    WeightsSource weights_source;
    std::set<int> experiments{1, 2, 3};
    std::vector<PerturbationSpec> perturbations = default_perturbations();
    MemberId robustness_member = MemberId::resnet50;
    SaliencyParams saliency_params;
    PreprocessSpec preprocess;
    VarianceKind variance = VarianceKind::population;
    double overlay_alpha = 0.5;
    std::filesystem::path labels;
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path weights_dir = default_weights_dir();

    void validate() const {
        if (members.empty()) {
            fail(ErrorKind::invalid_input, "config: at least one member is required");
        }
        if (std::set<MemberId>(members.begin(), members.end()).size() != members.size()) {
            fail(ErrorKind::invalid_input, "config: duplicate members");
        }
        for (int e : experiments) {
            if (e < 1 || e > 3) {
                fail(ErrorKind::invalid_input, "config: experiments must be drawn from {1, 2, 3}");
            }
        }
        for (const auto& p : perturbations) {
            p.validate();
        }
        saliency_params.validate();
        preprocess.validate();
        if (!(overlay_alpha >= 0.0 && overlay_alpha <= 1.0)) {
            fail(ErrorKind::invalid_input, "config: overlay_alpha must lie in [0, 1]");
        }
        if (output_dir.empty()) {
            fail(ErrorKind::invalid_input, "config: output_dir must not be empty");
        }
    }
};

inline PerturbationSpec parse_perturbation(const nlohmann::json& j, const std::string& where) {
    PerturbationSpec p;
    p.kind = PerturbationSpec::parse_kind(detail::require_string(j, "kind", where));
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") {
            continue;
        }
        if (!value.is_number()) {
            fail(ErrorKind::invalid_input, where + ": '" + key + "' must be a number");
        }
        if (key == "degrees") {
            p.degrees = value.get<double>();
        } else if (key == "sigma") {
            p.sigma = value.get<double>();
        } else if (key == "shift") {
            p.shift = value.get<double>();
        } else {
            fail(ErrorKind::invalid_input, where + ": unknown perturbation field '" + key + "'");
        }
    }
    p.validate();
    return p;
}

inline nlohmann::json to_json(const PerturbationSpec& p) {
    nlohmann::json j{{"kind", PerturbationSpec::kind_name(p.kind)}};
    if (p.degrees) j["degrees"] = *p.degrees;
    if (p.sigma) j["sigma"] = *p.sigma;
    if (p.shift) j["shift"] = *p.shift;
    return j;
}

/// Parses a run-config document; relative paths resolve against `base_dir`.
inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                              const std::string& where = "config") {
    detail::check_version(doc, config_version, where);
    RunConfig c;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() ? base_dir / path : path;
    };
    auto list = [&](const char* key) -> const nlohmann::json& {
        const auto& v = doc.at(key);
        if (!v.is_array()) {
            fail(ErrorKind::invalid_input, where + ": '" + key + "' must be an array");
        }
        return v;
    };
    try {
        if (doc.contains("members")) {
            c.members.clear();
            for (const auto& m : list("members")) {
                c.members.push_back(parse_member(m.get<std::string>()));
            }
        }
        if (doc.contains("weights_source")) {
            c.weights_source.id = doc.at("weights_source").get<std::string>();
        }
        if (doc.contains("experiments")) {
            c.experiments.clear();
            for (const auto& e : list("experiments")) {
                c.experiments.insert(e.get<int>());
            }
        }
        if (doc.contains("perturbations")) {
            c.perturbations.clear();
            const auto& items = list("perturbations");
            for (std::size_t i = 0; i < items.size(); ++i) {
                c.perturbations.push_back(parse_perturbation(items[i], where + " perturbations[" + std::to_string(i) + "]"));
            }
        }
        if (doc.contains("robustness_member")) {
            c.robustness_member = parse_member(doc.at("robustness_member").get<std::string>());
        }
        if (doc.contains("saliency")) {
            const auto& s = doc.at("saliency");
            c.saliency_params.n_samples = s.value("n_samples", c.saliency_params.n_samples);
            c.saliency_params.sigma_fraction = s.value("sigma_fraction", c.saliency_params.sigma_fraction);
            c.saliency_params.seed = s.value("seed", c.saliency_params.seed);
        }
        if (doc.contains("preprocess")) {
            const auto& p = doc.at("preprocess");
            c.preprocess.resize_short_side = p.value("resize_short_side", c.preprocess.resize_short_side);
            c.preprocess.center_crop = p.value("center_crop", c.preprocess.center_crop);
            c.preprocess.channel_means = p.value("channel_means", c.preprocess.channel_means);
            c.preprocess.channel_stds = p.value("channel_stds", c.preprocess.channel_stds);
        }
        if (doc.contains("variance")) {
            const auto v = doc.at("variance").get<std::string>();
            if (v == "population") {
                c.variance = VarianceKind::population;
            } else if (v == "sample") {
                c.variance = VarianceKind::sample;
            } else {
                fail(ErrorKind::invalid_input, where + ": variance must be 'population' or 'sample'");
            }
        }
        c.overlay_alpha = doc.value("overlay_alpha", c.overlay_alpha);
        if (doc.contains("labels")) c.labels = resolve(doc.at("labels").get<std::string>());
        if (doc.contains("output_dir")) c.output_dir = resolve(doc.at("output_dir").get<std::string>());
        if (doc.contains("cache_dir")) c.cache_dir = resolve(doc.at("cache_dir").get<std::string>());
        if (doc.contains("weights_dir")) c.weights_dir = resolve(doc.at("weights_dir").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_input, where + ": " + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(detail::read_json(path, "config"), path.parent_path(), path.string());
}

} // namespace uqbench
