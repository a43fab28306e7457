#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "uqbench/error.hpp"
#include "uqbench/labelspace.hpp"

namespace uqbench {

inline constexpr const char* manifest_version = "1";

struct ManifestEntry {
    std::string image_id;
    std::filesystem::path path;
    std::string ground_truth;
    AcceptedClassSet accepted;
};

struct Manifest {
    std::string version = manifest_version;
    std::vector<ManifestEntry> entries;
};

namespace detail {

inline nlohmann::json read_json(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::invalid_input, std::string("cannot open ") + what + " " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_input, std::string(what) + " " + path.string() + " is not valid JSON: " + e.what());
    }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        fail(ErrorKind::invalid_input, where + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto& v = require(obj, key, where);
    if (!v.is_string() || v.get<std::string>().empty()) {
        fail(ErrorKind::invalid_input, where + ": field '" + key + "' must be a non-empty string");
    }
    return v.get<std::string>();
}

inline void check_version(const nlohmann::json& doc, const char* expected, const std::string& where) {
    const std::string v = require_string(doc, "version", where);
    if (v != expected) {
        fail(ErrorKind::invalid_input, where + ": unsupported version '" + v + "' (expected " + expected + ")");
    }
}

} // namespace detail

/// Parses a manifest document; relative image paths resolve against `base_dir`.
inline Manifest parse_manifest(const nlohmann::json& doc, const LabelCatalog& catalog,
                               const std::filesystem::path& base_dir, const std::string& where = "manifest") {
    detail::check_version(doc, manifest_version, where);
    const auto& images = detail::require(doc, "images", where);
    if (!images.is_array()) {
        fail(ErrorKind::invalid_input, where + ": 'images' must be an array");
    }
    Manifest m;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& item = images[i];
        const std::string at = where + " images[" + std::to_string(i) + "]";
        ManifestEntry e;
        e.image_id = detail::require_string(item, "id", at);
        if (!ids.insert(e.image_id).second) {
            fail(ErrorKind::invalid_input, where + ": duplicate image id '" + e.image_id + "'");
        }
        e.path = detail::require_string(item, "path", at);
        if (e.path.is_relative()) {
            e.path = base_dir / e.path;
        }
        e.ground_truth = detail::require_string(item, "ground_truth", at);
        std::vector<ClassIndex> indices;
        if (item.contains("accepted_classes")) {
            const auto& accepted = item.at("accepted_classes");
            if (!accepted.is_array() || accepted.empty()) {
                fail(ErrorKind::invalid_input, at + ": 'accepted_classes' must be a non-empty array");
            }
            for (const auto& cls : accepted) {
                if (cls.is_string()) {
                    try {
                        indices.push_back(catalog.resolve(cls.get<std::string>()));
                    } catch (const Error& err) {
                        fail(ErrorKind::invalid_input, at + ": " + err.what());
                    }
                } else if (cls.is_number_integer()) {
                    const auto idx = cls.get<long long>();
                    if (idx < 0 || static_cast<std::size_t>(idx) >= catalog.size()) {
                        fail(ErrorKind::invalid_input, at + ": class index " + std::to_string(idx) + " out of range");
                    }
                    indices.push_back(static_cast<ClassIndex>(idx));
                } else {
                    fail(ErrorKind::invalid_input, at + ": accepted classes must be names or indices");
                }
            }
        } else {
            try {
                indices.push_back(catalog.resolve(e.ground_truth));
            } catch (const Error& err) {
                fail(ErrorKind::invalid_input, at + ": no 'accepted_classes' and " + err.what());
            }
        }
        e.accepted = make_accepted_set(catalog, e.ground_truth, indices);
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const LabelCatalog& catalog) {
    const auto doc = detail::read_json(path, "manifest");
    return parse_manifest(doc, catalog, path.parent_path(), path.string());
}

} // namespace uqbench
