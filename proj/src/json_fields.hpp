#pragma once

// Field-level readers over nlohmann::json that report the dotted path of the
// offending field on any schema problem.

#include <cmath>
#include <initializer_list>
#include <string>

#include "clmac/error.hpp"
#include "json.hpp"

namespace clmac::detail {

using Json = nlohmann::json;

inline std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

inline void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || it.key() == k;
        }
        if (!ok) {
            throw ConfigError(join_path(path, it.key()) + ": unknown field");
        }
    }
}

inline const Json* section(const Json& doc, const std::string& parent, const char* key) {
    if (!doc.contains(key)) {
        return nullptr;
    }
    const Json& s = doc.at(key);
    if (!s.is_object()) {
        throw ConfigError(join_path(parent, key) + ": expected an object");
    }
    return &s;
}

inline double read_number(const Json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const Json& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError(join_path(path, key) + ": expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ConfigError(join_path(path, key) + ": must be finite");
    }
    return x;
}

inline long long read_int(const Json& obj, const std::string& path, const char* key, long long fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const Json& v = obj.at(key);
    if (!v.is_number_integer()) {
        throw ConfigError(join_path(path, key) + ": expected an integer");
    }
    return v.get<long long>();
}

inline bool read_bool(const Json& obj, const std::string& path, const char* key, bool fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const Json& v = obj.at(key);
    if (!v.is_boolean()) {
        throw ConfigError(join_path(path, key) + ": expected true or false");
    }
    return v.get<bool>();
}

inline std::string read_string(const Json& obj, const std::string& path, const char* key, std::string fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const Json& v = obj.at(key);
    if (!v.is_string()) {
        throw ConfigError(join_path(path, key) + ": expected a string");
    }
    return v.get<std::string>();
}

inline Json parse_document(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config root must be an object");
    }
    return doc;
}

}  // namespace clmac::detail
