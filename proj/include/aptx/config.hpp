// Config resolution: defaults < config file < command-line flags, with a
// provenance tag per leaf field.
#pragma once

#include <map>

#include "aptx/train.hpp"

namespace aptx {

enum class Provenance { kDefault, kFile, kFlag };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::kDefault: return "default";
        case Provenance::kFile: return "file";
        case Provenance::kFlag: return "flag";
    }
    return "?";
}

struct ResolvedConfig {
    TrainConfig config;
    std::map<std::string, json> values;           // leaf path -> value
    std::map<std::string, Provenance> provenance; // leaf path -> origin

    // Leaves are dotted paths; arrays (betas, color-shift) count as one leaf.
    static void flatten(const json& j, const std::string& prefix,
                        std::map<std::string, json>& out) {
        for (const auto& [key, value] : j.items()) {
            const std::string path = prefix.empty() ? key : prefix + "." + key;
            if (value.is_object())
                flatten(value, path, out);
            else
                out[path] = value;
        }
    }

    static json unflatten(const std::map<std::string, json>& flat) {
        json out = json::object();
        for (const auto& [path, value] : flat) {
            json* node = &out;
            std::size_t start = 0;
            while (true) {
                const std::size_t dot = path.find('.', start);
                if (dot == std::string::npos) {
                    (*node)[path.substr(start)] = value;
                    break;
                }
                node = &(*node)[path.substr(start, dot - start)];
                start = dot + 1;
            }
        }
        return out;
    }

    static ResolvedConfig resolve(const json* file, const json& flags) {
        ResolvedConfig rc;
        std::map<std::string, json> flat;
        flatten(train_config_to_json(TrainConfig{}), "", flat);
        for (const auto& [path, value] : flat) rc.provenance[path] = Provenance::kDefault;
        if (file) {
            std::map<std::string, json> file_flat;
            flatten(*file, "", file_flat);
            for (const auto& [path, value] : file_flat) {
                if (!flat.count(path))
                    throw ConfigError(cat("unknown config field: ", path));
                flat[path] = value;
                rc.provenance[path] = Provenance::kFile;
            }
        }
        std::map<std::string, json> flag_flat;
        flatten(flags, "", flag_flat);
        for (const auto& [path, value] : flag_flat) {
            if (!flat.count(path)) throw ConfigError(cat("unknown config field: ", path));
            flat[path] = value;
            rc.provenance[path] = Provenance::kFlag;
        }
        rc.values = flat;
        rc.config = train_config_from_json(unflatten(flat));
        rc.config.validate();
        return rc;
    }

    std::string describe() const {
        std::string out;
        for (const auto& [path, value] : values)
            out += cat(path, " = ", value.dump(), "  (", provenance_name(provenance.at(path)),
                       ")\n");
        return out;
    }
};

}  // namespace aptx
