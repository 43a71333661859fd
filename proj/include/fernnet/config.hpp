#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fernnet/model.hpp"
#include "fernnet/optim.hpp"

namespace fernnet {

// Line-based "key = value" files with [section] headers and '#' comments.
struct KvFile {
    struct Entry {
        std::string key, value;
    };
    struct Section {
        std::string name;  // "" for entries before any header
        std::vector<Entry> entries;

        std::optional<std::string> get(const std::string& key) const;
    };

    std::vector<Section> sections;

    static KvFile parse(const std::string& text, const std::string& origin = "<string>");
    static KvFile parse_file(const std::string& path);

    const Section* find(const std::string& name) const;
    std::string serialize() const;
};

// [model] section <-> ModelConfig. Layer lines are either
// "c_in,c_out,kernel,stride,padding,norm[,backbone]" or "pool".
ModelConfig model_config_from_kv(const KvFile& kv);
std::string model_config_to_text(const ModelConfig& cfg);

// [train] section with defaults for anything unspecified.
TrainConfig train_config_from_kv(const KvFile& kv);

}  // namespace fernnet
