#include "fernnet/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace fernnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const auto r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const auto r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

}  // namespace

std::optional<std::string> KvFile::Section::get(const std::string& key) const {
    for (const auto& e : entries)
        if (e.key == key) return e.value;
    return std::nullopt;
}

KvFile KvFile::parse(const std::string& text, const std::string& origin) {
    KvFile kv;
    kv.sections.push_back({"", {}});
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            }
            kv.sections.push_back({trim(t.substr(1, t.size() - 2)), {}});
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                              t + "'");
        }
        Entry e{trim(t.substr(0, eq)), trim(t.substr(eq + 1))};
        if (e.key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        kv.sections.back().entries.push_back(std::move(e));
    }
    return kv;
}

KvFile KvFile::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

const KvFile::Section* KvFile::find(const std::string& name) const {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

std::string KvFile::serialize() const {
    std::ostringstream out;
    for (const auto& s : sections) {
        if (s.name.empty() && s.entries.empty()) continue;
        if (!s.name.empty()) out << '[' << s.name << "]\n";
        for (const auto& e : s.entries) out << e.key << " = " << e.value << '\n';
    }
    return out.str();
}

namespace {

LayerSpec parse_layer(const std::string& value, const std::string& key) {
    if (value == "pool") return LayerSpec::pool();
    const auto parts = split(value, ',');
    if (parts.size() != 6 && parts.size() != 7) {
        throw ConfigError("key '" + key +
                          "': expected 'c_in,c_out,kernel,stride,padding,norm[,backbone]' or 'pool'");
    }
    NormKind norm;
    if (parts[5] == "bn") {
        norm = NormKind::BatchNorm;
    } else if (parts[5] == "none" || parts[5] == "-") {
        norm = NormKind::None;
    } else {
        throw ConfigError("key '" + key + "': unknown norm '" + parts[5] + "'");
    }
    auto spec = LayerSpec::backbone(parse_u64(parts[0], key), parse_u64(parts[1], key),
                                    parse_u64(parts[2], key), parse_u64(parts[3], key),
                                    parse_u64(parts[4], key), norm);
    if (parts.size() == 7) spec.backbone_override = backbone_from_name(parts[6]);
    return spec;
}

}  // namespace

ModelConfig model_config_from_kv(const KvFile& kv) {
    const auto* sec = kv.find("model");
    if (!sec) throw ConfigError("config has no [model] section");
    ModelConfig cfg;
    std::map<std::size_t, LayerSpec> layers;
    for (const auto& e : sec->entries) {
        if (e.key == "backbone") {
            cfg.backbone = backbone_from_name(e.value);
        } else if (e.key == "seed") {
            cfg.seed = parse_u64(e.value, e.key);
        } else if (e.key == "dtype") {
            if (e.value == "f32") {
                cfg.dtype = DType::F32;
            } else if (e.value == "f64") {
                cfg.dtype = DType::F64;
            } else {
                throw ConfigError("key 'dtype': expected f32 or f64, got '" + e.value + "'");
            }
        } else if (e.key == "ferns") {
            cfg.ferns = parse_u64(e.value, e.key);
        } else if (e.key == "depth") {
            cfg.depth = parse_u64(e.value, e.key);
        } else if (e.key == "weight_mode") {
            cfg.weight_mode = weight_mode_from_name(e.value);
        } else if (e.key == "thresholds_trainable") {
            cfg.thresholds_trainable = parse_bool(e.value, e.key);
        } else if (e.key.rfind("layer", 0) == 0) {
            const std::size_t n = parse_u64(e.key.substr(5), e.key);
            if (n == 0 || layers.count(n)) {
                throw ConfigError("duplicate or zero-indexed layer key '" + e.key + "'");
            }
            layers.emplace(n, parse_layer(e.value, e.key));
        } else {
            throw ConfigError("unknown [model] key '" + e.key + "'");
        }
    }
    if (layers.empty()) throw ConfigError("config defines no layers");
    std::size_t expect = 1;
    for (const auto& [n, spec] : layers) {
        if (n != expect) {
            throw ConfigError("layer keys must be consecutive from layer1; missing layer" +
                              std::to_string(expect));
        }
        cfg.layers.push_back(spec);
        ++expect;
    }
    cfg.validate();
    return cfg;
}

std::string model_config_to_text(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "[model]\n";
    out << "backbone = " << backbone_name(cfg.backbone) << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "dtype = " << dtype_name(cfg.dtype) << '\n';
    out << "ferns = " << cfg.ferns << '\n';
    out << "depth = " << cfg.depth << '\n';
    out << "weight_mode = " << weight_mode_name(cfg.weight_mode) << '\n';
    out << "thresholds_trainable = " << (cfg.thresholds_trainable ? "true" : "false") << '\n';
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        out << "layer" << (i + 1) << " = ";
        if (l.kind == LayerSpec::Kind::Pool) {
            out << "pool";
        } else {
            out << l.c_in << ',' << l.c_out << ',' << l.k << ',' << l.stride << ',' << l.padding << ','
                << (l.norm == NormKind::BatchNorm ? "bn" : "none");
            if (l.backbone_override) out << ',' << backbone_name(*l.backbone_override);
        }
        out << '\n';
    }
    return out.str();
}

TrainConfig train_config_from_kv(const KvFile& kv) {
    TrainConfig cfg;
    const auto* sec = kv.find("train");
    if (!sec) return cfg;
    for (const auto& e : sec->entries) {
        if (e.key == "optimizer") {
            cfg.optimizer = optim_from_name(e.value);
        } else if (e.key == "lr") {
            cfg.lr = parse_double(e.value, e.key);
        } else if (e.key == "momentum") {
            cfg.momentum = parse_double(e.value, e.key);
        } else if (e.key == "beta1") {
            cfg.beta1 = parse_double(e.value, e.key);
        } else if (e.key == "beta2") {
            cfg.beta2 = parse_double(e.value, e.key);
        } else if (e.key == "batch_size") {
            cfg.batch_size = parse_u64(e.value, e.key);
        } else if (e.key == "epochs") {
            cfg.epochs = parse_u64(e.value, e.key);
        } else if (e.key == "seed") {
            cfg.seed = parse_u64(e.value, e.key);
        } else {
            throw ConfigError("unknown [train] key '" + e.key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

}  // namespace fernnet
