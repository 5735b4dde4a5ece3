#pragma once

// Flat key=value run configuration. Every key has a default; unknown keys,
// duplicates and malformed values are rejected with ConfigError.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deepedge/backbone.hpp"
#include "deepedge/bench_eval.hpp"
#include "deepedge/canny.hpp"
#include "deepedge/dataset.hpp"
#include "deepedge/descriptor.hpp"
#include "deepedge/error.hpp"
#include "deepedge/heads.hpp"
#include "deepedge/patching.hpp"

namespace deepedge {

struct RunConfig {
    std::uint64_t seed = 1;

    std::vector<int> backbone_channels{16, 32, 48, 48, 32};
    int target_size = 227;
    std::vector<Scale> scales{{64}, {128}, {196}, {0}};
    std::vector<int> pool_sides{7, 5, 3, 3, 3};
    std::vector<Pooling> poolings{Pooling::average, Pooling::max, Pooling::center};
    std::vector<int> layers{1, 2, 3, 4, 5};  // 1-based in the file and here

    CannyParams canny;
    int match_radius = 1;
    SampleCounts counts;
    TrainConfig train;
    EvalParams eval;
    FastInterp fast_interp = FastInterp::nearest;

    int pretrain_classes = 3;
    int pretrain_per_class = 40;
    int pretrain_epochs = 8;
    float pretrain_lr = 0.01f;
    int pretrain_batch = 8;

    std::string backbone_path = "backbone.bin";
    std::string model_path = "model.bin";
    std::string train_corpus = "corpus/train";
    std::string test_corpus = "corpus/test";

    // Directory relative paths are resolved against (the config file's).
    std::string base_dir = ".";

    std::string resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
    }

    BackboneSpec backbone_spec() const {
        BackboneSpec s = default_backbone_spec(backbone_channels);
        s.input_size = target_size;
        return s;
    }
    ScaleConfig scale_config() const { return {scales, target_size}; }
    PoolingConfig pooling_config() const {
        PoolingConfig p;
        p.sides = pool_sides;
        p.poolings = poolings;
        p.layers.clear();
        for (int l : layers) p.layers.push_back(l - 1);
        return p;
    }
    PretrainConfig pretrain_config() const {
        PretrainConfig p;
        p.epochs = pretrain_epochs;
        p.lr = pretrain_lr;
        p.batch = pretrain_batch;
        p.seed = seed;
        return p;
    }
    TrainConfig train_config() const {
        TrainConfig t = train;
        t.seed = seed;
        return t;
    }

    void validate() const {
        if (backbone_channels.size() != 5) throw ConfigError("backbone_channels needs 5 values");
        for (int c : backbone_channels)
            if (c <= 0) throw ConfigError("backbone_channels must be positive");
        deepedge::validate(backbone_spec());
        scale_config().validate();
        pooling_config().validate(backbone_channels.size());
        canny.validate();
        if (match_radius < 0) throw ConfigError("match_radius must be nonnegative");
        if (counts.positives == 0 || counts.negatives == 0 || counts.holdout == 0)
            throw ConfigError("positives, negatives and holdout must be positive");
        train_config().validate();
        eval.threshold_values();
        if (!(eval.max_dist_frac >= 0.0)) throw ConfigError("max_dist_frac must be nonnegative");
        if (pretrain_classes < 2 || pretrain_per_class <= 0 || pretrain_epochs < 0 || !(pretrain_lr > 0.0f) || pretrain_batch <= 0)
            throw ConfigError("pretraining settings are out of range");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end || v.empty()) throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
    return out;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& item : split_list(v)) out.push_back(parse_number<int>(key, item));
    if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value");
    return out;
}

inline std::string float_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& v, std::string (*fmt)(const T&)) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

inline std::string int_text(const int& v) { return std::to_string(v); }
inline std::string scale_text(const Scale& s) { return scale_name(s); }
inline std::string pooling_text(const Pooling& p) { return pooling_name(p); }

// One entry per key: how to read it from text and how to write it back.
struct ConfigKey {
    const char* name;
    void (*read)(RunConfig&, const std::string& key, const std::string& value);
    std::string (*write)(const RunConfig&);
};

#define DEEPEDGE_NUM_KEY(key, member, type)                                                                      \
    ConfigKey {                                                                                                  \
        key, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<type>(k, v); }, \
            [](const RunConfig& c) { return std::to_string(c.member); }                                          \
    }
#define DEEPEDGE_REAL_KEY(key, member)                                                                            \
    ConfigKey {                                                                                                   \
        key, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<float>(k, v); }, \
            [](const RunConfig& c) { return float_text(c.member); }                                               \
    }
#define DEEPEDGE_PATH_KEY(key, member)                                                                            \
    ConfigKey {                                                                                                   \
        key, [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },                       \
            [](const RunConfig& c) { return c.member; }                                                           \
    }

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        DEEPEDGE_NUM_KEY("seed", seed, std::uint64_t),
        {"backbone_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.backbone_channels = parse_int_list(k, v); },
         [](const RunConfig& c) { return join(c.backbone_channels, int_text); }},
        DEEPEDGE_NUM_KEY("target_size", target_size, int),
        {"scales",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.scales.clear();
             for (const auto& item : split_list(v)) c.scales.push_back({item == "full" ? 0 : parse_number<int>(k, item)});
             for (const auto& s : c.scales)
                 if (!s.full() && s.crop <= 0) throw ConfigError("key 'scales' needs positive crop sizes or 'full'");
         },
         [](const RunConfig& c) { return join(c.scales, scale_text); }},
        {"pool_sides", [](RunConfig& c, const std::string& k, const std::string& v) { c.pool_sides = parse_int_list(k, v); },
         [](const RunConfig& c) { return join(c.pool_sides, int_text); }},
        {"poolings",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.poolings.clear();
             for (const auto& item : split_list(v)) {
                 if (item == "average") c.poolings.push_back(Pooling::average);
                 else if (item == "max") c.poolings.push_back(Pooling::max);
                 else if (item == "center") c.poolings.push_back(Pooling::center);
                 else throw ConfigError("invalid value '" + item + "' for key '" + k + "'");
             }
         },
         [](const RunConfig& c) { return join(c.poolings, pooling_text); }},
        {"layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.layers = parse_int_list(k, v); },
         [](const RunConfig& c) { return join(c.layers, int_text); }},
        DEEPEDGE_REAL_KEY("canny_sigma", canny.gaussian_sigma),
        DEEPEDGE_REAL_KEY("canny_low", canny.low_thresh),
        DEEPEDGE_REAL_KEY("canny_high", canny.high_thresh),
        DEEPEDGE_NUM_KEY("match_radius", match_radius, int),
        DEEPEDGE_NUM_KEY("positives", counts.positives, std::size_t),
        DEEPEDGE_NUM_KEY("negatives", counts.negatives, std::size_t),
        DEEPEDGE_NUM_KEY("holdout", counts.holdout, std::size_t),
        DEEPEDGE_REAL_KEY("lr", train.lr),
        DEEPEDGE_REAL_KEY("dropout", train.dropout),
        DEEPEDGE_NUM_KEY("epochs", train.epochs, int),
        DEEPEDGE_NUM_KEY("batch", train.batch, int),
        DEEPEDGE_NUM_KEY("mining_epoch", train.mining_epoch, int),
        DEEPEDGE_REAL_KEY("fn_threshold", train.fn_threshold),
        DEEPEDGE_NUM_KEY("hidden1", train.hidden1, int),
        DEEPEDGE_NUM_KEY("hidden2", train.hidden2, int),
        DEEPEDGE_NUM_KEY("eval_thresholds", eval.thresholds, int),
        {"max_dist_frac",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.max_dist_frac = parse_number<double>(k, v); },
         [](const RunConfig& c) {
             char buf[40];
             std::snprintf(buf, sizeof buf, "%.17g", c.eval.max_dist_frac);
             return std::string(buf);
         }},
        {"fast_interp",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "nearest") c.fast_interp = FastInterp::nearest;
             else if (v == "bilinear") c.fast_interp = FastInterp::bilinear;
             else throw ConfigError("invalid value '" + v + "' for key '" + k + "'");
         },
         [](const RunConfig& c) { return std::string(c.fast_interp == FastInterp::nearest ? "nearest" : "bilinear"); }},
        DEEPEDGE_NUM_KEY("pretrain_classes", pretrain_classes, int),
        DEEPEDGE_NUM_KEY("pretrain_per_class", pretrain_per_class, int),
        DEEPEDGE_NUM_KEY("pretrain_epochs", pretrain_epochs, int),
        DEEPEDGE_REAL_KEY("pretrain_lr", pretrain_lr),
        DEEPEDGE_NUM_KEY("pretrain_batch", pretrain_batch, int),
        DEEPEDGE_PATH_KEY("backbone_path", backbone_path),
        DEEPEDGE_PATH_KEY("model_path", model_path),
        DEEPEDGE_PATH_KEY("train_corpus", train_corpus),
        DEEPEDGE_PATH_KEY("test_corpus", test_corpus),
    };
    return keys;
}

#undef DEEPEDGE_NUM_KEY
#undef DEEPEDGE_REAL_KEY
#undef DEEPEDGE_PATH_KEY

}  // namespace detail

/// Parses config text. Blank lines and lines starting with '#' are ignored.
/// The result is not validated; call validate() once overrides are applied.
inline RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        const auto& keys = detail::config_keys();
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return key == k.name; });
        if (it == keys.end()) throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(lineno));
        if (seen[key]++) throw ConfigError("config key '" + key + "' given twice");
        it->read(c, key, value);
    }
    return c;
}

inline std::string serialize_run_config(const RunConfig& c) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += std::string(k.name) + "=" + k.write(c) + "\n";
    return out;
}

/// Reads, parses and validates a config file; relative paths inside it are
/// resolved against the file's directory.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    RunConfig c = parse_run_config(ss.str());
    c.base_dir = std::filesystem::absolute(std::filesystem::path(path)).parent_path().string();
    c.validate();
    return c;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_run_config(a) == serialize_run_config(b); }

}  // namespace deepedge
