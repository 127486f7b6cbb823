#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errdetect/common.hpp"
#include "errdetect/detector.hpp"
#include "errdetect/harness.hpp"

namespace errdetect {

// Everything a command can be configured with. Loaded from JSON, then overridden by flags.
struct RunConfig {
    struct Paths {
        std::string data;
        std::string constraints;
        std::string labels;
        std::string truth;
        std::string model;
        std::string output;
        std::string report_dir;
        bool operator==(const Paths&) const = default;
    } paths;

    // Detector.
    int epochs = 500;
    std::size_t batch_size = 5;
    double learning_rate = 1e-3;
    std::size_t hidden = 64;
    int calibration_epochs = 100;
    int embedding_dim = 50;
    int embedding_epochs = 5;
    std::vector<std::string> disabled_features;
    bool augment = true;
    double alpha = 0.5;
    std::vector<double> alpha_grid;
    std::size_t min_pairs = 20;
    double weak_threshold = 0.90;
    std::optional<double> target_error_ratio;
    double threshold = 0.5;
    double holdout_fraction = 0.10;
    std::uint64_t seed = 0;

    // Error injection and benchmarks.
    double error_rate = 0.05;
    std::vector<double> error_mix{1.0, 0.0, 0.0, 0.0};
    std::size_t seeds = 5;
    std::size_t n_tuples = 1000;
    double train_fraction = 0.10;
    std::vector<double> train_fractions{0.01};
    std::vector<double> balance_ratios{0.05, 0.20, 0.35, 0.50, 0.65, 0.80, 0.95};
    std::vector<std::string> ablation_groups;

    bool operator==(const RunConfig&) const = default;

    FeatureMask feature_mask() const {
        FeatureMask m;
        for (const auto& name : disabled_features) {
            auto g = feature_group_from_string(name);
            if (!g) throw ConfigError("unknown feature group '" + name + "'");
            m.set(*g, false);
        }
        return m;
    }

    DetectorConfig detector() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
        if (epochs <= 0) throw ConfigError("epochs must be positive");
        if (batch_size == 0) throw ConfigError("batch size must be positive");
        DetectorConfig d;
        d.train.epochs = epochs;
        d.train.batch_size = batch_size;
        d.train.learning_rate = learning_rate;
        d.train.hidden = hidden;
        d.train.calibration_epochs = calibration_epochs;
        d.train.seed = seed;
        d.features.embedding.dims = embedding_dim;
        d.features.embedding.epochs = embedding_epochs;
        d.features.embedding.seed = seed;
        d.features.mask = feature_mask();
        d.augment = augment;
        d.augmentation.alpha = alpha;
        d.augmentation.seed = seed * 31 + 1;
        d.alpha_grid = alpha_grid;
        d.min_pairs = min_pairs;
        d.weak_labels.threshold = weak_threshold;
        d.target_error_ratio = target_error_ratio;
        d.threshold = threshold;
        return d;
    }

    std::array<double, 4> mix() const {
        if (error_mix.size() != 4) throw ConfigError("error_mix needs 4 proportions");
        return {error_mix[0], error_mix[1], error_mix[2], error_mix[3]};
    }

    ExperimentConfig experiment() const {
        if (seeds == 0) throw ConfigError("seeds must be positive");
        ExperimentConfig e;
        e.seeds.clear();
        for (std::uint64_t s = 1; s <= seeds; ++s) e.seeds.push_back(s);
        e.n_tuples = n_tuples;
        e.error_rate = error_rate;
        e.error_mix = mix();
        e.train_fraction = train_fraction;
        e.holdout_fraction = holdout_fraction;
        e.detector = detector();
        e.train_fractions = train_fractions;
        e.balance_ratios = balance_ratios;
        if (!ablation_groups.empty()) {
            e.ablation_groups.clear();
            for (const auto& name : ablation_groups) {
                auto g = feature_group_from_string(name);
                if (!g) throw ConfigError("unknown feature group '" + name + "'");
                e.ablation_groups.push_back(*g);
            }
        }
        return e;
    }
};

inline void to_json(nlohmann::json& j, const RunConfig::Paths& p) {
    j = {{"data", p.data},   {"constraints", p.constraints}, {"labels", p.labels},        {"truth", p.truth},
         {"model", p.model}, {"output", p.output},           {"report_dir", p.report_dir}};
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"paths", c.paths},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"hidden", c.hidden},
         {"calibration_epochs", c.calibration_epochs},
         {"embedding_dim", c.embedding_dim},
         {"embedding_epochs", c.embedding_epochs},
         {"disabled_features", c.disabled_features},
         {"augment", c.augment},
         {"alpha", c.alpha},
         {"alpha_grid", c.alpha_grid},
         {"min_pairs", c.min_pairs},
         {"weak_threshold", c.weak_threshold},
         {"target_error_ratio", c.target_error_ratio ? nlohmann::json(*c.target_error_ratio) : nlohmann::json()},
         {"threshold", c.threshold},
         {"holdout_fraction", c.holdout_fraction},
         {"seed", c.seed},
         {"error_rate", c.error_rate},
         {"error_mix", c.error_mix},
         {"seeds", c.seeds},
         {"n_tuples", c.n_tuples},
         {"train_fraction", c.train_fraction},
         {"train_fractions", c.train_fractions},
         {"balance_ratios", c.balance_ratios},
         {"ablation_groups", c.ablation_groups}};
}

namespace detail {
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}
}  // namespace detail

// Missing fields keep their current values; unknown fields are rejected.
inline void merge_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    nlohmann::json reference;
    to_json(reference, RunConfig{});
    for (const auto& [key, value] : j.items())
        if (!reference.contains(key)) throw ConfigError("unknown config field '" + key + "'");
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        if (!p.is_object()) throw ConfigError("config field 'paths' must be an object");
        for (const auto& [key, value] : p.items())
            if (!reference["paths"].contains(key)) throw ConfigError("unknown config field 'paths." + key + "'");
        detail::read_field(p, "data", c.paths.data);
        detail::read_field(p, "constraints", c.paths.constraints);
        detail::read_field(p, "labels", c.paths.labels);
        detail::read_field(p, "truth", c.paths.truth);
        detail::read_field(p, "model", c.paths.model);
        detail::read_field(p, "output", c.paths.output);
        detail::read_field(p, "report_dir", c.paths.report_dir);
    }
    detail::read_field(j, "epochs", c.epochs);
    detail::read_field(j, "batch_size", c.batch_size);
    detail::read_field(j, "learning_rate", c.learning_rate);
    detail::read_field(j, "hidden", c.hidden);
    detail::read_field(j, "calibration_epochs", c.calibration_epochs);
    detail::read_field(j, "embedding_dim", c.embedding_dim);
    detail::read_field(j, "embedding_epochs", c.embedding_epochs);
    detail::read_field(j, "disabled_features", c.disabled_features);
    detail::read_field(j, "augment", c.augment);
    detail::read_field(j, "alpha", c.alpha);
    detail::read_field(j, "alpha_grid", c.alpha_grid);
    detail::read_field(j, "min_pairs", c.min_pairs);
    detail::read_field(j, "weak_threshold", c.weak_threshold);
    if (j.contains("target_error_ratio")) {
        if (j.at("target_error_ratio").is_null())
            c.target_error_ratio.reset();
        else {
            double r = 0.0;
            detail::read_field(j, "target_error_ratio", r);
            c.target_error_ratio = r;
        }
    }
    detail::read_field(j, "threshold", c.threshold);
    detail::read_field(j, "holdout_fraction", c.holdout_fraction);
    detail::read_field(j, "seed", c.seed);
    detail::read_field(j, "error_rate", c.error_rate);
    detail::read_field(j, "error_mix", c.error_mix);
    detail::read_field(j, "seeds", c.seeds);
    detail::read_field(j, "n_tuples", c.n_tuples);
    detail::read_field(j, "train_fraction", c.train_fraction);
    detail::read_field(j, "train_fractions", c.train_fractions);
    detail::read_field(j, "balance_ratios", c.balance_ratios);
    detail::read_field(j, "ablation_groups", c.ablation_groups);
}

inline std::string config_to_string(const RunConfig& c) {
    nlohmann::json j;
    to_json(j, c);
    return j.dump(2);
}

inline RunConfig config_from_string(const std::string& text, RunConfig base = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    merge_json(base, j);
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_string(ss.str(), std::move(base));
}

}  // namespace errdetect
