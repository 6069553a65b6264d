#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "earn/entity.hpp"
#include "earn/model.hpp"
#include "earn/reconstruct.hpp"
#include "earn/visual_encoder.hpp"

namespace earn {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string to_string(FilterMode m) {
    switch (m) {
        case FilterMode::none: return "none";
        case FilterMode::soft: return "soft";
        case FilterMode::hard: return "hard";
    }
    return "none";
}

inline FilterMode filter_mode_from_string(const std::string& s) {
    if (s == "none") return FilterMode::none;
    if (s == "soft") return FilterMode::soft;
    if (s == "hard") return FilterMode::hard;
    throw ConfigError("unknown filter_mode: " + s);
}

inline std::string to_string(ContextMode m) {
    switch (m) {
        case ContextMode::five_nearest: return "5cxtp";
        case ContextMode::max_all: return "mcxtp";
        case ContextMode::soft_all: return "scxtp";
    }
    return "scxtp";
}

inline ContextMode context_mode_from_string(const std::string& s) {
    if (s == "5cxtp") return ContextMode::five_nearest;
    if (s == "mcxtp") return ContextMode::max_all;
    if (s == "scxtp") return ContextMode::soft_all;
    throw ConfigError("unknown context_mode: " + s);
}

inline std::string to_string(ContextLocation m) {
    switch (m) {
        case ContextLocation::relative: return "relative";
        case ContextLocation::absolute: return "absolute";
        case ContextLocation::concat: return "concat";
    }
    return "relative";
}

inline ContextLocation context_location_from_string(const std::string& s) {
    if (s == "relative") return ContextLocation::relative;
    if (s == "absolute") return ContextLocation::absolute;
    if (s == "concat") return ContextLocation::concat;
    throw ConfigError("unknown context_location: " + s);
}

inline std::string to_string(nn::InitScheme s) { return s == nn::InitScheme::glorot ? "glorot" : "uniform"; }

inline nn::InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "glorot") return nn::InitScheme::glorot;
    if (s == "uniform") return nn::InitScheme::uniform;
    throw ConfigError("unknown init: " + s);
}

/// Everything that determines a training run besides the dataset.
struct TrainConfig {
    double learning_rate = 4e-4;
    double lr_decay_factor = 10.0;
    int lr_decay_every = 8000;
    int max_iterations = 30000;
    LossCoefficients coef;
    ModelConfig model;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Optional word-vector file; empty selects the orthogonal table over the dataset vocabulary.
    std::string word_vectors;

    void validate() const {
        auto req = [](bool ok, const std::string& what) {
            if (!ok) throw ConfigError("invalid config: " + what);
        };
        req(learning_rate > 0.0, "learning_rate must be positive");
        req(lr_decay_factor > 1.0, "lr_decay_factor must exceed 1");
        req(lr_decay_every >= 1, "lr_decay_every must be positive");
        req(max_iterations >= 1, "max_iterations must be at least 1");
        req(coef.alpha >= 0 && coef.beta >= 0 && coef.gamma >= 0 && coef.lambda >= 0, "loss coefficients must be >= 0");
        req(model.filter_threshold >= 0.0 && model.filter_threshold <= 1.0, "filter_threshold must lie in [0,1]");
        req(model.embed_dim >= 1 && model.hidden_dim >= 1 && model.match_hidden >= 1 && model.entity_hidden >= 1,
            "dimensions must be positive");
        req(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_epsilon > 0,
            "invalid Adam hyperparameters");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"lr_decay_factor", c.lr_decay_factor},
            {"lr_decay_every", c.lr_decay_every},
            {"max_iterations", c.max_iterations},
            {"alpha", c.coef.alpha},
            {"beta", c.coef.beta},
            {"gamma", c.coef.gamma},
            {"lambda", c.coef.lambda},
            {"embed_dim", c.model.embed_dim},
            {"hidden_dim", c.model.hidden_dim},
            {"match_hidden", c.model.match_hidden},
            {"entity_hidden", c.model.entity_hidden},
            {"pool_hidden", c.model.pool_hidden},
            {"context_mode", to_string(c.model.context_mode)},
            {"context_location", to_string(c.model.context_location)},
            {"filter_mode", to_string(c.model.filter_mode)},
            {"filter_threshold", c.model.filter_threshold},
            {"distance_penalty", c.model.distance_penalty},
            {"use_location", c.model.use_location},
            {"use_context", c.model.use_context},
            {"entity_enhancement", c.model.entity_enhancement},
            {"init", to_string(c.model.init)},
            {"seed", c.seed},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"word_vectors", c.word_vectors}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    const nlohmann::json known = to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigError("unknown config key: " + it.key());
    }
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.coef.alpha = j.value("alpha", c.coef.alpha);
        c.coef.beta = j.value("beta", c.coef.beta);
        c.coef.gamma = j.value("gamma", c.coef.gamma);
        c.coef.lambda = j.value("lambda", c.coef.lambda);
        c.model.embed_dim = j.value("embed_dim", c.model.embed_dim);
        c.model.hidden_dim = j.value("hidden_dim", c.model.hidden_dim);
        c.model.match_hidden = j.value("match_hidden", c.model.match_hidden);
        c.model.entity_hidden = j.value("entity_hidden", c.model.entity_hidden);
        c.model.pool_hidden = j.value("pool_hidden", c.model.pool_hidden);
        c.model.context_mode = context_mode_from_string(j.value("context_mode", to_string(c.model.context_mode)));
        c.model.context_location =
            context_location_from_string(j.value("context_location", to_string(c.model.context_location)));
        c.model.filter_mode = filter_mode_from_string(j.value("filter_mode", to_string(c.model.filter_mode)));
        c.model.filter_threshold = j.value("filter_threshold", c.model.filter_threshold);
        c.model.distance_penalty = j.value("distance_penalty", c.model.distance_penalty);
        c.model.use_location = j.value("use_location", c.model.use_location);
        c.model.use_context = j.value("use_context", c.model.use_context);
        c.model.entity_enhancement = j.value("entity_enhancement", c.model.entity_enhancement);
        c.model.init = init_scheme_from_string(j.value("init", to_string(c.model.init)));
        c.seed = j.value("seed", c.seed);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
        c.word_vectors = j.value("word_vectors", c.word_vectors);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return train_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const ModelDims& d) {
    return {{"vocab_size", d.vocab_size},       {"n_attributes", d.n_attributes}, {"n_categories", d.n_categories},
            {"subject_dim", d.subject_dim},     {"context_raw_dim", d.context_raw_dim},
            {"word_dim", d.word_dim},           {"max_len", d.max_len}};
}

inline ModelDims model_dims_from_json(const nlohmann::json& j) {
    ModelDims d;
    d.vocab_size = j.at("vocab_size").get<int>();
    d.n_attributes = j.at("n_attributes").get<int>();
    d.n_categories = j.at("n_categories").get<int>();
    d.subject_dim = j.at("subject_dim").get<int>();
    d.context_raw_dim = j.at("context_raw_dim").get<int>();
    d.word_dim = j.at("word_dim").get<int>();
    d.max_len = j.at("max_len").get<int>();
    return d;
}

}  // namespace earn
