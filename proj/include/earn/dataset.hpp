#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "earn/box.hpp"

namespace earn {

inline constexpr int kUnkToken = 0;
inline constexpr const char* kUnkWord = "<unk>";

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Proposal {
    Box box;
    int category_id = 0;
    std::vector<double> subject_feature;
    std::vector<double> context_feature;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

/// Query fields visible to training. There is deliberately no ground-truth slot.
struct QueryView {
    std::vector<int> tokens;
    std::optional<int> subject_word;
    std::optional<int> object_word;
    std::vector<int> attribute_labels;

    friend bool operator==(const QueryView&, const QueryView&) = default;
};

struct Query {
    std::vector<int> tokens;
    std::optional<int> subject_word;
    std::optional<int> object_word;
    std::vector<int> attribute_labels;
    std::optional<int> gt_index;  // evaluation only
    std::string kind;             // optional tag, e.g. "subject", "location", "context"

    QueryView view() const { return {tokens, subject_word, object_word, attribute_labels}; }

    friend bool operator==(const Query&, const Query&) = default;
};

struct Scene {
    double width = 0.0;
    double height = 0.0;
    std::vector<Proposal> proposals;
    std::vector<Query> queries;

    friend bool operator==(const Scene&, const Scene&) = default;
};

/// Label-free projection of a scene handed to the training path.
struct TrainingScene {
    double width = 0.0;
    double height = 0.0;
    std::vector<Proposal> proposals;
    std::vector<QueryView> queries;
};

inline TrainingScene strip_labels(const Scene& scene) {
    TrainingScene out{scene.width, scene.height, scene.proposals, {}};
    out.queries.reserve(scene.queries.size());
    for (const auto& q : scene.queries) out.queries.push_back(q.view());
    return out;
}

struct DatasetHeader {
    std::vector<std::string> vocab{kUnkWord};
    std::vector<std::string> attribute_vocab;
    std::vector<std::string> categories;
    int subject_dim = 0;
    int context_dim = 0;
    int max_len = 20;

    int token_id(const std::string& word) const {
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            if (vocab[i] == word) return static_cast<int>(i);
        }
        return kUnkToken;
    }

    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Scene> scenes;

    std::size_t query_count() const {
        std::size_t n = 0;
        for (const auto& s : scenes) n += s.queries.size();
        return n;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DatasetError(what);
}

inline void check_finite(const std::vector<double>& v, const char* name) {
    for (double x : v) require(std::isfinite(x), std::string(name) + " contains a non-finite value");
}

inline std::optional<int> optional_int(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<int>();
}

inline nlohmann::json optional_to_json(const std::optional<int>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline void validate_header(const DatasetHeader& h) {
    using detail::require;
    require(!h.vocab.empty() && h.vocab.front() == kUnkWord, "vocab[0] must be the reserved <unk> word");
    require(h.subject_dim > 0 && h.context_dim > 0, "feature_dims must be positive");
    require(h.max_len >= 1, "max_len must be at least 1");
}

inline void validate_scene(const Scene& s, const DatasetHeader& h) {
    using detail::require;
    require(std::isfinite(s.width) && std::isfinite(s.height) && s.width > 0 && s.height > 0,
            "image dimensions must be positive");
    require(!s.proposals.empty(), "scene has no proposals");
    require(!s.queries.empty(), "scene has no queries");
    const int n = static_cast<int>(s.proposals.size());
    const int vocab = static_cast<int>(h.vocab.size());
    const int n_attr = static_cast<int>(h.attribute_vocab.size());
    for (const auto& p : s.proposals) {
        require(p.box.inside(s.width, s.height), "proposal box lies outside the image");
        require(p.category_id >= 0 && p.category_id < static_cast<int>(h.categories.size()),
                "category id out of range");
        require(static_cast<int>(p.subject_feature.size()) == h.subject_dim,
                "subject feature dimension mismatch");
        require(static_cast<int>(p.context_feature.size()) == h.context_dim,
                "context feature dimension mismatch");
        detail::check_finite(p.subject_feature, "subject_feature");
        detail::check_finite(p.context_feature, "context_feature");
    }
    for (const auto& q : s.queries) {
        const int t = static_cast<int>(q.tokens.size());
        require(t >= 1 && t <= h.max_len, "query length outside [1, max_len]");
        for (int tok : q.tokens) require(tok >= 0 && tok < vocab, "token id out of vocabulary range");
        if (q.subject_word) require(*q.subject_word >= 0 && *q.subject_word < vocab, "subject_word out of range");
        if (q.object_word) require(*q.object_word >= 0 && *q.object_word < vocab, "object_word out of range");
        for (int a : q.attribute_labels) require(a >= 0 && a < n_attr, "attribute label out of range");
        if (q.gt_index) {
            require(*q.gt_index >= 0 && *q.gt_index < n,
                    "gt_index " + std::to_string(*q.gt_index) + " out of range for " +
                        std::to_string(n) + " proposals");
        }
    }
}

inline nlohmann::json header_to_json(const DatasetHeader& h) {
    return {{"vocab", h.vocab},
            {"attribute_vocab", h.attribute_vocab},
            {"categories", h.categories},
            {"feature_dims", {{"subject", h.subject_dim}, {"context", h.context_dim}}},
            {"max_len", h.max_len}};
}

inline DatasetHeader header_from_json(const nlohmann::json& j) {
    DatasetHeader h;
    h.vocab = j.at("vocab").get<std::vector<std::string>>();
    h.attribute_vocab = j.at("attribute_vocab").get<std::vector<std::string>>();
    h.categories = j.at("categories").get<std::vector<std::string>>();
    h.subject_dim = j.at("feature_dims").at("subject").get<int>();
    h.context_dim = j.at("feature_dims").at("context").get<int>();
    h.max_len = j.value("max_len", 20);
    validate_header(h);
    return h;
}

inline nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json proposals = nlohmann::json::array();
    for (const auto& p : s.proposals) {
        proposals.push_back({{"box", p.box.corners()},
                             {"category", p.category_id},
                             {"subject_feature", p.subject_feature},
                             {"context_feature", p.context_feature}});
    }
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& q : s.queries) {
        nlohmann::json jq = {{"tokens", q.tokens},
                             {"subject_word", detail::optional_to_json(q.subject_word)},
                             {"object_word", detail::optional_to_json(q.object_word)},
                             {"attributes", q.attribute_labels},
                             {"gt_index", detail::optional_to_json(q.gt_index)}};
        if (!q.kind.empty()) jq["kind"] = q.kind;
        queries.push_back(std::move(jq));
    }
    return {{"width", s.width}, {"height", s.height}, {"proposals", proposals}, {"queries", queries}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
    Scene s;
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    for (const auto& jp : j.at("proposals")) {
        const auto c = jp.at("box").get<std::vector<double>>();
        detail::require(c.size() == 4, "box must have four coordinates");
        Proposal p;
        try {
            p.box = Box(c[0], c[1], c[2], c[3]);
        } catch (const std::invalid_argument& e) {
            throw DatasetError(e.what());
        }
        p.category_id = jp.at("category").get<int>();
        p.subject_feature = jp.at("subject_feature").get<std::vector<double>>();
        p.context_feature = jp.at("context_feature").get<std::vector<double>>();
        s.proposals.push_back(std::move(p));
    }
    for (const auto& jq : j.at("queries")) {
        Query q;
        q.tokens = jq.at("tokens").get<std::vector<int>>();
        q.subject_word = detail::optional_int(jq, "subject_word");
        q.object_word = detail::optional_int(jq, "object_word");
        q.attribute_labels = jq.value("attributes", std::vector<int>{});
        q.gt_index = detail::optional_int(jq, "gt_index");
        q.kind = jq.value("kind", std::string{});
        s.queries.push_back(std::move(q));
    }
    return s;
}

/// Reads the JSON Lines dataset format: header record first, then one scene per line.
/// An empty file yields an empty dataset with a default header.
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset file: " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!have_header) {
                ds.header = header_from_json(j);
                have_header = true;
                continue;
            }
            Scene s = scene_from_json(j);
            validate_scene(s, ds.header);
            ds.scenes.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw DatasetError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write dataset file: " + path);
    out << header_to_json(ds.header).dump() << '\n';
    for (const auto& s : ds.scenes) out << scene_to_json(s).dump() << '\n';
    if (!out) throw DatasetError("write failed: " + path);
}

}  // namespace earn
