#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "earn/box.hpp"
#include "earn/dataset.hpp"

namespace earn::synth {

inline const std::vector<std::string>& category_names() {
    static const std::vector<std::string> v{"circle", "square", "triangle", "star",
                                            "hexagon", "cross", "diamond", "heart"};
    return v;
}
inline const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v{"red", "green", "blue", "yellow", "purple", "orange", "white", "black"};
    return v;
}
inline const std::vector<std::string>& location_words() {
    static const std::vector<std::string> v{"left", "right", "top", "bottom", "middle"};
    return v;
}
inline constexpr const char* kNearWord = "near";

struct QueryMix {
    double subject = 0.4;
    double location = 0.4;
    double context = 0.2;
};

struct SynthConfig {
    std::uint64_t seed = 42;
    int n_scenes = 500;
    int n_eval_scenes = 200;
    int proposals_per_scene = 8;
    int n_categories = 3;
    int n_colors = 4;
    int grid_rows = 3;
    int grid_cols = 4;
    double noise_sigma = 0.1;
    QueryMix query_mix;
    int queries_per_scene = 3;
    double image_width = 640.0;
    double image_height = 480.0;
    int max_retries = 200;
    /// Also list location words in the attribute vocabulary.
    bool location_attributes = false;

    void validate() const {
        auto req = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("SynthConfig: ") + what);
        };
        req(n_scenes >= 0 && n_eval_scenes >= 0, "scene counts must be non-negative");
        req(proposals_per_scene >= 2, "need at least two proposals per scene");
        req(proposals_per_scene <= grid_rows * grid_cols, "proposals_per_scene exceeds grid cells");
        req(n_categories >= 2 && n_categories <= static_cast<int>(category_names().size()), "n_categories out of range");
        req(n_colors >= 1 && n_colors <= static_cast<int>(color_names().size()), "n_colors out of range");
        req(noise_sigma >= 0.0, "noise_sigma must be non-negative");
        req(query_mix.subject >= 0 && query_mix.location >= 0 && query_mix.context >= 0, "negative query fraction");
        req(std::abs(query_mix.subject + query_mix.location + query_mix.context - 1.0) <= 1e-9,
            "query fractions must sum to 1");
        req(queries_per_scene >= 1, "queries_per_scene must be positive");
        req(image_width > 0 && image_height > 0, "image size must be positive");
        req(max_retries >= 1, "max_retries must be positive");
    }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"seed", c.seed},
         {"n_scenes", c.n_scenes},
         {"n_eval_scenes", c.n_eval_scenes},
         {"proposals_per_scene", c.proposals_per_scene},
         {"n_categories", c.n_categories},
         {"n_colors", c.n_colors},
         {"grid", {c.grid_rows, c.grid_cols}},
         {"noise_sigma", c.noise_sigma},
         {"query_mix", {c.query_mix.subject, c.query_mix.location, c.query_mix.context}},
         {"queries_per_scene", c.queries_per_scene},
         {"image_size", {c.image_width, c.image_height}},
         {"max_retries", c.max_retries},
         {"location_attributes", c.location_attributes}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.n_scenes = j.value("n_scenes", c.n_scenes);
    c.n_eval_scenes = j.value("n_eval_scenes", c.n_eval_scenes);
    c.proposals_per_scene = j.value("proposals_per_scene", c.proposals_per_scene);
    c.n_categories = j.value("n_categories", c.n_categories);
    c.n_colors = j.value("n_colors", c.n_colors);
    if (j.contains("grid")) {
        c.grid_rows = j.at("grid").at(0).get<int>();
        c.grid_cols = j.at("grid").at(1).get<int>();
    }
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    if (j.contains("query_mix")) {
        const auto& m = j.at("query_mix");
        c.query_mix = {m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>()};
    }
    c.queries_per_scene = j.value("queries_per_scene", c.queries_per_scene);
    if (j.contains("image_size")) {
        c.image_width = j.at("image_size").at(0).get<double>();
        c.image_height = j.at("image_size").at(1).get<double>();
    }
    c.max_retries = j.value("max_retries", c.max_retries);
    c.location_attributes = j.value("location_attributes", c.location_attributes);
}

/// Dataset header of the synthetic vocabulary for a config.
inline DatasetHeader make_header(const SynthConfig& cfg) {
    DatasetHeader h;
    h.vocab = {kUnkWord};
    const auto cats = std::vector<std::string>(category_names().begin(), category_names().begin() + cfg.n_categories);
    const auto cols = std::vector<std::string>(color_names().begin(), color_names().begin() + cfg.n_colors);
    h.vocab.insert(h.vocab.end(), cats.begin(), cats.end());
    h.vocab.insert(h.vocab.end(), cols.begin(), cols.end());
    h.vocab.insert(h.vocab.end(), location_words().begin(), location_words().end());
    h.vocab.push_back(kNearWord);
    h.attribute_vocab = cols;
    if (cfg.location_attributes) {
        h.attribute_vocab.insert(h.attribute_vocab.end(), location_words().begin(), location_words().end());
    }
    h.categories = cats;
    h.subject_dim = cfg.n_categories + cfg.n_colors;
    h.context_dim = cfg.n_categories + cfg.n_colors;
    h.max_len = 3;
    return h;
}

struct ParsedQuery {
    std::optional<int> subject_word;
    std::optional<int> object_word;
    std::vector<int> attribute_labels;

    friend bool operator==(const ParsedQuery&, const ParsedQuery&) = default;
};

/// Inverts the three query templates. Anything else parses to (null, null, {}).
inline ParsedQuery parse_template_query(const std::vector<int>& tokens, const DatasetHeader& h) {
    auto word = [&](int tok) -> std::string {
        return (tok >= 0 && tok < static_cast<int>(h.vocab.size())) ? h.vocab[static_cast<std::size_t>(tok)] : std::string{};
    };
    auto is_category = [&](int tok) {
        return std::find(h.categories.begin(), h.categories.end(), word(tok)) != h.categories.end();
    };
    auto modifier = [&](int tok) {
        const auto w = word(tok);
        return std::find(color_names().begin(), color_names().end(), w) != color_names().end() ||
               std::find(location_words().begin(), location_words().end(), w) != location_words().end();
    };
    ParsedQuery p;
    if (tokens.size() == 2 && is_category(tokens[1]) && modifier(tokens[0])) {
        p.subject_word = tokens[1];
        auto it = std::find(h.attribute_vocab.begin(), h.attribute_vocab.end(), word(tokens[0]));
        if (it != h.attribute_vocab.end()) p.attribute_labels = {static_cast<int>(it - h.attribute_vocab.begin())};
    } else if (tokens.size() == 3 && is_category(tokens[0]) && word(tokens[1]) == kNearWord && is_category(tokens[2])) {
        p.subject_word = tokens[0];
        p.object_word = tokens[2];
    }
    return p;
}

struct Shape {
    Box box;
    int category = 0;
    int color = 0;
};

/// Referent of "<word> <category>" among `shapes`, or nullopt when not unique by a clear margin.
inline std::optional<int> location_referent(const std::vector<Shape>& shapes, const std::string& word, int category,
                                            double width, double height) {
    std::vector<std::pair<double, int>> keyed;
    for (int i = 0; i < static_cast<int>(shapes.size()); ++i) {
        const Shape& s = shapes[static_cast<std::size_t>(i)];
        if (s.category != category) continue;
        double key = 0.0;
        double scale = width;
        if (word == "left") key = s.box.center_x();
        else if (word == "right") key = -s.box.center_x();
        else if (word == "top") { key = s.box.center_y(); scale = height; }
        else if (word == "bottom") { key = -s.box.center_y(); scale = height; }
        else if (word == "middle") {
            key = std::hypot(s.box.center_x() - 0.5 * width, s.box.center_y() - 0.5 * height);
            scale = std::hypot(width, height);
        } else {
            throw std::invalid_argument("unknown location word: " + word);
        }
        keyed.emplace_back(key / scale, i);
    }
    if (keyed.size() < 2) return std::nullopt;
    std::sort(keyed.begin(), keyed.end());
    if (keyed[1].first - keyed[0].first < 0.05) return std::nullopt;
    return keyed[0].second;
}

/// How strongly a shape's absolute image position calls for a location word;
/// positive when the word fits (left half for "left", near the center for "middle", ...).
inline double location_salience(const Box& b, const std::string& word, double width, double height) {
    const double x = b.center_x() / width;
    const double y = b.center_y() / height;
    if (word == "left") return 0.5 - x;
    if (word == "right") return x - 0.5;
    if (word == "top") return 0.5 - y;
    if (word == "bottom") return y - 0.5;
    if (word == "middle") return 0.25 - std::hypot(x - 0.5, y - 0.5);
    throw std::invalid_argument("unknown location word: " + word);
}

/// Referent of "<category> near <object category>", or nullopt when not unique by a clear margin.
inline std::optional<int> context_referent(const std::vector<Shape>& shapes, int category, int object_category,
                                           double width, double height) {
    std::vector<std::pair<double, int>> keyed;
    for (int i = 0; i < static_cast<int>(shapes.size()); ++i) {
        if (shapes[static_cast<std::size_t>(i)].category != category) continue;
        double best = std::numeric_limits<double>::infinity();
        for (const Shape& o : shapes) {
            if (o.category == object_category) best = std::min(best, center_distance(shapes[static_cast<std::size_t>(i)].box, o.box));
        }
        keyed.emplace_back(best / std::hypot(width, height), i);
    }
    if (keyed.size() < 2 || !std::isfinite(keyed.front().first)) return std::nullopt;
    std::sort(keyed.begin(), keyed.end());
    if (keyed[1].first - keyed[0].first < 0.05) return std::nullopt;
    return keyed[0].second;
}

/// Referent of "<color> <category>": the unique shape with both.
inline std::optional<int> subject_referent(const std::vector<Shape>& shapes, int color, int category) {
    std::optional<int> hit;
    for (int i = 0; i < static_cast<int>(shapes.size()); ++i) {
        const Shape& s = shapes[static_cast<std::size_t>(i)];
        if (s.category == category && s.color == color) {
            if (hit) return std::nullopt;
            hit = i;
        }
    }
    return hit;
}

inline int category_count(const std::vector<Shape>& shapes, int category) {
    return static_cast<int>(std::count_if(shapes.begin(), shapes.end(), [&](const Shape& s) { return s.category == category; }));
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class SceneBuilder {
public:
    SceneBuilder(const SynthConfig& cfg, const DatasetHeader& header, std::uint64_t seed)
        : cfg_(cfg), h_(header), rng_(seed) {}

    Scene build() {
        std::vector<std::string> kinds;
        for (int k = 0; k < cfg_.queries_per_scene; ++k) kinds.push_back(pick_kind());
        for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
            if (auto s = try_build(kinds)) return *s;
        }
        throw std::runtime_error("synthetic generator: retry bound exhausted");
    }

private:
    int token(const std::string& w) const { return h_.token_id(w); }

    std::vector<Shape> place_shapes() {
        const int cells = cfg_.grid_rows * cfg_.grid_cols;
        std::vector<int> order(static_cast<std::size_t>(cells));
        for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
        std::shuffle(order.begin(), order.end(), rng_);
        const double cw = cfg_.image_width / cfg_.grid_cols;
        const double ch = cfg_.image_height / cfg_.grid_rows;
        std::uniform_real_distribution<double> frac(0.5, 0.9);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> cat(0, cfg_.n_categories - 1);
        std::uniform_int_distribution<int> col(0, cfg_.n_colors - 1);
        std::vector<Shape> shapes;
        for (int k = 0; k < cfg_.proposals_per_scene; ++k) {
            const int cell = order[static_cast<std::size_t>(k)];
            const double x0 = (cell % cfg_.grid_cols) * cw;
            const double y0 = (cell / cfg_.grid_cols) * ch;
            const double w = frac(rng_) * cw;
            const double hgt = frac(rng_) * ch;
            const double x = x0 + unit(rng_) * (cw - w);
            const double y = y0 + unit(rng_) * (ch - hgt);
            shapes.push_back({Box(x, y, x + w, y + hgt), cat(rng_), col(rng_)});
        }
        return shapes;
    }

    std::vector<double> feature(const Shape& s) {
        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<double> f(static_cast<std::size_t>(cfg_.n_categories + cfg_.n_colors), 0.0);
        f[static_cast<std::size_t>(s.category)] = 1.0;
        f[static_cast<std::size_t>(cfg_.n_categories + s.color)] = 1.0;
        if (cfg_.noise_sigma > 0.0) {
            for (double& x : f) x += cfg_.noise_sigma * noise(rng_);
        }
        return f;
    }

    std::string pick_kind() {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double r = u(rng_);
        const auto& m = cfg_.query_mix;
        if (r < m.subject) return "subject";
        if (r < m.subject + m.location) return "location";
        if (m.context > 0.0) return "context";
        return m.location > 0.0 ? "location" : "subject";
    }

    template <class T>
    const T& choose(const std::vector<T>& v) {
        std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
        return v[d(rng_)];
    }

    std::optional<Query> make_query(const std::vector<Shape>& shapes, const std::string& kind) {
        std::vector<int> repeated;
        for (int c = 0; c < cfg_.n_categories; ++c) {
            if (category_count(shapes, c) >= 2) repeated.push_back(c);
        }
        if (repeated.empty()) return std::nullopt;
        const auto& cats = h_.categories;
        for (int attempt = 0; attempt < 32; ++attempt) {
            Query q;
            q.kind = kind;
            const int c = choose(repeated);
            const int cat_tok = token(cats[static_cast<std::size_t>(c)]);
            if (kind == "subject") {
                std::vector<int> unique;
                for (int i = 0; i < static_cast<int>(shapes.size()); ++i) {
                    const Shape& s = shapes[static_cast<std::size_t>(i)];
                    if (s.category == c && subject_referent(shapes, s.color, c) == i) unique.push_back(i);
                }
                if (unique.empty()) continue;
                const int i = choose(unique);
                const std::string color = color_names()[static_cast<std::size_t>(shapes[static_cast<std::size_t>(i)].color)];
                q.tokens = {token(color), cat_tok};
                q.gt_index = i;
            } else if (kind == "location") {
                // Word whose referent is most salient in its part of the image.
                std::string w;
                int ref = -1;
                double best = 0.0;
                for (const auto& cand : location_words()) {
                    const auto r = location_referent(shapes, cand, c, cfg_.image_width, cfg_.image_height);
                    if (!r) continue;
                    const double sal = location_salience(shapes[static_cast<std::size_t>(*r)].box, cand, cfg_.image_width,
                                                         cfg_.image_height);
                    if (sal > best) {
                        best = sal;
                        w = cand;
                        ref = *r;
                    }
                }
                if (ref < 0) continue;
                q.tokens = {token(w), cat_tok};
                q.gt_index = ref;
            } else {
                std::vector<int> singles;
                for (int o = 0; o < cfg_.n_categories; ++o) {
                    if (o != c && category_count(shapes, o) == 1) singles.push_back(o);
                }
                if (singles.empty()) continue;
                const int o = choose(singles);
                const auto ref = context_referent(shapes, c, o, cfg_.image_width, cfg_.image_height);
                if (!ref) continue;
                q.tokens = {cat_tok, token(kNearWord), token(cats[static_cast<std::size_t>(o)])};
                q.gt_index = *ref;
            }
            const ParsedQuery p = parse_template_query(q.tokens, h_);
            q.subject_word = p.subject_word;
            q.object_word = p.object_word;
            q.attribute_labels = p.attribute_labels;
            return q;
        }
        return std::nullopt;
    }

    std::optional<Scene> try_build(const std::vector<std::string>& kinds) {
        const auto shapes = place_shapes();
        Scene s;
        s.width = cfg_.image_width;
        s.height = cfg_.image_height;
        for (const Shape& sh : shapes) {
            Proposal p;
            p.box = sh.box;
            p.category_id = sh.category;
            p.subject_feature = feature(sh);
            p.context_feature = feature(sh);
            s.proposals.push_back(std::move(p));
        }
        for (const auto& kind : kinds) {
            auto q = make_query(shapes, kind);
            if (!q) return std::nullopt;
            s.queries.push_back(std::move(*q));
        }
        return s;
    }

    const SynthConfig& cfg_;
    const DatasetHeader& h_;
    std::mt19937_64 rng_;
};

}  // namespace detail

/// Recovers the generator-side shape list of a scene (category from proposals,
/// color from the one-hot block of the noiseless part of the subject feature).
inline std::vector<Shape> shapes_of(const Scene& s, int n_categories) {
    std::vector<Shape> out;
    for (const auto& p : s.proposals) {
        const auto begin = p.subject_feature.begin() + n_categories;
        const int color = static_cast<int>(std::max_element(begin, p.subject_feature.end()) - begin);
        out.push_back({p.box, p.category_id, color});
    }
    return out;
}

struct SynthData {
    Dataset train;
    Dataset eval;
};

/// Deterministic in the config: each scene draws from its own seed derived from (seed, index).
inline SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthData out;
    out.train.header = make_header(cfg);
    out.eval.header = out.train.header;
    const std::uint64_t base = detail::splitmix64(cfg.seed);
    for (int i = 0; i < cfg.n_scenes + cfg.n_eval_scenes; ++i) {
        detail::SceneBuilder b(cfg, out.train.header, detail::splitmix64(base ^ static_cast<std::uint64_t>(i)));
        Scene s = b.build();
        (i < cfg.n_scenes ? out.train : out.eval).scenes.push_back(std::move(s));
    }
    return out;
}

}  // namespace earn::synth
