#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace earn {
namespace {

using synth::SynthConfig;

std::string word_of(const DatasetHeader& h, int tok) { return h.vocab.at(static_cast<std::size_t>(tok)); }

int category_of_word(const DatasetHeader& h, int tok) {
    const auto it = std::find(h.categories.begin(), h.categories.end(), word_of(h, tok));
    return it == h.categories.end() ? -1 : static_cast<int>(it - h.categories.begin());
}

// Brute-force predicate: does proposal i satisfy the query's template?
bool satisfies(const Scene& s, const DatasetHeader& h, const Query& q, int i, int n_categories) {
    const auto shapes = synth::shapes_of(s, n_categories);
    const auto& me = shapes[static_cast<std::size_t>(i)];
    if (q.kind == "subject") {
        const int cat = category_of_word(h, q.tokens[1]);
        const auto& colors = synth::color_names();
        const int color = static_cast<int>(std::find(colors.begin(), colors.end(), word_of(h, q.tokens[0])) - colors.begin());
        return me.category == cat && me.color == color;
    }
    if (q.kind == "location") {
        const int cat = category_of_word(h, q.tokens[1]);
        if (me.category != cat) return false;
        const std::string w = word_of(h, q.tokens[0]);
        auto key = [&](const Box& b) {
            if (w == "left") return b.center_x();
            if (w == "right") return -b.center_x();
            if (w == "top") return b.center_y();
            if (w == "bottom") return -b.center_y();
            return std::hypot(b.center_x() - s.width / 2, b.center_y() - s.height / 2);
        };
        for (const auto& o : shapes) {
            if (o.category == cat && key(o.box) < key(me.box)) return false;
        }
        return true;
    }
    const int cat = category_of_word(h, q.tokens[0]);
    const int obj = category_of_word(h, q.tokens[2]);
    if (me.category != cat) return false;
    auto dist = [&](const synth::Shape& a) {
        double best = 1e300;
        for (const auto& o : shapes) {
            if (o.category == obj) best = std::min(best, center_distance(a.box, o.box));
        }
        return best;
    };
    for (const auto& o : shapes) {
        if (o.category == cat && dist(o) < dist(me)) return false;
    }
    return true;
}

TEST(Synth, GroundTruthIsTheUniqueSatisfyingProposal) {
    SynthConfig c;
    c.n_scenes = 60;
    c.n_eval_scenes = 0;
    const auto data = synth::generate(c);
    int checked = 0;
    for (const auto& s : data.train.scenes) {
        for (const auto& q : s.queries) {
            int hits = 0;
            for (int i = 0; i < static_cast<int>(s.proposals.size()); ++i) {
                hits += satisfies(s, data.train.header, q, i, c.n_categories);
            }
            EXPECT_EQ(hits, 1) << q.kind;
            EXPECT_TRUE(satisfies(s, data.train.header, q, *q.gt_index, c.n_categories)) << q.kind;
            ++checked;
        }
    }
    EXPECT_EQ(checked, 60 * c.queries_per_scene);
}

TEST(Synth, LocationAndContextReferentsShareTheirCategory) {
    SynthConfig c;
    c.n_scenes = 60;
    c.n_eval_scenes = 0;
    const auto data = synth::generate(c);
    for (const auto& s : data.train.scenes) {
        for (const auto& q : s.queries) {
            const int cat = s.proposals[static_cast<std::size_t>(*q.gt_index)].category_id;
            const auto same = std::count_if(s.proposals.begin(), s.proposals.end(),
                                            [&](const Proposal& p) { return p.category_id == cat; });
            EXPECT_GE(same, 2);
        }
    }
}

TEST(Synth, SubjectOnlyMixWithoutNoise) {
    SynthConfig c;
    c.n_scenes = 20;
    c.n_eval_scenes = 0;
    c.noise_sigma = 0.0;
    c.query_mix = {1.0, 0.0, 0.0};
    const auto data = synth::generate(c);
    for (const auto& s : data.train.scenes) {
        for (const auto& p : s.proposals) {
            EXPECT_EQ(std::count(p.subject_feature.begin(), p.subject_feature.end(), 1.0), 2);
            EXPECT_EQ(std::count(p.subject_feature.begin(), p.subject_feature.end(), 0.0),
                      static_cast<long>(p.subject_feature.size()) - 2);
        }
        for (const auto& q : s.queries) {
            EXPECT_EQ(q.kind, "subject");
            const auto shapes = synth::shapes_of(s, c.n_categories);
            const auto& me = shapes[static_cast<std::size_t>(*q.gt_index)];
            EXPECT_EQ(synth::subject_referent(shapes, me.color, me.category), *q.gt_index);
        }
    }
}

TEST(Synth, DeterministicBytes) {
    SynthConfig c;
    c.seed = 42;
    c.n_scenes = 10;
    c.n_eval_scenes = 3;
    const auto dir = std::filesystem::temp_directory_path() / "earn_synth_test";
    std::filesystem::create_directories(dir);
    auto bytes = [&](const std::string& name) {
        save_dataset(synth::generate(c).train, (dir / name).string());
        std::ifstream in(dir / name, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string first = bytes("a.jsonl");
    EXPECT_EQ(first, bytes("b.jsonl"));
    c.seed = 43;
    EXPECT_NE(first, bytes("c.jsonl"));
}

TEST(Synth, LeftmostLocationOracle) {
    SynthConfig c;
    c.n_scenes = 200;
    c.n_eval_scenes = 0;
    c.query_mix = {0.0, 1.0, 0.0};
    const auto data = synth::generate(c);
    const int left = data.train.header.token_id("left");
    int seen = 0;
    for (const auto& s : data.train.scenes) {
        for (const auto& q : s.queries) {
            if (q.tokens[0] != left) continue;
            ++seen;
            const int cat = category_of_word(data.train.header, q.tokens[1]);
            int best = -1;
            for (int i = 0; i < static_cast<int>(s.proposals.size()); ++i) {
                const auto& p = s.proposals[static_cast<std::size_t>(i)];
                if (p.category_id != cat) continue;
                if (best < 0 || p.box.center_x() < s.proposals[static_cast<std::size_t>(best)].box.center_x()) best = i;
            }
            EXPECT_EQ(*q.gt_index, best);
        }
    }
    EXPECT_GT(seen, 20);
}

TEST(Synth, QueryMixIsRespected) {
    SynthConfig c;
    c.n_scenes = 400;
    c.n_eval_scenes = 0;
    const auto data = synth::generate(c);
    std::map<std::string, int> counts;
    for (const auto& s : data.train.scenes) {
        for (const auto& q : s.queries) ++counts[q.kind];
    }
    const double n = 400.0 * c.queries_per_scene;
    EXPECT_NEAR(counts["subject"] / n, 0.4, 0.05);
    EXPECT_NEAR(counts["location"] / n, 0.4, 0.05);
    EXPECT_NEAR(counts["context"] / n, 0.2, 0.05);
}

TEST(Synth, ConfigValidation) {
    SynthConfig c;
    c.query_mix = {0.5, 0.5, 0.1};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SynthConfig{};
    c.proposals_per_scene = 13;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SynthConfig{};
    c.noise_sigma = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SynthConfig{};
    c.query_mix = {-0.1, 0.6, 0.5};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Synth, ConfigJsonRoundTrip) {
    SynthConfig c;
    c.seed = 9;
    c.grid_rows = 4;
    c.query_mix = {0.2, 0.3, 0.5};
    c.location_attributes = true;
    const nlohmann::json j = c;
    const SynthConfig back = j.get<SynthConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Synth, AttributeVocabularyFollowsConfig) {
    SynthConfig c;
    EXPECT_EQ(synth::make_header(c).attribute_vocab.size(), static_cast<std::size_t>(c.n_colors));
    c.location_attributes = true;
    EXPECT_EQ(synth::make_header(c).attribute_vocab.size(), c.n_colors + synth::location_words().size());
}

class TemplateParse : public ::testing::Test {
protected:
    DatasetHeader h = synth::make_header(SynthConfig{});
    int tok(const std::string& w) const { return h.token_id(w); }
};

TEST_F(TemplateParse, SubjectTemplate) {
    const auto p = synth::parse_template_query({tok("red"), tok("circle")}, h);
    EXPECT_EQ(p.subject_word, tok("circle"));
    EXPECT_FALSE(p.object_word);
    ASSERT_EQ(p.attribute_labels.size(), 1u);
    EXPECT_EQ(h.attribute_vocab[static_cast<std::size_t>(p.attribute_labels[0])], "red");
}

TEST_F(TemplateParse, ContextTemplate) {
    const auto p = synth::parse_template_query({tok("circle"), tok("near"), tok("square")}, h);
    EXPECT_EQ(p.subject_word, tok("circle"));
    EXPECT_EQ(p.object_word, tok("square"));
    EXPECT_TRUE(p.attribute_labels.empty());
}

TEST_F(TemplateParse, LocationTemplate) {
    auto p = synth::parse_template_query({tok("left"), tok("square")}, h);
    EXPECT_EQ(p.subject_word, tok("square"));
    EXPECT_TRUE(p.attribute_labels.empty());

    SynthConfig c;
    c.location_attributes = true;
    const DatasetHeader hl = synth::make_header(c);
    p = synth::parse_template_query({hl.token_id("left"), hl.token_id("square")}, hl);
    ASSERT_EQ(p.attribute_labels.size(), 1u);
    EXPECT_EQ(hl.attribute_vocab[static_cast<std::size_t>(p.attribute_labels[0])], "left");
}

TEST_F(TemplateParse, GarbageIsNullParse) {
    const synth::ParsedQuery empty;
    EXPECT_EQ(synth::parse_template_query({tok("near"), tok("near"), tok("red")}, h), empty);
    EXPECT_EQ(synth::parse_template_query({kUnkToken}, h), empty);
    EXPECT_EQ(synth::parse_template_query({}, h), empty);
    EXPECT_EQ(synth::parse_template_query({999, -3}, h), empty);
    EXPECT_EQ(synth::parse_template_query({tok("circle"), tok("square")}, h), empty);
}

}  // namespace
}  // namespace earn
