#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace earn {
namespace {

TEST(WordVectors, OrthogonalTableAndLookup) {
    const auto t = WordVectorTable::orthogonal({kUnkWord, "circle", "square", "circle"});
    EXPECT_EQ(t.size(), 2u);
    EXPECT_EQ(t.lookup("circle").dot(t.lookup("square")), 0.0);
    EXPECT_EQ(t.lookup("circle").norm(), 1.0);
    EXPECT_EQ(t.lookup("nothing").norm(), 0.0);
}

TEST(WordVectors, LoadsTextFile) {
    const auto path = std::filesystem::temp_directory_path() / "earn_vectors.txt";
    {
        std::ofstream out(path);
        out << "<unk> 0 0 1\ncat 1 0 0\ndog 1 1 0\n";
    }
    const auto t = WordVectorTable::load(path.string());
    EXPECT_EQ(t.dim(), 3);
    EXPECT_EQ(t.lookup("zebra"), t.lookup(kUnkWord));
    EXPECT_NEAR(cosine_similarity(t.lookup("cat"), t.lookup("dog")), std::sqrt(0.5), 1e-12);
    {
        std::ofstream out(path);
        out << "cat 1 0\ndog 1\n";
    }
    EXPECT_THROW(WordVectorTable::load(path.string()), std::runtime_error);
    EXPECT_THROW(WordVectorTable::load("/nonexistent/vectors.txt"), std::runtime_error);
}

TEST(SemanticSimilarity, Examples) {
    Matrix cats(2, 2);
    cats << 1, 0, 0, 1;
    const RowVector entity = RowVector::Unit(2, 0);
    const Eigen::VectorXd s = semantic_similarity({0, 1, 0}, entity, cats);
    EXPECT_EQ(s, Eigen::Vector3d(1, 0, 1));
    EXPECT_EQ(semantic_similarity({0, 1}, std::nullopt, cats), Eigen::Vector2d::Zero());

    Matrix diag(1, 2);
    diag << 1, 1;
    EXPECT_NEAR(semantic_similarity({0}, entity, diag)(0), 0.70710678, 1e-8);

    Matrix opposite(1, 2);
    opposite << -1, 0;
    EXPECT_EQ(semantic_similarity({0}, entity, opposite)(0), 0.0);
    EXPECT_EQ(semantic_similarity({0}, RowVector(RowVector::Zero(2)), cats)(0), 0.0);
}

TEST(SupervisionLoss, Examples) {
    ad::Tape t;
    Matrix s(2, 1);
    s << 1, 0;
    EXPECT_DOUBLE_EQ(entity_supervision_loss(t.constant(s), Eigen::Vector2d(1, 1)).scalar(), 0.25);
    Matrix half(2, 1);
    half << 0.5, 0.5;
    EXPECT_EQ(entity_supervision_loss(t.constant(half), Eigen::Vector2d(0.3, 0.3)).scalar(), 0.0);
    EXPECT_EQ(entity_supervision_loss(t.constant(half), Eigen::Vector2d(0, 0)).scalar(), 0.0);
}

TEST(SupervisionLoss, NonNegativeAndZeroOnlyAtTarget) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 10);
        Eigen::VectorXd sim(n);
        Matrix p(n, 1);
        for (int i = 0; i < n; ++i) {
            sim(i) = u(rng);
            p(i, 0) = u(rng);
        }
        p /= p.sum();
        ad::Tape t;
        EXPECT_GE(entity_supervision_loss(t.constant(p), sim).scalar(), 0.0);
        const Matrix target = similarity_target(sim);
        EXPECT_LT(entity_supervision_loss(t.constant(target), sim).scalar(), 1e-30);
    }
}

TEST(HardFilter, Examples) {
    EXPECT_EQ(hard_filter_mask(Eigen::Vector3d(0.6, 0.3, 0.1), 0.6), (std::vector<bool>{true, false, false}));
    EXPECT_EQ(hard_filter_mask(Eigen::Vector4d::Constant(0.25), 0.6), std::vector<bool>(4, true));
    EXPECT_EQ(apply_filter(Eigen::Vector3d(0.6, 0.3, 0.1), FilterMode::soft, 0.6), std::vector<bool>(3, true));
    EXPECT_EQ(apply_filter(Eigen::Vector3d(0.6, 0.3, 0.1), FilterMode::none, 0.6), std::vector<bool>(3, true));
    EXPECT_THROW(hard_filter_mask(Eigen::Vector2d(0.5, 0.5), 1.5), std::invalid_argument);
}

TEST(HardFilter, NeverEmptyAndKeepsArgmax) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 16);
        Eigen::VectorXd s(n);
        for (int i = 0; i < n; ++i) s(i) = std::pow(u(rng), 4);
        s /= s.sum();
        const double tau = u(rng);
        const auto keep = hard_filter_mask(s, tau);
        EXPECT_TRUE(keep[static_cast<std::size_t>(argmax_first(s))]);
        for (int i = 0; i < n; ++i) {
            if (s(i) / s.maxCoeff() >= tau) {
                EXPECT_TRUE(keep[static_cast<std::size_t>(i)]);
            }
        }
    }
}

ContextPairs random_pairs(std::mt19937_64& rng, int m, int d) {
    std::normal_distribution<double> g(0, 1);
    ContextPairs p;
    p.features = Matrix::NullaryExpr(m, d, [&]() { return g(rng); });
    for (int j = 0; j < m; ++j) p.indices.push_back(j);
    return p;
}

TEST(PoolContext, SoftPoolingMatchesWeightedSumOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 150; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 16);
        const ContextPairs pairs = random_pairs(rng, m, 7);
        Matrix w(m, 1);
        for (int j = 0; j < m; ++j) w(j, 0) = u(rng);
        w /= w.sum();
        ad::Tape t;
        const Matrix got = pool_context(t, pairs, t.constant(w), ContextMode::soft_all, w, 7).value();
        for (int k = 0; k < 7; ++k) {
            double want = 0.0;
            for (int j = 0; j < m; ++j) want += w(j, 0) * pairs.features(j, k);
            EXPECT_NEAR(got(0, k), want, 1e-6);
        }
    }
}

TEST(PoolContext, DegenerateAndEmpty) {
    std::mt19937_64 rng(4);
    const ContextPairs pairs = random_pairs(rng, 2, 3);
    ad::Tape t;
    Matrix one(2, 1);
    one << 1, 0;
    EXPECT_EQ(pool_context(t, pairs, t.constant(one), ContextMode::soft_all, one, 3).value(), pairs.features.row(0));
    Matrix half(2, 1);
    half << 0.5, 0.5;
    const Matrix mean = (pairs.features.row(0) + pairs.features.row(1)) / 2;
    EXPECT_LT((pool_context(t, pairs, t.constant(half), ContextMode::soft_all, half, 3).value() - mean).cwiseAbs().maxCoeff(),
              1e-15);
    EXPECT_EQ(pool_context(t, ContextPairs{Matrix(0, 3), {}}, ad::Var{}, ContextMode::soft_all, {}, 3).value(),
              Matrix::Zero(1, 3));
}

TEST(PoolContext, MaxPoolingSelectsArgmaxRow) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 16);
        const ContextPairs pairs = random_pairs(rng, m, 4);
        Eigen::VectorXd w(m);
        for (int j = 0; j < m; ++j) w(j) = std::round(u(rng) * 4) / 4;
        ad::Tape t;
        const Matrix got = pool_context(t, pairs, t.constant(w), ContextMode::max_all, w, 4).value();
        int best = 0;
        for (int j = 0; j < m; ++j) {
            if (w(j) > w(best)) best = j;
        }
        EXPECT_EQ(got, pairs.features.row(best));
    }
}

TEST(DistancePenalty, ScalesByRemainingDiagonal) {
    const std::vector<Box> boxes{Box(0, 0, 10, 10), Box(30, 40, 40, 50), Box(0, 0, 10, 10)};
    ContextPairs p;
    p.features = Matrix::Zero(2, 1);
    p.indices = {1, 2};
    const Eigen::VectorXd out = penalize_by_distance(Eigen::Vector2d(0.5, 0.5), p, boxes[0], boxes, 60, 80);
    EXPECT_NEAR(out(0), 0.5 * (1 - 50.0 / 100.0), 1e-12);
    EXPECT_EQ(out(1), 0.5);
}

class EntityAttentionTest : public ::testing::Test {
protected:
    nn::Initializer init{13};
    EntityAttention att{EntityConfig{5, 4, 3, 16}, init};
    std::mt19937_64 rng{14};
};

TEST_F(EntityAttentionTest, SingletonAndNullWord) {
    ad::Tape t;
    const RowVector emb = RowVector::Unit(3, 1);
    EXPECT_EQ(att.subject_scores(t, Matrix::Random(1, 5), emb).value()(0, 0), 1.0);
    const Matrix u = att.subject_scores(t, Matrix::Random(4, 5), std::nullopt).value();
    EXPECT_EQ(u, Matrix::Constant(4, 1, 0.25));
}

TEST_F(EntityAttentionTest, DimensionMismatch) {
    ad::Tape t;
    EXPECT_THROW(att.subject_scores(t, Matrix::Random(3, 4), RowVector(RowVector::Unit(3, 0))), std::invalid_argument);
}

TEST_F(EntityAttentionTest, ObjectRowsAreDistributions) {
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 10);
        const Scene s = testing::random_scene(rng, n);
        const CueFeatures f = encode_scene(s.proposals, s.width, s.height, ContextMode::soft_all);
        ad::Tape t;
        const RowVector emb = RowVector::Unit(3, static_cast<Eigen::Index>(rng() % 3));
        const Matrix ss = att.subject_scores(t, f.subject, emb).value();
        EXPECT_NEAR(ss.sum(), 1.0, 1e-6);
        const auto rows = att.object_scores(t, f, emb);
        for (int i = 0; i < n; ++i) {
            if (f.context[static_cast<std::size_t>(i)].size() == 0) {
                EXPECT_FALSE(rows[static_cast<std::size_t>(i)].valid());
                continue;
            }
            EXPECT_NEAR(rows[static_cast<std::size_t>(i)].value().sum(), 1.0, 1e-6);
        }
    }
}

TEST_F(EntityAttentionTest, Golden) {
    const Scene s = testing::random_scene(rng, 3);
    const CueFeatures f = encode_scene(s.proposals, s.width, s.height, ContextMode::soft_all);
    ad::Tape t;
    testing::expect_golden("entity_subject_scores_n3",
                           testing::to_json(att.subject_scores(t, f.subject, RowVector(RowVector::Unit(3, 2))).value()));
}

}  // namespace
}  // namespace earn
