#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace earn {
namespace {

TEST(AttentivePool, OneHotUniformAndOracle) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    ad::Tape t;
    const Matrix f = Matrix::NullaryExpr(3, 4, [&]() { return u(rng); });
    Matrix one = Matrix::Zero(3, 1);
    one(2, 0) = 1;
    EXPECT_EQ(attentive_pool(t.constant(one), t.constant(f)).value(), f.row(2));
    const Matrix two = f.topRows(2);
    const Matrix mean = (two.row(0) + two.row(1)) / 2;
    EXPECT_LT((attentive_pool(t.constant(Matrix::Constant(2, 1, 0.5)), t.constant(two)).value() - mean).cwiseAbs().maxCoeff(),
              1e-15);

    for (int trial = 0; trial < 150; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 16);
        const Matrix feats = Matrix::NullaryExpr(n, 6, [&]() { return u(rng) - 0.5; });
        Matrix s = Matrix::NullaryExpr(n, 1, [&]() { return u(rng); });
        s /= s.sum();
        const Matrix got = attentive_pool(t.constant(s), t.constant(feats)).value();
        for (int k = 0; k < 6; ++k) {
            double want = 0;
            for (int i = 0; i < n; ++i) want += s(i, 0) * feats(i, k);
            EXPECT_NEAR(got(0, k), want, 1e-6);
        }
    }
    EXPECT_THROW(attentive_pool(t.constant(Matrix::Ones(2, 1)), t.constant(f)), std::invalid_argument);
}

TEST(AdaptiveVisual, MseAndWeightedSum) {
    ad::Tape t;
    EXPECT_DOUBLE_EQ(ad::mse(t.constant(Matrix::Zero(1, 2)), t.constant(Matrix::Ones(1, 2))).scalar(), 1.0);
    EXPECT_EQ(adaptive_visual_loss({0.3, 0.5, 0.7}, {1, 0, 0}), 0.3);
    EXPECT_EQ(adaptive_visual_loss({0, 0, 0}, {0.2, 0.3, 0.5}), 0.0);
    EXPECT_DOUBLE_EQ(adaptive_visual_loss({1, 2, 4}, {0.5, 0.25, 0.25}), 2.0);
}

TEST(Decoder, EndTokenOnlyVocabularyIsCertain) {
    nn::Initializer init(3);
    const QueryDecoder d(0, 4, 5, init);
    ad::Tape t;
    EXPECT_EQ(d.negative_log_likelihood(t, t.constant(Matrix::Ones(1, 4)), {}).scalar(), 0.0);
}

TEST(Decoder, UniformOutputGivesAnalyticLikelihood) {
    nn::Initializer init(3);
    QueryDecoder d(6, 4, 5, init);
    d.output_layer().weight.value.setZero();
    ad::Tape t;
    const std::vector<int> target{1, 4, 2};
    // Three words plus the end token, each over 6 words + end.
    EXPECT_NEAR(d.negative_log_likelihood(t, t.constant(Matrix::Ones(1, 4)), target).scalar(), 4 * std::log(7.0), 1e-12);
}

TEST(Decoder, Errors) {
    nn::Initializer init(3);
    const QueryDecoder d(6, 4, 5, init);
    ad::Tape t;
    EXPECT_THROW(d.negative_log_likelihood(t, t.constant(Matrix::Ones(1, 3)), {1}), std::invalid_argument);
    EXPECT_THROW(d.negative_log_likelihood(t, t.constant(Matrix::Ones(1, 4)), {6}), std::out_of_range);
}

TEST(Decoder, Golden) {
    nn::Initializer init(3);
    const QueryDecoder d(6, 4, 5, init);
    ad::Tape t;
    Matrix cond(1, 4);
    cond << 0.5, -0.25, 1.0, 0.0;
    testing::expect_golden("decoder_nll", d.negative_log_likelihood(t, t.constant(cond), {3, 1, 5}).scalar());
}

struct Pieces {
    LangEncoder lang;
    Reconstructor recon;
};

Pieces make_pieces(std::uint64_t seed = 4) {
    nn::Initializer init(seed);
    Pieces p;
    p.lang = LangEncoder({7, 8, 6, false}, init);
    p.recon = Reconstructor({7, 8, 5, 9, 8, 6, 2}, init);
    return p;
}

const std::vector<int> kTokens{4, 1, 6};

TEST(AdaptiveLanguage, ZeroFusionStaysFinite) {
    Pieces p = make_pieces();
    p.recon.fuse_language_layer().weight.value.setZero();
    p.recon.fuse_language_layer().bias.value.setZero();
    ad::Tape t;
    const LangEncoding e = p.lang.encode(t, kTokens);
    EXPECT_EQ(p.recon.fused_language(t, e).value(), Matrix::Zero(1, 8));
    EXPECT_TRUE(std::isfinite(p.recon.adaptive_language_loss(t, e, kTokens).scalar()));
}

TEST(AdaptiveLanguage, Golden) {
    const Pieces p = make_pieces();
    ad::Tape t;
    testing::expect_golden("adaptive_language_loss",
                           p.recon.adaptive_language_loss(t, p.lang.encode(t, kTokens), kTokens).scalar());
}

TEST(AdaptiveLanguage, OverfitsASingleQuery) {
    Pieces p = make_pieces();
    auto loss = [&](ad::Tape& t) { return p.recon.adaptive_language_loss(t, p.lang.encode(t, kTokens), kTokens); };
    std::vector<double> curve;
    for (int step = 0; step < 200; ++step) {
        ad::Tape t;
        const ad::Var l = loss(t);
        curve.push_back(l.scalar());
        t.backward(l);
        auto sgd = [&](const std::string&, ad::Parameter& prm) { prm.value -= 0.5 * t.gradient(prm); };
        p.lang.visit("lang", sgd);
        p.recon.visit("recon", sgd);
    }
    EXPECT_LT(curve.back(), 0.25 * curve.front());
    int rises = 0;
    for (std::size_t i = 1; i < curve.size(); ++i) rises += curve[i] > curve[i - 1];
    EXPECT_LT(rises, 10);
}

class LanguageReconstruction : public ::testing::Test {
protected:
    Pieces p = make_pieces();
    std::mt19937_64 rng{8};
    std::normal_distribution<double> g{0, 1};

    Matrix random(int r, int c) { return Matrix::NullaryExpr(r, c, [&]() { return g(rng); }); }
};

TEST_F(LanguageReconstruction, VisualRowsPoolLikeAWeightedSum) {
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 16);
        ad::Tape t;
        const Matrix rows = p.recon.visual_rows(t, t.constant(random(n, 5)), t.constant(random(n, kLocationDim)),
                                                t.constant(random(n, 9)))
                                .value();
        EXPECT_GE(rows.minCoeff(), 0.0);
        Matrix s = random(n, 1).cwiseAbs();
        s /= s.sum();
        const Matrix f_vis = attentive_pool(t.constant(s), t.constant(rows)).value();
        for (int k = 0; k < rows.cols(); ++k) {
            double want = 0;
            for (int i = 0; i < n; ++i) want += s(i, 0) * rows(i, k);
            EXPECT_NEAR(f_vis(0, k), want, 1e-6);
        }
    }
}

TEST_F(LanguageReconstruction, OneHotScoresUseThatProposal) {
    ad::Tape t;
    const ad::Var rows = p.recon.visual_rows(t, t.constant(random(3, 5)), t.constant(random(3, kLocationDim)),
                                             t.constant(random(3, 9)));
    Matrix one = Matrix::Zero(3, 1);
    one(1, 0) = 1;
    const double pooled = p.recon.language_loss(t, t.constant(one), rows, kTokens).scalar();
    const double direct =
        p.recon.language_decoder().negative_log_likelihood(t, ad::slice_rows(rows, 1, 1), kTokens).scalar();
    EXPECT_EQ(pooled, direct);
}

TEST_F(LanguageReconstruction, Golden) {
    ad::Tape t;
    Matrix subject(3, 5), location(3, kLocationDim), context(3, 9);
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 5; ++k) subject(i, k) = std::cos(i + 0.3 * k);
        for (int k = 0; k < kLocationDim; ++k) location(i, k) = 0.01 * ((i * 7 + k) % 11);
        for (int k = 0; k < 9; ++k) context(i, k) = std::sin(2.0 * i - 0.5 * k);
    }
    Matrix s(3, 1);
    s << 0.2, 0.5, 0.3;
    const ad::Var rows = p.recon.visual_rows(t, t.constant(subject), t.constant(location), t.constant(context));
    testing::expect_golden("language_loss", p.recon.language_loss(t, t.constant(s), rows, kTokens).scalar());
}

TEST(AttributeLoss, AnalyticCases) {
    ad::Tape t;
    Matrix y(1, 2), w(1, 2);
    y << 1, 0;
    w << 3, 0.5;
    Matrix perfect(1, 2);
    perfect << INFINITY, -INFINITY;
    EXPECT_LT(ad::weighted_bce_with_logits(t.constant(perfect), y, w).scalar(), 1e-9);
    Matrix single(1, 1);
    single << 0;
    EXPECT_NEAR(ad::weighted_bce_with_logits(t.constant(single), Matrix::Ones(1, 1), Matrix::Constant(1, 1, 2.5)).scalar(),
                2.5 * std::log(2.0), 1e-15);
}

TEST(AttributeLoss, LabelsAndWeights) {
    const Pieces p = make_pieces();
    ad::Tape t;
    const ad::Var pooled = t.constant(Matrix::Ones(1, 5));
    const Matrix w = attribute_class_weights({2, 0}, 4);
    EXPECT_EQ(w, (Matrix(1, 2) << 2.0, 1.0).finished());
    EXPECT_THROW(p.recon.attribute_loss(t, pooled, {2}, w), std::out_of_range);
    EXPECT_THROW(p.recon.attribute_loss(t, pooled, {0}, Matrix::Ones(1, 3)), std::invalid_argument);
    EXPECT_GE(p.recon.attribute_loss(t, pooled, {0, 1}, w).scalar(), 0.0);
}

TEST(ComposeLosses, Invariants) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        LossTerms terms{u(rng), u(rng), {u(rng), u(rng), u(rng)}, 0, u(rng), u(rng), u(rng)};
        const std::array<double, 3> w{0.2, 0.5, 0.3};
        terms.loss_avis = adaptive_visual_loss(terms.cue, w);
        const LossCoefficients c{u(rng), u(rng), u(rng), u(rng)};
        const LossBundle b = compose_losses(terms, c);
        EXPECT_EQ(b.loss_avis, w[0] * b.L_s + w[1] * b.L_l + w[2] * b.L_c);
        EXPECT_EQ(b.loss_adp, c.alpha * b.loss_avis + c.beta * b.loss_alan);
        EXPECT_EQ(b.loss_clb, b.loss_adp + c.gamma * b.loss_lan + c.lambda * b.loss_att);
        EXPECT_EQ(b.total, b.loss_sub + b.loss_obj + b.loss_clb);
        for (double v : b.values()) EXPECT_GE(v, 0.0);
    }
}

TEST(ComposeLosses, CoefficientPresets) {
    const LossTerms terms{0.5, 0.25, {1, 2, 3}, 2, 4, 8, 16};
    EXPECT_EQ(compose_losses(terms, {0, 0, 0, 0}).total, 0.75);
    const LossBundle d = compose_losses(terms, LossCoefficients{});
    EXPECT_EQ(d.coef, (LossCoefficients{0.01, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(d.total, 0.75 + 0.02 + 4 + 8 + 16);
    const LossBundle clef = compose_losses(terms, {0.001, 1, 30, 1});
    EXPECT_DOUBLE_EQ(clef.loss_clb, 0.002 + 4 + 240 + 16);
}

}  // namespace
}  // namespace earn
