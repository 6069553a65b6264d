#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "earn/earn.hpp"

namespace earn::testing {

/// Random scene with integer-free geometry; categories cycle so every category repeats.
inline Scene random_scene(std::mt19937_64& rng, int n, int n_categories = 3, int ds = 5, int dv = 4,
                          double width = 200.0, double height = 150.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Scene s;
    s.width = width;
    s.height = height;
    for (int i = 0; i < n; ++i) {
        const double w = 5.0 + u(rng) * 0.4 * width;
        const double h = 5.0 + u(rng) * 0.4 * height;
        const double x = u(rng) * (width - w);
        const double y = u(rng) * (height - h);
        Proposal p;
        p.box = Box(x, y, x + w, y + h);
        p.category_id = static_cast<int>(rng() % static_cast<unsigned>(n_categories));
        for (int k = 0; k < ds; ++k) p.subject_feature.push_back(g(rng));
        for (int k = 0; k < dv; ++k) p.context_feature.push_back(g(rng));
        s.proposals.push_back(std::move(p));
    }
    return s;
}

inline DatasetHeader tiny_header(int ds = 5, int dv = 4) {
    DatasetHeader h;
    h.vocab = {kUnkWord, "circle", "square", "triangle", "red", "left", "near"};
    h.attribute_vocab = {"red", "left"};
    h.categories = {"circle", "square", "triangle"};
    h.subject_dim = ds;
    h.context_dim = dv;
    h.max_len = 5;
    return h;
}

/// Small synthetic benchmark for fast training tests.
inline synth::SynthData small_benchmark(int n_scenes = 40, int n_eval = 20, std::uint64_t seed = 7) {
    synth::SynthConfig c;
    c.seed = seed;
    c.n_scenes = n_scenes;
    c.n_eval_scenes = n_eval;
    return synth::generate(c);
}

inline TrainConfig small_train_config(int iterations = 20) {
    TrainConfig c;
    c.max_iterations = iterations;
    c.model.embed_dim = 8;
    c.model.hidden_dim = 8;
    c.model.match_hidden = 16;
    c.model.entity_hidden = 16;
    return c;
}

/// One image with N proposals and two queries ("red circle" with an attribute
/// label, "circle near square"), plus a model sized for it.
struct TinyProblem {
    Scene scene;
    TrainingScene view;
    CueFeatures features;
    EarnModel model;
    Matrix attribute_weights;

    StepLoss loss(ad::Tape& t, const LossCoefficients& coef = {}) const {
        return model.image_loss(t, features, view.queries, coef, attribute_weights);
    }
};

inline TinyProblem tiny_problem(ModelConfig cfg = {}, int n = 3, std::uint64_t seed = 3) {
    TinyProblem p;
    const DatasetHeader h = tiny_header();
    std::mt19937_64 rng(seed);
    p.scene = random_scene(rng, n);
    for (int i = 0; i < n; ++i) p.scene.proposals[static_cast<std::size_t>(i)].category_id = i % 3;
    Query a;
    a.tokens = {4, 1};
    a.subject_word = 1;
    a.attribute_labels = {0};
    a.gt_index = 0;
    Query b;
    b.tokens = {1, 6, 2};
    b.subject_word = 1;
    b.object_word = 2;
    b.gt_index = 0;
    p.scene.queries = {a, b};
    p.view = strip_labels(p.scene);
    cfg.embed_dim = 8;
    cfg.hidden_dim = 4;
    cfg.match_hidden = 6;
    cfg.entity_hidden = 6;
    std::vector<std::string> words = h.vocab;
    const auto table = WordVectorTable::orthogonal(words);
    auto [tok, cat] = align_word_vectors(h, table);
    p.model = EarnModel(cfg, dims_for(h, table.dim()), tok, cat, seed);
    p.features = p.model.features(p.view);
    p.attribute_weights = attribute_weights_for({p.view}, static_cast<int>(h.attribute_vocab.size()));
    return p;
}

/// Central-difference check of every entry of every parameter against the
/// tape gradient of `loss`. Returns the worst relative error; entries whose
/// analytic and numeric values are both below `floor` are skipped.
struct GradCheckResult {
    double worst = 0.0;
    std::string where;
    int checked = 0;
};

/// `visit` is called with a callback (name, ad::Parameter&) and must enumerate
/// the parameters being checked.
template <class Visit>
GradCheckResult check_gradients_of(Visit&& visit, const std::function<ad::Var(ad::Tape&)>& loss, double step = 1e-5,
                                   double floor = 1e-6) {
    std::map<std::string, Matrix> analytic;
    {
        ad::Tape t;
        const ad::Var l = loss(t);
        t.backward(l);
        visit([&](const std::string& name, ad::Parameter& p) { analytic[name] = t.gradient(p); });
    }
    GradCheckResult r;
    visit([&](const std::string& name, ad::Parameter& p) {
        const Matrix& a = analytic.at(name);
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            const double orig = p.value.data()[i];
            p.value.data()[i] = orig + step;
            double up = 0.0;
            {
                ad::Tape t;
                up = loss(t).scalar();
            }
            p.value.data()[i] = orig - step;
            double down = 0.0;
            {
                ad::Tape t;
                down = loss(t).scalar();
            }
            p.value.data()[i] = orig;
            const double num = (up - down) / (2.0 * step);
            const double ana = a.data()[i];
            const double scale = std::max(std::abs(num), std::abs(ana));
            if (scale < floor) continue;
            ++r.checked;
            const double rel = std::abs(num - ana) / scale;
            if (rel > r.worst) {
                r.worst = rel;
                r.where = name + "[" + std::to_string(i) + "] analytic " + std::to_string(ana) + " numeric " +
                          std::to_string(num);
            }
        }
    });
    return r;
}

inline GradCheckResult check_gradients(EarnModel& model, const std::function<ad::Var(ad::Tape&)>& loss,
                                       double step = 1e-5, double floor = 1e-6) {
    return check_gradients_of([&](auto&& f) { model.visit(f); }, loss, step, floor);
}

}  // namespace earn::testing
