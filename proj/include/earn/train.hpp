#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "earn/checkpoint.hpp"
#include "earn/config.hpp"
#include "earn/dataset.hpp"
#include "earn/entity.hpp"
#include "earn/model.hpp"

namespace earn {

/// Types that expose a ground-truth index. The training path must never see one.
template <class T>
concept carries_ground_truth = requires(T q) { q.gt_index; };
static_assert(!carries_ground_truth<QueryView>, "training queries must not carry ground truth");
static_assert(carries_ground_truth<Query>);

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Step-decay schedule: lr0 / factor^floor(step / every).
inline double learning_rate_at(const TrainConfig& c, int step) {
    return c.learning_rate / std::pow(c.lr_decay_factor, static_cast<double>(step / c.lr_decay_every));
}

/// Adaptive moment estimation with bias correction.
class Adam {
public:
    Adam() = default;
    Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

    /// `step` is 1-based.
    void update(const std::string& name, ad::Parameter& p, const Matrix& grad, double lr, int step) {
        auto [it, fresh] = state_.try_emplace(name);
        if (fresh) {
            it->second.m = Matrix::Zero(p.value.rows(), p.value.cols());
            it->second.v = Matrix::Zero(p.value.rows(), p.value.cols());
        }
        Moments& s = it->second;
        s.m = beta1_ * s.m + (1.0 - beta1_) * grad;
        s.v = beta2_ * s.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1_, step);
        const double c2 = 1.0 - std::pow(beta2_, step);
        p.value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + epsilon_);
    }

    void save(Checkpoint& ck) const {
        for (const auto& [name, s] : state_) {
            ck.tensors["adam_m/" + name] = s.m;
            ck.tensors["adam_v/" + name] = s.v;
        }
    }

    void load(const Checkpoint& ck) {
        state_.clear();
        for (const auto& [key, m] : ck.tensors) {
            if (key.rfind("adam_m/", 0) == 0) state_[key.substr(7)].m = m;
            if (key.rfind("adam_v/", 0) == 0) state_[key.substr(7)].v = m;
        }
    }

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double epsilon_ = 1e-8;
    std::map<std::string, Moments> state_;
};

struct StepRecord {
    int iteration = 0;  // 0-based index of the step just taken
    double lr = 0.0;
    int scene = 0;
    LossBundle bundle;
};

/// Per-attribute reciprocal-frequency weights over the labelled training queries.
inline Matrix attribute_weights_for(const std::vector<TrainingScene>& scenes, int n_attributes) {
    std::vector<int> counts(static_cast<std::size_t>(std::max(n_attributes, 1)), 0);
    int labelled = 0;
    for (const auto& s : scenes) {
        for (const auto& q : s.queries) {
            if (q.attribute_labels.empty()) continue;
            ++labelled;
            for (int a : q.attribute_labels) ++counts[static_cast<std::size_t>(a)];
        }
    }
    return attribute_class_weights(counts, labelled);
}

inline WordVectorTable word_table_for(const TrainConfig& cfg, const DatasetHeader& h) {
    if (!cfg.word_vectors.empty()) return WordVectorTable::load(cfg.word_vectors);
    std::vector<std::string> words = h.vocab;
    words.insert(words.end(), h.categories.begin(), h.categories.end());
    return WordVectorTable::orthogonal(words);
}

/// Weakly supervised trainer: one image per step, sequential epochs over a seeded shuffle.
class Trainer {
public:
    /// Fresh run.
    Trainer(const Dataset& data, const TrainConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        if (data.scenes.empty()) throw TrainingError("training set is empty");
        const WordVectorTable table = word_table_for(cfg_, data.header);
        auto [tok, cat] = align_word_vectors(data.header, table);
        model_ = EarnModel(cfg_.model, dims_for(data.header, table.dim()), std::move(tok), std::move(cat), cfg_.seed);
        adam_ = Adam(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_epsilon);
        rng_.seed(cfg_.seed ^ 0x5eedULL);
        prepare(data);
        order_.resize(scenes_.size());
        std::iota(order_.begin(), order_.end(), 0);
        order_pos_ = static_cast<int>(order_.size());  // forces a shuffle on the first step
    }

    /// Resume from a checkpoint. `requested` may extend max_iterations but must
    /// otherwise match the stored configuration.
    Trainer(const Dataset& data, const Checkpoint& ck, const std::optional<TrainConfig>& requested = std::nullopt)
        : cfg_(ck.config) {
        if (requested) {
            TrainConfig a = *requested;
            TrainConfig b = ck.config;
            a.max_iterations = b.max_iterations = 0;
            if (!(a == b)) throw TrainingError("resume: configuration differs from checkpoint");
            cfg_.max_iterations = requested->max_iterations;
        }
        if (data.scenes.empty()) throw TrainingError("training set is empty");
        const ModelDims expect = dims_for(data.header, ck.dims.word_dim);
        if (!(expect == ck.dims)) throw TrainingError("resume: dataset dimensions differ from checkpoint");
        model_ = model_from_checkpoint(ck);
        adam_ = Adam(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_epsilon);
        adam_.load(ck);
        iteration_ = ck.iteration;
        std::istringstream(ck.rng_state) >> rng_;
        order_ = ck.order;
        order_pos_ = ck.order_pos;
        prepare(data);
        if (order_.size() != scenes_.size()) throw TrainingError("resume: dataset size differs from checkpoint");
    }

    const TrainConfig& config() const { return cfg_; }
    const EarnModel& model() const { return model_; }
    EarnModel& model() { return model_; }
    int iteration() const { return iteration_; }
    bool done() const { return iteration_ >= cfg_.max_iterations; }

    /// One optimizer step on the next image.
    StepRecord step() {
        if (order_pos_ >= static_cast<int>(order_.size())) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            order_pos_ = 0;
        }
        const int scene = order_[static_cast<std::size_t>(order_pos_++)];
        const int idx = iteration_;
        const double lr = learning_rate_at(cfg_, idx);

        ad::Tape tape;
        const StepLoss loss = model_.image_loss(tape, features_[static_cast<std::size_t>(scene)],
                                                scenes_[static_cast<std::size_t>(scene)].queries, cfg_.coef,
                                                attribute_weights_);
        const auto values = loss.bundle.values();
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (!std::isfinite(values[k])) {
                throw TrainingError(std::string("non-finite loss term ") + LossBundle::kNames[k] + " at iteration " +
                                    std::to_string(idx));
            }
        }
        tape.backward(loss.total);
        model_.visit([&](const std::string& name, ad::Parameter& p) {
            adam_.update(name, p, tape.gradient(p), lr, idx + 1);
        });
        ++iteration_;
        return {idx, lr, scene, loss.bundle};
    }

    /// Steps until max_iterations, reporting each step.
    void run(const std::function<void(const StepRecord&)>& on_step = {}) {
        while (!done()) {
            const StepRecord r = step();
            if (on_step) on_step(r);
        }
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.config = cfg_;
        ck.dims = model_.dims();
        ck.iteration = iteration_;
        store_model(model_, ck);
        adam_.save(ck);
        std::ostringstream rs;
        rs << rng_;
        ck.rng_state = rs.str();
        ck.order = order_;
        ck.order_pos = order_pos_;
        return ck;
    }

    /// Loss of every query batch under the current parameters, without updating.
    LossBundle evaluate_loss(int scene) const {
        ad::Tape tape;
        return model_
            .image_loss(tape, features_[static_cast<std::size_t>(scene)], scenes_[static_cast<std::size_t>(scene)].queries,
                        cfg_.coef, attribute_weights_)
            .bundle;
    }

private:
    void prepare(const Dataset& data) {
        scenes_.clear();
        features_.clear();
        for (const auto& s : data.scenes) {
            scenes_.push_back(strip_labels(s));
            features_.push_back(model_.features(scenes_.back()));
        }
        attribute_weights_ = attribute_weights_for(scenes_, model_.dims().n_attributes);
    }

    TrainConfig cfg_;
    EarnModel model_;
    Adam adam_;
    std::mt19937_64 rng_;
    std::vector<int> order_;
    int order_pos_ = 0;
    int iteration_ = 0;
    std::vector<TrainingScene> scenes_;
    std::vector<CueFeatures> features_;
    Matrix attribute_weights_;
};

/// CSV metrics log: iteration, lr, then every LossBundle term.
class MetricsLog {
public:
    explicit MetricsLog(const std::string& path, bool append = false)
        : out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot write metrics log: " + path);
        if (!append) {
            out_ << "iteration,lr";
            for (const char* n : LossBundle::kNames) out_ << ',' << n;
            out_ << '\n';
        }
        out_.precision(17);
    }

    void write(const StepRecord& r) {
        out_ << r.iteration << ',' << r.lr;
        for (double v : r.bundle.values()) out_ << ',' << v;
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace earn
