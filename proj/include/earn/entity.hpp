#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "earn/autodiff.hpp"
#include "earn/nn.hpp"
#include "earn/visual_encoder.hpp"

namespace earn {

using RowVector = Eigen::RowVectorXd;

/// Fixed word vectors used for semantic similarity between categories and entity words.
class WordVectorTable {
public:
    WordVectorTable() = default;

    WordVectorTable(std::vector<std::string> words, Matrix vectors) : words_(std::move(words)), vectors_(std::move(vectors)) {
        if (static_cast<Eigen::Index>(words_.size()) != vectors_.rows()) {
            throw std::invalid_argument("WordVectorTable: one vector per word required");
        }
        if (!vectors_.allFinite()) throw std::invalid_argument("WordVectorTable: non-finite entry");
        for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
    }

    /// One-hot vector per word; "<unk>" (and any unknown word) maps to the zero vector.
    static WordVectorTable orthogonal(const std::vector<std::string>& words) {
        std::vector<std::string> keep;
        for (const auto& w : words) {
            if (w != kUnkWord && std::find(keep.begin(), keep.end(), w) == keep.end()) keep.push_back(w);
        }
        return WordVectorTable(keep, Matrix::Identity(static_cast<Eigen::Index>(keep.size()),
                                                      static_cast<Eigen::Index>(keep.size())));
    }

    /// Plain text, one line per word: "word v1 v2 ... vD".
    static WordVectorTable load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open word vector file: " + path);
        std::vector<std::string> words;
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::istringstream ss(line);
            std::string w;
            if (!(ss >> w)) continue;
            std::vector<double> v;
            double x = 0.0;
            while (ss >> x) v.push_back(x);
            if (v.empty() || (!rows.empty() && v.size() != rows.front().size())) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": inconsistent vector dimension");
            }
            words.push_back(w);
            rows.push_back(std::move(v));
        }
        Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        return WordVectorTable(std::move(words), std::move(m));
    }

    int dim() const { return static_cast<int>(vectors_.cols()); }
    std::size_t size() const { return words_.size(); }

    /// Total lookup: unknown words fall back to the "<unk>" row when present, else zeros.
    RowVector lookup(const std::string& word) const {
        if (auto it = index_.find(word); it != index_.end()) return vectors_.row(it->second);
        if (auto it = index_.find(kUnkWord); it != index_.end()) return vectors_.row(it->second);
        return RowVector::Zero(vectors_.cols());
    }

private:
    std::vector<std::string> words_;
    Matrix vectors_;
    std::unordered_map<std::string, int> index_;
};

inline double cosine_similarity(const RowVector& a, const RowVector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

/// Clamped cosine similarity between each category vector and the entity word vector.
inline Eigen::VectorXd semantic_similarity(const std::vector<int>& categories, const std::optional<RowVector>& entity,
                                           const Matrix& category_vectors) {
    Eigen::VectorXd sim = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(categories.size()));
    if (!entity) return sim;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const double c = cosine_similarity(category_vectors.row(categories[i]), *entity);
        sim(static_cast<Eigen::Index>(i)) = std::clamp(c, 0.0, 1.0);
    }
    return sim;
}

/// Clamp to [0,1] and L1-normalize; an all-zero input becomes uniform.
inline Eigen::VectorXd similarity_target(const Eigen::VectorXd& sim) {
    Eigen::VectorXd t = sim.cwiseMax(0.0).cwiseMin(1.0);
    const double s = t.sum();
    if (s <= 0.0) return Eigen::VectorXd::Constant(t.size(), 1.0 / static_cast<double>(t.size()));
    return t / s;
}

/// MSE between an attention distribution and its semantic-similarity target.
inline ad::Var entity_supervision_loss(const ad::Var& scores, const Eigen::VectorXd& sim) {
    ad::Tape& t = *scores.tape();
    Matrix target = similarity_target(sim);
    target.resize(scores.rows(), scores.cols());
    return ad::mse(scores, t.constant(std::move(target)));
}

enum class FilterMode { none, soft, hard };

/// Hard filter: keep proposals whose score divided by the maximum reaches `threshold`.
/// The arg-max always survives.
inline std::vector<bool> hard_filter_mask(const Eigen::VectorXd& scores, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw std::invalid_argument("filter threshold must lie in [0,1]");
    std::vector<bool> keep(static_cast<std::size_t>(scores.size()), true);
    const double mx = scores.maxCoeff();
    if (!(mx > 0.0)) return keep;
    for (Eigen::Index i = 0; i < scores.size(); ++i) keep[static_cast<std::size_t>(i)] = scores(i) / mx >= threshold;
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    keep[static_cast<std::size_t>(best)] = true;
    return keep;
}

/// Candidate mask for the given filter mode; soft and none keep everything
/// (soft filtering multiplies the final scores instead).
inline std::vector<bool> apply_filter(const Eigen::VectorXd& subject_scores, FilterMode mode, double threshold) {
    if (mode == FilterMode::hard) return hard_filter_mask(subject_scores, threshold);
    return std::vector<bool>(static_cast<std::size_t>(subject_scores.size()), true);
}

/// Object scores after the multiplicative distance penalty s * (1 - d / diagonal).
inline Eigen::VectorXd penalize_by_distance(const Eigen::VectorXd& scores, const ContextPairs& pairs, const Box& target,
                                            const std::vector<Box>& boxes, double width, double height) {
    const double diag = std::hypot(width, height);
    Eigen::VectorXd out = scores;
    for (int k = 0; k < pairs.size(); ++k) {
        const double d = center_distance(target, boxes[static_cast<std::size_t>(pairs.indices[static_cast<std::size_t>(k)])]);
        out(k) *= std::max(0.0, 1.0 - d / diag);
    }
    return out;
}

/// Index of the max entry, lowest index on ties.
inline int argmax_first(const Eigen::VectorXd& v) {
    int best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = static_cast<int>(i);
    }
    return best;
}

/// Pooled context feature (1 x D_c) for one target. `selection_scores` are the
/// (possibly distance penalized) values used by the max-pooling modes.
inline ad::Var pool_context(ad::Tape& t, const ContextPairs& pairs, const ad::Var& object_scores, ContextMode mode,
                            const Eigen::VectorXd& selection_scores, int context_dim) {
    if (pairs.size() == 0) return t.constant(Matrix::Zero(1, context_dim));
    if (mode == ContextMode::soft_all) {
        return ad::matmul(ad::transpose(object_scores), t.constant(pairs.features));
    }
    return t.constant(pairs.features.row(argmax_first(selection_scores)));
}

struct EntityConfig {
    int subject_dim = 0;
    int context_dim = 0;  // raw v_j dimension
    int word_dim = 0;
    int hidden = 128;
};

/// Subject and object attention: two-layer perceptrons over [feature, entity vector].
class EntityAttention {
public:
    EntityAttention() = default;
    EntityAttention(const EntityConfig& cfg, nn::Initializer& init)
        : cfg_(cfg),
          subject_(cfg.subject_dim + cfg.word_dim, cfg.hidden, 1, init),
          object_(cfg.context_dim + cfg.word_dim, cfg.hidden, 1, init) {}

    const EntityConfig& config() const { return cfg_; }

    /// Softmax over proposals (N x 1). A null entity gives the uniform distribution.
    ad::Var subject_scores(ad::Tape& t, const Matrix& subject_features, const std::optional<RowVector>& emb) const {
        const auto n = subject_features.rows();
        if (!emb) return t.constant(Matrix::Constant(n, 1, 1.0 / static_cast<double>(n)));
        return ad::softmax(score(t, subject_, subject_features, *emb));
    }

    /// Raw object logits per proposal j (N x 1); v_ij depends only on j.
    ad::Var object_logits(ad::Tape& t, const Matrix& context_raw, const RowVector& emb) const {
        return score(t, object_, context_raw, emb);
    }

    /// Per-target object distributions over each candidate set (M_i x 1; invalid Var when M_i = 0).
    std::vector<ad::Var> object_scores(ad::Tape& t, const CueFeatures& f, const std::optional<RowVector>& emb) const {
        std::vector<ad::Var> out(f.context.size());
        ad::Var logits;
        if (emb) logits = object_logits(t, f.context_raw, *emb);
        for (std::size_t i = 0; i < f.context.size(); ++i) {
            const int m = f.context[i].size();
            if (m == 0) continue;
            if (!emb) {
                out[i] = t.constant(Matrix::Constant(m, 1, 1.0 / m));
            } else {
                out[i] = ad::softmax(ad::gather_rows(logits, f.context[i].indices));
            }
        }
        return out;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        subject_.visit(prefix + ".subject_att", f);
        object_.visit(prefix + ".object_att", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        subject_.visit(prefix + ".subject_att", f);
        object_.visit(prefix + ".object_att", f);
    }

private:
    static ad::Var score(ad::Tape& t, const nn::Mlp2& mlp, const Matrix& features, const RowVector& emb) {
        if (features.cols() + emb.size() != mlp.in_dim()) throw std::invalid_argument("entity attention: dimension mismatch");
        Matrix input(features.rows(), features.cols() + emb.size());
        input << features, emb.replicate(features.rows(), 1);
        return mlp(t, t.constant(std::move(input)));
    }

    EntityConfig cfg_;
    nn::Mlp2 subject_;
    nn::Mlp2 object_;
};

}  // namespace earn
