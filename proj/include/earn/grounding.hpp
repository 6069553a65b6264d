#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "earn/autodiff.hpp"
#include "earn/entity.hpp"
#include "earn/lang_encoder.hpp"
#include "earn/nn.hpp"

namespace earn {

struct GroundingConfig {
    int phrase_dim = 64;
    int subject_dim = 0;
    int context_dim = 0;  // pooled pair feature dimension
    int hidden = 128;
};

/// Proposal attention: one independent two-layer perceptron per cue scoring [q_x, r_x^i].
class CueMatcher {
public:
    CueMatcher() = default;
    CueMatcher(const GroundingConfig& cfg, nn::Initializer& init)
        : cfg_(cfg),
          mlps_{nn::Mlp2(cfg.phrase_dim + cfg.subject_dim, cfg.hidden, 1, init),
                nn::Mlp2(cfg.phrase_dim + kLocationDim, cfg.hidden, 1, init),
                nn::Mlp2(cfg.phrase_dim + cfg.context_dim, cfg.hidden, 1, init)} {}

    /// Raw matching logits, N x 1.
    ad::Var logits(ad::Tape& t, Cue cue, const ad::Var& phrase, const ad::Var& features) const {
        const nn::Mlp2& mlp = mlps_[static_cast<std::size_t>(cue)];
        if (phrase.cols() + features.cols() != mlp.in_dim()) {
            throw std::invalid_argument(std::string("cue_matching: dimension mismatch for ") + cue_name(cue));
        }
        const ad::Var input = ad::concat_cols({ad::repeat_rows(phrase, features.rows()), features});
        return mlp(t, input);
    }

    /// Softmax over proposals with mask == true; masked entries are exactly 0.
    ad::Var match(ad::Tape& t, Cue cue, const ad::Var& phrase, const ad::Var& features,
                  const std::vector<bool>& mask) const {
        return ad::masked_softmax(logits(t, cue, phrase, features), mask);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (std::size_t c = 0; c < 3; ++c) mlps_[c].visit(prefix + "." + cue_name(kCues[c]), f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        for (std::size_t c = 0; c < 3; ++c) mlps_[c].visit(prefix + "." + cue_name(kCues[c]), f);
    }

private:
    GroundingConfig cfg_;
    std::array<nn::Mlp2, 3> mlps_;
};

struct Combined {
    ad::Var final_scores;  // N x 1, after the optional soft filter
    int selected = 0;
};

/// Index of the maximum of a column vector; lowest index wins ties.
inline int select_proposal(const Matrix& scores) {
    int best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) best = static_cast<int>(i);
    }
    return best;
}

/// S_t = sum_x w_x s_x, then optionally multiplied by the soft-filter weights.
/// Cue score Vars may be invalid for disabled cues (their weight is zero).
inline Combined combine(const std::array<ad::Var, 3>& cue_scores, const ad::Var& weights,
                        const std::optional<ad::Var>& soft_filter = std::nullopt) {
    std::optional<ad::Var> total;
    for (std::size_t c = 0; c < 3; ++c) {
        if (!cue_scores[c].valid()) continue;
        const ad::Var term = ad::scale_by(cue_scores[c], ad::slice_cols(weights, static_cast<ad::Index>(c), 1));
        total = total ? ad::add(*total, term) : term;
    }
    if (!total) throw std::invalid_argument("combine: no active cue");
    if (soft_filter) total = ad::hadamard(*total, *soft_filter);
    return {*total, select_proposal(total->value())};
}

}  // namespace earn
