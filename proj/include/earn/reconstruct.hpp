#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "earn/autodiff.hpp"
#include "earn/lang_encoder.hpp"
#include "earn/nn.hpp"

namespace earn {

/// Score-weighted sum of per-proposal features: (1 x N) . (N x D).
inline ad::Var attentive_pool(const ad::Var& scores, const ad::Var& features) {
    if (scores.rows() != features.rows() || scores.cols() != 1) throw std::invalid_argument("attentive_pool: shape mismatch");
    return ad::matmul(ad::transpose(scores), features);
}

/// LSTM decoder that scores a teacher-forced token sequence given a conditioning vector.
/// The conditioning vector is the input at step 0 only; then BOS and the target tokens
/// follow, predicting the tokens and finally EOS. Output classes are the V words plus EOS.
class QueryDecoder {
public:
    QueryDecoder() = default;
    QueryDecoder(int vocab_size, int input_dim, int hidden_dim, nn::Initializer& init)
        : vocab_size_(vocab_size),
          embedding_(init.make(vocab_size + 1, input_dim)),
          cell_(input_dim, hidden_dim, init),
          output_(hidden_dim, vocab_size + 1, init) {}

    int vocab_size() const { return vocab_size_; }
    int eos() const { return vocab_size_; }
    int bos() const { return vocab_size_; }
    int input_dim() const { return static_cast<int>(embedding_.value.cols()); }

    nn::Linear& output_layer() { return output_; }

    /// -sum_t log P(target_t), over the tokens followed by EOS.
    ad::Var negative_log_likelihood(ad::Tape& t, const ad::Var& conditioning, const std::vector<int>& tokens) const {
        if (conditioning.rows() != 1 || conditioning.cols() != input_dim()) {
            throw std::invalid_argument("decoder: conditioning vector has wrong dimension");
        }
        for (int tok : tokens) {
            if (tok < 0 || tok >= vocab_size_) throw std::out_of_range("decoder: token out of range");
        }
        nn::LstmState s = cell_.step(t, conditioning, cell_.zero_state(t));

        std::vector<int> inputs{bos()};
        inputs.insert(inputs.end(), tokens.begin(), tokens.end());
        std::vector<int> targets(tokens.begin(), tokens.end());
        targets.push_back(eos());

        const ad::Var emb = ad::gather_rows(t.parameter(embedding_), inputs);
        std::vector<ad::Var> hs;
        hs.reserve(inputs.size());
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            s = cell_.step(t, ad::slice_rows(emb, static_cast<ad::Index>(k), 1), s);
            hs.push_back(s.h);
        }
        const ad::Var logp = ad::log_softmax_rows(output_(t, ad::concat_rows(hs)));
        return ad::scale(ad::pick_sum(logp, targets), -1.0);
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".embedding", embedding_);
        cell_.visit(prefix + ".lstm", f);
        output_.visit(prefix + ".output", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".embedding", embedding_);
        cell_.visit(prefix + ".lstm", f);
        output_.visit(prefix + ".output", f);
    }

private:
    int vocab_size_ = 0;
    ad::Parameter embedding_;
    nn::LstmCell cell_;
    nn::Linear output_;
};

/// Reciprocal label frequency per attribute; attributes never seen get weight 1.
inline Matrix attribute_class_weights(const std::vector<int>& counts, int labelled_queries) {
    Matrix w(1, static_cast<ad::Index>(counts.size()));
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const auto c = static_cast<ad::Index>(j);
        w(0, c) = (counts[j] > 0 && labelled_queries > 0)
                      ? static_cast<double>(labelled_queries) / static_cast<double>(counts[j])
                      : 1.0;
    }
    return w;
}

struct ReconstructionConfig {
    int vocab_size = 0;
    int phrase_dim = 64;
    int subject_dim = 0;
    int context_dim = 0;
    int decoder_input = 64;
    int decoder_hidden = 64;
    int n_attributes = 0;
};

/// Learned pieces of the collaborative reconstruction objective.
class Reconstructor {
public:
    Reconstructor() = default;
    Reconstructor(const ReconstructionConfig& cfg, nn::Initializer& init)
        : cfg_(cfg),
          visual_fc_{nn::Linear(cfg.subject_dim, cfg.phrase_dim, init), nn::Linear(kLocationDim, cfg.phrase_dim, init),
                     nn::Linear(cfg.context_dim, cfg.phrase_dim, init)},
          fuse_language_(3 * cfg.phrase_dim, cfg.decoder_input, init),
          adaptive_decoder_(cfg.vocab_size, cfg.decoder_input, cfg.decoder_hidden, init),
          fuse_visual_(cfg.subject_dim + kLocationDim + cfg.context_dim, cfg.decoder_input, init),
          language_decoder_(cfg.vocab_size, cfg.decoder_input, cfg.decoder_hidden, init),
          attribute_(cfg.subject_dim, std::max(cfg.n_attributes, 1), init) {}

    const ReconstructionConfig& config() const { return cfg_; }

    /// L_x = MSE(FC_x(v~_x), q_x).
    ad::Var visual_cue_loss(ad::Tape& t, Cue cue, const ad::Var& pooled, const ad::Var& phrase) const {
        return ad::mse(visual_fc_[static_cast<std::size_t>(cue)](t, pooled), phrase);
    }

    /// f_alan = ReLU(W_l [q_s; q_l; q_c] + b_l).
    ad::Var fused_language(ad::Tape& t, const LangEncoding& enc) const {
        return ad::relu(fuse_language_(t, ad::concat_cols({enc.phrase[0], enc.phrase[1], enc.phrase[2]})));
    }

    ad::Var adaptive_language_loss(ad::Tape& t, const LangEncoding& enc, const std::vector<int>& tokens) const {
        return adaptive_decoder_.negative_log_likelihood(t, fused_language(t, enc), tokens);
    }

    /// r_vis^i = ReLU(W_v [r_s^i; r_l^i; r_c^i] + b_v), N x decoder_input.
    ad::Var visual_rows(ad::Tape& t, const ad::Var& subject, const ad::Var& location, const ad::Var& context) const {
        return ad::relu(fuse_visual_(t, ad::concat_cols({subject, location, context})));
    }

    ad::Var language_loss(ad::Tape& t, const ad::Var& scores, const ad::Var& visual_rows,
                          const std::vector<int>& tokens) const {
        return language_decoder_.negative_log_likelihood(t, attentive_pool(scores, visual_rows), tokens);
    }

    /// Weighted multi-label BCE of the attribute predictor on the pooled subject feature.
    ad::Var attribute_loss(ad::Tape& t, const ad::Var& pooled_subject, const std::vector<int>& labels,
                           const Matrix& class_weights) const {
        const int a = cfg_.n_attributes;
        Matrix target = Matrix::Zero(1, std::max(a, 1));
        for (int l : labels) {
            if (l < 0 || l >= a) throw std::out_of_range("attribute label out of vocabulary");
            target(0, l) = 1.0;
        }
        if (class_weights.cols() != target.cols()) throw std::invalid_argument("attribute weights: size mismatch");
        return ad::weighted_bce_with_logits(attribute_(t, pooled_subject), target, class_weights);
    }

    const QueryDecoder& adaptive_decoder() const { return adaptive_decoder_; }
    const QueryDecoder& language_decoder() const { return language_decoder_; }
    nn::Linear& fuse_language_layer() { return fuse_language_; }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        visit_impl(*this, prefix, f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        visit_impl(*this, prefix, f);
    }

private:
    template <class Self, class F>
    static void visit_impl(Self& self, const std::string& prefix, F& f) {
        for (std::size_t c = 0; c < 3; ++c) self.visual_fc_[c].visit(prefix + ".visual_fc_" + cue_name(kCues[c]), f);
        self.fuse_language_.visit(prefix + ".fuse_language", f);
        self.adaptive_decoder_.visit(prefix + ".adaptive_decoder", f);
        self.fuse_visual_.visit(prefix + ".fuse_visual", f);
        self.language_decoder_.visit(prefix + ".language_decoder", f);
        self.attribute_.visit(prefix + ".attribute", f);
    }

    ReconstructionConfig cfg_;
    std::array<nn::Linear, 3> visual_fc_;
    nn::Linear fuse_language_;
    QueryDecoder adaptive_decoder_;
    nn::Linear fuse_visual_;
    QueryDecoder language_decoder_;
    nn::Linear attribute_;
};

struct LossCoefficients {
    double alpha = 0.01;  // adaptive visual reconstruction
    double beta = 1.0;    // adaptive language reconstruction
    double gamma = 1.0;   // language reconstruction
    double lambda = 1.0;  // attribute classification

    friend bool operator==(const LossCoefficients&, const LossCoefficients&) = default;
};

/// Named loss terms of one training step together with their mixing coefficients.
struct LossBundle {
    double loss_sub = 0.0;
    double loss_obj = 0.0;
    double L_s = 0.0;
    double L_l = 0.0;
    double L_c = 0.0;
    double loss_avis = 0.0;
    double loss_alan = 0.0;
    double loss_adp = 0.0;
    double loss_lan = 0.0;
    double loss_att = 0.0;
    double loss_clb = 0.0;
    double total = 0.0;
    LossCoefficients coef;

    static constexpr std::array<const char*, 12> kNames{"loss_sub", "loss_obj", "L_s",      "L_l",
                                                        "L_c",      "loss_avis", "loss_alan", "loss_adp",
                                                        "loss_lan", "loss_att",  "loss_clb",  "total"};
    std::array<double, 12> values() const {
        return {loss_sub, loss_obj, L_s, L_l, L_c, loss_avis, loss_alan, loss_adp, loss_lan, loss_att, loss_clb, total};
    }
};

/// Raw terms before composition.
struct LossTerms {
    double loss_sub = 0.0;
    double loss_obj = 0.0;
    std::array<double, 3> cue{};  // L_s, L_l, L_c
    double loss_avis = 0.0;
    double loss_alan = 0.0;
    double loss_lan = 0.0;
    double loss_att = 0.0;
};

inline double adaptive_visual_loss(const std::array<double, 3>& cue_losses, const std::array<double, 3>& weights) {
    return weights[0] * cue_losses[0] + weights[1] * cue_losses[1] + weights[2] * cue_losses[2];
}

inline LossBundle compose_losses(const LossTerms& t, const LossCoefficients& c) {
    LossBundle b;
    b.coef = c;
    b.loss_sub = t.loss_sub;
    b.loss_obj = t.loss_obj;
    b.L_s = t.cue[0];
    b.L_l = t.cue[1];
    b.L_c = t.cue[2];
    b.loss_avis = t.loss_avis;
    b.loss_alan = t.loss_alan;
    b.loss_lan = t.loss_lan;
    b.loss_att = t.loss_att;
    b.loss_adp = c.alpha * b.loss_avis + c.beta * b.loss_alan;
    b.loss_clb = b.loss_adp + c.gamma * b.loss_lan + c.lambda * b.loss_att;
    b.total = b.loss_sub + b.loss_obj + b.loss_clb;
    return b;
}

}  // namespace earn
