#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "earn/autodiff.hpp"
#include "earn/nn.hpp"

namespace earn {

enum class Cue { subject = 0, location = 1, context = 2 };
inline constexpr std::array<Cue, 3> kCues{Cue::subject, Cue::location, Cue::context};
inline constexpr const char* cue_name(Cue c) {
    switch (c) {
        case Cue::subject: return "subject";
        case Cue::location: return "location";
        case Cue::context: return "context";
    }
    return "?";
}

using CueMask = std::array<bool, 3>;

struct LangEncoderConfig {
    int vocab_size = 0;
    int embed_dim = 64;
    int hidden_dim = 64;
    /// Pool BiLSTM hidden states instead of word embeddings in the phrase attention.
    bool pool_hidden = false;

    int phrase_dim() const { return pool_hidden ? 2 * hidden_dim : embed_dim; }
};

/// Cue-specific phrase features and cue weights for one query.
struct LangEncoding {
    std::array<ad::Var, 3> phrase;     // q_s, q_l, q_c, each 1 x phrase_dim
    ad::Var cue_weights;               // 1 x 3, on the simplex
    std::array<ad::Var, 3> word_attn;  // each T x 1
    ad::Var embeddings;                // T x embed_dim
    ad::Var h_seq;                     // T x 2*hidden_dim
    ad::Var h_ends;                    // 1 x 4*hidden_dim, [first, last]

    const ad::Var& q(Cue c) const { return phrase[static_cast<std::size_t>(c)]; }
    double weight(Cue c) const { return cue_weights.value()(0, static_cast<int>(c)); }
};

/// Bidirectional LSTM query encoder with one attention head per cue.
class LangEncoder {
public:
    LangEncoder() = default;

    LangEncoder(const LangEncoderConfig& cfg, nn::Initializer& init)
        : cfg_(cfg),
          embedding_(init.make(cfg.vocab_size, cfg.embed_dim)),
          forward_(cfg.embed_dim, cfg.hidden_dim, init),
          backward_(cfg.embed_dim, cfg.hidden_dim, init),
          attention_{nn::Linear(2 * cfg.hidden_dim, 1, init), nn::Linear(2 * cfg.hidden_dim, 1, init),
                     nn::Linear(2 * cfg.hidden_dim, 1, init)},
          cue_fc_(4 * cfg.hidden_dim, 3, init) {
        if (cfg.vocab_size < 1) throw std::invalid_argument("LangEncoder: empty vocabulary");
    }

    const LangEncoderConfig& config() const { return cfg_; }
    const ad::Parameter& embedding_table() const { return embedding_; }
    ad::Parameter& embedding_table() { return embedding_; }

    ad::Var embed_tokens(ad::Tape& t, const std::vector<int>& tokens) const {
        for (int tok : tokens) {
            if (tok < 0 || tok >= cfg_.vocab_size) throw std::out_of_range("token id out of vocabulary range");
        }
        return ad::gather_rows(t.parameter(embedding_), tokens);
    }

    LangEncoding encode(ad::Tape& t, const std::vector<int>& tokens, const CueMask& cues = {true, true, true}) const {
        if (tokens.empty()) throw std::invalid_argument("encode_query: empty token sequence");
        const int n = static_cast<int>(tokens.size());
        LangEncoding out;
        out.embeddings = embed_tokens(t, tokens);

        std::vector<ad::Var> rows(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = ad::slice_rows(out.embeddings, i, 1);

        std::vector<ad::Var> fwd(rows.size()), bwd(rows.size());
        nn::LstmState s = forward_.zero_state(t);
        for (int i = 0; i < n; ++i) {
            s = forward_.step(t, rows[static_cast<std::size_t>(i)], s);
            fwd[static_cast<std::size_t>(i)] = s.h;
        }
        s = backward_.zero_state(t);
        for (int i = n - 1; i >= 0; --i) {
            s = backward_.step(t, rows[static_cast<std::size_t>(i)], s);
            bwd[static_cast<std::size_t>(i)] = s.h;
        }
        std::vector<ad::Var> hs(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) hs[i] = ad::concat_cols({fwd[i], bwd[i]});
        out.h_seq = ad::concat_rows(hs);

        const ad::Var pool_source = cfg_.pool_hidden ? out.h_seq : out.embeddings;
        for (std::size_t c = 0; c < 3; ++c) {
            const ad::Var logits = attention_[c](t, out.h_seq);  // T x 1
            out.word_attn[c] = ad::softmax(logits);
            out.phrase[c] = ad::matmul(ad::transpose(out.word_attn[c]), pool_source);
        }

        out.h_ends = ad::concat_cols({hs.front(), hs.back()});
        out.cue_weights = ad::masked_softmax(cue_fc_(t, out.h_ends), {cues[0], cues[1], cues[2]});
        return out;
    }

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
        f(prefix + ".embedding", self.embedding_);
        self.forward_.visit(prefix + ".lstm_fwd", f);
        self.backward_.visit(prefix + ".lstm_bwd", f);
        for (std::size_t c = 0; c < 3; ++c) self.attention_[c].visit(prefix + ".attn_" + cue_name(kCues[c]), f);
        self.cue_fc_.visit(prefix + ".cue_fc", f);
    }

    LangEncoderConfig cfg_;
    ad::Parameter embedding_;
    nn::LstmCell forward_;
    nn::LstmCell backward_;
    std::array<nn::Linear, 3> attention_;
    nn::Linear cue_fc_;
};

}  // namespace earn
