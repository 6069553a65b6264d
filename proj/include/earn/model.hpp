#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "earn/autodiff.hpp"
#include "earn/dataset.hpp"
#include "earn/entity.hpp"
#include "earn/grounding.hpp"
#include "earn/lang_encoder.hpp"
#include "earn/nn.hpp"
#include "earn/reconstruct.hpp"
#include "earn/visual_encoder.hpp"

namespace earn {

/// Architecture switches and widths of the grounding network.
struct ModelConfig {
    int embed_dim = 64;
    int hidden_dim = 64;
    int match_hidden = 128;
    int entity_hidden = 128;
    bool pool_hidden = false;
    ContextMode context_mode = ContextMode::soft_all;
    ContextLocation context_location = ContextLocation::relative;
    FilterMode filter_mode = FilterMode::hard;
    double filter_threshold = 0.6;
    bool distance_penalty = false;
    bool use_location = true;
    bool use_context = true;
    bool entity_enhancement = true;
    nn::InitScheme init = nn::InitScheme::uniform;

    CueMask cue_mask() const { return {true, use_location, use_context}; }
    FilterMode effective_filter() const { return entity_enhancement ? filter_mode : FilterMode::none; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Sizes fixed by the dataset and the word-vector table.
struct ModelDims {
    int vocab_size = 0;
    int n_attributes = 0;
    int n_categories = 0;
    int subject_dim = 0;
    int context_raw_dim = 0;
    int word_dim = 0;
    int max_len = 20;

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Grounding-side forward state of one query.
struct QueryForward {
    LangEncoding lang;
    ad::Var subject_scores;               // N x 1
    std::vector<ad::Var> object_scores;   // per target, M_i x 1 (invalid if M_i = 0)
    std::vector<bool> keep;               // hard-filter mask
    std::array<ad::Var, 3> features;      // r_s (N x D_s), r_l (N x 30), r_c (N x D_c)
    std::array<ad::Var, 3> cue_scores;    // N x 1 each; invalid for disabled cues
    Combined combined;
    ad::Var pool_scores;                  // S_t renormalized for reconstruction
    std::optional<RowVector> subject_emb;
    std::optional<RowVector> object_emb;

    int candidates() const {
        int n = 0;
        for (bool k : keep) n += k ? 1 : 0;
        return n;
    }
};

/// Terms of one image (batch of its queries) as graph nodes plus their values.
struct StepLoss {
    ad::Var total;
    LossBundle bundle;
    std::map<std::string, ad::Var> terms;  // unweighted batch means, keyed by LossBundle names
};

class EarnModel {
public:
    EarnModel() = default;

    EarnModel(const ModelConfig& cfg, const ModelDims& dims, Matrix token_vectors, Matrix category_vectors,
              std::uint64_t seed)
        : cfg_(cfg), dims_(dims), token_vectors_(std::move(token_vectors)), category_vectors_(std::move(category_vectors)) {
        if (token_vectors_.rows() != dims.vocab_size || category_vectors_.rows() != dims.n_categories ||
            token_vectors_.cols() != dims.word_dim || category_vectors_.cols() != dims.word_dim) {
            throw std::invalid_argument("EarnModel: word-vector tables disagree with model dims");
        }
        if (cfg.filter_threshold < 0.0 || cfg.filter_threshold > 1.0) {
            throw std::invalid_argument("filter_threshold must lie in [0,1]");
        }
        nn::Initializer init(seed, cfg.init);
        LangEncoderConfig lc{dims.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.pool_hidden};
        lang_ = LangEncoder(lc, init);
        const int ctx_dim = dims.context_raw_dim + context_location_dim(cfg.context_location);
        entity_ = EntityAttention({dims.subject_dim, dims.context_raw_dim, dims.word_dim, cfg.entity_hidden}, init);
        matcher_ = CueMatcher({lc.phrase_dim(), dims.subject_dim, ctx_dim, cfg.match_hidden}, init);
        recon_ = Reconstructor({dims.vocab_size, lc.phrase_dim(), dims.subject_dim, ctx_dim, cfg.embed_dim,
                                cfg.hidden_dim, dims.n_attributes},
                               init);
    }

    const ModelConfig& config() const { return cfg_; }
    const ModelDims& dims() const { return dims_; }
    const Matrix& token_vectors() const { return token_vectors_; }
    const Matrix& category_vectors() const { return category_vectors_; }
    const LangEncoder& lang() const { return lang_; }
    const EntityAttention& entity() const { return entity_; }
    const CueMatcher& matcher() const { return matcher_; }
    const Reconstructor& reconstructor() const { return recon_; }
    Reconstructor& reconstructor() { return recon_; }

    CueFeatures features(const TrainingScene& scene) const {
        return encode_scene(scene.proposals, scene.width, scene.height, cfg_.context_mode, cfg_.context_location);
    }

    std::optional<RowVector> word_vector(const std::optional<int>& token) const {
        if (!token) return std::nullopt;
        if (*token < 0 || *token >= dims_.vocab_size) throw std::out_of_range("entity word out of vocabulary");
        return RowVector(token_vectors_.row(*token));
    }

    /// Grounding forward pass: language encoding, entity attention, filtering,
    /// context pooling, cue matching and score combination.
    QueryForward ground(ad::Tape& t, const CueFeatures& f, const QueryView& q) const {
        QueryForward out;
        const int n = f.size();
        const CueMask cues = cfg_.cue_mask();
        out.lang = lang_.encode(t, q.tokens, cues);

        if (cfg_.entity_enhancement) {
            out.subject_emb = word_vector(q.subject_word);
            out.object_emb = word_vector(q.object_word);
        }
        out.subject_scores = entity_.subject_scores(t, f.subject, out.subject_emb);
        out.object_scores = entity_.object_scores(t, f, out.object_emb);
        const Eigen::VectorXd score_s = out.subject_scores.value();
        out.keep = apply_filter(score_s, cfg_.effective_filter(), cfg_.filter_threshold);

        out.features[0] = t.constant(f.subject);
        out.features[1] = t.constant(f.location);
        std::vector<ad::Var> ctx_rows;
        ctx_rows.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto& pairs = f.context[static_cast<std::size_t>(i)];
            const ad::Var& so = out.object_scores[static_cast<std::size_t>(i)];
            Eigen::VectorXd sel;
            if (pairs.size() > 0) {
                sel = so.value();
                if (cfg_.distance_penalty && cfg_.context_mode != ContextMode::soft_all) {
                    sel = penalize_by_distance(sel, pairs, f.boxes[static_cast<std::size_t>(i)], f.boxes, f.width, f.height);
                }
            }
            ctx_rows.push_back(pool_context(t, pairs, so, cfg_.context_mode, sel, f.context_dim));
        }
        out.features[2] = ad::concat_rows(ctx_rows);

        for (std::size_t c = 0; c < 3; ++c) {
            if (!cues[c]) continue;
            std::vector<bool> mask = out.keep;
            if (kCues[c] == Cue::context) {
                std::vector<bool> with_ctx = mask;
                bool any = false;
                for (int i = 0; i < n; ++i) {
                    with_ctx[static_cast<std::size_t>(i)] =
                        mask[static_cast<std::size_t>(i)] && f.context[static_cast<std::size_t>(i)].size() > 0;
                    any = any || with_ctx[static_cast<std::size_t>(i)];
                }
                if (any) {
                    mask = with_ctx;
                } else {
                    // No candidate has any context: the cue carries no information.
                    out.cue_scores[c] = ad::masked_softmax(t.constant(Matrix::Zero(n, 1)), mask);
                    continue;
                }
            }
            out.cue_scores[c] = matcher_.match(t, kCues[c], out.lang.phrase[c], out.features[c], mask);
        }

        std::optional<ad::Var> soft;
        if (cfg_.effective_filter() == FilterMode::soft) soft = out.subject_scores;
        out.combined = combine(out.cue_scores, out.lang.cue_weights, soft);
        out.pool_scores = soft ? ad::normalize_sum(out.combined.final_scores) : out.combined.final_scores;
        return out;
    }

    /// Composite weakly supervised loss over all queries of one image.
    StepLoss image_loss(ad::Tape& t, const CueFeatures& f, const std::vector<QueryView>& queries,
                        const LossCoefficients& coef, const Matrix& attribute_weights) const {
        if (queries.empty()) throw std::invalid_argument("image_loss: no queries");
        const CueMask cues = cfg_.cue_mask();

        std::vector<ad::Var> sub, obj, avis, alan, lan, att;
        std::array<std::vector<ad::Var>, 3> cue_terms;
        for (const QueryView& q : queries) {
            const QueryForward fw = ground(t, f, q);
            if (cfg_.entity_enhancement) {
                if (fw.subject_emb) {
                    sub.push_back(entity_supervision_loss(
                        fw.subject_scores, semantic_similarity(f.categories, fw.subject_emb, category_vectors_)));
                }
                if (fw.object_emb) {
                    if (auto l = object_supervision_loss(t, f, fw)) obj.push_back(*l);
                }
            }
            if (coef.alpha != 0.0) {
                std::vector<ad::Var> weighted;
                for (std::size_t c = 0; c < 3; ++c) {
                    if (!cues[c]) continue;
                    const ad::Var pooled = attentive_pool(fw.pool_scores, fw.features[c]);
                    const ad::Var l = recon_.visual_cue_loss(t, kCues[c], pooled, fw.lang.phrase[c]);
                    cue_terms[c].push_back(l);
                    weighted.push_back(ad::scale_by(l, ad::slice_cols(fw.lang.cue_weights, static_cast<ad::Index>(c), 1)));
                }
                avis.push_back(ad::add_n(weighted));
            }
            if (coef.beta != 0.0) alan.push_back(recon_.adaptive_language_loss(t, fw.lang, q.tokens));
            if (coef.gamma != 0.0) {
                const ad::Var rows = recon_.visual_rows(t, fw.features[0], fw.features[1], fw.features[2]);
                lan.push_back(recon_.language_loss(t, fw.pool_scores, rows, q.tokens));
            }
            if (coef.lambda != 0.0 && !q.attribute_labels.empty()) {
                const ad::Var pooled_s = attentive_pool(fw.pool_scores, fw.features[0]);
                att.push_back(recon_.attribute_loss(t, pooled_s, q.attribute_labels, attribute_weights));
            }
        }

        auto batch_mean = [&](const std::vector<ad::Var>& terms, double denom) -> std::optional<ad::Var> {
            if (terms.empty()) return std::nullopt;
            return ad::scale(ad::add_n(terms), 1.0 / denom);
        };
        const double b = static_cast<double>(queries.size());
        const auto m_sub = batch_mean(sub, b);
        const auto m_obj = batch_mean(obj, b);
        const auto m_avis = batch_mean(avis, b);
        const auto m_alan = batch_mean(alan, b);
        const auto m_lan = batch_mean(lan, b);
        const auto m_att = batch_mean(att, static_cast<double>(att.size()));

        LossTerms terms;
        auto val = [](const std::optional<ad::Var>& v) { return v ? v->scalar() : 0.0; };
        terms.loss_sub = val(m_sub);
        terms.loss_obj = val(m_obj);
        for (std::size_t c = 0; c < 3; ++c) terms.cue[c] = val(batch_mean(cue_terms[c], b));
        terms.loss_avis = val(m_avis);
        terms.loss_alan = val(m_alan);
        terms.loss_lan = val(m_lan);
        terms.loss_att = val(m_att);

        std::vector<ad::Var> parts;
        if (m_sub) parts.push_back(*m_sub);
        if (m_obj) parts.push_back(*m_obj);
        if (m_avis) parts.push_back(ad::scale(*m_avis, coef.alpha));
        if (m_alan) parts.push_back(ad::scale(*m_alan, coef.beta));
        if (m_lan) parts.push_back(ad::scale(*m_lan, coef.gamma));
        if (m_att) parts.push_back(ad::scale(*m_att, coef.lambda));
        StepLoss out;
        auto keep = [&](const char* name, const std::optional<ad::Var>& v) {
            if (v) out.terms.emplace(name, *v);
        };
        keep("loss_sub", m_sub);
        keep("loss_obj", m_obj);
        for (std::size_t c = 0; c < 3; ++c) keep(LossBundle::kNames[2 + c], batch_mean(cue_terms[c], b));
        keep("loss_avis", m_avis);
        keep("loss_alan", m_alan);
        keep("loss_lan", m_lan);
        keep("loss_att", m_att);
        out.total = parts.empty() ? ad::scalar_constant(t, 0.0) : ad::add_n(parts);
        out.bundle = compose_losses(terms, coef);
        return out;
    }

    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const ad::Parameter& p) { n += static_cast<std::size_t>(p.value.size()); });
        return n;
    }

private:
    std::optional<ad::Var> object_supervision_loss(ad::Tape& t, const CueFeatures& f, const QueryForward& fw) const {
        std::vector<ad::Var> rows;
        std::vector<double> target;
        for (std::size_t i = 0; i < f.context.size(); ++i) {
            const auto& pairs = f.context[i];
            if (pairs.size() == 0) continue;
            std::vector<int> cats;
            for (int j : pairs.indices) cats.push_back(f.categories[static_cast<std::size_t>(j)]);
            const Eigen::VectorXd tr = similarity_target(semantic_similarity(cats, fw.object_emb, category_vectors_));
            target.insert(target.end(), tr.data(), tr.data() + tr.size());
            rows.push_back(fw.object_scores[i]);
        }
        if (rows.empty()) return std::nullopt;
        const Matrix tm = Eigen::Map<const Matrix>(target.data(), static_cast<ad::Index>(target.size()), 1);
        return ad::mse(ad::concat_rows(rows), t.constant(tm));
    }

    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        self.lang_.visit("lang", f);
        self.entity_.visit("entity", f);
        self.matcher_.visit("match", f);
        self.recon_.visit("recon", f);
    }

    ModelConfig cfg_;
    ModelDims dims_;
    Matrix token_vectors_;
    Matrix category_vectors_;
    LangEncoder lang_;
    EntityAttention entity_;
    CueMatcher matcher_;
    Reconstructor recon_;
};

/// Word-vector tables aligned to a dataset's vocabulary and categories.
inline std::pair<Matrix, Matrix> align_word_vectors(const DatasetHeader& h, const WordVectorTable& table) {
    Matrix tok(static_cast<ad::Index>(h.vocab.size()), table.dim());
    for (std::size_t i = 0; i < h.vocab.size(); ++i) tok.row(static_cast<ad::Index>(i)) = table.lookup(h.vocab[i]);
    Matrix cat(static_cast<ad::Index>(h.categories.size()), table.dim());
    for (std::size_t i = 0; i < h.categories.size(); ++i) cat.row(static_cast<ad::Index>(i)) = table.lookup(h.categories[i]);
    return {tok, cat};
}

inline ModelDims dims_for(const DatasetHeader& h, int word_dim) {
    return {static_cast<int>(h.vocab.size()), static_cast<int>(h.attribute_vocab.size()),
            static_cast<int>(h.categories.size()), h.subject_dim, h.context_dim, word_dim, h.max_len};
}

}  // namespace earn
