#pragma once

// The two style scores evaluated mid-generation, plus the 2-token greedy
// lookahead both use. Gradient path: only position t enters the score
// differentiably, as the soft embedding of softmax(W_e o_t); earlier tokens
// and the lookahead continuation are constants, so the tape stays small and
// the score is differentiable in o_t even though tokens are discrete.

#include <cmath>
#include <vector>

#include "stylectrl/models.hpp"

namespace stylectrl {

struct LookaheadSample {
    int y_t = -1;
    std::vector<int> future;           // up to two greedy tokens, EOS included
    std::vector<double> future_logprob;  // realized log p at each rollout step
};

struct StyleScore {
    double value = 0.0;
    int style = 0;
    std::vector<int> window;  // y_1..y_{t+2} (prefix content + y_t + future)
};

struct ScoreContext {
    const Seq2SeqModel* generator = nullptr;
    const Tensor* enc = nullptr;                       // encoder states
    const std::vector<int>* prefix = nullptr;          // BOS y_1..y_{t-1}
    const std::vector<double>* prefix_logprobs = nullptr;  // log p(y_i), i < t
    int style = kStyleSimple;
};

// Greedy continuation from the current (possibly adjusted) o_t: y_t is the
// argmax of softmax(W_e o_t); the rollout stops at EOS or after two tokens.
inline LookaheadSample lookahead(const Seq2SeqModel& gen, const Tensor& enc,
                                 const std::vector<int>& prefix, const Tensor& o_t) {
    LookaheadSample la;
    Tensor dist = softmax(gen.logits_from_state(o_t.copy()));
    la.y_t = argmax_row(dist);
    if (la.y_t == kEos) return la;

    std::vector<int> rolled = prefix;
    rolled.push_back(la.y_t);
    while (la.future.size() < 2 && static_cast<int>(rolled.size()) <= gen.cfg.max_len - 1) {
        DecoderStepState s = gen.decode_step(rolled, enc);
        const int y = argmax_row(s.dist);
        la.future.push_back(y);
        la.future_logprob.push_back(std::log(static_cast<double>(s.dist.at(0, y))));
        if (y == kEos) break;
        rolled.push_back(y);
    }
    return la;
}

class StyleScorer {
public:
    virtual ~StyleScorer() = default;

    // Builds the score on the active tape (eagerly when none is active).
    // o_t is a [1×d] leaf; fills *out when given.
    virtual Tensor score_on_tape(const Tensor& o_t, const ScoreContext& ctx,
                                 StyleScore* out) const = 0;

    // Value-only evaluation.
    double score_value(const Tensor& o_t, const ScoreContext& ctx) const {
        StyleScore s;
        score_on_tape(o_t, ctx, &s);
        return s.value;
    }
};

// q = log p_sty(z | y_{1:t+2}); position t enters as the soft embedding of
// softmax(W_e o_t), everything else as hard tokens.
class DiscriminativeScorer : public StyleScorer {
public:
    explicit DiscriminativeScorer(const ClassifierModel& clf) : clf_(&clf) {}

    Tensor score_on_tape(const Tensor& o_t, const ScoreContext& ctx,
                         StyleScore* out) const override {
        if (!ctx.generator || !ctx.enc || !ctx.prefix)
            throw ContractError("discriminative scorer needs generator context");
        LookaheadSample la = lookahead(*ctx.generator, *ctx.enc, *ctx.prefix, o_t);

        Tensor soft = softmax(ctx.generator->logits_from_state(o_t));
        MixedSequence seq;
        for (int id : *ctx.prefix) seq.emplace_back(id);
        seq.emplace_back(soft);
        for (int id : la.future) seq.emplace_back(id);

        Tensor lp = softmax(clf_->class_logits(seq), true);
        Tensor q = pick(lp, 0, ctx.style);
        if (out) {
            out->value = q.item();
            out->style = ctx.style;
            out->window.assign(ctx.prefix->begin() + 1, ctx.prefix->end());
            out->window.push_back(la.y_t);
            out->window.insert(out->window.end(), la.future.begin(), la.future.end());
        }
        return q;
    }

private:
    const ClassifierModel* clf_;
};

// Pure form of the generative score: (1/L) sum w_i log p_i over the window.
inline double generative_style_score(const std::vector<double>& gen_probs,
                                     const std::vector<double>& lm_weights) {
    if (gen_probs.size() != lm_weights.size())
        throw ContractError("generative score: length mismatch");
    if (gen_probs.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < gen_probs.size(); ++i)
        acc += lm_weights[i] * std::log(gen_probs[i]);
    return acc / static_cast<double>(gen_probs.size());
}

// q = (1/L) sum_{t'} p_LM(y_t', z) log p(y_t'); only the t-th term depends
// smoothly on o_t, earlier terms use the realized log-probs and the rollout
// terms are gradient-stopped.
class GenerativeScorer : public StyleScorer {
public:
    explicit GenerativeScorer(const CcLmModel& lm) : lm_(&lm) {}

    Tensor score_on_tape(const Tensor& o_t, const ScoreContext& ctx,
                         StyleScore* out) const override {
        if (!ctx.generator || !ctx.enc || !ctx.prefix || !ctx.prefix_logprobs)
            throw ContractError("generative scorer needs generator context and realized log-probs");
        LookaheadSample la = lookahead(*ctx.generator, *ctx.enc, *ctx.prefix, o_t);

        std::vector<int> window(ctx.prefix->begin() + 1, ctx.prefix->end());
        const int t_idx = static_cast<int>(window.size());
        window.push_back(la.y_t);
        window.insert(window.end(), la.future.begin(), la.future.end());
        const int len = static_cast<int>(window.size());

        std::vector<int> lm_text = {kBos};
        lm_text.insert(lm_text.end(), window.begin(), window.end());
        std::vector<double> weights = lm_->token_probs(lm_text, ctx.style);

        double const_part = 0.0;
        for (int i = 0; i < t_idx; ++i)
            const_part += weights[static_cast<std::size_t>(i)] *
                          (*ctx.prefix_logprobs)[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < la.future.size(); ++k)
            const_part += weights[static_cast<std::size_t>(t_idx) + 1 + k] * la.future_logprob[k];

        Tensor logp = softmax(ctx.generator->logits_from_state(o_t), true);
        Tensor term_t = scale(pick(logp, 0, la.y_t),
                              static_cast<float>(weights[static_cast<std::size_t>(t_idx)] / len));
        Tensor q = add(term_t, Tensor::scalar(static_cast<float>(const_part / len)));
        if (out) {
            out->value = q.item();
            out->style = ctx.style;
            out->window = window;
        }
        return q;
    }

private:
    const CcLmModel* lm_;
};

// Full-sequence discriminative score, every position hard (used by
// reranking and evaluation). tokens must already start with BOS.
inline double sequence_style_logprob(const ClassifierModel& clf, const std::vector<int>& tokens,
                                     int style) {
    MixedSequence seq;
    for (int id : tokens) seq.emplace_back(id);
    Tensor lp = softmax(clf.class_logits(seq), true);
    return lp.at(0, style);
}

}  // namespace stylectrl
