#pragma once

// Beam search with the constraint layer every decode path shares: vocabulary
// mask, repeated-trigram bans, EOS suppression below min_len, forced EOS at
// max_len. Candidate log-probs come from the renormalized (masked) softmax.
// Hypotheses compare by cum log-prob during expansion and by the
// length-penalized score when finished; ties break toward the
// lexicographically smaller token sequence, so decoding is deterministic.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "stylectrl/adjust.hpp"
#include "stylectrl/models.hpp"
#include "stylectrl/scorers.hpp"
#include "stylectrl/wordunit.hpp"

namespace stylectrl {

struct DecodeConfig {
    int beam_size = 5;
    double length_penalty = 2.0;  // alpha; 2.0 long-form, 1.0 headline
    int min_len = 55;             // content tokens before EOS may fire
    int max_len = 140;            // content tokens before EOS is forced
    bool block_trigrams = true;

    void validate() const {
        if (beam_size < 1) throw ContractError("beam_size must be >= 1");
        if (min_len < 0 || max_len < 1 || min_len > max_len)
            throw ContractError("invalid min/max length bounds");
    }
};

struct AdjustDiag {
    std::vector<double> q_values;
    std::vector<double> grad_norms;
};

struct Hypothesis {
    std::vector<int> tokens;  // BOS ... (EOS once finished)
    double cum_logprob = 0.0;
    bool finished = false;
    std::optional<double> style_score;  // set by reranking
    std::vector<double> step_logprobs;
    std::vector<std::shared_ptr<const VocabMask>> step_masks;  // per emitted token
    std::vector<AdjustDiag> adjust_diags;                      // per emitted token
    std::shared_ptr<const VocabMask> active_mask;

    // emitted tokens excluding BOS and the closing EOS
    int content_len() const {
        return static_cast<int>(tokens.size()) - 1 - (finished ? 1 : 0);
    }
    std::vector<int> content() const {
        std::vector<int> c(tokens.begin() + 1, tokens.end());
        if (finished && !c.empty()) c.pop_back();
        return c;
    }
};

// cum_logprob / len^alpha over the emitted tokens (EOS included).
inline double length_penalized_score(const Hypothesis& h, double alpha) {
    if (h.tokens.size() < 2) throw ContractError("length penalty needs emitted tokens");
    const double len = static_cast<double>(h.tokens.size() - 1);
    return h.cum_logprob / std::pow(len, alpha);
}

// Token w is banned iff (prefix[-2], prefix[-1], w) equals any trigram
// already inside prefix.
inline std::set<int> block_repeated_trigrams(const std::vector<int>& prefix) {
    std::set<int> banned;
    const int n = static_cast<int>(prefix.size());
    if (n < 2) return banned;
    const int a = prefix[static_cast<std::size_t>(n - 2)];
    const int b = prefix[static_cast<std::size_t>(n - 1)];
    for (int i = 0; i + 2 < n; ++i) {
        if (prefix[static_cast<std::size_t>(i)] == a &&
            prefix[static_cast<std::size_t>(i + 1)] == b)
            banned.insert(prefix[static_cast<std::size_t>(i + 2)]);
    }
    return banned;
}

namespace detail {

struct Expansion {
    int token;
    double logprob;
};

// The shared constraint layer. Applies, in order: vocabulary mask, trigram
// bans, EOS suppression below min_len, forced EOS at max_len (exempt from
// bans; termination outranks constraints). Returns the allowed tokens with
// log-probs from the renormalized distribution.
inline std::vector<Expansion> constrained_expansion(const Tensor& logits,
                                                    const std::vector<int>& tokens,
                                                    int content_len, const DecodeConfig& cfg,
                                                    const VocabMask* mask) {
    const int vocab = static_cast<int>(logits.size());
    std::vector<double> work(static_cast<std::size_t>(vocab));
    for (int v = 0; v < vocab; ++v) work[static_cast<std::size_t>(v)] = logits.data()[v];
    if (mask) {
        if (mask->vocab_size() != vocab) throw DimensionError("mask/vocab size mismatch");
        for (int v = 0; v < vocab; ++v)
            if (!mask->is_allowed(v)) work[static_cast<std::size_t>(v)] = -1e9;
    }

    const bool force_eos = content_len >= cfg.max_len;
    if (!force_eos) {
        if (cfg.block_trigrams)
            for (int v : block_repeated_trigrams(tokens)) work[static_cast<std::size_t>(v)] = -1e9;
        if (content_len < cfg.min_len) work[static_cast<std::size_t>(kEos)] = -1e9;
    }

    double mx = work[0];
    for (double w : work) mx = std::max(mx, w);
    double denom = 0.0;
    for (double w : work) denom += std::exp(w - mx);
    const double logz = std::log(denom) + mx;

    std::vector<Expansion> out;
    if (force_eos) {
        out.push_back({kEos, work[static_cast<std::size_t>(kEos)] - logz});
        return out;
    }
    for (int v = 0; v < vocab; ++v)
        if (work[static_cast<std::size_t>(v)] > -1e8)
            out.push_back({v, work[static_cast<std::size_t>(v)] - logz});
    return out;
}

inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline void sort_by_cum(std::vector<Hypothesis>& hyps) {
    std::sort(hyps.begin(), hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.cum_logprob != b.cum_logprob) return a.cum_logprob > b.cum_logprob;
        return lex_less(a.tokens, b.tokens);
    });
}

inline void sort_by_penalty(std::vector<Hypothesis>& hyps, double alpha) {
    std::sort(hyps.begin(), hyps.end(), [alpha](const Hypothesis& a, const Hypothesis& b) {
        const double sa = length_penalized_score(a, alpha);
        const double sb = length_penalized_score(b, alpha);
        if (sa != sb) return sa > sb;
        return lex_less(a.tokens, b.tokens);
    });
}

}  // namespace detail

// Full decode engine. scorer+adjust applies state adjustment to every beam
// (the default methods use it only with beam_size 1).
inline std::vector<Hypothesis> run_decode(const Seq2SeqModel& gen,
                                          const std::vector<int>& source_ids,
                                          const DecodeConfig& cfg,
                                          const MaskProvider* masks = nullptr,
                                          const StyleScorer* scorer = nullptr,
                                          const AdjustConfig* acfg = nullptr) {
    cfg.validate();
    if (cfg.max_len > gen.cfg.max_len - 2)
        throw ContractError("decode max_len exceeds the model's positional table");
    Tensor enc = gen.encode(frame_source(source_ids, gen.cfg.max_len));

    Hypothesis init;
    init.tokens = {kBos};
    if (masks) init.active_mask = masks->initial();
    std::vector<Hypothesis> live = {init};
    std::vector<Hypothesis> finished;

    for (int t = 0; !live.empty(); ++t) {
        std::vector<Hypothesis> candidates;
        for (Hypothesis& hyp : live) {
            if (masks) {
                auto m = masks->refresh(hyp.content(), t);
                if (m) hyp.active_mask = m;
            }
            DecoderStepState state = gen.decode_step(hyp.tokens, enc);
            AdjustDiag diag;
            bool adjusted = false;
            Tensor o = state.o_t;
            if (scorer && acfg) {
                ScoreContext ctx;
                ctx.generator = &gen;
                ctx.enc = &enc;
                ctx.prefix = &hyp.tokens;
                ctx.prefix_logprobs = &hyp.step_logprobs;
                ctx.style = acfg->style;
                AdjustResult ar = adjust_state(state, *scorer, ctx, *acfg);
                o = ar.o_t;
                diag.q_values = std::move(ar.q_values);
                diag.grad_norms = std::move(ar.grad_norms);
                adjusted = true;
            }
            Tensor logits = gen.logits_from_state(o);
            auto exps = detail::constrained_expansion(logits, hyp.tokens, hyp.content_len(), cfg,
                                                      hyp.active_mask.get());
            for (const detail::Expansion& e : exps) {
                Hypothesis child = hyp;
                child.tokens.push_back(e.token);
                child.cum_logprob += e.logprob;
                child.step_logprobs.push_back(e.logprob);
                child.step_masks.push_back(hyp.active_mask);
                if (adjusted) child.adjust_diags.push_back(diag);
                candidates.push_back(std::move(child));
            }
        }
        detail::sort_by_cum(candidates);
        live.clear();
        for (Hypothesis& cand : candidates) {
            if (cand.tokens.back() == kEos) {
                cand.finished = true;
                finished.push_back(std::move(cand));
            } else if (static_cast<int>(live.size()) < cfg.beam_size) {
                live.push_back(std::move(cand));
            }
        }
    }

    if (finished.empty())
        throw DecodeError("no hypothesis could finish under the active constraints");
    detail::sort_by_penalty(finished, cfg.length_penalty);
    if (static_cast<int>(finished.size()) > cfg.beam_size)
        finished.resize(static_cast<std::size_t>(cfg.beam_size));
    return finished;
}

inline std::vector<Hypothesis> beam_search(const Seq2SeqModel& gen,
                                           const std::vector<int>& source_ids,
                                           const DecodeConfig& cfg,
                                           const MaskProvider* masks = nullptr) {
    return run_decode(gen, source_ids, cfg, masks);
}

// Per step: decode, adjust o_t, then emit the constrained argmax of the
// adjusted distribution. Equivalent to the engine at beam width 1.
inline Hypothesis greedy_with_adjustment(const Seq2SeqModel& gen,
                                         const std::vector<int>& source_ids,
                                         const StyleScorer& scorer, const AdjustConfig& acfg,
                                         DecodeConfig cfg, const MaskProvider* masks = nullptr) {
    cfg.beam_size = 1;
    auto hyps = run_decode(gen, source_ids, cfg, masks, &scorer, &acfg);
    return hyps.front();
}

// Chooses among finished hypotheses by the full-sequence discriminative
// score; ties fall back to the length-penalized score, then input order.
inline Hypothesis rerank_by_style(const std::vector<Hypothesis>& hyps,
                                  const ClassifierModel& clf, int style, double alpha) {
    if (hyps.empty()) throw ContractError("rerank: no hypotheses");
    int best = -1;
    double best_score = 0.0, best_pen = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        if (!hyps[i].finished) throw ContractError("rerank: hypothesis not finished");
        const double s = sequence_style_logprob(clf, hyps[i].tokens, style);
        const double pen = length_penalized_score(hyps[i], alpha);
        if (best < 0 || s > best_score || (s == best_score && pen > best_pen)) {
            best = static_cast<int>(i);
            best_score = s;
            best_pen = pen;
        }
    }
    Hypothesis out = hyps[static_cast<std::size_t>(best)];
    out.style_score = best_score;
    return out;
}

// Prepends the style token to the source and runs beam search on a
// label-conditioned generator.
inline std::vector<Hypothesis> decode_lblctrl(const Seq2SeqModel& gen,
                                              const std::vector<int>& source_ids, int style,
                                              const DecodeConfig& cfg,
                                              const MaskProvider* masks = nullptr) {
    if (style < 0 || style >= gen.cfg.style_count)
        throw ContractError("style token missing from the generator's vocabulary");
    std::vector<int> with_label;
    with_label.push_back(style_token(style));
    with_label.insert(with_label.end(), source_ids.begin(), source_ids.end());
    return beam_search(gen, with_label, cfg, masks);
}

struct ExhaustiveResult {
    Hypothesis best;
    long long terminated = 0;  // finished sequences enumerated
};

// Enumerates every token sequence up to max_len under the same constraint
// layer and returns the argmax by length-penalized score. Test oracle for
// beam search at saturated width.
inline ExhaustiveResult exhaustive_reference(const Seq2SeqModel& gen,
                                             const std::vector<int>& source_ids,
                                             const DecodeConfig& cfg,
                                             const MaskProvider* masks = nullptr) {
    cfg.validate();
    const double budget = std::pow(static_cast<double>(gen.cfg.vocab_size),
                                   static_cast<double>(cfg.max_len));
    if (budget > 1e5) throw ContractError("exhaustive_reference: |V|^max_len budget exceeded");

    Tensor enc = gen.encode(frame_source(source_ids, gen.cfg.max_len));
    ExhaustiveResult res;
    bool have_best = false;

    std::function<void(Hypothesis&, int)> dfs = [&](Hypothesis& hyp, int t) {
        if (masks) {
            auto m = masks->refresh(hyp.content(), t);
            if (m) hyp.active_mask = m;
        }
        DecoderStepState state = gen.decode_step(hyp.tokens, enc);
        Tensor logits = gen.logits_from_state(state.o_t);
        auto exps = detail::constrained_expansion(logits, hyp.tokens, hyp.content_len(), cfg,
                                                  hyp.active_mask.get());
        for (const detail::Expansion& e : exps) {
            Hypothesis child = hyp;
            child.tokens.push_back(e.token);
            child.cum_logprob += e.logprob;
            child.step_logprobs.push_back(e.logprob);
            if (e.token == kEos) {
                child.finished = true;
                ++res.terminated;
                if (!have_best) {
                    res.best = child;
                    have_best = true;
                } else {
                    const double a = length_penalized_score(child, cfg.length_penalty);
                    const double b = length_penalized_score(res.best, cfg.length_penalty);
                    if (a > b || (a == b && detail::lex_less(child.tokens, res.best.tokens)))
                        res.best = child;
                }
            } else {
                dfs(child, t + 1);
            }
        }
    };

    Hypothesis init;
    init.tokens = {kBos};
    if (masks) init.active_mask = masks->initial();
    dfs(init, 0);
    if (!have_best) throw DecodeError("exhaustive search found no finished sequence");
    return res;
}

}  // namespace stylectrl
