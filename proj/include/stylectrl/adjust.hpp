#pragma once

// Iterative gradient ascent on the decoder final state:
//     o_t <- o_t - lambda * grad_{o_t}[ -q(z | y_{1:t+2}) ]
// Each iteration rebuilds the lookahead, score, and gradient from the
// current o_t. No clipping or normalization is applied; gradient norms are
// recorded so divergence is observable.

#include <cmath>
#include <vector>

#include "stylectrl/scorers.hpp"

namespace stylectrl {

enum class ScorerKind { Discriminative, Generative };

inline const char* scorer_kind_name(ScorerKind k) {
    return k == ScorerKind::Discriminative ? "discriminative" : "generative";
}

inline double default_step_size(ScorerKind k) {
    return k == ScorerKind::Discriminative ? 1.0 : 0.1;
}

struct AdjustConfig {
    ScorerKind kind = ScorerKind::Discriminative;
    double step_size = 1.0;  // 1.0 discriminative, 0.1 generative
    int iterations = 10;     // 10 long-form, 30 headline-length
    int style = kStyleSimple;

    void validate() const {
        if (step_size < 0) throw ContractError("adjust step_size must be >= 0");
        if (iterations < 0) throw ContractError("adjust iterations must be >= 0");
    }
};

// Gradient of -q with respect to o_t; does not touch o_t.
inline Tensor adjust_gradient(const Tensor& o_t, const StyleScorer& scorer,
                              const ScoreContext& ctx, double* q_out = nullptr) {
    Tensor leaf = o_t.copy();
    leaf.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        StyleScore s;
        Tensor q = scorer.score_on_tape(leaf, ctx, &s);
        if (q_out) *q_out = s.value;
        tape.backward(q);
    }
    Tensor g = Tensor::zeros(1, o_t.cols());
    if (leaf.has_grad())
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = -leaf.grad()[i];
    return g;
}

struct AdjustResult {
    Tensor o_t;                     // adjusted state (fresh copy)
    std::vector<double> q_values;   // q before each update, then after the last
    std::vector<double> grad_norms;  // ||grad q|| per iteration
};

inline AdjustResult adjust_state(const DecoderStepState& state, const StyleScorer& scorer,
                                 const ScoreContext& ctx, const AdjustConfig& cfg) {
    cfg.validate();
    AdjustResult res;
    res.o_t = state.o_t.copy();
    // exact no-op: skip even the arithmetic so the state stays bitwise intact
    if (cfg.iterations == 0 || cfg.step_size == 0.0) return res;

    const float lam = static_cast<float>(cfg.step_size);
    for (int it = 0; it < cfg.iterations; ++it) {
        double q = 0.0;
        Tensor gneg = adjust_gradient(res.o_t, scorer, ctx, &q);
        res.q_values.push_back(q);
        double norm = 0.0;
        for (std::size_t i = 0; i < gneg.size(); ++i)
            norm += static_cast<double>(gneg.data()[i]) * gneg.data()[i];
        res.grad_norms.push_back(std::sqrt(norm));
        for (std::size_t i = 0; i < res.o_t.size(); ++i)
            res.o_t.data()[i] -= lam * gneg.data()[i];
    }
    res.q_values.push_back(scorer.score_value(res.o_t, ctx));
    return res;
}

}  // namespace stylectrl
