#pragma once

// Test-only scorers and state builders shared between the unit suites and
// the acceptance binary.

#include <vector>

#include "stylectrl/adjust.hpp"
#include "stylectrl/scorers.hpp"

namespace testfix {

// q(o) = -||o - c||^2; maximized at c, independent of any decode context.
struct QuadraticSurrogate : stylectrl::StyleScorer {
    stylectrl::Tensor center;

    explicit QuadraticSurrogate(stylectrl::Tensor c) : center(std::move(c)) {}

    stylectrl::Tensor score_on_tape(const stylectrl::Tensor& o_t,
                                    const stylectrl::ScoreContext&,
                                    stylectrl::StyleScore* out) const override {
        stylectrl::Tensor diff = stylectrl::sub(o_t, center);
        stylectrl::Tensor q = stylectrl::scale(stylectrl::sum_all(stylectrl::mul(diff, diff)), -1.0f);
        if (out) out->value = q.item();
        return q;
    }
};

struct ConstantScorer : stylectrl::StyleScorer {
    float value;
    explicit ConstantScorer(float v) : value(v) {}
    stylectrl::Tensor score_on_tape(const stylectrl::Tensor&, const stylectrl::ScoreContext&,
                                    stylectrl::StyleScore* out) const override {
        stylectrl::Tensor q = stylectrl::Tensor::scalar(value);
        if (out) out->value = value;
        return q;
    }
};

// A mid-generation state: greedy-decode `steps` tokens from the source, then
// return the step state plus the context needed to score it.
struct LiveState {
    stylectrl::Tensor enc;
    std::vector<int> prefix;
    std::vector<double> prefix_logprobs;
    stylectrl::DecoderStepState state;
    stylectrl::ScoreContext ctx(const stylectrl::Seq2SeqModel& gen, int style) const {
        stylectrl::ScoreContext c;
        c.generator = &gen;
        c.enc = &enc;
        c.prefix = &prefix;
        c.prefix_logprobs = &prefix_logprobs;
        c.style = style;
        return c;
    }
};

inline LiveState make_live_state(const stylectrl::Seq2SeqModel& gen,
                                 const std::vector<int>& source_ids, int steps) {
    using namespace stylectrl;
    LiveState ls;
    ls.enc = gen.encode(frame_source(source_ids, gen.cfg.max_len));
    ls.prefix = {kBos};
    for (int s = 0; s < steps; ++s) {
        DecoderStepState st = gen.decode_step(ls.prefix, ls.enc);
        const int y = argmax_row(st.dist);
        if (y == kEos) break;
        ls.prefix_logprobs.push_back(std::log(static_cast<double>(st.dist.at(0, y))));
        ls.prefix.push_back(y);
    }
    ls.state = gen.decode_step(ls.prefix, ls.enc);
    return ls;
}

}  // namespace testfix
