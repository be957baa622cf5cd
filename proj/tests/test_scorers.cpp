#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "stylectrl/grad_check.hpp"
#include "stylectrl/scorers.hpp"

using namespace stylectrl;

namespace {

// o_t pointing along one embedding row makes that token the argmax.
Tensor state_toward(const Seq2SeqModel& gen, int token, float scale_by = 10.0f) {
    Tensor o = Tensor::zeros(1, gen.cfg.d_model);
    for (int j = 0; j < gen.cfg.d_model; ++j) o.at(0, j) = gen.embed.at(token, j) * scale_by;
    return o;
}

}  // namespace

TEST_CASE("lookahead mechanics") {
    const auto& fix = testfix::Fixture::get();
    const auto& gen = fix.gen;
    auto ls = testfix::make_live_state(gen, fix.vocab.encode(fix.splits.test[0].source), 2);

    SUBCASE("deterministic for fixed state") {
        LookaheadSample a = lookahead(gen, ls.enc, ls.prefix, ls.state.o_t);
        LookaheadSample b = lookahead(gen, ls.enc, ls.prefix, ls.state.o_t);
        CHECK(a.y_t == b.y_t);
        CHECK(a.future == b.future);
    }
    SUBCASE("eos argmax stops the window at y_t") {
        Tensor o = state_toward(gen, kEos);
        REQUIRE(argmax_row(softmax(gen.logits_from_state(o.copy()))) == kEos);
        LookaheadSample la = lookahead(gen, ls.enc, ls.prefix, o);
        CHECK(la.y_t == kEos);
        CHECK(la.future.empty());
    }
    SUBCASE("steering o_t flips y_t") {
        LookaheadSample base = lookahead(gen, ls.enc, ls.prefix, ls.state.o_t);
        // pick a steering direction whose induced argmax differs from the
        // unsteered one; trained embeddings are correlated, so search a few
        bool flipped = false;
        for (const char* word : {"use", "buy", "mara", "cold"}) {
            Tensor o = state_toward(gen, fix.vocab.id(word));
            const int induced = argmax_row(softmax(gen.logits_from_state(o.copy())));
            LookaheadSample la = lookahead(gen, ls.enc, ls.prefix, o);
            CHECK(la.y_t == induced);
            flipped = flipped || induced != base.y_t;
        }
        CHECK(flipped);
    }
    SUBCASE("rollout produces at most two future tokens") {
        LookaheadSample la = lookahead(gen, ls.enc, ls.prefix, ls.state.o_t);
        CHECK(la.future.size() <= 2);
        CHECK(la.future.size() == la.future_logprob.size());
    }
}

TEST_CASE("discriminative score values") {
    const auto& fix = testfix::Fixture::get();
    auto ls = testfix::make_live_state(fix.gen, fix.vocab.encode(fix.splits.test[1].source), 1);

    SUBCASE("uniform classifier gives ln 0.5") {
        ClassifierModel uniform = fix.clf;  // shares encoder weights, fresh head
        uniform.w_s = Tensor::zeros(fix.cfg.style_count, fix.cfg.d_model);
        DiscriminativeScorer scorer(uniform);
        StyleScore s;
        scorer.score_on_tape(ls.state.o_t, ls.ctx(fix.gen, kStyleSimple), &s);
        CHECK(s.value == doctest::Approx(std::log(0.5)).epsilon(1e-6));
    }
    SUBCASE("value is a log-probability") {
        DiscriminativeScorer scorer(fix.clf);
        StyleScore s;
        scorer.score_on_tape(ls.state.o_t, ls.ctx(fix.gen, kStyleSimple), &s);
        CHECK(s.value <= 0.0);
    }
    SUBCASE("exp(values) over styles sums to one") {
        DiscriminativeScorer scorer(fix.clf);
        double total = 0.0;
        for (int z = 0; z < fix.cfg.style_count; ++z) {
            StyleScore s;
            scorer.score_on_tape(ls.state.o_t, ls.ctx(fix.gen, z), &s);
            CHECK(s.value <= 0.0);
            total += std::exp(s.value);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("gradient wrt o_t passes the finite-difference oracle") {
        DiscriminativeScorer scorer(fix.clf);
        ScoreContext ctx = ls.ctx(fix.gen, kStyleSimple);
        auto f = [&](const Tensor& o) {
            StyleScore s;
            return scorer.score_on_tape(o, ctx, &s);
        };
        CHECK(grad_check(f, ls.state.o_t) <= 1e-3);
    }
    SUBCASE("same window twice gives the same score (locality)") {
        DiscriminativeScorer scorer(fix.clf);
        ScoreContext ctx = ls.ctx(fix.gen, kStyleSimple);
        StyleScore s1, s2;
        scorer.score_on_tape(ls.state.o_t, ctx, &s1);
        scorer.score_on_tape(ls.state.o_t, ctx, &s2);
        CHECK(s1.value == s2.value);
        CHECK(s1.window == s2.window);
    }
}

TEST_CASE("log(p)=0 for a saturated classifier head") {
    // direct construction: a head whose target-style logit exceeds the other
    // by ~1e4 after the bounded layer-norm encoder output
    const auto& fix = testfix::Fixture::get();
    auto ls = testfix::make_live_state(fix.gen, fix.vocab.encode(fix.splits.test[2].source), 1);
    ClassifierModel saturated = fix.clf;
    saturated.w_s = saturated.w_s.copy();
    for (int j = 0; j < fix.cfg.d_model; ++j) {
        const float v = saturated.w_s.at(kStyleSimple, j);
        saturated.w_s.at(kStyleSimple, j) = v * 1e4f;
        saturated.w_s.at(kStyleNormal, j) = -v * 1e4f;
    }
    DiscriminativeScorer scorer(saturated);
    // whichever style saturates, its log-probability must be exactly zero
    StyleScore s, s2;
    scorer.score_on_tape(ls.state.o_t, ls.ctx(fix.gen, kStyleSimple), &s);
    scorer.score_on_tape(ls.state.o_t, ls.ctx(fix.gen, kStyleNormal), &s2);
    CHECK((s.value == 0.0 || s2.value == 0.0));
}

TEST_CASE("generative score core formula") {
    SUBCASE("zero weights annihilate") {
        CHECK(generative_style_score({0.3, 0.7, 0.2}, {0, 0, 0}) == 0.0);
    }
    SUBCASE("hand-evaluated window of two") {
        const double e1 = std::exp(-1.0);
        CHECK(generative_style_score({e1, e1}, {0.5, 0.5}) == doctest::Approx(-0.5).epsilon(1e-9));
    }
    SUBCASE("linear in the weights") {
        std::vector<double> p = {0.2, 0.5, 0.9};
        std::vector<double> w = {0.4, 0.1, 0.8};
        std::vector<double> w2 = {0.8, 0.2, 1.6};
        CHECK(generative_style_score(p, w2) ==
              doctest::Approx(2.0 * generative_style_score(p, w)).epsilon(1e-9));
    }
    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(generative_style_score({0.5}, {0.5, 0.5}), ContractError);
    }
}

TEST_CASE("generative scorer gradient matches the analytic softmax Jacobian") {
    const auto& fix = testfix::Fixture::get();
    auto ls = testfix::make_live_state(fix.gen, fix.vocab.encode(fix.splits.test[3].source), 2);
    GenerativeScorer scorer(fix.lm);
    ScoreContext ctx = ls.ctx(fix.gen, kStyleSimple);

    StyleScore info;
    Tensor leaf = ls.state.o_t.copy();
    leaf.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor q = scorer.score_on_tape(leaf, ctx, &info);
        tape.backward(q);
    }
    REQUIRE(leaf.has_grad());

    // analytic: (w_t / L) * (E[y_t] - sum_v p_v E[v])
    LookaheadSample la = lookahead(fix.gen, ls.enc, ls.prefix, ls.state.o_t);
    std::vector<int> lm_text = {kBos};
    lm_text.insert(lm_text.end(), info.window.begin(), info.window.end());
    auto weights = fix.lm.token_probs(lm_text, kStyleSimple);
    const int t_idx = static_cast<int>(ls.prefix.size()) - 1;
    const double w_t = weights[static_cast<std::size_t>(t_idx)];
    const double len = static_cast<double>(info.window.size());

    Tensor p = softmax(fix.gen.logits_from_state(ls.state.o_t.copy()));
    for (int j = 0; j < fix.cfg.d_model; ++j) {
        double avg = 0.0;
        for (int v = 0; v < fix.cfg.vocab_size; ++v)
            avg += static_cast<double>(p.at(0, v)) * fix.gen.embed.at(v, j);
        const double expected = w_t / len * (fix.gen.embed.at(la.y_t, j) - avg);
        CHECK(leaf.grad()[static_cast<std::size_t>(j)] ==
              doctest::Approx(expected).epsilon(5e-3));
    }
}

TEST_CASE("full-sequence style log-probability agrees with the classifier") {
    const auto& fix = testfix::Fixture::get();
    std::vector<int> tokens = {kBos};
    for (int id : fix.vocab.encode(fix.splits.test[0].target("simple"))) tokens.push_back(id);
    tokens.push_back(kEos);
    const double lp = sequence_style_logprob(fix.clf, tokens, kStyleSimple);
    auto probs = fix.clf.class_probs(tokens);
    CHECK(lp == doctest::Approx(std::log(probs[kStyleSimple])).epsilon(1e-5));
    CHECK(lp <= 0.0);
}
