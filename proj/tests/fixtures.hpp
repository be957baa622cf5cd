#pragma once

// Shared trained-at-test-time fixture: a small synethic corpus and the four
// models trained on it, built once per test binary run.

#include "stylectrl/corpus.hpp"
#include "stylectrl/models.hpp"
#include "stylectrl/train.hpp"

namespace testfix {

struct Fixture {
    stylectrl::RegisterLexicon lex;
    stylectrl::Vocab vocab;
    stylectrl::Splits splits;
    stylectrl::ModelConfig cfg;
    stylectrl::Seq2SeqModel gen;
    stylectrl::ClassifierModel clf;
    stylectrl::CcLmModel lm;
    stylectrl::WordUnitPredictorModel pred;
    stylectrl::TrainCurve gen_curve, clf_curve, lm_curve, pred_curve;

    static const Fixture& get() {
        static Fixture f;
        return f;
    }

private:
    Fixture() : lex(stylectrl::RegisterLexicon::builtin()), vocab(lex) {
        using namespace stylectrl;
        auto examples = generate_synthetic(lex, 360, 1234);
        splits = split(std::move(examples), {0.8, 0.1, 0.1}, 77);

        cfg.vocab_size = vocab.size();
        cfg.d_model = 32;
        cfg.n_heads = 2;
        cfg.n_layers_enc = 1;
        cfg.n_layers_dec = 1;
        cfg.max_len = 48;
        cfg.style_count = 2;

        Rng rng(99);
        gen = Seq2SeqModel::init(cfg, rng);
        clf = ClassifierModel::init(cfg, rng);
        lm = CcLmModel::init(cfg, rng);
        pred = WordUnitPredictorModel::init(cfg, rng);

        TrainConfig tc;
        tc.batch_size = 32;
        tc.seed = 5;

        auto gp = generator_pairs(splits.train, vocab, cfg.max_len);
        auto gv = generator_pairs(splits.valid, vocab, cfg.max_len);
        tc.peak_lr = 1e-3;
        tc.max_epochs = 10;
        tc.patience = 3;
        gen_curve = train_generator(gen, gp, gv, tc);

        auto ct = classifier_texts(splits.train, vocab, cfg.max_len);
        auto cv = classifier_texts(splits.valid, vocab, cfg.max_len);
        tc.peak_lr = 1e-3;
        tc.max_epochs = 6;
        clf_curve = train_classifier(clf, ct, cv, tc);

        auto lt = cclm_texts(splits.train, vocab, cfg.max_len);
        auto lv = cclm_texts(splits.valid, vocab, cfg.max_len);
        tc.peak_lr = 1e-3;
        tc.max_epochs = 8;
        lm_curve = train_cclm(lm, lt, lv, tc);

        auto pt = predictor_samples(splits.train, vocab, pred, "simple", 3);
        auto pv = predictor_samples(splits.valid, vocab, pred, "simple", 3);
        tc.peak_lr = 1e-3;
        tc.max_epochs = 8;
        pred_curve = train_predictor(pred, pt, pv, tc);
    }
};

}  // namespace testfix
