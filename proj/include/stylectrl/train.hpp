#pragma once

// Adam with linear warmup / linear decay, a generic epoch loop with early
// stopping on the validation metric, and the per-model training entry points.
// Training is single-threaded; determinism comes from the seeded shuffle and
// initialization only.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylectrl/corpus.hpp"
#include "stylectrl/models.hpp"

namespace stylectrl {

struct TrainConfig {
    double peak_lr = 5e-4;
    int batch_size = 32;
    int max_epochs = 20;
    int patience = 3;  // epochs without validation improvement before stopping
    double warmup_frac = 0.1;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const {
        return {{"peak_lr", peak_lr},   {"batch_size", batch_size},
                {"max_epochs", max_epochs}, {"patience", patience},
                {"warmup_frac", warmup_frac}, {"seed", seed}};
    }
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
        if (j.contains("peak_lr")) base.peak_lr = j.at("peak_lr");
        if (j.contains("batch_size")) base.batch_size = j.at("batch_size");
        if (j.contains("max_epochs")) base.max_epochs = j.at("max_epochs");
        if (j.contains("patience")) base.patience = j.at("patience");
        if (j.contains("warmup_frac")) base.warmup_frac = j.at("warmup_frac");
        if (j.contains("seed")) base.seed = j.at("seed");
        return base;
    }
};

class Adam {
public:
    Adam(std::vector<Tensor> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const Tensor& p : params_) {
            m_.emplace_back(p.size(), 0.0f);
            v_.emplace_back(p.size(), 0.0f);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor& p = params_[pi];
            if (!p.has_grad()) continue;
            const std::vector<float>& g = p.grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g[i];
                m_[pi][i] = static_cast<float>(cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * gi);
                v_[pi][i] = static_cast<float>(cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * gi * gi);
                const double mhat = m_[pi][i] / bc1;
                const double vhat = v_[pi][i] / bc2;
                p.data()[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    int steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    TrainConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    int t_ = 0;
};

// Linear warmup to peak_lr, then linear decay toward zero at total_steps.
inline double lr_at(const TrainConfig& cfg, int step, int total_steps) {
    const int warmup = std::max(1, static_cast<int>(cfg.warmup_frac * total_steps));
    if (step <= warmup) return cfg.peak_lr * step / warmup;
    if (total_steps <= warmup) return cfg.peak_lr;
    const double frac = static_cast<double>(total_steps - step) / (total_steps - warmup);
    return cfg.peak_lr * std::max(0.0, frac);
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_metric = 0.0;          // lower is better
    std::map<std::string, double> extra;  // e.g. f1, perplexity
};

struct TrainCurve {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_metric = std::numeric_limits<double>::infinity();

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const EpochStats& e : epochs) {
            nlohmann::json r = {{"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"valid_metric", e.valid_metric}};
            for (const auto& [k, v] : e.extra) r[k] = v;
            rows.push_back(r);
        }
        return {{"epochs", rows}, {"best_epoch", best_epoch}, {"best_metric", best_metric}};
    }
};

// Generic loop: loss_fn builds a scalar loss on the active tape for one
// example; valid_fn returns (metric, extras) on the held-out set. Restores
// the best parameters before returning.
template <class Model, class Ex>
TrainCurve run_training(Model& model, const std::vector<Ex>& train, const TrainConfig& cfg,
                        const std::function<Tensor(const Ex&)>& loss_fn,
                        const std::function<EpochStats()>& valid_fn) {
    if (train.empty()) throw ContractError("training corpus is empty");
    set_requires_grad(model, true);
    std::vector<Tensor> params = parameters(model);
    Adam opt(params, cfg);
    Rng shuffle_rng(cfg.seed);

    const int steps_per_epoch =
        (static_cast<int>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const int total_steps = steps_per_epoch * cfg.max_epochs;

    TrainCurve curve;
    std::vector<std::vector<float>> best_values;
    int since_best = 0;
    int step = 0;

    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[static_cast<int>(i)] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int loss_count = 0;
        for (int b = 0; b < steps_per_epoch; ++b) {
            for (Tensor& p : params) p.zero_grad();
            const int lo = b * cfg.batch_size;
            const int hi = std::min<int>(lo + cfg.batch_size, static_cast<int>(train.size()));
            const float inv = 1.0f / static_cast<float>(hi - lo);
            for (int i = lo; i < hi; ++i) {
                Tape tape;
                TapeScope scope(tape);
                Tensor loss = loss_fn(train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
                loss_sum += loss.item();
                ++loss_count;
                tape.backward(scale(loss, inv));
            }
            ++step;
            opt.step(lr_at(cfg, step, total_steps));
        }

        EpochStats stats = valid_fn();
        stats.epoch = epoch;
        stats.train_loss = loss_sum / std::max(1, loss_count);
        curve.epochs.push_back(stats);

        if (stats.valid_metric < curve.best_metric) {
            curve.best_metric = stats.valid_metric;
            curve.best_epoch = epoch;
            since_best = 0;
            best_values.clear();
            for (const Tensor& p : params) best_values.push_back(p.values());
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }

    if (!best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i].values() = best_values[i];
    set_requires_grad(model, false);
    return curve;
}

// ---------------------------------------------------------------------------
// per-model data preparation and losses
// ---------------------------------------------------------------------------

struct SeqPair {
    std::vector<int> src_framed;  // BOS ... EOS
    std::vector<int> dec_in;      // BOS y1..yn
    std::vector<int> dec_out;     // y1..yn EOS
};

inline SeqPair make_seq_pair(const std::vector<int>& src, const std::vector<int>& tgt,
                             int max_len, const std::vector<int>* src_prefix = nullptr) {
    SeqPair p;
    std::vector<int> s = src;
    if (src_prefix) s.insert(s.begin(), src_prefix->begin(), src_prefix->end());
    p.src_framed = frame_source(s, max_len);
    p.dec_in.push_back(kBos);
    p.dec_in.insert(p.dec_in.end(), tgt.begin(), tgt.end());
    p.dec_in = clamp_len(std::move(p.dec_in), max_len, "target");
    p.dec_out.assign(p.dec_in.begin() + 1, p.dec_in.end());
    p.dec_out.push_back(kEos);
    return p;
}

// Mean token cross-entropy with teacher forcing.
inline Tensor seq2seq_loss(const Seq2SeqModel& model, const SeqPair& ex) {
    Tensor enc = model.encode(ex.src_framed);
    Tensor states = model.decoder_states(ex.dec_in, enc);
    Tensor lp = softmax(model.logits_from_state(states), true);
    Tensor picked = gather_rows(lp, ex.dec_out);
    return scale(sum_all(picked), -1.0f / static_cast<float>(ex.dec_out.size()));
}

inline double seq2seq_valid_nll(const Seq2SeqModel& model, const std::vector<SeqPair>& valid) {
    double total = 0.0;
    for (const SeqPair& ex : valid) total += seq2seq_loss(model, ex).item();
    return total / std::max<std::size_t>(1, valid.size());
}

struct LabeledText {
    std::vector<int> framed;  // BOS tokens EOS
    int style = 0;
};

inline Tensor classifier_loss(const ClassifierModel& model, const LabeledText& ex) {
    MixedSequence seq;
    for (int t : ex.framed) seq.emplace_back(t);
    Tensor lp = softmax(model.class_logits(seq), true);
    return scale(pick(lp, 0, ex.style), -1.0f);
}

struct LmText {
    std::vector<int> text;  // BOS tokens EOS
    int style = 0;
};

inline Tensor cclm_loss(const CcLmModel& model, const LmText& ex) {
    std::vector<int> full;
    full.push_back(style_token(ex.style));
    full.insert(full.end(), ex.text.begin(), ex.text.end());
    full = clamp_len(std::move(full), model.cfg.max_len, "cclm input");
    std::vector<int> inputs(full.begin(), full.end() - 1);
    std::vector<int> targets(full.begin() + 1, full.end());
    Tensor lp = softmax(model.logits(model.states(inputs)), true);
    Tensor picked = gather_rows(lp, targets);
    return scale(sum_all(picked), -1.0f / static_cast<float>(targets.size()));
}

struct UnitSample {
    std::vector<int> input;         // predictor input ids (already framed)
    std::vector<float> unit_target;  // multi-hot over V
};

inline Tensor predictor_loss(const WordUnitPredictorModel& model, const UnitSample& ex) {
    return bce_with_logits_mean(model.unit_logits(ex.input), ex.unit_target);
}

// ---------------------------------------------------------------------------
// dataset builders
// ---------------------------------------------------------------------------

// Generator data: both register targets per pair, so the model learns
// probability mass over both synonym sets (the vanilla output style is then
// decided at decode time).
inline std::vector<SeqPair> generator_pairs(const std::vector<Example>& examples,
                                            const Vocab& vocab, int max_len) {
    std::vector<SeqPair> out;
    for (const Example& ex : examples) {
        for (const char* style : {"normal", "simple"}) {
            if (!ex.targets.count(style)) continue;
            out.push_back(make_seq_pair(vocab.encode(ex.source), vocab.encode(ex.target(style)),
                                        max_len));
        }
    }
    return out;
}

inline std::vector<LabeledText> classifier_texts(const std::vector<Example>& examples,
                                                 const Vocab& vocab, int max_len) {
    std::vector<LabeledText> out;
    for (const Example& ex : examples) {
        for (int style : {kStyleNormal, kStyleSimple}) {
            if (!ex.targets.count(style_name(style))) continue;
            LabeledText t;
            t.framed.push_back(kBos);
            for (int id : vocab.encode(ex.target(style_name(style)))) t.framed.push_back(id);
            t.framed.push_back(kEos);
            t.framed = clamp_len(std::move(t.framed), max_len, "classifier text");
            t.style = style;
            out.push_back(std::move(t));
        }
    }
    return out;
}

inline std::vector<LmText> cclm_texts(const std::vector<Example>& examples, const Vocab& vocab,
                                      int max_len) {
    std::vector<LmText> out;
    for (const Example& ex : examples) {
        for (int style : {kStyleNormal, kStyleSimple}) {
            if (!ex.targets.count(style_name(style))) continue;
            LmText t;
            t.text.push_back(kBos);
            for (int id : vocab.encode(ex.target(style_name(style)))) t.text.push_back(id);
            t.text.push_back(kEos);
            t.text = clamp_len(std::move(t.text), max_len - 1, "cclm text");
            t.style = style;
            out.push_back(std::move(t));
        }
    }
    return out;
}

// Static sample plus dynamic samples at every refresh cut, all through the
// same model; the cut-0 dynamic form carries an empty prefix after SEP.
inline std::vector<UnitSample> predictor_samples(const std::vector<Example>& examples,
                                                 const Vocab& vocab,
                                                 const WordUnitPredictorModel& model,
                                                 const std::string& style, int refresh_every) {
    std::vector<UnitSample> out;
    for (const Example& ex : examples) {
        if (!ex.targets.count(style)) continue;
        const std::vector<int> src = vocab.encode(ex.source);
        const std::vector<int> tgt = vocab.encode(ex.target(style));
        UnitSample stat;
        stat.input = model.build_input(src, nullptr);
        stat.unit_target = word_unit_targets(ex, style, vocab);
        out.push_back(std::move(stat));
        if (refresh_every > 0) {
            for (int cut = 0; cut < static_cast<int>(tgt.size()); cut += refresh_every) {
                UnitSample dyn;
                std::vector<int> prefix(tgt.begin(), tgt.begin() + cut);
                dyn.input = model.build_input(src, &prefix);
                dyn.unit_target = word_unit_targets(ex, style, vocab, cut);
                out.push_back(std::move(dyn));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// top-level training entry points
// ---------------------------------------------------------------------------

inline TrainCurve train_generator(Seq2SeqModel& model, const std::vector<SeqPair>& train,
                                  const std::vector<SeqPair>& valid, const TrainConfig& cfg) {
    return run_training<Seq2SeqModel, SeqPair>(
        model, train, cfg, [&model](const SeqPair& ex) { return seq2seq_loss(model, ex); },
        [&model, &valid]() {
            EpochStats s;
            s.valid_metric = seq2seq_valid_nll(model, valid);
            s.extra["valid_ppl"] = std::exp(s.valid_metric);
            return s;
        });
}

struct F1Scores {
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

inline F1Scores classifier_f1(const ClassifierModel& model, const std::vector<LabeledText>& data) {
    const int k = model.cfg.style_count;
    std::vector<int> tp(static_cast<std::size_t>(k), 0), fp(static_cast<std::size_t>(k), 0),
        fn(static_cast<std::size_t>(k), 0);
    int correct = 0;
    for (const LabeledText& ex : data) {
        auto probs = model.class_probs(ex.framed);
        int pred = 0;
        for (int j = 1; j < k; ++j)
            if (probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(pred)]) pred = j;
        if (pred == ex.style) {
            ++correct;
            ++tp[static_cast<std::size_t>(pred)];
        } else {
            ++fp[static_cast<std::size_t>(pred)];
            ++fn[static_cast<std::size_t>(ex.style)];
        }
    }
    F1Scores out;
    for (int c = 0; c < k; ++c) {
        const double denom = 2.0 * tp[static_cast<std::size_t>(c)] + fp[static_cast<std::size_t>(c)] +
                             fn[static_cast<std::size_t>(c)];
        out.macro_f1 += denom > 0 ? 2.0 * tp[static_cast<std::size_t>(c)] / denom : 0.0;
    }
    out.macro_f1 /= k;
    out.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / data.size();
    return out;
}

inline TrainCurve train_classifier(ClassifierModel& model, const std::vector<LabeledText>& train,
                                   const std::vector<LabeledText>& valid, const TrainConfig& cfg) {
    return run_training<ClassifierModel, LabeledText>(
        model, train, cfg, [&model](const LabeledText& ex) { return classifier_loss(model, ex); },
        [&model, &valid]() {
            EpochStats s;
            double nll = 0.0;
            for (const LabeledText& ex : valid) nll += classifier_loss(model, ex).item();
            s.valid_metric = nll / std::max<std::size_t>(1, valid.size());
            F1Scores f1 = classifier_f1(model, valid);
            s.extra["f1"] = f1.macro_f1;
            s.extra["accuracy"] = f1.accuracy;
            return s;
        });
}

inline TrainCurve train_cclm(CcLmModel& model, const std::vector<LmText>& train,
                             const std::vector<LmText>& valid, const TrainConfig& cfg) {
    return run_training<CcLmModel, LmText>(
        model, train, cfg, [&model](const LmText& ex) { return cclm_loss(model, ex); },
        [&model, &valid]() {
            EpochStats s;
            double nll = 0.0;
            for (const LmText& ex : valid) nll += cclm_loss(model, ex).item();
            s.valid_metric = nll / std::max<std::size_t>(1, valid.size());
            s.extra["valid_ppl"] = std::exp(s.valid_metric);
            return s;
        });
}

inline TrainCurve train_predictor(WordUnitPredictorModel& model,
                                  const std::vector<UnitSample>& train,
                                  const std::vector<UnitSample>& valid, const TrainConfig& cfg) {
    return run_training<WordUnitPredictorModel, UnitSample>(
        model, train, cfg, [&model](const UnitSample& ex) { return predictor_loss(model, ex); },
        [&model, &valid]() {
            EpochStats s;
            double bce = 0.0;
            for (const UnitSample& ex : valid) bce += predictor_loss(model, ex).item();
            s.valid_metric = bce / std::max<std::size_t>(1, valid.size());
            return s;
        });
}

}  // namespace stylectrl
