#pragma once

// Vocabulary restriction: top-v unit selection from the predictor, union
// with source entities and reserved ids, logit masking, and the dynamic
// refresh that re-predicts from source + SEP + prefix every m steps.

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "stylectrl/models.hpp"

namespace stylectrl {

struct MaskConfig {
    int v = 1000;  // clamped to the vocabulary size at build time
    int m = 5;     // refresh period in decode steps; 0 = static
    std::vector<int> always_allowed;  // reserved ids

    static MaskConfig for_vocab(const Vocab& vocab, int v_ = 1000, int m_ = 5) {
        MaskConfig c;
        c.v = v_;
        c.m = m_;
        c.always_allowed = vocab.reserved_ids();
        return c;
    }

    void validate() const {
        if (v < 1) throw ContractError("mask v must be >= 1");
        if (m < 0) throw ContractError("mask refresh period must be >= 0");
    }
};

enum class UnitProvenance : unsigned char { None = 0, TopV, Entity, Reserved };

struct VocabMask {
    std::vector<bool> allowed;
    std::vector<UnitProvenance> provenance;

    int vocab_size() const { return static_cast<int>(allowed.size()); }
    bool is_allowed(int id) const { return allowed[static_cast<std::size_t>(id)]; }
    int allowed_count() const {
        int n = 0;
        for (bool b : allowed) n += b ? 1 : 0;
        return n;
    }
    int count(UnitProvenance p) const {
        int n = 0;
        for (UnitProvenance q : provenance) n += q == p ? 1 : 0;
        return n;
    }

    static VocabMask all(int vocab_size) {
        VocabMask m;
        m.allowed.assign(static_cast<std::size_t>(vocab_size), true);
        m.provenance.assign(static_cast<std::size_t>(vocab_size), UnitProvenance::TopV);
        return m;
    }
};

// allowed = top-v of p_r (ties to the lower id) ∪ entities ∪ always_allowed.
// Provenance records why a token first became allowed, in the order
// reserved, top-v, entity.
inline VocabMask build_mask(const Tensor& unit_probs, const std::vector<int>& entities,
                            const MaskConfig& cfg) {
    cfg.validate();
    const int vocab = static_cast<int>(unit_probs.size());
    VocabMask mask;
    mask.allowed.assign(static_cast<std::size_t>(vocab), false);
    mask.provenance.assign(static_cast<std::size_t>(vocab), UnitProvenance::None);

    auto allow = [&mask](int id, UnitProvenance p) {
        if (mask.allowed[static_cast<std::size_t>(id)]) return;
        mask.allowed[static_cast<std::size_t>(id)] = true;
        mask.provenance[static_cast<std::size_t>(id)] = p;
    };

    for (int id : cfg.always_allowed) {
        if (id < 0 || id >= vocab) throw IndexError("always_allowed id out of range");
        allow(id, UnitProvenance::Reserved);
    }

    const int take = std::min(cfg.v, vocab);
    std::vector<int> order(static_cast<std::size_t>(vocab));
    for (int i = 0; i < vocab; ++i) order[static_cast<std::size_t>(i)] = i;
    std::partial_sort(order.begin(), order.begin() + take, order.end(), [&](int a, int b) {
        const float pa = unit_probs.data()[a], pb = unit_probs.data()[b];
        if (pa != pb) return pa > pb;
        return a < b;
    });
    for (int i = 0; i < take; ++i) allow(order[static_cast<std::size_t>(i)], UnitProvenance::TopV);

    for (int id : entities) {
        if (id < 0 || id >= vocab) throw IndexError("entity id out of range");
        allow(id, UnitProvenance::Entity);
    }
    return mask;
}

// Disallowed logits get the -1e9 sentinel; equivalent to renormalizing the
// softmax over the allowed set.
inline Tensor apply_mask(const Tensor& logits, const VocabMask& mask) {
    if (static_cast<int>(logits.size()) != mask.vocab_size())
        throw DimensionError("apply_mask: vocabulary size mismatch");
    if (mask.allowed_count() == 0) throw ContractError("apply_mask: everything is masked");
    Tensor out = logits.copy();
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask.allowed[i]) out.data()[i] = -1e9f;
    return out;
}

// At refresh steps (t mod m == 0, including t=0) re-runs the predictor on
// source + SEP + prefix and rebuilds the mask; otherwise the previous mask
// stays. Entities persist across refreshes.
inline std::optional<VocabMask> dynamic_update(const WordUnitPredictorModel& predictor,
                                               const std::vector<int>& source,
                                               const std::vector<int>& prefix, int step,
                                               const MaskConfig& cfg,
                                               const std::vector<int>& entities) {
    if (cfg.m <= 0) return std::nullopt;
    if (step % cfg.m != 0) return std::nullopt;
    Tensor probs = predictor.predict(source, &prefix);
    return build_mask(probs, entities, cfg);
}

// Fraction of distinct target units contained in the allowed set.
inline double predictor_recall(const VocabMask& mask, const std::vector<int>& target) {
    if (target.empty()) throw ContractError("predictor_recall: empty target");
    std::set<int> distinct(target.begin(), target.end());
    int hit = 0;
    for (int id : distinct) hit += mask.is_allowed(id) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(distinct.size());
}

// ---------------------------------------------------------------------------
// mask sources for the decode engine
// ---------------------------------------------------------------------------

class MaskProvider {
public:
    virtual ~MaskProvider() = default;
    virtual std::shared_ptr<const VocabMask> initial() const = 0;
    // Non-null when the mask changes at content step `t` for this prefix.
    virtual std::shared_ptr<const VocabMask> refresh(const std::vector<int>& prefix_content,
                                                     int t) const = 0;
};

class StaticMaskProvider : public MaskProvider {
public:
    explicit StaticMaskProvider(VocabMask mask)
        : mask_(std::make_shared<const VocabMask>(std::move(mask))) {}
    std::shared_ptr<const VocabMask> initial() const override { return mask_; }
    std::shared_ptr<const VocabMask> refresh(const std::vector<int>&, int) const override {
        return nullptr;
    }

private:
    std::shared_ptr<const VocabMask> mask_;
};

class DynamicMaskProvider : public MaskProvider {
public:
    DynamicMaskProvider(const WordUnitPredictorModel& predictor, std::vector<int> source,
                        std::vector<int> entities, const MaskConfig& cfg)
        : predictor_(&predictor), source_(std::move(source)), entities_(std::move(entities)),
          cfg_(cfg) {
        if (cfg_.m <= 0) throw ContractError("dynamic mask provider needs m > 0");
    }

    std::shared_ptr<const VocabMask> initial() const override {
        // the first mask in dynamic mode comes from the dynamic predictor
        return refresh({}, 0);
    }

    std::shared_ptr<const VocabMask> refresh(const std::vector<int>& prefix_content,
                                             int t) const override {
        auto m = dynamic_update(*predictor_, source_, prefix_content, t, cfg_, entities_);
        if (!m) return nullptr;
        return std::make_shared<const VocabMask>(std::move(*m));
    }

private:
    const WordUnitPredictorModel* predictor_;
    std::vector<int> source_;
    std::vector<int> entities_;
    MaskConfig cfg_;
};

}  // namespace stylectrl
