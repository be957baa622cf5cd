#pragma once

// Synthetic style-parallel corpus with a closed-form style oracle. The
// lexicon keeps two disjoint content registers (complex/simple synonym
// pairs) plus shared neutral tokens and an entity pool, so the style of any
// output is machine-checkable by counting register tokens.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stylectrl/errors.hpp"
#include "stylectrl/rng.hpp"

namespace stylectrl {

// Reserved token ids shared by every model.
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kSep = 3;
constexpr int kStyleBase = 4;  // STYLE_0, STYLE_1, ... follow

inline int style_token(int style) { return kStyleBase + style; }
inline int reserved_count(int style_count) { return kStyleBase + style_count; }

constexpr int kStyleNormal = 0;
constexpr int kStyleSimple = 1;

inline const char* style_name(int style) { return style == kStyleSimple ? "simple" : "normal"; }
inline int style_from_name(const std::string& name) {
    if (name == "simple") return kStyleSimple;
    if (name == "normal") return kStyleNormal;
    throw ValidationError("unknown style name: " + name);
}

struct RegisterLexicon {
    std::vector<std::pair<std::string, std::string>> pairs;  // (complex, simple)
    std::vector<std::string> neutral;
    std::vector<std::string> entities;

    static RegisterLexicon builtin();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["pairs"] = nlohmann::json::array();
        for (const auto& [c, s] : pairs) j["pairs"].push_back({c, s});
        j["neutral"] = neutral;
        j["entities"] = entities;
        return j;
    }

    static RegisterLexicon from_json(const nlohmann::json& j) {
        RegisterLexicon lex;
        for (const auto& p : j.at("pairs"))
            lex.pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
        lex.neutral = j.at("neutral").get<std::vector<std::string>>();
        lex.entities = j.at("entities").get<std::vector<std::string>>();
        return lex;
    }
};

inline RegisterLexicon RegisterLexicon::builtin() {
    RegisterLexicon lex;
    lex.pairs = {
        {"utilize", "use"},       {"commence", "start"},    {"terminate", "end"},
        {"purchase", "buy"},      {"reside", "live"},       {"sufficient", "enough"},
        {"assist", "help"},       {"obtain", "get"},        {"require", "need"},
        {"demonstrate", "show"},  {"inquire", "ask"},       {"consume", "eat"},
        {"construct", "build"},   {"observe", "watch"},     {"respond", "answer"},
        {"attempt", "try"},       {"comprehend", "grasp"},  {"locate", "find"},
        {"depart", "leave"},      {"arrive", "come"},       {"select", "pick"},
        {"repair", "fix"},        {"examine", "check"},     {"converse", "talk"},
        {"numerous", "many"},     {"additional", "extra"},  {"entire", "whole"},
        {"rapid", "fast"},        {"lengthy", "long"},      {"miniature", "tiny"},
        {"enormous", "huge"},     {"ancient", "old"},       {"contemporary", "new"},
        {"challenging", "hard"},  {"straightforward", "easy"}, {"inexpensive", "cheap"},
        {"fatigued", "tired"},    {"furious", "angry"},     {"delighted", "glad"},
        {"melancholy", "sad"},    {"intelligent", "smart"}, {"courageous", "brave"},
        {"peculiar", "odd"},      {"frigid", "cold"},       {"scorching", "hot"},
        {"humid", "damp"},        {"luminous", "bright"},   {"obscure", "dim"},
        {"silent", "quiet"},      {"boisterous", "loud"},   {"velocity", "speed"},
        {"residence", "home"},    {"automobile", "car"},    {"physician", "doctor"},
        {"beverage", "drink"},    {"cuisine", "food"},      {"occupation", "job"},
        {"currency", "money"},    {"infant", "baby"},       {"canine", "dog"},
    };
    lex.neutral = {"the", "a",    "an",   "and",  "or",   "but",  "of",   "to",
                   "in",  "on",   "at",   "by",   "for",  "with", "from", "was",
                   "is",  "are",  "were", "be",   "has",  "had",  "have", "will",
                   "would", "this", "that", "it",  "he",   "she",  "they", "we",
                   "there", "then", "when", "who", "some", "also", "now",  "."};
    lex.entities = {"rivertown", "lakeside",  "northfield", "ashford",  "maplewood",
                    "greenhill", "stonebridge", "eastport", "westvale", "oakham",
                    "mara",      "odin",      "petra",      "silas",    "nadia",
                    "tomas",     "elena",     "viktor",     "ingrid",   "casper",
                    "jonas",     "freya",     "leon",       "astrid",   "bruno",
                    "clara",     "dmitri",    "edith",      "felix",    "greta"};
    return lex;
}

// Token table derived from a lexicon: reserved ids first, then complex
// register, simple register, neutral tokens, entities, in lexicon order.
class Vocab {
public:
    Vocab() = default;

    Vocab(const RegisterLexicon& lex, int style_count = 2) : style_count_(style_count) {
        id_to_tok_.resize(static_cast<std::size_t>(reserved_count(style_count)));
        id_to_tok_[kPad] = "<pad>";
        id_to_tok_[kBos] = "<bos>";
        id_to_tok_[kEos] = "<eos>";
        id_to_tok_[kSep] = "<sep>";
        for (int s = 0; s < style_count; ++s)
            id_to_tok_[static_cast<std::size_t>(style_token(s))] = std::string("<style_") + std::to_string(s) + ">";
        complex_begin_ = static_cast<int>(id_to_tok_.size());
        for (const auto& [c, s] : lex.pairs) id_to_tok_.push_back(c);
        simple_begin_ = static_cast<int>(id_to_tok_.size());
        for (const auto& [c, s] : lex.pairs) id_to_tok_.push_back(s);
        neutral_begin_ = static_cast<int>(id_to_tok_.size());
        for (const auto& t : lex.neutral) id_to_tok_.push_back(t);
        entity_begin_ = static_cast<int>(id_to_tok_.size());
        for (const auto& t : lex.entities) id_to_tok_.push_back(t);
        for (std::size_t i = 0; i < id_to_tok_.size(); ++i) {
            auto [it, fresh] = tok_to_id_.emplace(id_to_tok_[i], static_cast<int>(i));
            if (!fresh) throw ValidationError("lexicon token appears twice: " + id_to_tok_[i]);
        }
        pair_count_ = static_cast<int>(lex.pairs.size());
    }

    int size() const { return static_cast<int>(id_to_tok_.size()); }
    int style_count() const { return style_count_; }

    int id(const std::string& tok) const {
        auto it = tok_to_id_.find(tok);
        if (it == tok_to_id_.end()) throw ValidationError("token not in vocabulary: " + tok);
        return it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw IndexError("token id out of range: " + std::to_string(id));
        return id_to_tok_[static_cast<std::size_t>(id)];
    }

    std::vector<int> encode(const std::vector<std::string>& toks) const {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) ids.push_back(id(t));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> toks;
        toks.reserve(ids.size());
        for (int i : ids) toks.push_back(token(i));
        return toks;
    }

    bool is_reserved(int id) const { return id < reserved_count(style_count_); }
    bool is_complex(int id) const { return id >= complex_begin_ && id < simple_begin_; }
    bool is_simple(int id) const { return id >= simple_begin_ && id < neutral_begin_; }
    bool is_entity(int id) const { return id >= entity_begin_; }
    int simple_of(int complex_id) const { return complex_id - complex_begin_ + simple_begin_; }

    std::vector<int> reserved_ids() const {
        std::vector<int> r;
        for (int i = 0; i < reserved_count(style_count_); ++i) r.push_back(i);
        return r;
    }

private:
    std::vector<std::string> id_to_tok_;
    std::unordered_map<std::string, int> tok_to_id_;
    int style_count_ = 2;
    int pair_count_ = 0;
    int complex_begin_ = 0, simple_begin_ = 0, neutral_begin_ = 0, entity_begin_ = 0;
};

struct Example {
    std::string id;
    std::vector<std::string> source;
    std::map<std::string, std::vector<std::string>> targets;  // style name -> tokens
    std::vector<std::string> entities;
    std::optional<std::string> style_label;  // single-target data only

    bool is_parallel() const { return targets.count("simple") && targets.count("normal"); }
    const std::vector<std::string>& target(const std::string& style) const {
        auto it = targets.find(style);
        if (it == targets.end()) throw ContractError("example " + id + " has no target for style " + style);
        return it->second;
    }
};

// Fraction of simple-register tokens among register tokens; 0.5 when the
// text carries no register token at all.
inline double register_simple_fraction(const std::vector<int>& ids, const Vocab& vocab) {
    int simple = 0, complex_count = 0;
    for (int id : ids) {
        if (vocab.is_simple(id)) ++simple;
        else if (vocab.is_complex(id)) ++complex_count;
    }
    if (simple + complex_count == 0) return 0.5;
    return static_cast<double>(simple) / (simple + complex_count);
}

inline int oracle_style(const std::vector<int>& ids, const Vocab& vocab) {
    return register_simple_fraction(ids, vocab) > 0.5 ? kStyleSimple : kStyleNormal;
}

// Templated sentences: sources in the complex register over two clauses, a
// compressed normal target keeping the first clause's content, and a simple
// target with synonym substitution and a sentence split.
inline std::vector<Example> generate_synthetic(const RegisterLexicon& lex, int n,
                                               std::uint64_t seed) {
    if (n < 1) throw ContractError("generate_synthetic: n must be >= 1");
    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(n));

    const std::vector<std::string> glue_a = {"was", "is", "has", "had"};
    const std::vector<std::string> glue_b = {"and", "but", "or"};
    const std::vector<std::string> glue_c = {"the", "a", "this", "that"};
    const std::vector<std::string> glue_d = {"in", "on", "at", "by", "from"};

    auto pick = [&rng](const std::vector<std::string>& v) {
        return v[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(v.size())))];
    };

    for (int i = 0; i < n; ++i) {
        Example ex;
        ex.id = "syn-" + std::to_string(i);

        const int np = static_cast<int>(lex.pairs.size());
        const int k1 = 2 + rng.uniform_int(2);  // first-clause content words
        const int k2 = 1 + rng.uniform_int(2);  // second-clause content words
        std::vector<int> slots;
        while (static_cast<int>(slots.size()) < k1 + k2) {
            const int c = rng.uniform_int(np);
            bool seen = false;
            for (int s : slots) seen = seen || s == c;
            if (!seen) slots.push_back(c);
        }
        const std::string ent1 = lex.entities[static_cast<std::size_t>(rng.uniform_int(
            static_cast<int>(lex.entities.size())))];
        const bool two_entities = rng.bernoulli(0.7);
        const std::string ent2 = lex.entities[static_cast<std::size_t>(rng.uniform_int(
            static_cast<int>(lex.entities.size())))];

        // source: ent1 g c1 g c2 (g c3) . (ent2|it) g c4 (g c5) .
        std::vector<std::string> src;
        src.push_back(ent1);
        src.push_back(pick(glue_a));
        for (int s = 0; s < k1; ++s) {
            if (s > 0) src.push_back(pick(glue_b));
            src.push_back(lex.pairs[static_cast<std::size_t>(slots[static_cast<std::size_t>(s)])].first);
        }
        src.push_back(pick(glue_d));
        src.push_back(pick(glue_c));
        src.push_back(".");
        src.push_back(two_entities ? ent2 : "it");
        src.push_back(pick(glue_a));
        for (int s = 0; s < k2; ++s) {
            if (s > 0) src.push_back(pick(glue_b));
            src.push_back(lex.pairs[static_cast<std::size_t>(slots[static_cast<std::size_t>(k1 + s)])].first);
        }
        src.push_back(".");
        ex.source = src;

        ex.entities.push_back(ent1);
        if (two_entities && ent2 != ent1) ex.entities.push_back(ent2);

        // normal target: compression keeping the first clause's content words
        std::vector<std::string> tgt_normal;
        tgt_normal.push_back(ent1);
        tgt_normal.push_back("was");
        for (int s = 0; s < k1; ++s) {
            if (s > 0) tgt_normal.push_back("and");
            tgt_normal.push_back(lex.pairs[static_cast<std::size_t>(slots[static_cast<std::size_t>(s)])].first);
        }
        tgt_normal.push_back(".");

        // simple target: synonym substitution plus a sentence split
        std::vector<std::string> tgt_simple;
        tgt_simple.push_back(ent1);
        tgt_simple.push_back("was");
        tgt_simple.push_back(lex.pairs[static_cast<std::size_t>(slots[0])].second);
        tgt_simple.push_back(".");
        if (k1 > 1) {
            tgt_simple.push_back("it");
            tgt_simple.push_back("was");
            for (int s = 1; s < k1; ++s) {
                if (s > 1) tgt_simple.push_back("and");
                tgt_simple.push_back(lex.pairs[static_cast<std::size_t>(slots[static_cast<std::size_t>(s)])].second);
            }
            tgt_simple.push_back(".");
        }

        ex.targets["normal"] = std::move(tgt_normal);
        ex.targets["simple"] = std::move(tgt_simple);
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

inline nlohmann::json example_to_json(const Example& ex) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["source"] = ex.source;
    if (ex.is_parallel()) {
        j["targets"] = {{"simple", ex.target("simple")}, {"normal", ex.target("normal")}};
    } else {
        nlohmann::json t;
        t["text"] = ex.targets.begin()->second;
        if (ex.style_label) t["style"] = *ex.style_label;
        j["targets"] = t;
    }
    j["entities"] = ex.entities;
    return j;
}

inline void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Example& ex : examples) out << example_to_json(ex).dump() << "\n";
}

// Validates the schema line by line; with a vocabulary, unknown tokens are a
// hard error rather than a silent UNK so the register oracle stays sound.
inline std::vector<Example> load_jsonl(const std::string& path, const Vocab* vocab = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<Example> out;
    std::string line;
    int lineno = 0;
    auto fail = [&lineno](const std::string& what) -> ValidationError {
        return ValidationError("line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        Example ex;
        try {
            ex.id = j.at("id").get<std::string>();
            ex.source = j.at("source").get<std::vector<std::string>>();
            const nlohmann::json& t = j.at("targets");
            if (t.contains("text")) {
                ex.targets["text"] = t.at("text").get<std::vector<std::string>>();
                if (t.contains("style")) ex.style_label = t.at("style").get<std::string>();
            } else {
                ex.targets["simple"] = t.at("simple").get<std::vector<std::string>>();
                ex.targets["normal"] = t.at("normal").get<std::vector<std::string>>();
            }
            if (j.contains("entities"))
                ex.entities = j.at("entities").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("schema violation: ") + e.what());
        }
        for (const std::string& ent : ex.entities) {
            bool found = false;
            for (const std::string& s : ex.source) found = found || s == ent;
            if (!found) throw fail("entity not present in source: " + ent);
        }
        if (vocab) {
            auto check = [&](const std::vector<std::string>& toks) {
                for (const std::string& t : toks)
                    try {
                        vocab->id(t);
                    } catch (const ValidationError&) {
                        throw fail("out-of-vocabulary token: " + t);
                    }
            };
            check(ex.source);
            for (const auto& [style, toks] : ex.targets) check(toks);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// derived training data
// ---------------------------------------------------------------------------

// Multi-hot target over the vocabulary: units used in the style target, or
// in its suffix from prefix_cut onward for the dynamic predictor.
inline std::vector<float> word_unit_targets(const Example& ex, const std::string& style,
                                            const Vocab& vocab,
                                            std::optional<int> prefix_cut = std::nullopt) {
    const std::vector<std::string>& tgt = ex.target(style);
    if (prefix_cut && (*prefix_cut < 0 || *prefix_cut >= static_cast<int>(tgt.size())))
        throw ContractError("word_unit_targets: prefix_cut outside target");
    std::vector<float> v(static_cast<std::size_t>(vocab.size()), 0.0f);
    const int start = prefix_cut ? *prefix_cut : 0;
    for (std::size_t i = static_cast<std::size_t>(start); i < tgt.size(); ++i)
        v[static_cast<std::size_t>(vocab.id(tgt[i]))] = 1.0f;
    return v;
}

struct Splits {
    std::vector<Example> train, valid, test;
};

inline Splits split(std::vector<Example> examples, const std::vector<double>& ratios,
                    std::uint64_t seed) {
    if (ratios.size() != 3) throw ContractError("split: expected three ratios");
    double s = 0;
    for (double r : ratios) s += r;
    if (std::abs(s - 1.0) > 1e-9) throw ContractError("split: ratios must sum to 1");
    Rng rng(seed);
    rng.shuffle(examples);
    const int n = static_cast<int>(examples.size());
    const int n_train = static_cast<int>(ratios[0] * n + 0.5);
    const int n_valid = static_cast<int>(ratios[1] * n + 0.5);
    if (n_train + n_valid > n) throw ContractError("split: ratios leave no test data");
    Splits out;
    out.train.assign(examples.begin(), examples.begin() + n_train);
    out.valid.assign(examples.begin() + n_train, examples.begin() + n_train + n_valid);
    out.test.assign(examples.begin() + n_train + n_valid, examples.end());
    return out;
}

// Entity ids found in a token sequence, via the lexicon's entity pool.
inline std::vector<int> extract_entities(const std::vector<int>& ids, const Vocab& vocab) {
    std::set<int> ents;
    for (int id : ids)
        if (vocab.is_entity(id)) ents.insert(id);
    return {ents.begin(), ents.end()};
}

}  // namespace stylectrl
