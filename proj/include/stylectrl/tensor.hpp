#pragma once

// Dense float32 tensors with a define-by-run reverse-mode tape.
//
// Every tensor is a cheap shared handle onto a (shape, values, grad) record.
// While a TapeScope is active on the current thread, each primitive pushes a
// node holding a backward closure; Tape::backward sweeps the nodes once in
// reverse creation order, which is a valid reverse topological order because
// inputs always exist before the op that consumes them. Intermediate adjoints
// live in per-call scratch buffers; only leaf tensors marked requires_grad
// accumulate into their persistent grad buffer, so calling backward twice
// without zero_grad doubles leaf gradients exactly. Tapes are rebuilt per
// forward pass and confined to one thread; tensors not marked requires_grad
// are never written to by backward, which makes trained parameters safe to
// share across decode threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "stylectrl/errors.hpp"

namespace stylectrl {

class Tape;

struct TensorData {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;
    std::vector<float> g;  // allocated on first gradient accumulation
    bool requires_grad = false;
    Tape* tape = nullptr;  // set when this is an op output
    int node = -1;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols) {
        Tensor t;
        t.d = std::make_shared<TensorData>();
        t.d->rows = rows;
        t.d->cols = cols;
        t.d->v.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
        return t;
    }

    static Tensor from(int rows, int cols, std::vector<float> values) {
        if (static_cast<std::size_t>(rows) * cols != values.size())
            throw DimensionError("tensor value count does not match shape");
        Tensor t = zeros(rows, cols);
        t.d->v = std::move(values);
        return t;
    }

    static Tensor row(std::vector<float> values) {
        const int n = static_cast<int>(values.size());
        return from(1, n, std::move(values));
    }

    static Tensor scalar(float x) { return from(1, 1, {x}); }

    bool defined() const { return d != nullptr; }
    int rows() const { return d->rows; }
    int cols() const { return d->cols; }
    std::size_t size() const { return d->v.size(); }

    float* data() { return d->v.data(); }
    const float* data() const { return d->v.data(); }
    std::vector<float>& values() { return d->v; }
    const std::vector<float>& values() const { return d->v; }

    float& at(int r, int c) { return d->v[static_cast<std::size_t>(r) * d->cols + c]; }
    float at(int r, int c) const { return d->v[static_cast<std::size_t>(r) * d->cols + c]; }
    float item() const {
        if (size() != 1) throw ContractError("item() on non-scalar tensor");
        return d->v[0];
    }

    bool requires_grad() const { return d->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        d->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !d->g.empty(); }
    std::vector<float>& grad() {
        if (d->g.empty()) d->g.assign(d->v.size(), 0.0f);
        return d->g;
    }
    const std::vector<float>& grad() const { return d->g; }
    void zero_grad() {
        if (!d->g.empty()) std::fill(d->g.begin(), d->g.end(), 0.0f);
    }

    // Deep copy of values; grad buffer and tape binding are not copied.
    Tensor copy() const {
        Tensor t = zeros(rows(), cols());
        t.d->v = d->v;
        return t;
    }

    bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

    std::shared_ptr<TensorData> d;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const std::vector<float>&)>;

    int record(const std::shared_ptr<TensorData>& out, BackwardFn back) {
        nodes_.push_back(Node{out, std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }

    // Route a gradient contribution to where it belongs: scratch adjoints for
    // op outputs on this tape, the persistent grad buffer for requires_grad
    // leaves, nowhere otherwise.
    void accumulate(TensorData& td, const float* contrib, std::size_t n) {
        if (td.tape == this && td.node >= 0 &&
            td.node < static_cast<int>(nodes_.size()) &&
            nodes_[static_cast<std::size_t>(td.node)].out.get() == &td) {
            std::vector<float>& a = adj_[static_cast<std::size_t>(td.node)];
            if (a.empty()) a.assign(n, 0.0f);
            for (std::size_t i = 0; i < n; ++i) a[i] += contrib[i];
            return;
        }
        if (td.requires_grad) {
            if (td.g.empty()) td.g.assign(td.v.size(), 0.0f);
            for (std::size_t i = 0; i < n; ++i) td.g[i] += contrib[i];
        }
    }

    void backward(const Tensor& root) {
        if (root.size() != 1) throw ContractError("backward root must be scalar");
        TensorData& rd = *root.d;
        const bool on_tape = rd.tape == this && rd.node >= 0 &&
                             rd.node < static_cast<int>(nodes_.size()) &&
                             nodes_[static_cast<std::size_t>(rd.node)].out.get() == &rd;
        if (!on_tape) {
            // Root is a leaf: the only reachable gradient is its own.
            if (rd.g.empty()) rd.g.assign(rd.v.size(), 0.0f);
            rd.g[0] += 1.0f;
            return;
        }
        adj_.assign(nodes_.size(), {});
        adj_[static_cast<std::size_t>(rd.node)] = {1.0f};
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (adj_[i].empty()) continue;  // unreachable from root
            nodes_[i].back(*this, adj_[i]);
        }
        // Expose adjoints of op outputs for inspection; assignment (not
        // accumulation) so only leaves carry cross-pass accumulation.
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (adj_[i].empty()) continue;
            nodes_[i].out->g = adj_[i];
        }
    }

private:
    struct Node {
        std::shared_ptr<TensorData> out;
        BackwardFn back;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<float>> adj_;
};

namespace detail {

inline Tape*& active_tape_slot() {
    thread_local Tape* t = nullptr;
    return t;
}

}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(detail::active_tape_slot()) {
        detail::active_tape_slot() = &t;
    }
    ~TapeScope() { detail::active_tape_slot() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

inline bool tracked(const Tensor& t, Tape* tape) {
    return t.d->requires_grad || (t.d->tape == tape && t.d->node >= 0);
}

template <class Fn>
void maybe_record(Tensor& out, std::initializer_list<const Tensor*> ins, Fn&& back) {
    Tape* tape = active_tape();
    if (!tape) return;
    bool any = false;
    for (const Tensor* t : ins) any = any || tracked(*t, tape);
    if (!any) return;
    out.d->tape = tape;
    out.d->node = tape->record(out.d, std::forward<Fn>(back));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const float av = pa[i * k + l];
            if (av == 0.0f) continue;
            const float* brow = pb + static_cast<std::size_t>(l) * n;
            float* orow = po + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    detail::maybe_record(out, {&a, &b}, [ad = a.d, bd = b.d, m, k, n](Tape& t, const std::vector<float>& g) {
        // da[i,l] += dot(g[i,:], b[l,:]); db[l,j] += sum_i a[i,l] g[i,j]
        std::vector<float> da(static_cast<std::size_t>(m) * k, 0.0f);
        std::vector<float> db(static_cast<std::size_t>(k) * n, 0.0f);
        const float* pa = ad->v.data();
        const float* pb = bd->v.data();
        for (int i = 0; i < m; ++i) {
            const float* grow = g.data() + static_cast<std::size_t>(i) * n;
            for (int l = 0; l < k; ++l) {
                const float* brow = pb + static_cast<std::size_t>(l) * n;
                float acc = 0.0f;
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                da[static_cast<std::size_t>(i) * k + l] = acc;
                const float av = pa[static_cast<std::size_t>(i) * k + l];
                if (av != 0.0f) {
                    float* dbrow = db.data() + static_cast<std::size_t>(l) * n;
                    for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                }
            }
        }
        t.accumulate(*ad, da.data(), da.size());
        t.accumulate(*bd, db.data(), db.size());
    });
    return out;
}

// a [m×k] times b-transposed where b is [n×k]; rows of both operands are
// contiguous, which keeps attention scores and the W_e·o projection fast.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner dimensions disagree (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.cols()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out = Tensor::zeros(m, n);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int i = 0; i < m; ++i) {
        const float* arow = pa + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const float* brow = pb + static_cast<std::size_t>(j) * k;
            float acc = 0.0f;
            for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
            po[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
    detail::maybe_record(out, {&a, &b}, [ad = a.d, bd = b.d, m, k, n](Tape& t, const std::vector<float>& g) {
        // da += g·b ; db[j,l] += sum_i g[i,j] a[i,l]
        std::vector<float> da(static_cast<std::size_t>(m) * k, 0.0f);
        std::vector<float> db(static_cast<std::size_t>(n) * k, 0.0f);
        const float* pa = ad->v.data();
        const float* pb = bd->v.data();
        for (int i = 0; i < m; ++i) {
            const float* grow = g.data() + static_cast<std::size_t>(i) * n;
            const float* arow = pa + static_cast<std::size_t>(i) * k;
            float* darow = da.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < n; ++j) {
                const float gv = grow[j];
                if (gv == 0.0f) continue;
                const float* brow = pb + static_cast<std::size_t>(j) * k;
                float* dbrow = db.data() + static_cast<std::size_t>(j) * k;
                for (int l = 0; l < k; ++l) {
                    darow[l] += gv * brow[l];
                    dbrow[l] += gv * arow[l];
                }
            }
        }
        t.accumulate(*ad, da.data(), da.size());
        t.accumulate(*bd, db.data(), db.size());
    });
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    detail::maybe_record(out, {&a, &b}, [ad = a.d, bd = b.d](Tape& t, const std::vector<float>& g) {
        t.accumulate(*ad, g.data(), g.size());
        t.accumulate(*bd, g.data(), g.size());
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    detail::maybe_record(out, {&a, &b}, [ad = a.d, bd = b.d](Tape& t, const std::vector<float>& g) {
        t.accumulate(*ad, g.data(), g.size());
        std::vector<float> ng(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ng[i] = -g[i];
        t.accumulate(*bd, ng.data(), ng.size());
    });
    return out;
}

// Adds a [1×n] row vector to every row.
inline Tensor add_rowvec(const Tensor& a, const Tensor& r) {
    if (r.rows() != 1 || r.cols() != a.cols()) throw DimensionError("add_rowvec: bad row shape");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) + r.at(0, j);
    detail::maybe_record(out, {&a, &r}, [ad = a.d, rd = r.d, n, m = a.rows()](Tape& t, const std::vector<float>& g) {
        t.accumulate(*ad, g.data(), g.size());
        std::vector<float> dr(static_cast<std::size_t>(n), 0.0f);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dr[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * n + j];
        t.accumulate(*rd, dr.data(), dr.size());
    });
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    detail::maybe_record(out, {&a, &b}, [ad = a.d, bd = b.d](Tape& t, const std::vector<float>& g) {
        std::vector<float> da(g.size()), db(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] = g[i] * bd->v[i];
            db[i] = g[i] * ad->v[i];
        }
        t.accumulate(*ad, da.data(), da.size());
        t.accumulate(*bd, db.data(), db.size());
    });
    return out;
}

inline Tensor scale(const Tensor& a, float s) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    detail::maybe_record(out, {&a}, [ad = a.d, s](Tape& t, const std::vector<float>& g) {
        std::vector<float> da(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * s;
        t.accumulate(*ad, da.data(), da.size());
    });
    return out;
}

// Exp-normalize along the last dimension with max subtraction. log=true
// returns log-softmax of the same values.
inline Tensor softmax(const Tensor& x, bool log = false) {
    if (x.cols() < 1) throw DimensionError("softmax: empty rows");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(m, n);
    std::vector<float> probs;  // saved for backward when log=true
    if (log) probs.resize(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const float* xr = x.data() + static_cast<std::size_t>(i) * n;
        float* orow = out.data() + static_cast<std::size_t>(i) * n;
        float mx = xr[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(xr[j]) - mx);
        const double logz = std::log(denom) + mx;
        for (int j = 0; j < n; ++j) {
            const double lp = static_cast<double>(xr[j]) - logz;
            if (log) {
                orow[j] = static_cast<float>(lp);
                probs[static_cast<std::size_t>(i) * n + j] = static_cast<float>(std::exp(lp));
            } else {
                orow[j] = static_cast<float>(std::exp(lp));
            }
        }
    }
    if (!log) {
        detail::maybe_record(out, {&x}, [xd = x.d, od = out.d, m, n](Tape& t, const std::vector<float>& g) {
            // dx = (g - sum(g*y)) * y per row
            std::vector<float> dx(g.size());
            for (int i = 0; i < m; ++i) {
                const float* yr = od->v.data() + static_cast<std::size_t>(i) * n;
                const float* gr = g.data() + static_cast<std::size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
                for (int j = 0; j < n; ++j)
                    dx[static_cast<std::size_t>(i) * n + j] =
                        static_cast<float>((gr[j] - dot) * yr[j]);
            }
            t.accumulate(*xd, dx.data(), dx.size());
        });
    } else {
        detail::maybe_record(out, {&x}, [xd = x.d, probs, m, n](Tape& t, const std::vector<float>& g) {
            // dx = g - p * sum(g) per row
            std::vector<float> dx(g.size());
            for (int i = 0; i < m; ++i) {
                const float* gr = g.data() + static_cast<std::size_t>(i) * n;
                const float* pr = probs.data() + static_cast<std::size_t>(i) * n;
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += gr[j];
                for (int j = 0; j < n; ++j)
                    dx[static_cast<std::size_t>(i) * n + j] = static_cast<float>(gr[j] - pr[j] * s);
            }
            t.accumulate(*xd, dx.data(), dx.size());
        });
    }
    return out;
}

inline Tensor log_softmax(const Tensor& x) { return softmax(x, true); }

enum class Activation { Sigmoid, Relu, Tanh };

inline Tensor activation(const Tensor& x, Activation kind) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float v = x.data()[i];
        switch (kind) {
            case Activation::Sigmoid: out.data()[i] = 1.0f / (1.0f + std::exp(-v)); break;
            case Activation::Relu: out.data()[i] = v > 0.0f ? v : 0.0f; break;
            case Activation::Tanh: out.data()[i] = std::tanh(v); break;
        }
    }
    detail::maybe_record(out, {&x}, [xd = x.d, od = out.d, kind](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const float y = od->v[i];
            switch (kind) {
                case Activation::Sigmoid: dx[i] = g[i] * y * (1.0f - y); break;
                case Activation::Relu: dx[i] = xd->v[i] > 0.0f ? g[i] : 0.0f; break;
                case Activation::Tanh: dx[i] = g[i] * (1.0f - y * y); break;
            }
        }
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
inline Tensor tanh_act(const Tensor& x) { return activation(x, Activation::Tanh); }

// Per-row standardization scaled by gain and shifted by bias, eps inside the
// square root.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         float eps = 1e-5f) {
    const int m = x.rows(), n = x.cols();
    if (n < 2) throw DimensionError("layer_norm: needs at least 2 features");
    if (gain.size() != static_cast<std::size_t>(n) || bias.size() != static_cast<std::size_t>(n))
        throw DimensionError("layer_norm: gain/bias shape mismatch");
    Tensor out = Tensor::zeros(m, n);
    std::vector<float> xhat(static_cast<std::size_t>(m) * n);
    std::vector<float> inv_std(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const float* xr = x.data() + static_cast<std::size_t>(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xr[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = static_cast<float>(is);
        for (int j = 0; j < n; ++j) {
            const float h = static_cast<float>((xr[j] - mean) * is);
            xhat[static_cast<std::size_t>(i) * n + j] = h;
            out.at(i, j) = h * gain.at(0, j) + bias.at(0, j);
        }
    }
    detail::maybe_record(out, {&x, &gain, &bias},
                         [xd = x.d, gd = gain.d, bd = bias.d, xhat, inv_std, m, n](
                             Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(static_cast<std::size_t>(m) * n);
        std::vector<float> dgain(static_cast<std::size_t>(n), 0.0f);
        std::vector<float> dbias(static_cast<std::size_t>(n), 0.0f);
        for (int i = 0; i < m; ++i) {
            const float* gr = g.data() + static_cast<std::size_t>(i) * n;
            const float* hr = xhat.data() + static_cast<std::size_t>(i) * n;
            // dxhat = g * gain; dx = inv_std*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
            double s1 = 0.0, s2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double dh = static_cast<double>(gr[j]) * gd->v[static_cast<std::size_t>(j)];
                s1 += dh;
                s2 += dh * hr[j];
                dgain[static_cast<std::size_t>(j)] += gr[j] * hr[j];
                dbias[static_cast<std::size_t>(j)] += gr[j];
            }
            s1 /= n;
            s2 /= n;
            const double is = inv_std[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j) {
                const double dh = static_cast<double>(gr[j]) * gd->v[static_cast<std::size_t>(j)];
                dx[static_cast<std::size_t>(i) * n + j] =
                    static_cast<float>(is * (dh - s1 - hr[j] * s2));
            }
        }
        t.accumulate(*xd, dx.data(), dx.size());
        t.accumulate(*gd, dgain.data(), dgain.size());
        t.accumulate(*bd, dbias.data(), dbias.size());
    });
    return out;
}

// Row gather: out[i,:] = table[ids[i],:].
inline Tensor embedding(const std::vector<int>& ids, const Tensor& table) {
    const int n = table.cols();
    Tensor out = Tensor::zeros(static_cast<int>(ids.size()), n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= table.rows())
            throw IndexError("embedding: id " + std::to_string(id) + " out of range 0.." +
                             std::to_string(table.rows() - 1));
        std::copy_n(table.data() + static_cast<std::size_t>(id) * n, n,
                    out.data() + i * static_cast<std::size_t>(n));
    }
    detail::maybe_record(out, {&table}, [td = table.d, ids, n](Tape& t, const std::vector<float>& g) {
        std::vector<float> dt(td->v.size(), 0.0f);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            float* row = dt.data() + static_cast<std::size_t>(ids[i]) * n;
            const float* gr = g.data() + i * static_cast<std::size_t>(n);
            for (int j = 0; j < n; ++j) row[j] += gr[j];
        }
        t.accumulate(*td, dt.data(), dt.size());
    });
    return out;
}

// distᵀ·table for a [1×V] distribution; gradient flows into both the
// distribution and the table.
inline Tensor soft_embedding(const Tensor& dist, const Tensor& table) {
    if (dist.rows() != 1 || dist.cols() != table.rows())
        throw DimensionError("soft_embedding: distribution length must equal table rows");
    return matmul(dist, table);
}

inline Tensor mean_rows(const Tensor& x) {
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(1, n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += x.at(i, j);
        out.at(0, j) = static_cast<float>(s / m);
    }
    detail::maybe_record(out, {&x}, [xd = x.d, m, n](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(static_cast<std::size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                dx[static_cast<std::size_t>(i) * n + j] = g[static_cast<std::size_t>(j)] / m;
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

inline Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
    Tensor out = Tensor::scalar(static_cast<float>(s));
    detail::maybe_record(out, {&x}, [xd = x.d](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(xd->v.size(), g[0]);
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

inline Tensor row_slice(const Tensor& x, int r0, int count) {
    if (r0 < 0 || count < 0 || r0 + count > x.rows()) throw IndexError("row_slice out of range");
    const int n = x.cols();
    Tensor out = Tensor::zeros(count, n);
    std::copy_n(x.data() + static_cast<std::size_t>(r0) * n, static_cast<std::size_t>(count) * n,
                out.data());
    detail::maybe_record(out, {&x}, [xd = x.d, r0, count, n](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(xd->v.size(), 0.0f);
        std::copy_n(g.data(), static_cast<std::size_t>(count) * n,
                    dx.data() + static_cast<std::size_t>(r0) * n);
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input");
    const int n = parts[0].cols();
    int m = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
        m += p.rows();
    }
    Tensor out = Tensor::zeros(m, n);
    int r = 0;
    for (const Tensor& p : parts) {
        std::copy_n(p.data(), p.size(), out.data() + static_cast<std::size_t>(r) * n);
        r += p.rows();
    }
    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) ptrs.push_back(&p);
    Tape* tape = active_tape();
    if (tape) {
        bool any = false;
        for (const Tensor* p : ptrs) any = any || detail::tracked(*p, tape);
        if (any) {
            std::vector<std::shared_ptr<TensorData>> datas;
            for (const Tensor& p : parts) datas.push_back(p.d);
            out.d->tape = tape;
            out.d->node = tape->record(out.d, [datas, n](Tape& t, const std::vector<float>& g) {
                std::size_t off = 0;
                for (const auto& pd : datas) {
                    t.accumulate(*pd, g.data() + off, pd->v.size());
                    off += pd->v.size();
                }
            });
        }
    }
    return out;
}

// out[i,0] = x[i, ids[i]]
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& ids) {
    if (static_cast<int>(ids.size()) != x.rows())
        throw DimensionError("gather_rows: one index per row required");
    Tensor out = Tensor::zeros(x.rows(), 1);
    for (int i = 0; i < x.rows(); ++i) {
        if (ids[static_cast<std::size_t>(i)] < 0 || ids[static_cast<std::size_t>(i)] >= x.cols())
            throw IndexError("gather_rows: column index out of range");
        out.at(i, 0) = x.at(i, ids[static_cast<std::size_t>(i)]);
    }
    detail::maybe_record(out, {&x}, [xd = x.d, ids, n = x.cols()](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(xd->v.size(), 0.0f);
        for (std::size_t i = 0; i < ids.size(); ++i)
            dx[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(ids[i])] = g[i];
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

inline Tensor pick(const Tensor& x, int r, int c) {
    if (r < 0 || r >= x.rows() || c < 0 || c >= x.cols()) throw IndexError("pick out of range");
    Tensor out = Tensor::scalar(x.at(r, c));
    detail::maybe_record(out, {&x}, [xd = x.d, r, c, n = x.cols()](Tape& t, const std::vector<float>& g) {
        std::vector<float> dx(xd->v.size(), 0.0f);
        dx[static_cast<std::size_t>(r) * n + c] = g[0];
        t.accumulate(*xd, dx.data(), dx.size());
    });
    return out;
}

// Mean binary cross-entropy from logits against a constant 0/1 target
// vector, computed in the numerically stable max(s,0)-s*y+log1p(exp(-|s|))
// form.
inline Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<float>& targets) {
    if (logits.size() != targets.size()) throw DimensionError("bce: target length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double s = logits.data()[i];
        loss += std::max(s, 0.0) - s * targets[i] + std::log1p(std::exp(-std::abs(s)));
    }
    const double count = static_cast<double>(targets.size());
    Tensor out = Tensor::scalar(static_cast<float>(loss / count));
    detail::maybe_record(out, {&logits}, [ld = logits.d, targets, count](Tape& t, const std::vector<float>& g) {
        std::vector<float> dl(ld->v.size());
        for (std::size_t i = 0; i < dl.size(); ++i) {
            const double s = ld->v[i];
            const double p = 1.0 / (1.0 + std::exp(-s));
            dl[i] = static_cast<float>(g[0] * (p - targets[i]) / count);
        }
        t.accumulate(*ld, dl.data(), dl.size());
    });
    return out;
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t.data()[i])) return false;
    if (t.has_grad())
        for (float g : t.grad())
            if (!std::isfinite(g)) return false;
    return true;
}

// Lowest index wins ties.
inline int argmax_row(const Tensor& t, int row = 0) {
    int best = 0;
    float bv = t.at(row, 0);
    for (int j = 1; j < t.cols(); ++j) {
        if (t.at(row, j) > bv) {
            bv = t.at(row, j);
            best = j;
        }
    }
    return best;
}

}  // namespace stylectrl
