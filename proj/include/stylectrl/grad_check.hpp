#pragma once

// Central finite-difference oracle for reverse-mode gradients. Kept in the
// library because the adjust loop's correctness rests on it; it never calls
// into the tape internals it checks.

#include <cmath>
#include <functional>

#include "stylectrl/tensor.hpp"

namespace stylectrl {

// Returns max over coordinates of |ad - fd| / max(1, |ad|, |fd|), where ad is
// the tape gradient of f at x and fd the central difference with step h.
// f must return a scalar tensor and use only recorded primitives.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 5e-3) {
    if (h < 1e-4 || h > 1e-2) throw ContractError("grad_check: h outside [1e-4, 1e-2]");

    Tensor xa = x.copy();
    xa.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = f(xa);
        tape.backward(y);
    }
    std::vector<float> ad(xa.size(), 0.0f);
    if (xa.has_grad()) ad = xa.grad();

    double worst = 0.0;
    Tensor xp = x.copy();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float orig = xp.data()[i];
        xp.data()[i] = static_cast<float>(orig + h);
        const double fplus = f(xp).item();
        xp.data()[i] = static_cast<float>(orig - h);
        const double fminus = f(xp).item();
        xp.data()[i] = orig;
        const double fd = (fplus - fminus) / (2.0 * h);
        const double a = ad[i];
        const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace stylectrl
