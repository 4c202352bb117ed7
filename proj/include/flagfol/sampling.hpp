#pragma once

#include "flagfol/deform.hpp"

#include <array>
#include <random>

namespace flagfol {

// Loop through a random leaf point varied by a random field with harmonics up to 2.
template <class Rng>
LoopFamily random_loop_family(Rng& rng) {
    std::uniform_real_distribution<double> leaf(-0.9, 0.9), coef(-0.3, 0.3), angle(0.0, kTwoPi);
    const double alpha = leaf(rng), beta = leaf(rng), psi = angle(rng);
    const WiringLoop loop{alpha, beta, 0.0, psi};
    std::array<Vec4, 5> c;  // constant, cos t, sin t, cos 2t, sin 2t
    for (Vec4& v : c) {
        const double a = coef(rng), b = coef(rng), p = coef(rng), q = coef(rng);
        v = Vec4(a, b, p, q);
    }
    LoopFamily f;
    f.point = [loop](double t) { return loop.point(t); };
    f.velocity = [](double) { return WiringLoop::velocity(); };
    f.variation = [c](double t) {
        return Vec4(c[0] + std::cos(t) * c[1] + std::sin(t) * c[2] + std::cos(2 * t) * c[3] + std::sin(2 * t) * c[4]);
    };
    f.variation_rate = [c](double t) {
        return Vec4(-std::sin(t) * c[1] + std::cos(t) * c[2] - 2 * std::sin(2 * t) * c[3] + 2 * std::cos(2 * t) * c[4]);
    };
    return f;
}

// Fourier table with standard normal coefficients damped by exp(-d k), d uniform in [0, 3] per row.
template <class Rng>
FourierTable random_fourier_table(Rng& rng, int rows, int order) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> decay(0.0, 3.0);
    auto draw = [&] {
        Vec4 v;
        for (int i = 0; i < 4; ++i) v[i] = g(rng);
        return v;
    };
    FourierTable t;
    t.order = order;
    for (int j = 0; j < rows; ++j) {
        t.psi.push_back(kTwoPi * j / rows);
        FourierRow r;
        const double d = decay(rng);
        r.mean = draw();
        for (int k = 1; k <= order; ++k) {
            const double s = std::exp(-d * k);
            r.sin.push_back(s * draw());
            r.cos.push_back(s * draw());
        }
        t.rows.push_back(r);
    }
    return t;
}

}  // namespace flagfol
