#pragma once

#include "flagfol/core.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace flagfol {

// Four functions x^i(psi, t) on a psi grid times the t nodes 2 pi n / N, n = 0..N.
struct XGrid {
    std::vector<double> psi;
    int t_steps = 0;
    std::vector<std::vector<Vec4>> values;  // values[row][n], n = 0..t_steps

    double t(int n) const { return kTwoPi * n / t_steps; }
};

// Per psi row: x = mean + sum_k sin_k sin(k t) + cos_k cos(k t) for k = 1..order,
// entries indexed by k - 1. The k = 1 sine coefficient is a^i(psi).
struct FourierRow {
    Vec4 mean = Vec4::Zero();
    std::vector<Vec4> sin;
    std::vector<Vec4> cos;

    Vec4 evaluate(double t) const {
        Vec4 x = mean;
        for (std::size_t k = 1; k <= sin.size(); ++k)
            x += std::sin(k * t) * sin[k - 1] + std::cos(k * t) * cos[k - 1];
        return x;
    }
};

struct FourierTable {
    std::vector<double> psi;
    std::vector<FourierRow> rows;
    int order = 0;

    // Coefficient block of frequency k over all rows and components: (mean) for
    // k = 0, (sin_k, cos_k) otherwise.
    double frequency_norm(int k) const {
        double s = 0.0;
        for (const FourierRow& r : rows) {
            if (k == 0) s += r.mean.squaredNorm();
            else s += r.sin[k - 1].squaredNorm() + r.cos[k - 1].squaredNorm();
        }
        return std::sqrt(s);
    }

    // Graded norm sum_k e^{n k} |w_k|.
    double norm(int n) const {
        double s = 0.0;
        for (int k = 0; k <= order; ++k) s += std::exp(static_cast<double>(n) * k) * frequency_norm(k);
        return s;
    }

    // Scales frequency k by factor(k) in every row.
    template <class F>
    FourierTable scaled(F&& factor) const {
        FourierTable out = *this;
        for (FourierRow& r : out.rows) {
            r.mean *= factor(0);
            for (int k = 1; k <= order; ++k) {
                r.sin[k - 1] *= factor(k);
                r.cos[k - 1] *= factor(k);
            }
        }
        return out;
    }

    FourierTable operator-(const FourierTable& o) const {
        FourierTable out = *this;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.rows[r].mean -= o.rows[r].mean;
            for (int k = 0; k < order; ++k) {
                out.rows[r].sin[k] -= o.rows[r].sin[k];
                out.rows[r].cos[k] -= o.rows[r].cos[k];
            }
        }
        return out;
    }
};

// Discrete Fourier coefficients in t per psi row, truncated at `order`
// (default and maximum N/2 - 1).
inline FourierTable fourier_split(const XGrid& x, int order = -1) {
    const int n = x.t_steps;
    if (n < 4) throw ConfigError("Fourier split needs at least four t nodes");
    const int max_order = n / 2 - 1;
    if (order < 0 || order > max_order) order = max_order;
    FourierTable out;
    out.psi = x.psi;
    out.order = order;
    Eigen::FFT<double> fft;
    std::vector<double> in(n);
    std::vector<std::complex<double>> spec;
    for (const auto& row : x.values) {
        FourierRow fr;
        fr.sin.assign(order, Vec4::Zero());
        fr.cos.assign(order, Vec4::Zero());
        for (int i = 0; i < 4; ++i) {
            for (int k = 0; k < n; ++k) in[k] = row[k][i];
            fft.fwd(spec, in);
            fr.mean[i] = spec[0].real() / n;
            for (int k = 1; k <= order; ++k) {
                fr.cos[k - 1][i] = 2.0 * spec[k].real() / n;
                fr.sin[k - 1][i] = -2.0 * spec[k].imag() / n;
            }
        }
        out.rows.push_back(std::move(fr));
    }
    return out;
}

// Samples a table back onto an x grid with t_steps nodes per row.
inline XGrid reconstruct(const FourierTable& table, int t_steps) {
    XGrid x;
    x.psi = table.psi;
    x.t_steps = t_steps;
    for (const FourierRow& r : table.rows) {
        std::vector<Vec4> row(t_steps + 1);
        for (int k = 0; k <= t_steps; ++k) row[k] = r.evaluate(kTwoPi * k / t_steps);
        x.values.push_back(std::move(row));
    }
    return x;
}

// Cutoff S_theta: frequency k is multiplied by ramp(k - theta), where the ramp is
// a smooth step from 1 (argument <= 0) to 0 (argument >= 1).
struct SmoothingOperator {
    double theta = 1.0;

    static double ramp(double u) {
        if (u <= 0.0) return 1.0;
        if (u >= 1.0) return 0.0;
        const double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
        return b / (a + b);
    }

    double factor(int k) const { return ramp(k - theta); }
};

inline FourierTable smooth(const SmoothingOperator& s, const FourierTable& f) {
    return f.scaled([&](int k) { return s.factor(k); });
}

// All harmonics k >= 2 below tolerance in every row and component.
inline bool mono_tone(const FourierTable& f, double tol) {
    for (const FourierRow& r : f.rows)
        for (int k = 2; k <= f.order; ++k)
            if (r.sin[k - 1].cwiseAbs().maxCoeff() >= tol || r.cos[k - 1].cwiseAbs().maxCoeff() >= tol) return false;
    return true;
}

// Size of the harmonics k >= 2: sum over rows and components of their squares, rooted.
inline double higher_harmonics(const FourierTable& f) {
    double s = 0.0;
    for (int k = 2; k <= f.order; ++k) s += std::pow(f.frequency_norm(k), 2);
    return std::sqrt(s);
}

// Ratios behind the smoothing estimates for graded norms lo < hi:
//   |S V|_hi       <= C e^{(hi - lo) theta} |V|_lo
//   |(I - S) V|_lo <= C e^{(lo - hi) theta} |V|_hi
// Each ratio is the smallest C that makes the inequality hold for this table.
struct SmoothingRatios {
    double low_pass = 0.0;
    double high_pass = 0.0;
};

inline SmoothingRatios smoothing_ratios(const SmoothingOperator& s, const FourierTable& v, int lo, int hi) {
    const FourierTable low = smooth(s, v);
    const FourierTable high = v - low;
    const double gap = static_cast<double>(hi - lo) * s.theta;
    SmoothingRatios r;
    const double v_lo = v.norm(lo), v_hi = v.norm(hi);
    if (v_lo > 0.0) r.low_pass = low.norm(hi) / (std::exp(gap) * v_lo);
    if (v_hi > 0.0) r.high_pass = high.norm(lo) / (std::exp(-gap) * v_hi);
    return r;
}

// Bounds for the two constants implied by the cutoff support: S keeps k < theta + 1,
// I - S keeps k > theta.
inline double low_pass_bound(int lo, int hi) { return std::exp(static_cast<double>(hi - lo)); }
inline constexpr double kHighPassBound = 1.0;

}  // namespace flagfol
