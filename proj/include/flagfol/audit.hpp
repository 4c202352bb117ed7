#pragma once

#include "flagfol/functional.hpp"

#include <vector>

namespace flagfol {

inline constexpr int kGaussBonnetSamples = 256;

struct GaussBonnet {
    double integral = 0.0;  // int K dA over the leaf
    double area = 0.0;
    double max_abs_k = 0.0;
};

// Induced metric (E, F, G) in (u, v) = (psi, t) with the derivatives the Brioschi formula needs.
struct InducedJet {
    double E, F, G, Eu, Ev, Fu, Fv, Gu, Gv, Evv, Fuv, Guu;
};

inline double brioschi(const InducedJet& j) {
    Eigen::Matrix3d a, b;
    a << -0.5 * j.Evv + j.Fuv - 0.5 * j.Guu, 0.5 * j.Eu, j.Fu - 0.5 * j.Ev,
         j.Fv - 0.5 * j.Gu, j.E, j.F,
         0.5 * j.Gv, j.F, j.G;
    b << 0.0, 0.5 * j.Ev, 0.5 * j.Gu,
         0.5 * j.Ev, j.E, j.F,
         0.5 * j.Gu, j.F, j.G;
    const double det = j.E * j.G - j.F * j.F;
    return (a.determinant() - b.determinant()) / (det * det);
}

namespace detail {

// Fourth-order periodic central differences on an n x n grid with spacing h.
// Index (i, j) stores psi_i, t_j.
struct PeriodicGrid {
    int n;
    double h;
    std::vector<double> v;

    double at(int i, int j) const { return v[((i + n) % n) * n + (j + n) % n]; }

    double d(int i, int j, int axis) const {
        auto f = [&](int s) { return axis == 0 ? at(i + s, j) : at(i, j + s); };
        return (8.0 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12.0 * h);
    }

    double dd(int i, int j, int axis) const {
        auto f = [&](int s) { return axis == 0 ? at(i + s, j) : at(i, j + s); };
        return (-f(2) + 16.0 * f(1) - 30.0 * f(0) + 16.0 * f(-1) - f(-2)) / (12.0 * h * h);
    }

    double dmixed(int i, int j) const {
        auto dpsi = [&](int jj) { return (8.0 * (at(i + 1, jj) - at(i - 1, jj)) - (at(i + 2, jj) - at(i - 2, jj))) / (12.0 * h); };
        return (8.0 * (dpsi(j + 1) - dpsi(j - 1)) - (dpsi(j + 2) - dpsi(j - 2))) / (12.0 * h);
    }
};

}  // namespace detail

// Intrinsic curvature of the leaf from its induced metric (E, F, G) in (psi, t) by
// the Brioschi formula, integrated against the area element with the periodic
// trapezoid rule.
inline GaussBonnet gauss_bonnet(const MetricField& metric, const LeafTorus& leaf, int samples = kGaussBonnetSamples,
                                int jobs = 1) {
    require_regular(metric, leaf);
    if (samples < 8) throw ConfigError("Gauss-Bonnet audit needs at least 8 samples per direction");
    const int n = samples;
    const double h = kTwoPi / n;
    detail::PeriodicGrid e{n, h, std::vector<double>(n * n)}, f = e, g = e;
    parallel_for(n, jobs, [&](int i) {
        for (int j = 0; j < n; ++j) {
            const Mat2 m = leaf.induced_metric(metric, i * h, j * h);
            e.v[i * n + j] = m(0, 0);
            f.v[i * n + j] = m(0, 1);
            g.v[i * n + j] = m(1, 1);
        }
    });
    std::vector<double> k_row(n), a_row(n), m_row(n);
    parallel_for(n, jobs, [&](int i) {
        double ks = 0.0, as = 0.0, mx = 0.0;
        for (int j = 0; j < n; ++j) {
            const InducedJet jet{e.at(i, j), f.at(i, j), g.at(i, j), e.d(i, j, 0), e.d(i, j, 1), f.d(i, j, 0),
                                 f.d(i, j, 1), g.d(i, j, 0), g.d(i, j, 1), e.dd(i, j, 1), f.dmixed(i, j), g.dd(i, j, 0)};
            const double det = jet.E * jet.G - jet.F * jet.F;
            if (!(det > 0.0)) throw DegenerateLeaf("induced metric degenerate at psi = " + show(i * h) + ", t = " + show(j * h));
            const double k = brioschi(jet);
            const double da = std::sqrt(det);
            ks += k * da;
            as += da;
            mx = std::max(mx, std::abs(k));
        }
        k_row[i] = ks;
        a_row[i] = as;
        m_row[i] = mx;
    });
    GaussBonnet out;
    for (int i = 0; i < n; ++i) {
        out.integral += k_row[i] * h * h;
        out.area += a_row[i] * h * h;
        out.max_abs_k = std::max(out.max_abs_k, m_row[i]);
    }
    return out;
}

// Intrinsic curvature at one point from central differences of the induced metric.
inline double intrinsic_curvature(const MetricField& metric, const LeafTorus& leaf, double psi, double t,
                                  double step = 1e-3) {
    const double d = step;
    auto ind = [&](double dp, double dt) { return leaf.induced_metric(metric, psi + dp, t + dt); };
    const Mat2 c = ind(0, 0), pu = ind(d, 0), mu = ind(-d, 0), pv = ind(0, d), mv = ind(0, -d);
    const Mat2 pp = ind(d, d), pm = ind(d, -d), mp = ind(-d, d), mm = ind(-d, -d);
    auto du = [&](int a, int b) { return (pu(a, b) - mu(a, b)) / (2 * d); };
    auto dv = [&](int a, int b) { return (pv(a, b) - mv(a, b)) / (2 * d); };
    return brioschi({c(0, 0), c(0, 1), c(1, 1), du(0, 0), dv(0, 0), du(0, 1), dv(0, 1), du(1, 1), dv(1, 1),
                     (pv(0, 0) - 2 * c(0, 0) + mv(0, 0)) / (d * d),
                     (pp(0, 1) - pm(0, 1) - mp(0, 1) + mm(0, 1)) / (4 * d * d),
                     (pu(1, 1) - 2 * c(1, 1) + mu(1, 1)) / (d * d)});
}

// Second fundamental form of the leaf at a point: the normal parts of the covariant
// derivatives of the coordinate fields (d_psi, d_t), in chart components.
struct SecondForm {
    Vec4 pp, pt, tt;

    double norm(const Mat4& g) const {
        auto n2 = [&](const Vec4& v) { return v.dot(g * v); };
        return std::sqrt(std::max(0.0, n2(pp) + 2.0 * n2(pt) + n2(tt)));
    }
};

inline SecondForm second_form(const MetricField& metric, const Vec4& x) {
    const Mat4 g = metric(x);
    const Christoffel gam = christoffel(metric, x);
    const Vec4 a = LeafTorus::d_psi(), b = LeafTorus::d_t();
    auto cov = [&](const Vec4& u, const Vec4& v) {
        Vec4 r;
        for (int k = 0; k < 4; ++k) r[k] = u.dot(gam[k] * v);
        return r;
    };
    Mat42 t;
    t << a, b;
    const Mat2 gram2 = t.transpose() * g * t;
    auto normal = [&](const Vec4& v) -> Vec4 { return v - t * gram2.ldlt().solve(t.transpose() * (g * v)); };
    return {normal(cov(a, a)), normal(cov(a, b)), normal(cov(b, b))};
}

struct CurvatureSample {
    double psi = 0.0;
    double t = 0.0;
    double value = 0.0;
};

struct CurvatureReport {
    LeafTorus leaf;
    double h = 0.0;
    CurvatureSample min, max;
    bool sign_change = false;
    double gauss_residual = 0.0;  // max |K_intrinsic - K_ambient - II terms| over the samples
    bool second_form_reported = false;
    double second_form = 0.0;     // max |II| over the samples, reported when h <= h_tol
};

// Ambient sectional curvature of the leaf tangent planes span(d_psi, d_t) on an
// n x n grid, with a Gauss equation cross-check against the intrinsic curvature.
inline CurvatureReport verify_curvature(const MetricField& metric, const LeafTorus& leaf, int samples = 32,
                                        double h_tol = 1e-4, const FunctionalOptions& opt = {}) {
    require_regular(metric, leaf);
    if (samples < 2) throw ConfigError("curvature verification needs at least 2 samples per direction");
    CurvatureReport r;
    r.leaf = leaf;
    r.h = h_leaf(metric, leaf, opt).value;
    r.second_form_reported = r.h <= h_tol;
    const int n = samples;
    std::vector<CurvatureSample> ks(n * n);
    std::vector<double> gauss(n * n), second(n * n);
    const Vec4 a = LeafTorus::d_psi(), b = LeafTorus::d_t();
    parallel_for(n * n, opt.jobs, [&](int idx) {
        const double psi = kTwoPi * (idx / n) / n, t = kTwoPi * (idx % n) / n;
        const Vec4 x = leaf.point(psi, t);
        const CurvatureTensor c = curvature(metric, x);
        const double k = c.sectional(a, b);
        ks[idx] = {psi, t, k};
        const SecondForm s = second_form(metric, x);
        const Mat4& g = c.metric;
        const double area2 = a.dot(g * a) * b.dot(g * b) - std::pow(a.dot(g * b), 2);
        const double k_gauss = k + (s.pp.dot(g * s.tt) - s.pt.dot(g * s.pt)) / area2;
        gauss[idx] = std::abs(intrinsic_curvature(metric, leaf, psi, t) - k_gauss);
        second[idx] = s.norm(g);
    });
    r.min = r.max = ks[0];
    bool pos = false, neg = false;
    for (int i = 0; i < n * n; ++i) {
        if (ks[i].value < r.min.value) r.min = ks[i];
        if (ks[i].value > r.max.value) r.max = ks[i];
        pos = pos || ks[i].value > 0.0;
        neg = neg || ks[i].value < 0.0;
        r.gauss_residual = std::max(r.gauss_residual, gauss[i]);
        if (r.second_form_reported) r.second_form = std::max(r.second_form, second[i]);
    }
    r.sign_change = pos && neg;
    return r;
}

}  // namespace flagfol
