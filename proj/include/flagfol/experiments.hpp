#pragma once

#include "flagfol/audit.hpp"
#include "flagfol/grassmann.hpp"
#include "flagfol/sampling.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <random>
#include <vector>

namespace flagfol {

// Closed form of h_leaf for the product metric.
inline double product_h(double alpha, double beta) {
    return kTwoPi * std::hypot(std::sin(alpha), std::sin(beta));
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += std::log(x[k]) / n;
        my += std::log(y[k]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

// Single alpha-psi bump used by the transport and deformation checks.
inline PerturbationSpec probe_bump(double amplitude = 0.5) {
    BumpTerm t;
    t.i = kAlpha;
    t.j = kPsi;
    t.amplitude = amplitude;
    t.center = {0.3, -0.2, 1.0, 2.0};
    t.widths = {0.8, 0.8, 1.2, 1.2};
    return {{t}};
}

// Largest |W - (sin alpha, sin beta)| over a computed grid.
inline double w_anchor_error(const ModuliGrid& g) {
    double worst = 0.0;
    for (int k = 0; k < g.lattice.size(); ++k) {
        if (!std::isfinite(g.w[k][0])) continue;
        const LeafTorus l = g.lattice.leaf(k);
        worst = std::max(worst, (g.w[k] - Vec2(std::sin(l.alpha), std::sin(l.beta))).norm());
    }
    return worst;
}

// Monotone increase of the product h_leaf in beta along alpha = 0, and the largest
// deviation from the closed form, over `samples` points of [beta_lo, beta_hi].
struct CollapseScan {
    bool monotone = true;
    double max_error = 0.0;
    double h_top = 0.0;  // h at beta_hi
};

inline CollapseScan collapse_scan(double beta_lo, double beta_hi, int samples, const FunctionalOptions& opt) {
    CollapseScan out;
    std::vector<double> h(samples);
    FunctionalOptions inner = opt;
    inner.jobs = 1;
    parallel_for(samples, opt.jobs, [&](int k) {
        const double b = beta_lo + (beta_hi - beta_lo) * k / (samples - 1);
        h[k] = h_leaf(product_metric(), LeafTorus{0.0, b}, inner).value;
    });
    for (int k = 0; k < samples; ++k) {
        const double b = beta_lo + (beta_hi - beta_lo) * k / (samples - 1);
        out.max_error = std::max(out.max_error, std::abs(h[k] - product_h(0.0, b)));
        if (k > 0 && !(h[k] > h[k - 1])) out.monotone = false;
    }
    out.h_top = h.back();
    return out;
}

// Ambrose-Singer quadrature against finite differences on random loop families.
struct AmbroseSingerCheck {
    double max_relative_error = 0.0;
    double min_fd_norm = 0.0;
};

template <class Rng>
AmbroseSingerCheck ambrose_singer_check(const MetricField& metric, Rng& rng, int families, double fd_step = 1e-4,
                                        int jobs = 1) {
    std::vector<LoopFamily> fs;
    std::vector<int> columns;
    std::uniform_int_distribution<int> column(0, 3);
    for (int k = 0; k < families; ++k) {
        fs.push_back(random_loop_family(rng));
        columns.push_back(column(rng));
    }
    std::vector<double> err(families), fdn(families);
    parallel_for(families, jobs, [&](int k) {
        const Vec4 w0 = standard_frame(metric, fs[k].point(0.0)).col(columns[k]);
        const Vec4 q = ambrose_singer_variation(metric, fs[k], w0).vector;
        const Vec4 fd = fd_holonomy_derivative(metric, fs[k], w0, fd_step);
        err[k] = (q - fd).norm() / fd.norm();
        fdn[k] = fd.norm();
    });
    AmbroseSingerCheck out;
    out.min_fd_norm = families ? fdn[0] : 0.0;
    for (int k = 0; k < families; ++k) {
        out.max_relative_error = std::max(out.max_relative_error, err[k]);
        out.min_fd_norm = std::min(out.min_fd_norm, fdn[k]);
    }
    return out;
}

// Log-log slopes of holonomy and frame drift in delta under silencing fields along
// d_alpha and d_beta; the reported slope of each kind is the one furthest from its target.
struct DriftScaling {
    std::vector<double> deltas;
    std::vector<double> holonomy_slopes, frame_slopes;  // one per direction
    double holonomy_slope = 0.0;
    double frame_slope = 0.0;
};

inline DriftScaling drift_scaling(const MetricField& metric, const LeafTorus& leaf, double psi,
                                  const std::vector<double>& deltas = {1e-2, 5e-3, 2.5e-3}) {
    DriftScaling out;
    out.deltas = deltas;
    TransportOptions topt;
    topt.steps = kDefaultTransportSteps;
    for (int dir : {kAlpha, kBeta}) {
        const DeformationField f = silencing_field(leaf, 1.0, 1.0, 4.0, dir);
        std::vector<double> hol, frame;
        for (double d : deltas) {
            const FrameDrift fd = frame_drift(metric, f, d, leaf, psi, topt);
            hol.push_back(fd.holonomy);
            frame.push_back(fd.frame);
        }
        out.holonomy_slopes.push_back(loglog_slope(deltas, hol));
        out.frame_slopes.push_back(loglog_slope(deltas, frame));
    }
    auto worst = [](const std::vector<double>& s, double target) {
        double w = s.front();
        for (double v : s)
            if (std::abs(v - target) > std::abs(w - target)) w = v;
        return w;
    };
    out.holonomy_slope = worst(out.holonomy_slopes, 1.0);
    out.frame_slope = worst(out.frame_slopes, 2.0);
    return out;
}

// One constant per smoothing inequality, fitted as the largest ratio over every table,
// cutoff and norm pair. An ordered pair (n, m) with n > m exercises
// |S V|_n <= C e^{(n-m) theta} |V|_m, and with n < m exercises
// |(I - S) V|_n <= C e^{(n-m) theta} |V|_m. The fit passes when each constant stays
// within the table-independent bound implied by the cutoff support.
struct SmoothingFit {
    double low_pass = 0.0;
    double high_pass = 0.0;
    int tables = 0;

    static double low_pass_limit() { return low_pass_bound(0, 2); }
    bool holds() const { return low_pass <= low_pass_limit() * (1 + 1e-12) && high_pass <= kHighPassBound * (1 + 1e-12); }
};

inline const std::vector<double>& smoothing_cutoffs() {
    static const std::vector<double> c{1.5, 2.5, 4.0, 6.3, 9.0};
    return c;
}

template <class Rng>
SmoothingFit fit_smoothing(Rng& rng, int tables, int rows = 3, int order = 16) {
    SmoothingFit out;
    out.tables = tables;
    for (int k = 0; k < tables; ++k) {
        const FourierTable t = random_fourier_table(rng, rows, order);
        for (double theta : smoothing_cutoffs())
            for (int n = 0; n <= 2; ++n)
                for (int m = 0; m <= 2; ++m) {
                    if (n == m) continue;
                    const SmoothingRatios r = smoothing_ratios(SmoothingOperator{theta}, t, std::min(n, m), std::max(n, m));
                    if (n > m) out.low_pass = std::max(out.low_pass, r.low_pass);
                    else out.high_pass = std::max(out.high_pass, r.high_pass);
                }
    }
    return out;
}

// Grassmann checks: metric axioms on random triples, the distance between the
// coordinate planes, and the discrete geodesic curvature of a twisted orbit against
// the generator formula.
struct GrassmannCheck {
    double axiom_violation = 0.0;  // worst of symmetry, identity and triangle defects
    double reference_distance = 0.0;
    double curvature_ratio_error = 0.0;  // max |discrete / generator - 1|
};

template <class Rng>
GrassmannCheck grassmann_check(Rng& rng, int triples, int curve_samples = 4096) {
    GrassmannCheck out;
    std::normal_distribution<double> g(0.0, 1.0);
    auto plane = [&] {
        Mat42 m;
        for (int i = 0; i < 8; ++i) m.data()[i] = g(rng);
        return TwoPlane::span(m);
    };
    for (int k = 0; k < triples; ++k) {
        const TwoPlane a = plane(), b = plane(), c = plane();
        const double ab = plane_distance(a, b), ba = plane_distance(b, a), bc = plane_distance(b, c),
                     ac = plane_distance(a, c);
        out.axiom_violation = std::max({out.axiom_violation, std::abs(ab - ba), plane_distance(a, a),
                                        ac - ab - bc, -ab});
    }
    const TwoPlane p = TwoPlane::span(Vec4::Unit(0), Vec4::Unit(1)), n = TwoPlane::span(Vec4::Unit(2), Vec4::Unit(3));
    out.reference_distance = plane_distance(p, n);
    auto gen = [](int i, int j) {
        Mat4 a = Mat4::Zero();
        a(j, i) = 1.0;
        a(i, j) = -1.0;
        return a;
    };
    const Mat4 x0 = 0.6 * gen(0, 2) + 0.8 * gen(1, 3);
    const Mat4 omega = 0.5 * gen(0, 1) + 0.2 * gen(2, 3);
    PlaneCurve c;
    for (int k = 0; k <= curve_samples; ++k) {
        const double t = kTwoPi * k / curve_samples;
        const Mat4 r = (t * (omega + x0)).exp();
        c.t.push_back(t);
        c.planes.push_back(TwoPlane::span(Mat42(r.leftCols<2>())));
    }
    for (int k = 1; k < curve_samples; k += 97) {
        const double t = c.t[k];
        const Mat4 u = (t * (omega + x0)).exp() * (-t * omega).exp();
        const Mat4 xt = (t * omega).exp() * x0 * (-t * omega).exp();
        const Mat4 s = u * xt * u.transpose();
        const Mat4 ds = u * (omega * xt - xt * omega) * u.transpose();
        const double ratio = geodesic_curvature(c, k) / geodesic_curvature_from_generator(c.planes[k], s, ds);
        out.curvature_ratio_error = std::max(out.curvature_ratio_error, std::abs(ratio - 1.0));
    }
    return out;
}

}  // namespace flagfol
