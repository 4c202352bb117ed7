#pragma once

#include "flagfol/grassmann.hpp"
#include "flagfol/parallel.hpp"
#include "flagfol/transport.hpp"

#include <algorithm>
#include <vector>

namespace flagfol {

// Coordinate torus of the leaf (alpha, beta), parametrized by (psi, t) through
// the wiring loops: (psi, t) -> (alpha, beta, t, psi + t).
struct LeafTorus {
    double alpha = 0.0;
    double beta = 0.0;

    Vec4 point(double psi, double t) const { return {alpha, beta, t, psi + t}; }
    static Vec4 d_t() { return {0.0, 0.0, 1.0, 1.0}; }
    static Vec4 d_psi() { return {0.0, 0.0, 0.0, 1.0}; }
    WiringLoop loop(double psi) const { return {alpha, beta, 0.0, psi}; }

    // Induced metric in (psi, t) coordinates.
    Mat2 induced_metric(const MetricField& metric, double psi, double t) const {
        const Mat4 g = metric(point(psi, t));
        const Vec4 a = d_psi(), b = d_t();
        Mat2 h;
        h(0, 0) = a.dot(g * a);
        h(0, 1) = h(1, 0) = a.dot(g * b);
        h(1, 1) = b.dot(g * b);
        return h;
    }

    // Area element sigma(psi, t) of the leaf in (psi, t) coordinates.
    double area_element(const MetricField& metric, double psi, double t) const {
        return std::sqrt(std::max(0.0, induced_metric(metric, psi, t).determinant()));
    }
};

struct FunctionalOptions {
    int t_steps = kDefaultTransportSteps;
    int psi_samples = 64;
    double extremal_rel = 1e-3;
    int golden_iters = 24;
    int jobs = 1;

    TransportOptions transport() const {
        TransportOptions o;
        o.steps = t_steps;
        return o;
    }
};

inline constexpr double kDegenerateLeafTol = 1e-12;

inline void require_regular(const MetricField& metric, const LeafTorus& leaf) {
    const double lim = kPi / 2 - metric.eps_pole() + 1e-12;
    if (!(std::abs(leaf.alpha) <= lim && std::abs(leaf.beta) <= lim))
        throw DegenerateLeaf("leaf (" + show(leaf.alpha) + ", " + show(leaf.beta) +
                             ") lies beyond the pole clamp");
}

namespace detail {

// Orthonormal components of the leaf tangent vectors d_t, d_psi in an orthonormal frame f.
inline Mat42 leaf_tangents_in_frame(const Mat4& g, const Mat4& f) {
    Mat42 v;
    v << LeafTorus::d_t(), LeafTorus::d_psi();
    return f.transpose() * g * v;
}

inline void check_independent(const Mat42& c) {
    const double a = c.col(0).squaredNorm(), b = c.col(1).squaredNorm(), ab = c.col(0).dot(c.col(1));
    const double det = a * b - ab * ab;
    if (!(det > kDegenerateLeafTol * a * b))
        throw DegenerateLeaf("leaf tangent vectors are linearly dependent");
}

}  // namespace detail

// Tangent plane of the leaf at (psi, t), in the standard orthonormal frame at that point.
inline TwoPlane tangent_plane(const MetricField& metric, const LeafTorus& leaf, double psi, double t) {
    require_regular(metric, leaf);
    const Vec4 x = leaf.point(psi, t);
    const Mat4 g = metric(x);
    const Mat42 c = detail::leaf_tangents_in_frame(g, standard_frame(metric, x));
    detail::check_independent(c);
    return TwoPlane::span(c);
}

// Transport data of one wiring loop together with the metric at every node.
struct LeafLoop {
    LeafTorus leaf;
    double psi = 0.0;
    LoopTransport transport;
    std::vector<Mat4> metric_at_node;

    int steps() const { return transport.steps(); }
    double node_time(int n) const { return transport.node_time(n); }

    // Components of a chart vector at node n in the parallel frame, i.e. the vector
    // carried back to the basepoint and written in the basepoint frame.
    Vec4 pull_back(int n, const Vec4& v) const {
        return transport.frames[n].transpose() * (metric_at_node[n] * v);
    }
};

inline LeafLoop leaf_loop(const MetricField& metric, const LeafTorus& leaf, double psi,
                          const FunctionalOptions& opt = {}) {
    require_regular(metric, leaf);
    LeafLoop ll;
    ll.leaf = leaf;
    ll.psi = psi;
    ll.transport = transport_loop(metric, leaf.loop(psi), opt.transport());
    const int n = ll.steps();
    ll.metric_at_node.resize(n + 1);
    for (int k = 0; k <= n; ++k) ll.metric_at_node[k] = metric(leaf.point(psi, ll.node_time(k)));
    return ll;
}

// L(t): tangent planes carried back to the basepoint along the wiring loop.
inline PlaneCurve plane_curve(const LeafLoop& ll) {
    PlaneCurve c;
    const int n = ll.steps();
    c.t.resize(n + 1);
    c.planes.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        Mat42 v;
        v << ll.pull_back(k, LeafTorus::d_t()), ll.pull_back(k, LeafTorus::d_psi());
        detail::check_independent(v);
        c.t[k] = ll.node_time(k);
        c.planes[k] = TwoPlane::span(v);
    }
    return c;
}

inline PlaneCurve plane_curve(const MetricField& metric, const LeafTorus& leaf, double psi,
                              const FunctionalOptions& opt = {}) {
    return plane_curve(leaf_loop(metric, leaf, psi, opt));
}

// H of one wiring curve: the length of its plane curve.
inline double h_gamma(const MetricField& metric, const LeafTorus& leaf, double psi,
                      const FunctionalOptions& opt = {}) {
    return curve_length(plane_curve(metric, leaf, psi, opt));
}

struct LeafValue {
    double value = 0.0;
    double argmax_psi = 0.0;
    std::vector<double> psi;           // grid
    std::vector<double> samples;       // h_gamma on the grid
    std::vector<double> extremal_psi;  // grid points within the extremal tolerance of the max, plus the refined argmax
};

inline double psi_node(int j, int m) { return kTwoPi * j / m; }

// H of a leaf: maximum of h_gamma over a psi grid, refined by golden-section search
// around a strict grid maximum.
inline LeafValue h_leaf(const MetricField& metric, const LeafTorus& leaf, const FunctionalOptions& opt = {}) {
    require_regular(metric, leaf);
    const int m = opt.psi_samples;
    LeafValue out;
    out.psi.resize(m);
    out.samples.resize(m);
    for (int j = 0; j < m; ++j) out.psi[j] = psi_node(j, m);
    parallel_for(m, opt.jobs, [&](int j) { out.samples[j] = h_gamma(metric, leaf, out.psi[j], opt); });
    int best = 0;
    for (int j = 1; j < m; ++j)
        if (out.samples[j] > out.samples[best]) best = j;
    out.value = out.samples[best];
    out.argmax_psi = out.psi[best];
    const double left = out.samples[(best + m - 1) % m], right = out.samples[(best + 1) % m];
    const double margin = 1e-9 * std::max(1.0, out.value);
    if (opt.golden_iters > 0 && out.value > left + margin && out.value > right + margin) {
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = out.psi[best] - kTwoPi / m, b = out.psi[best] + kTwoPi / m;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = h_gamma(metric, leaf, c, opt), fd = h_gamma(metric, leaf, d, opt);
        for (int it = 0; it < opt.golden_iters; ++it) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = h_gamma(metric, leaf, c, opt);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = h_gamma(metric, leaf, d, opt);
            }
        }
        const double refined = fc > fd ? fc : fd;
        if (refined > out.value) {
            out.value = refined;
            out.argmax_psi = wrap_two_pi(fc > fd ? c : d);
        }
    }
    const double eps = opt.extremal_rel * out.value + 1e-12;
    for (int j = 0; j < m; ++j)
        if (out.samples[j] >= out.value - eps) out.extremal_psi.push_back(out.psi[j]);
    if (out.argmax_psi != out.psi[best]) {
        out.extremal_psi.push_back(out.argmax_psi);
        std::sort(out.extremal_psi.begin(), out.extremal_psi.end());
    }
    return out;
}

// Uniform lattice of leaves over the pole-clamped square of latitudes.
struct Lattice {
    int n = 33;
    double eps_pole = kDefaultEpsPole;

    double coord(int i) const {
        const double lim = kPi / 2 - eps_pole;
        return n == 1 ? 0.0 : -lim + 2.0 * lim * i / (n - 1);
    }
    double spacing() const { return n == 1 ? 0.0 : 2.0 * (kPi / 2 - eps_pole) / (n - 1); }
    int size() const { return n * n; }
    // Node index k = i * n + j with alpha = coord(i), beta = coord(j).
    LeafTorus leaf(int k) const { return {coord(k / n), coord(k % n)}; }
};

struct GlobalValue {
    double value = 0.0;
    LeafTorus argmin;
    std::vector<double> h;  // per lattice node
};

// H of the configuration: minimum of h_leaf over the lattice.
inline GlobalValue h_global(const MetricField& metric, const Lattice& lattice, const FunctionalOptions& opt = {}) {
    GlobalValue out;
    out.h.resize(lattice.size());
    FunctionalOptions inner = opt;
    inner.jobs = 1;
    parallel_for(lattice.size(), opt.jobs,
                 [&](int k) { out.h[k] = h_leaf(metric, lattice.leaf(k), inner).value; });
    int best = 0;
    for (int k = 1; k < lattice.size(); ++k)
        if (out.h[k] < out.h[best]) best = k;
    out.value = out.h[best];
    out.argmin = lattice.leaf(best);
    return out;
}

struct LiftEnergy {
    double energy = 0.0;        // integral over t of the squared normal-lift speed
    double lift_length = 0.0;   // integral over t of the normal-lift speed
    double plane_energy = 0.0;  // integral over t of the squared speed of the full plane curve
};

// Normal-bundle lift energy of a wiring curve: the squared normal part of the
// covariant derivative of Y (unit leaf tangent orthogonal to the curve),
// integrated over t in [0, 2 pi].
inline LiftEnergy t_ma_va(const MetricField& metric, const LeafTorus& leaf, double psi,
                          const FunctionalOptions& opt = {}) {
    const LeafLoop ll = leaf_loop(metric, leaf, psi, opt);
    const int n = ll.steps();
    const double dt = kTwoPi / n;
    std::vector<Vec4> y(n + 1), xu(n + 1);
    for (int k = 0; k <= n; ++k) {
        const Vec4 a = ll.pull_back(k, LeafTorus::d_t());
        Vec4 b = ll.pull_back(k, LeafTorus::d_psi());
        xu[k] = a.normalized();
        b -= b.dot(xu[k]) * xu[k];
        if (!(b.norm() > 1e-9)) throw DegenerateLeaf("leaf tangent vectors are linearly dependent");
        y[k] = b.normalized();
    }
    std::vector<double> density(n + 1);
    for (int k = 0; k <= n; ++k) {
        Vec4 dy;
        if (k == 0) dy = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
        else if (k == n) dy = (3.0 * y[n] - 4.0 * y[n - 1] + y[n - 2]) / (2.0 * dt);
        else dy = (y[k + 1] - y[k - 1]) / (2.0 * dt);
        // Remove the components along X and Y; what remains lies in the normal plane.
        dy -= dy.dot(xu[k]) * xu[k];
        dy -= dy.dot(y[k]) * y[k];
        density[k] = dy.squaredNorm();
    }
    LiftEnergy out;
    for (int k = 0; k < n; ++k) {
        out.energy += 0.5 * dt * (density[k] + density[k + 1]);
        out.lift_length += 0.5 * dt * (std::sqrt(density[k]) + std::sqrt(density[k + 1]));
    }
    const PlaneCurve c = plane_curve(ll);
    for (int k = 0; k < n; ++k) {
        const double d = plane_distance(c.planes[k], c.planes[k + 1]);
        out.plane_energy += d * d / dt;
    }
    return out;
}

// Supremum of the lift energy over the psi grid.
inline double st_ma_va(const MetricField& metric, const LeafTorus& leaf, const FunctionalOptions& opt = {}) {
    std::vector<double> e(opt.psi_samples);
    FunctionalOptions inner = opt;
    inner.jobs = 1;
    parallel_for(opt.psi_samples, opt.jobs, [&](int j) {
        e[j] = t_ma_va(metric, leaf, psi_node(j, opt.psi_samples), inner).energy;
    });
    return *std::max_element(e.begin(), e.end());
}

}  // namespace flagfol
