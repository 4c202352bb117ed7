#pragma once

#include "flagfol/functional.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace flagfol {

inline constexpr double kBoundaryMinNorm = 1e-3;
inline constexpr double kDegenerateJacobian = 1e-8;

struct ModuliOptions {
    FunctionalOptions functional;
    double continuation_step = 0.1;  // max step in (alpha, beta) when anchoring the angle branch
    double fake_eps = 0.0;           // strength of the optional fake holonomy rotation, off by default
};

// Holonomy angles (Phi, Psi) over the meridian parameter psi on a continuous branch.
// Samples sit at psi_j = 2 pi j / m for j = 0..m; the last one closes the loop.
struct ProfileCurve {
    std::vector<double> psi;
    std::vector<Vec2> angles;
    std::vector<char> degenerate;

    std::size_t size() const { return psi.size(); }
    double closure_gap() const { return (angles.back() - angles.front()).cwiseAbs().maxCoeff(); }
};

namespace detail {

inline Vec2 fake_rotation(const ModuliOptions& opt, const LeafTorus& leaf) {
    return opt.fake_eps * Vec2(leaf.alpha, leaf.beta);
}

inline HolonomyDecomposition loop_angles(const MetricField& metric, const LeafTorus& leaf, double psi,
                                         std::optional<Vec2> previous, const ModuliOptions& opt) {
    const Mat4 r = holonomy(metric, leaf.loop(psi), opt.functional.transport()).matrix;
    HolonomyDecomposition d = decompose_holonomy(r);
    const Vec2 fake = fake_rotation(opt, leaf);
    d.angle_phi += fake[0];
    d.angle_psi += fake[1];
    if (previous) {
        d.angle_phi = unwrap_near(d.angle_phi, (*previous)[0]);
        d.angle_psi = unwrap_near(d.angle_psi, (*previous)[1]);
    }
    return d;
}

}  // namespace detail

// Angles of the psi = 0 loop of `leaf`, continued along the straight path from the leaf (0,0).
inline Vec2 anchor_angles(const MetricField& metric, const LeafTorus& leaf, const ModuliOptions& opt = {}) {
    const double reach = std::max(std::abs(leaf.alpha), std::abs(leaf.beta));
    const int steps = std::max(1, static_cast<int>(std::ceil(reach / opt.continuation_step)));
    std::optional<Vec2> prev;
    for (int s = 0; s <= steps; ++s) {
        const double f = static_cast<double>(s) / steps;
        const HolonomyDecomposition d =
            detail::loop_angles(metric, LeafTorus{f * leaf.alpha, f * leaf.beta}, 0.0, prev, opt);
        prev = Vec2(d.angle_phi, d.angle_psi);
    }
    return *prev;
}

// Profile over the psi grid, with the psi = 0 sample placed on the branch nearest `anchor`.
inline ProfileCurve profile_from_anchor(const MetricField& metric, const LeafTorus& leaf, const Vec2& anchor,
                                        const ModuliOptions& opt = {}) {
    require_regular(metric, leaf);
    const int m = opt.functional.psi_samples;
    std::vector<Mat4> hol(m + 1);
    parallel_for(m + 1, opt.functional.jobs, [&](int j) {
        hol[j] = holonomy(metric, leaf.loop(psi_node(j, m)), opt.functional.transport()).matrix;
    });
    ProfileCurve c;
    Vec2 prev = anchor;
    const Vec2 fake = detail::fake_rotation(opt, leaf);
    for (int j = 0; j <= m; ++j) {
        const HolonomyDecomposition d = decompose_holonomy(hol[j]);
        const Vec2 a(unwrap_near(d.angle_phi + fake[0], prev[0]), unwrap_near(d.angle_psi + fake[1], prev[1]));
        c.psi.push_back(psi_node(j, m));
        c.angles.push_back(a);
        c.degenerate.push_back(d.degenerate ? 1 : 0);
        prev = a;
    }
    return c;
}

inline ProfileCurve profile_curve(const MetricField& metric, const LeafTorus& leaf, const ModuliOptions& opt = {}) {
    return profile_from_anchor(metric, leaf, anchor_angles(metric, leaf, opt), opt);
}

struct WValue {
    Vec2 w = Vec2::Zero();    // normalized by (2 pi)^2
    Vec2 raw = Vec2::Zero();  // plain integral over psi
};

inline constexpr double kWNormalization = kTwoPi * kTwoPi;

// Periodic trapezoid rule over the first m samples.
inline WValue integrate_profile(const ProfileCurve& c) {
    const int m = static_cast<int>(c.size()) - 1;
    WValue out;
    for (int j = 0; j < m; ++j) out.raw += c.angles[j];
    out.raw *= kTwoPi / m;
    out.w = out.raw / kWNormalization;
    return out;
}

inline WValue w_field(const MetricField& metric, const LeafTorus& leaf, const ModuliOptions& opt = {}) {
    return integrate_profile(profile_curve(metric, leaf, opt));
}

// Planar field over the moduli square, used for analytic fields and Newton refinement.
using PlanarField = std::function<Vec2(double alpha, double beta)>;

inline PlanarField w_evaluator(const MetricField& metric, const ModuliOptions& opt) {
    return [metric, opt](double a, double b) { return w_field(metric, LeafTorus{a, b}, opt).w; };
}

enum class GridScope { Full, Boundary };

// W (and optionally h_leaf) at the lattice nodes. Nodes outside the scope hold NaN.
struct ModuliGrid {
    Lattice lattice;
    std::vector<Vec2> w;
    std::vector<double> h;  // empty when not requested
    std::vector<char> degenerate;

    int n() const { return lattice.n; }
    int index(int i, int j) const { return i * lattice.n + j; }
    const Vec2& at(int i, int j) const { return w[index(i, j)]; }
    bool has(int i, int j) const { return std::isfinite(at(i, j)[0]); }
};

inline bool on_boundary(const Lattice& l, int k) {
    const int i = k / l.n, j = k % l.n;
    return i == 0 || j == 0 || i == l.n - 1 || j == l.n - 1;
}

// Branch anchors at every node: psi = 0 angles continued outward from the central
// node, first along its row, then up and down each column, with substeps no longer
// than the continuation step.
inline std::vector<Vec2> grid_anchors(const MetricField& metric, const Lattice& lattice, const ModuliOptions& opt) {
    const int n = lattice.n, c = (n - 1) / 2;
    ModuliOptions inner = opt;
    inner.functional.jobs = 1;
    const int sub = std::max(1, static_cast<int>(std::ceil(lattice.spacing() / opt.continuation_step)));
    auto walk = [&](const LeafTorus& from, const LeafTorus& to, Vec2 prev) {
        for (int s = 1; s <= sub; ++s) {
            const double f = static_cast<double>(s) / sub;
            const LeafTorus l{from.alpha + f * (to.alpha - from.alpha), from.beta + f * (to.beta - from.beta)};
            const HolonomyDecomposition d = detail::loop_angles(metric, l, 0.0, prev, inner);
            prev = Vec2(d.angle_phi, d.angle_psi);
        }
        return prev;
    };
    auto node = [&](int i, int j) { return LeafTorus{lattice.coord(i), lattice.coord(j)}; };
    std::vector<Vec2> out(n * n);
    out[c * n + c] = anchor_angles(metric, node(c, c), inner);
    for (int i = c + 1; i < n; ++i) out[i * n + c] = walk(node(i - 1, c), node(i, c), out[(i - 1) * n + c]);
    for (int i = c - 1; i >= 0; --i) out[i * n + c] = walk(node(i + 1, c), node(i, c), out[(i + 1) * n + c]);
    parallel_for(n, opt.functional.jobs, [&](int i) {
        for (int j = c + 1; j < n; ++j) out[i * n + j] = walk(node(i, j - 1), node(i, j), out[i * n + j - 1]);
        for (int j = c - 1; j >= 0; --j) out[i * n + j] = walk(node(i, j + 1), node(i, j), out[i * n + j + 1]);
    });
    return out;
}

inline ModuliGrid build_grid(const MetricField& metric, const Lattice& lattice, const ModuliOptions& opt = {},
                             GridScope scope = GridScope::Full, bool with_h = false) {
    const std::vector<Vec2> anchors = grid_anchors(metric, lattice, opt);
    ModuliGrid g;
    g.lattice = lattice;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    g.w.assign(lattice.size(), Vec2(nan, nan));
    g.degenerate.assign(lattice.size(), 0);
    if (with_h) g.h.assign(lattice.size(), nan);
    std::vector<int> nodes;
    for (int k = 0; k < lattice.size(); ++k)
        if (scope == GridScope::Full || on_boundary(lattice, k)) nodes.push_back(k);
    ModuliOptions inner = opt;
    inner.functional.jobs = 1;
    parallel_for(static_cast<int>(nodes.size()), opt.functional.jobs, [&](int s) {
        const int k = nodes[s];
        const ProfileCurve c = profile_from_anchor(metric, lattice.leaf(k), anchors[k], inner);
        g.w[k] = integrate_profile(c).w;
        for (char d : c.degenerate) g.degenerate[k] |= d;
        if (with_h) g.h[k] = h_leaf(metric, lattice.leaf(k), inner.functional).value;
    });
    return g;
}

inline ModuliGrid grid_from_field(const Lattice& lattice, const PlanarField& field) {
    ModuliGrid g;
    g.lattice = lattice;
    g.w.resize(lattice.size());
    g.degenerate.assign(lattice.size(), 0);
    for (int k = 0; k < lattice.size(); ++k) {
        const LeafTorus l = lattice.leaf(k);
        g.w[k] = field(l.alpha, l.beta);
    }
    return g;
}

// Largest change of W between lattice neighbours.
inline double max_jump(const ModuliGrid& g) {
    double m = 0.0;
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < g.n(); ++j) {
            if (!g.has(i, j)) continue;
            if (i + 1 < g.n() && g.has(i + 1, j)) m = std::max(m, (g.at(i + 1, j) - g.at(i, j)).norm());
            if (j + 1 < g.n() && g.has(i, j + 1)) m = std::max(m, (g.at(i, j + 1) - g.at(i, j)).norm());
        }
    return m;
}

// Boundary nodes in counterclockwise order in the (alpha, beta) plane.
inline std::vector<std::pair<int, int>> boundary_polygon(int n) {
    std::vector<std::pair<int, int>> p;
    for (int i = 0; i < n - 1; ++i) p.emplace_back(i, 0);
    for (int j = 0; j < n - 1; ++j) p.emplace_back(n - 1, j);
    for (int i = n - 1; i > 0; --i) p.emplace_back(i, n - 1);
    for (int j = n - 1; j > 0; --j) p.emplace_back(0, j);
    return p;
}

inline double winding(const std::vector<Vec2>& loop) {
    double total = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const Vec2& a = loop[k];
        const Vec2& b = loop[(k + 1) % loop.size()];
        total += wrap_pi(std::atan2(b[1], b[0]) - std::atan2(a[1], a[0]));
    }
    return total / kTwoPi;
}

// Winding number of W around the clamped boundary of the moduli square.
inline int boundary_index(const ModuliGrid& g) {
    std::vector<Vec2> loop;
    for (auto [i, j] : boundary_polygon(g.n())) {
        if (!g.has(i, j)) throw ConfigError("boundary node of the moduli grid was not computed");
        const Vec2 w = g.at(i, j);
        if (!(w.norm() >= kBoundaryMinNorm)) {
            const LeafTorus l = g.lattice.leaf(g.index(i, j));
            throw BoundaryZero("|W| = " + show(w.norm()) + " at boundary leaf (" +
                               show(l.alpha) + ", " + show(l.beta) + ")");
        }
        loop.push_back(w);
    }
    return static_cast<int>(std::lround(winding(loop)));
}

struct Zero {
    double alpha = 0.0;
    double beta = 0.0;
    int index = 0;  // sign of the Jacobian determinant; 0 when degenerate
    double jacobian_det = 0.0;
    bool degenerate = false;
    bool converged = false;
    double residual = 0.0;
};

struct ZeroSearchOptions {
    double fd_step = 1e-4;
    int max_iters = 30;
    double tol = 1e-10;
};

namespace detail {

inline Mat2 fd_jacobian(const PlanarField& f, double a, double b, double h) {
    Mat2 j;
    j.col(0) = (f(a + h, b) - f(a - h, b)) / (2 * h);
    j.col(1) = (f(a, b + h) - f(a, b - h)) / (2 * h);
    return j;
}

inline bool straddles(double a, double b, double c, double d) {
    const double lo = std::min({a, b, c, d}), hi = std::max({a, b, c, d});
    return lo <= 0.0 && hi >= 0.0;
}

}  // namespace detail

// Zeros of W: cells where both components change sign seed a Newton iteration
// with a finite-difference Jacobian on `field`, confined to the cell's neighbourhood.
inline std::vector<Zero> find_zeros(const ModuliGrid& g, const PlanarField& field, const ZeroSearchOptions& opt = {}) {
    const int n = g.n();
    const double hcell = g.lattice.spacing();
    const double lo = g.lattice.coord(0), hi = g.lattice.coord(n - 1);
    std::vector<Zero> out;
    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            if (!(g.has(i, j) && g.has(i + 1, j) && g.has(i, j + 1) && g.has(i + 1, j + 1))) continue;
            const Vec2 w00 = g.at(i, j), w10 = g.at(i + 1, j), w01 = g.at(i, j + 1), w11 = g.at(i + 1, j + 1);
            if (!detail::straddles(w00[0], w10[0], w01[0], w11[0]) || !detail::straddles(w00[1], w10[1], w01[1], w11[1]))
                continue;
            const double a0 = g.lattice.coord(i), b0 = g.lattice.coord(j);
            double a = a0 + 0.5 * hcell, b = b0 + 0.5 * hcell;
            Zero z;
            for (int it = 0; it < opt.max_iters; ++it) {
                const Vec2 w = field(a, b);
                z.residual = w.norm();
                if (z.residual < opt.tol) {
                    z.converged = true;
                    break;
                }
                const Mat2 jac = detail::fd_jacobian(field, a, b, opt.fd_step);
                if (std::abs(jac.determinant()) < 1e-300) break;
                const Vec2 step = jac.partialPivLu().solve(w);
                a = std::clamp(a - step[0], std::max(lo, a0 - hcell), std::min(hi, a0 + 2 * hcell));
                b = std::clamp(b - step[1], std::max(lo, b0 - hcell), std::min(hi, b0 + 2 * hcell));
            }
            if (!z.converged) continue;
            bool dup = false;
            for (const Zero& o : out)
                if (std::hypot(o.alpha - a, o.beta - b) < 0.5 * hcell) dup = true;
            if (dup) continue;
            z.alpha = a;
            z.beta = b;
            z.jacobian_det = detail::fd_jacobian(field, a, b, opt.fd_step).determinant();
            z.degenerate = std::abs(z.jacobian_det) < kDegenerateJacobian;
            z.index = z.degenerate ? 0 : (z.jacobian_det > 0 ? 1 : -1);
            out.push_back(z);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const Zero& x, const Zero& y) { return std::tie(x.alpha, x.beta) < std::tie(y.alpha, y.beta); });
    return out;
}

inline int index_sum(const std::vector<Zero>& zeros) {
    int s = 0;
    for (const Zero& z : zeros) s += z.index;
    return s;
}

// Weighted sum of h_leaf over the zeros of W, weighted by local index.
inline double he_functional(const std::vector<Zero>& zeros, const std::function<double(double, double)>& h) {
    double s = 0.0;
    for (const Zero& z : zeros)
        if (z.index != 0) s += z.index * h(z.alpha, z.beta);
    return s;
}

inline double he_functional(const MetricField& metric, const std::vector<Zero>& zeros,
                            const FunctionalOptions& opt = {}) {
    return he_functional(zeros, [&](double a, double b) { return h_leaf(metric, LeafTorus{a, b}, opt).value; });
}

}  // namespace flagfol
