#pragma once

#include "flagfol/fourier.hpp"
#include "flagfol/moduli.hpp"

#include <functional>
#include <string>
#include <vector>

namespace flagfol {

inline constexpr double kMaxDeformationStep = 1e-2;
inline constexpr int kDefaultFlowSteps = 4;

// Value and gradient of a scalar function on the chart.
struct ScalarJet {
    double value = 0.0;
    Vec4 grad = Vec4::Zero();
};

// Smooth step 0 -> 1 on [0, 1] built from exp(-1/u); returns value and derivative.
inline std::pair<double, double> smooth_step(double u) {
    if (u <= 0.0) return {0.0, 0.0};
    if (u >= 1.0) return {1.0, 0.0};
    const double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
    const double da = a / (u * u), db = -b / ((1.0 - u) * (1.0 - u));
    const double s = a + b;
    return {a / s, (da * s - a * (da + db)) / (s * s)};
}

// Plateau: 1 on |s| <= inner, 0 on |s| >= 1, smooth and even in between.
inline std::pair<double, double> plateau(double s, double inner) {
    const double r = std::abs(s);
    if (r <= inner) return {1.0, 0.0};
    if (r >= 1.0) return {0.0, 0.0};
    const auto [v, dv] = smooth_step((r - inner) / (1.0 - inner));
    const double sign = s < 0 ? -1.0 : 1.0;
    return {1.0 - v, -dv * sign / (1.0 - inner)};
}

// Where a deformation field may be nonzero.
struct FieldSupport {
    LeafTorus leaf;             // centre of the collar
    double collar_radius = 0.0;  // radius in (alpha, beta); zero means no collar
    double t0 = 0.0, psi0 = 0.0;
    double half_t = kPi, half_psi = kPi;  // half-widths of the (t, psi) window
    double lambda = 0.0;
};

// Smooth vector field on the chart with its Jacobian, jacobian(i, j) = d V^i / d x^j.
struct DeformationField {
    struct Jet {
        Vec4 value = Vec4::Zero();
        Mat4 jacobian = Mat4::Zero();
    };

    std::string kind = "zero";
    FieldSupport support;
    std::function<Jet(const Vec4&)> jet = [](const Vec4&) { return Jet{}; };

    Vec4 operator()(const Vec4& x) const { return jet(x).value; }
};

// Scalar field times a constant chart direction.
inline DeformationField scalar_times_direction(std::string kind, FieldSupport support,
                                               std::function<ScalarJet(const Vec4&)> scalar, const Vec4& direction) {
    DeformationField f;
    f.kind = std::move(kind);
    f.support = support;
    f.jet = [scalar = std::move(scalar), direction](const Vec4& x) {
        const ScalarJet s = scalar(x);
        DeformationField::Jet j;
        j.value = s.value * direction;
        j.jacobian = direction * s.grad.transpose();
        return j;
    };
    return f;
}

// Collar around a leaf: 1 within half the radius, 0 beyond it.
inline ScalarJet leaf_collar(const LeafTorus& leaf, double radius, const Vec4& x) {
    ScalarJet out;
    const double da = x[kAlpha] - leaf.alpha, db = x[kBeta] - leaf.beta;
    const double rho = std::hypot(da, db);
    const auto [v, dv] = plateau(rho / radius, 0.5);
    out.value = v;
    if (rho > 0.0 && dv != 0.0) {
        out.grad[kAlpha] = dv * da / (rho * radius);
        out.grad[kBeta] = dv * db / (rho * radius);
    }
    return out;
}

inline ScalarJet operator*(const ScalarJet& a, const ScalarJet& b) {
    return {a.value * b.value, a.value * b.grad + b.value * a.grad};
}

// Leaf coordinates (psi, t) of a chart point: t = phi, psi = psi_chart - phi.
// Returns d/dphi and d/dpsi_chart of a function given by its (psi, t) partials.
inline Vec4 leaf_gradient(double d_psi, double d_t) {
    Vec4 g = Vec4::Zero();
    g[kPhi] = d_t - d_psi;
    g[kPsi] = d_psi;
    return g;
}

inline constexpr double kDefaultCollarRadius = 0.3;

// Unit chart direction d_k scaled by the product metric at the leaf.
inline Vec4 unit_direction(int k, const LeafTorus& leaf) {
    Vec4 d = Vec4::Zero();
    if (k == kPhi) d[k] = 1.0 / std::cos(leaf.alpha);
    else if (k == kPsi) d[k] = 1.0 / std::cos(leaf.beta);
    else d[k] = 1.0;
    return d;
}

// Fraction of each rectangle half-width taken by the smoothing collar. Thin collars
// make the pulled-back Christoffel symbols, which are finite differences, too stiff.
inline constexpr double kSilencingCollar = 0.5;

// Zero-mean template omega = sin(L (t - t0)) cos(L (psi - psi0)) on the rectangle
// L|t - t0| <= pi, L|psi - psi0| <= pi/2, with a smoothing collar at the rectangle
// edges, times a collar around the leaf, along the direction d_k.
inline DeformationField silencing_field(const LeafTorus& leaf, double t0, double psi0, double lambda, int direction,
                                        double collar_radius = kDefaultCollarRadius) {
    const double ht = kPi / lambda, hp = 0.5 * kPi / lambda;
    const double lim = kPi / 2 - kDefaultEpsPole;
    if (!(lambda > 0.0) || t0 - ht < 0.0 || t0 + ht > kTwoPi || psi0 - hp < 0.0 || psi0 + hp > kTwoPi)
        throw SupportOverflow("silencing rectangle leaves the coordinate square");
    if (std::abs(leaf.alpha) + collar_radius > lim || std::abs(leaf.beta) + collar_radius > lim)
        throw SupportOverflow("leaf collar reaches the pole clamp");
    FieldSupport sup{leaf, collar_radius, t0, psi0, ht, hp, lambda};
    const double inner_t = 1.0 - kSilencingCollar, inner_p = 1.0 - kSilencingCollar;
    auto scalar = [=](const Vec4& x) {
        const double t = t0 + wrap_pi(x[kPhi] - t0);
        const double psi = psi0 + wrap_pi(x[kPsi] - x[kPhi] - psi0);
        const double u = lambda * (t - t0), v = lambda * (psi - psi0);
        const auto [wt, dwt] = plateau(u / kPi, inner_t);
        const auto [wp, dwp] = plateau(v / (0.5 * kPi), inner_p);
        ScalarJet w;
        if (wt == 0.0 || wp == 0.0) return w;
        const double f = std::sin(u) * wt, df = lambda * (std::cos(u) * wt + std::sin(u) * dwt / kPi);
        const double g = std::cos(v) * wp, dg = lambda * (-std::sin(v) * wp + std::cos(v) * dwp / (0.5 * kPi));
        w.value = f * g;
        w.grad = leaf_gradient(f * dg, df * g);
        return w * leaf_collar(leaf, collar_radius, x);
    };
    return scalar_times_direction("silencing", sup, scalar, unit_direction(direction, leaf));
}

// Tuning function on the leaf: value and partials (d/dpsi, d/dt).
struct TuneValue {
    double value = 0.0, d_psi = 0.0, d_t = 0.0;
};
using TuneFunction = std::function<TuneValue(double psi, double t)>;

enum class TuneAxis { X, Y };

// Tangential field tune(psi, t) times d_t = d_phi + d_psi (axis X) or d_psi (axis Y),
// collared around the leaf.
inline DeformationField tuning_field(const LeafTorus& leaf, TuneFunction tune, TuneAxis axis,
                                     double collar_radius = kDefaultCollarRadius) {
    FieldSupport sup{leaf, collar_radius};
    auto scalar = [=](const Vec4& x) {
        const TuneValue v = tune(wrap_two_pi(x[kPsi] - x[kPhi]), wrap_two_pi(x[kPhi]));
        return ScalarJet{v.value, leaf_gradient(v.d_psi, v.d_t)} * leaf_collar(leaf, collar_radius, x);
    };
    const Vec4 d = axis == TuneAxis::X ? LeafTorus::d_t() : LeafTorus::d_psi();
    return scalar_times_direction(axis == TuneAxis::X ? "tuning_x" : "tuning_y", sup, scalar, d);
}

// Time-delta flow of a field together with its Jacobian, by RK4.
inline void flow(const DeformationField& field, double delta, const Vec4& x0, int steps, Vec4& x, Mat4& jac) {
    x = x0;
    jac.setIdentity();
    const double h = delta / steps;
    for (int s = 0; s < steps; ++s) {
        const auto k1 = field.jet(x);
        const Vec4 x2 = x + 0.5 * h * k1.value;
        const Mat4 j2 = jac + 0.5 * h * k1.jacobian * jac;
        const auto k2 = field.jet(x2);
        const Vec4 x3 = x + 0.5 * h * k2.value;
        const Mat4 j3 = jac + 0.5 * h * k2.jacobian * j2;
        const auto k3 = field.jet(x3);
        const Vec4 x4 = x + h * k3.value;
        const Mat4 j4 = jac + h * k3.jacobian * j3;
        const auto k4 = field.jet(x4);
        x += h / 6.0 * (k1.value + 2.0 * k2.value + 2.0 * k3.value + k4.value);
        jac += h / 6.0 * (k1.jacobian * jac + 2.0 * k2.jacobian * j2 + 2.0 * k3.jacobian * j3 + k4.jacobian * j4);
    }
}

// Pullback of the metric by the time-delta flow of the field: g'(x) = J^T g(phi(x)) J.
inline MetricField pullback(const MetricField& metric, const DeformationField& field, double delta,
                            int flow_steps = kDefaultFlowSteps) {
    MetricField::Eval eval = [=](const Vec4& x) -> Mat4 {
        const auto j0 = field.jet(x);
        if (j0.value.isZero(0.0) && j0.jacobian.isZero(0.0)) return metric(x);
        Vec4 y;
        Mat4 jac;
        flow(field, delta, x, flow_steps, y, jac);
        const Mat4 g = jac.transpose() * metric(y) * jac;
        return 0.5 * (g + g.transpose());
    };
    return MetricField(metric.name() + "+" + field.kind, eval, {}, metric.tau())
        .with_eps_pole(metric.eps_pole())
        .with_fd_step(metric.fd_step());
}

struct AppliedStep {
    DeformationField field;
    double delta = 0.0;
    std::string label;  // steps with equal nonempty labels use the same field
    int flow_steps = kDefaultFlowSteps;
};

// Largest RK4 substep used when consecutive steps along one field are merged.
inline constexpr double kMaxFlowSubstep = 2.5e-2;

// Metric family member together with the deformations applied to it. The standard
// foliation stays fixed; each applied step pulls the metric back by the flow.
struct Configuration {
    MetricField base;
    MetricField metric;
    std::vector<AppliedStep> steps;

    static Configuration from(const MetricField& m) { return {m, m, {}}; }

    Configuration apply(const DeformationField& field, double delta, int flow_steps = kDefaultFlowSteps) const {
        check_step(delta);
        Configuration c = *this;
        c.metric = pullback(metric, field, delta, flow_steps);
        c.steps.push_back({field, delta, {}, flow_steps});
        return c;
    }

    // Like apply, but a step along the same labelled field as the previous step
    // lengthens that flow instead of stacking another one (the flows of one field
    // form a group).
    Configuration extend(const DeformationField& field, double delta, const std::string& label,
                         int flow_steps = kDefaultFlowSteps) const {
        check_step(delta);
        if (label.empty() || steps.empty() || steps.back().label != label) {
            Configuration c = apply(field, delta, flow_steps);
            c.steps.back().label = label;
            return c;
        }
        std::vector<AppliedStep> s = steps;
        AppliedStep& last = s.back();
        last.delta += delta;
        last.flow_steps = std::max(flow_steps, static_cast<int>(std::ceil(std::abs(last.delta) / kMaxFlowSubstep)));
        return rebuild(base, std::move(s));
    }

    // Same deformations over another base metric.
    Configuration rebased(const MetricField& m) const { return rebuild(m, steps); }

  private:
    static void check_step(double delta) {
        if (!(std::abs(delta) <= kMaxDeformationStep))
            throw ConfigError("deformation step exceeds " + show(kMaxDeformationStep));
    }

    static Configuration rebuild(const MetricField& m, std::vector<AppliedStep> s) {
        Configuration c{m, m, std::move(s)};
        for (const AppliedStep& a : c.steps) c.metric = pullback(c.metric, a.field, a.delta, a.flow_steps);
        return c;
    }
};

// One-parameter family of closed chart curves gamma_d(t) = point(t) + d * variation(t).
struct LoopFamily {
    std::function<Vec4(double)> point;
    std::function<Vec4(double)> velocity;
    std::function<Vec4(double)> variation;
    std::function<Vec4(double)> variation_rate;

    ChartCurve curve(double d) const {
        return [*this, d](double t) {
            return CurveSample{point(t) + d * variation(t), velocity(t) + d * variation_rate(t)};
        };
    }

    // Wiring loop of a leaf varied by a field evaluated along it.
    static LoopFamily along_field(const LeafTorus& leaf, double psi, const DeformationField& field) {
        const WiringLoop loop = leaf.loop(psi);
        LoopFamily f;
        f.point = [loop](double t) { return loop.point(t); };
        f.velocity = [](double) { return WiringLoop::velocity(); };
        f.variation = [loop, field](double t) { return field(loop.point(t)); };
        f.variation_rate = [loop, field](double t) { return Vec4(field.jet(loop.point(t)).jacobian * WiringLoop::velocity()); };
        return f;
    }
};

struct HolonomyVariation {
    Vec4 vector = Vec4::Zero();         // covariant derivative of the transported vector at t = 2 pi
    Vec4 half_resolution = Vec4::Zero();  // same quadrature on every other node
    double error_estimate = 0.0;        // |vector - half_resolution|
    Mat4 generator = Mat4::Zero();      // A with dHol = Hol A, in basepoint frame components
};

namespace detail {

// Composite Simpson weights on n + 1 equispaced nodes (n even).
inline double simpson_weight(int k, int n) {
    if (k == 0 || k == n) return 1.0 / 3.0;
    return (k % 2 == 1) ? 4.0 / 3.0 : 2.0 / 3.0;
}

}  // namespace detail

// Integral over the loop of the curvature integrand I_t^{-1} R(gamma', V) I_t, by
// Simpson quadrature on the transport nodes, applied to w0.
inline HolonomyVariation ambrose_singer_variation(const MetricField& metric, const LoopFamily& family, const Vec4& w0,
                                                  const TransportOptions& opt = {}) {
    const ChartCurve curve = family.curve(0.0);
    const Vec4 x0 = curve(0.0).x;
    const Mat4 f0 = standard_frame(metric, x0);
    const std::vector<Mat4> frames = transport_frames(metric, curve, 0.0, kTwoPi, f0, opt);
    const int n = opt.steps;
    if (n % 4 != 0) throw ConfigError("quadrature needs a step count divisible by four");
    const double dt = kTwoPi / n;
    Mat4 full = Mat4::Zero(), half = Mat4::Zero();
    for (int k = 0; k <= n; ++k) {
        const double t = k * dt;
        const CurveSample s = curve(t);
        const CurvatureTensor r = curvature(metric, s.x);
        const Mat4 m = r.operator_matrix(s.xdot, family.variation(t));
        const Mat4 g = frames[k].transpose() * r.metric * m * frames[k];
        full += detail::simpson_weight(k, n) * dt * g;
        if (k % 2 == 0) half += detail::simpson_weight(k / 2, n / 2) * 2.0 * dt * g;
    }
    const Vec4 c0 = f0.transpose() * metric(x0) * w0;
    HolonomyVariation out;
    out.generator = full;
    out.vector = frames.back() * (full * c0);
    out.half_resolution = frames.back() * (half * c0);
    out.error_estimate = (out.vector - out.half_resolution).norm();
    return out;
}

// Central finite difference of the transported vector over the family, with w0
// carried along the basepoint path by parallel transport.
inline Vec4 fd_holonomy_derivative(const MetricField& metric, const LoopFamily& family, const Vec4& w0, double h,
                                   const TransportOptions& opt = {}) {
    const Vec4 x0 = family.point(0.0);
    const Vec4 v0 = family.variation(0.0);
    const Mat4 f0 = standard_frame(metric, x0);
    const Vec4 c0 = f0.transpose() * metric(x0) * w0;
    Vec4 comps[2];
    for (int side = 0; side < 2; ++side) {
        const double d = side == 0 ? h : -h;
        const ChartCurve base_path = [x0, v0, d](double u) { return CurveSample{x0 + u * d * v0, d * v0}; };
        TransportOptions short_opt = opt;
        short_opt.steps = 64;
        const Mat4 fd = transport_frames(metric, base_path, 0.0, 1.0, f0, short_opt).back();
        const Mat4 fend = transport_frames(metric, family.curve(d), 0.0, kTwoPi, fd, opt).back();
        comps[side] = fd.transpose() * metric(x0 + d * v0) * fend * c0;
    }
    return f0 * ((comps[0] - comps[1]) / (2.0 * h));
}

// First-order change of the holonomy angles (Phi, Psi) of one wiring loop under a
// variation field: <p2, A p1> and <n2, A n1> for the oriented invariant planes.
inline Vec2 angle_variation(const MetricField& metric, const LoopFamily& family, const TransportOptions& opt = {}) {
    const ChartCurve curve = family.curve(0.0);
    const Vec4 x0 = curve(0.0).x;
    const Mat4 f0 = standard_frame(metric, x0);
    const std::vector<Mat4> frames = transport_frames(metric, curve, 0.0, kTwoPi, f0, opt);
    const Mat4 hol = frame_components(f0, metric(x0), frames.back());
    const HolonomyDecomposition d = decompose_holonomy(hol);
    const Mat4 a = ambrose_singer_variation(metric, family, Vec4::Zero(), opt).generator;
    return {d.plane_pi.col(1).dot(a * d.plane_pi.col(0)), d.plane_n.col(1).dot(a * d.plane_n.col(0))};
}

// (Phi', Psi') over the psi grid from the curvature integrand along each wiring loop.
struct ProfileDerivatives {
    std::vector<double> psi;
    std::vector<Vec2> quadrature;
};

inline ProfileDerivatives profile_derivatives(const MetricField& metric, const LeafTorus& leaf,
                                              const FunctionalOptions& opt = {}) {
    require_regular(metric, leaf);
    const int m = opt.psi_samples;
    ProfileDerivatives out;
    out.psi.resize(m);
    out.quadrature.resize(m);
    FunctionalOptions inner = opt;
    inner.jobs = 1;
    parallel_for(m, opt.jobs, [&](int j) {
        const double psi = psi_node(j, m);
        const WiringLoop loop = leaf.loop(psi);
        LoopFamily f;
        f.point = [loop](double t) { return loop.point(t); };
        f.velocity = [](double) { return WiringLoop::velocity(); };
        f.variation = [](double) { return LeafTorus::d_psi(); };
        f.variation_rate = [](double) { return Vec4(Vec4::Zero()); };
        out.psi[j] = psi;
        out.quadrature[j] = angle_variation(metric, f, inner.transport());
    });
    return out;
}

// Adapted frame along a wiring loop: the parallel invariant-plane frame rotated back
// at the linear rates t Phi / 2 pi and t Psi / 2 pi, so that it closes up.
inline Mat4 adapted_frame(const Mat4& parallel, const Mat4& planes, double t, const Vec2& angles) {
    const double a = -t * angles[0] / kTwoPi, b = -t * angles[1] / kTwoPi;
    Mat4 rot = Mat4::Zero();
    rot.block<2, 2>(0, 0) << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    rot.block<2, 2>(2, 2) << std::cos(b), -std::sin(b), std::sin(b), std::cos(b);
    return parallel * planes * rot;
}

// x^i(psi, t) = int_0^t <gamma', E~_i> - (t / 2 pi) int_0^{2 pi} <gamma', E~_i> over the psi grid,
// with the angle branch taken from the continued profile.
inline XGrid x_functions(const MetricField& metric, const LeafTorus& leaf, const ModuliOptions& opt = {}) {
    require_regular(metric, leaf);
    const ProfileCurve profile = profile_curve(metric, leaf, opt);
    const int m = opt.functional.psi_samples, n = opt.functional.t_steps;
    XGrid out;
    out.t_steps = n;
    out.psi.resize(m);
    out.values.assign(m, std::vector<Vec4>(n + 1, Vec4::Zero()));
    parallel_for(m, opt.functional.jobs, [&](int j) {
        const double psi = psi_node(j, m);
        out.psi[j] = psi;
        const LoopTransport lt = transport_loop(metric, leaf.loop(psi), opt.functional.transport());
        const HolonomyDecomposition d = decompose_holonomy(lt.holonomy.matrix);
        const Vec2 angles(unwrap_near(d.angle_phi, profile.angles[j][0]), unwrap_near(d.angle_psi, profile.angles[j][1]));
        Mat4 planes;
        planes << d.plane_pi, d.plane_n;
        std::vector<Vec4> speed(n + 1);
        for (int k = 0; k <= n; ++k) {
            const double t = lt.node_time(k);
            const Vec4 x = lt.loop.point(t);
            const Mat4 e = adapted_frame(lt.frames[k], planes, t, angles);
            speed[k] = e.transpose() * metric(x) * WiringLoop::velocity();
        }
        std::vector<Vec4>& row = out.values[j];
        const double dt = kTwoPi / n;
        for (int k = 1; k <= n; ++k) row[k] = row[k - 1] + 0.5 * dt * (speed[k - 1] + speed[k]);
        const Vec4 total = row[n];
        for (int k = 0; k <= n; ++k) row[k] -= (lt.node_time(k) / kTwoPi) * total;
    });
    return out;
}

// Drift of the loop holonomy and of the parallel frames of one wiring loop under
// the time-delta flow of a field. Deformed frames live along the moved loop in the
// original metric and are carried back to the undeformed loop by parallel
// transport along the flow lines.
struct FrameDrift {
    double holonomy = 0.0;  // Frobenius norm of I_delta - I in the basepoint frame
    double frame = 0.0;     // max over nodes of the frame difference, in frame components
};

inline FrameDrift frame_drift(const MetricField& metric, const DeformationField& field, double delta,
                              const LeafTorus& leaf, double psi, const TransportOptions& opt = {},
                              int flow_steps = 16) {
    const WiringLoop loop = leaf.loop(psi);
    const Vec4 x0 = loop.point(0.0);
    const Mat4 f0 = standard_frame(metric, x0);
    const std::vector<Mat4> base = transport_frames(metric, loop.curve(), 0.0, kTwoPi, f0, opt);
    const MetricField moved = pullback(metric, field, delta);
    const std::vector<Mat4> frames = transport_frames(moved, loop.curve(), 0.0, kTwoPi, f0, opt);
    FrameDrift out;
    out.holonomy = (frame_components(f0, metric(x0), frames.back() - base.back())).norm();
    TransportOptions back_opt = opt;
    back_opt.steps = flow_steps;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const Vec4 x = loop.point(kTwoPi * static_cast<double>(k) / opt.steps);
        const auto j0 = field.jet(x);
        Mat4 pushed = frames[k];
        if (!(j0.value.isZero(0.0) && j0.jacobian.isZero(0.0))) {
            Vec4 y;
            Mat4 jac;
            flow(field, delta, x, kDefaultFlowSteps, y, jac);
            const ChartCurve line = [&](double s) {
                Vec4 p;
                Mat4 unused;
                flow(field, s * delta, x, kDefaultFlowSteps, p, unused);
                return CurveSample{p, delta * field(p)};
            };
            pushed = transport_frames(metric, line, 1.0, 0.0, jac * frames[k], back_opt).back();
        }
        const double d = frame_components(base[k], metric(x), pushed - base[k]).norm();
        out.frame = std::max(out.frame, d);
    }
    return out;
}

}  // namespace flagfol
