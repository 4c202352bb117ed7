#pragma once

#include "flagfol/geometry.hpp"

#include <optional>
#include <vector>

namespace flagfol {

inline constexpr int kDefaultTransportSteps = 2048;
inline constexpr double kNormDriftTol = 1e-7;
inline constexpr double kDegenerateTol = 1e-6;

struct CurveSample {
    Vec4 x;
    Vec4 xdot;
};

// Smooth chart curve t -> (position, velocity).
using ChartCurve = std::function<CurveSample(double)>;

struct TransportOptions {
    int steps = kDefaultTransportSteps;
    double drift_tol = kNormDriftTol;
};

// (1,1) wiring loop on the leaf (alpha, beta): t -> (alpha, beta, phi0 + t, psi0 + t).
struct WiringLoop {
    double alpha = 0.0;
    double beta = 0.0;
    double phi0 = 0.0;
    double psi0 = 0.0;

    Vec4 point(double t) const { return {alpha, beta, phi0 + t, psi0 + t}; }
    static Vec4 velocity() { return {0.0, 0.0, 1.0, 1.0}; }
    ChartCurve curve() const {
        const WiringLoop self = *this;
        return [self](double t) { return CurveSample{self.point(t), velocity()}; };
    }
};

// Gram matrix F^T g F of a set of chart vectors.
inline Mat4 gram(const Mat4& g, const Mat4& f) { return f.transpose() * g * f; }

// Orthonormal frame at x: Gram-Schmidt of (d_alpha, d_phi, d_beta, d_psi) under g.
// Columns are chart components; the column order fixes the positive orientation.
inline Mat4 standard_frame(const MetricField& metric, const Vec4& x) {
    const Mat4 g = metric(x);
    const int order[4] = {kAlpha, kPhi, kBeta, kPsi};
    Mat4 f = Mat4::Zero();
    for (int c = 0; c < 4; ++c) {
        Vec4 v = coord(order[c]);
        for (int pass = 0; pass < 2; ++pass)
            for (int p = 0; p < c; ++p) v -= (f.col(p).dot(g * v)) * f.col(p);
        const double n2 = v.dot(g * v);
        if (!(n2 > 0.0)) throw SingularMetric("frame construction failed");
        f.col(c) = v / std::sqrt(n2);
    }
    return f;
}

// Parallel frames along a curve: node n holds the transport of the columns of f0
// to t0 + n (t1 - t0) / steps. Classical RK4 on w' = -A(t) w with A sampled at
// the 2 steps + 1 half nodes.
inline std::vector<Mat4> transport_frames(const MetricField& metric, const ChartCurve& curve, double t0,
                                          double t1, const Mat4& f0, const TransportOptions& opt = {},
                                          bool check_drift = true) {
    const int n = opt.steps;
    if (n < 1) throw std::invalid_argument("transport needs at least one step");
    const double h = (t1 - t0) / n;
    std::vector<Mat4> a(2 * n + 1);
    for (int m = 0; m <= 2 * n; ++m) {
        const CurveSample s = curve(t0 + 0.5 * h * m);
        a[m] = connection_matrix(christoffel(metric, s.x), s.xdot);
    }
    std::vector<Mat4> frames(n + 1);
    frames[0] = f0;
    Mat4 w = f0;
    for (int k = 0; k < n; ++k) {
        const Mat4& a0 = a[2 * k];
        const Mat4& ah = a[2 * k + 1];
        const Mat4& a1 = a[2 * k + 2];
        const Mat4 k1 = -(a0 * w);
        const Mat4 k2 = -(ah * (w + 0.5 * h * k1));
        const Mat4 k3 = -(ah * (w + 0.5 * h * k2));
        const Mat4 k4 = -(a1 * (w + h * k3));
        w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        frames[k + 1] = w;
    }
    if (check_drift) {
        const Mat4 g0 = gram(metric(curve(t0).x), f0);
        const Mat4 g1 = gram(metric(curve(t1).x), w);
        const double drift = (g1 - g0).cwiseAbs().maxCoeff();
        if (!(drift <= opt.drift_tol))
            throw StepSizeTooCoarse("norm drift " + show(drift) + " with " + std::to_string(n) +
                                    " steps");
    }
    return frames;
}

// Transport of a single vector along the curve over [t0, t1].
inline Vec4 parallel_transport(const MetricField& metric, const ChartCurve& curve, double t0, double t1,
                               const Vec4& v, const TransportOptions& opt = {}) {
    Mat4 f0 = Mat4::Zero();
    f0.col(0) = v;
    return transport_frames(metric, curve, t0, t1, f0, opt).back().col(0);
}

struct HolonomyOperator {
    Mat4 matrix;  // columns: transported frame vectors in the start frame
};

// Components of chart vectors in an orthonormal frame f at a point with metric g.
inline Mat4 frame_components(const Mat4& f, const Mat4& g, const Mat4& vectors) {
    return f.transpose() * g * vectors;
}

// Full loop transport: the basepoint frame, the frames at every node, and the holonomy.
struct LoopTransport {
    WiringLoop loop;
    Mat4 frame;                 // orthonormal basepoint frame (chart columns)
    Mat4 base_metric;           // metric at the basepoint
    std::vector<Mat4> frames;   // parallel frames at nodes t_n = 2 pi n / steps
    HolonomyOperator holonomy;  // forward transport expressed in the basepoint frame

    int steps() const { return static_cast<int>(frames.size()) - 1; }
    double node_time(int n) const { return kTwoPi * n / steps(); }
};

inline LoopTransport transport_loop(const MetricField& metric, const WiringLoop& loop,
                                    const TransportOptions& opt = {}) {
    LoopTransport lt;
    lt.loop = loop;
    const Vec4 x0 = loop.point(0.0);
    lt.frame = standard_frame(metric, x0);
    lt.base_metric = metric(x0);
    lt.frames = transport_frames(metric, loop.curve(), 0.0, kTwoPi, lt.frame, opt);
    lt.holonomy.matrix = frame_components(lt.frame, lt.base_metric, lt.frames.back());
    return lt;
}

inline HolonomyOperator holonomy(const MetricField& metric, const WiringLoop& loop, const Mat4& frame,
                                 const TransportOptions& opt = {}) {
    const std::vector<Mat4> fr = transport_frames(metric, loop.curve(), 0.0, kTwoPi, frame, opt);
    return {frame_components(frame, metric(loop.point(0.0)), fr.back())};
}

inline HolonomyOperator holonomy(const MetricField& metric, const WiringLoop& loop,
                                 const TransportOptions& opt = {}) {
    return holonomy(metric, loop, standard_frame(metric, loop.point(0.0)), opt);
}

// Two invariant planes and rotation angles of an SO(4) matrix, in frame components.
struct HolonomyDecomposition {
    Mat42 plane_pi;
    Mat42 plane_n;
    double angle_phi = 0.0;
    double angle_psi = 0.0;
    bool degenerate = false;

    Mat4 reconstruct() const {
        Mat4 p;
        p << plane_pi, plane_n;
        Mat4 r = Mat4::Zero();
        r(0, 0) = std::cos(angle_phi);
        r(0, 1) = -std::sin(angle_phi);
        r(1, 0) = std::sin(angle_phi);
        r(1, 1) = std::cos(angle_phi);
        r(2, 2) = std::cos(angle_psi);
        r(2, 3) = -std::sin(angle_psi);
        r(3, 2) = std::sin(angle_psi);
        r(3, 3) = std::cos(angle_psi);
        return p * r * p.transpose();
    }
};

namespace detail {

// Principal-angle cosines between two orthonormal 2-frames.
inline double plane_overlap(const Mat42& a, const Mat42& b) {
    return (a.transpose() * b).squaredNorm();
}

// Orthonormal basis of the orthogonal complement of a plane in R^4.
inline Mat42 complement(const Mat42& p) {
    Mat4 proj = Mat4::Identity() - p * p.transpose();
    Eigen::SelfAdjointEigenSolver<Mat4> es(proj);
    Mat42 out;
    out.col(0) = es.eigenvectors().col(2);
    out.col(1) = es.eigenvectors().col(3);
    return out;
}

// Basis (p1, p2) of the plane with p1 along the projection of ref1 and the
// orientation agreeing with (ref1, ref2).
inline Mat42 orient_plane(const Mat42& plane, const Vec4& ref1, const Vec4& ref2) {
    const Mat4 proj = plane * plane.transpose();
    Vec4 p1 = proj * ref1;
    if (p1.norm() < 1e-8) p1 = proj * ref2;
    if (p1.norm() < 1e-8) p1 = plane.col(0);
    p1.normalize();
    Vec4 p2 = plane.col(0) - p1.dot(plane.col(0)) * p1;
    if (p2.norm() < 0.5) p2 = plane.col(1) - p1.dot(plane.col(1)) * p1;
    p2.normalize();
    const double det = p1.dot(ref1) * p2.dot(ref2) - p1.dot(ref2) * p2.dot(ref1);
    if (det < 0.0 || (det == 0.0 && p2.dot(ref2) < 0.0)) p2 = -p2;
    Mat42 out;
    out << p1, p2;
    return out;
}

inline double rotation_angle(const Mat4& r, const Mat42& plane) {
    const Vec4 rp = r * plane.col(0);
    return std::atan2(rp.dot(plane.col(1)), rp.dot(plane.col(0)));
}

}  // namespace detail

// Invariant planes from the symmetric part (R + R^T)/2, whose eigenvalue pairs are
// the rotation cosines. Pi is the invariant plane nearer the reference plane
// span(f1, f2) of the basepoint frame; degenerate spectra fall back to the
// complex structure (R - R^T)/(2 sin) or to the reference planes themselves.
inline HolonomyDecomposition decompose_holonomy(const Mat4& r, std::optional<Vec2> previous = std::nullopt) {
    const Vec4 e1 = Vec4::Unit(0), e2 = Vec4::Unit(1), e3 = Vec4::Unit(2), e4 = Vec4::Unit(3);
    Mat42 ref_pi, ref_n;
    ref_pi << e1, e2;
    ref_n << e3, e4;

    HolonomyDecomposition d;
    Mat42 pi_plane;
    const double dev_id = (r - Mat4::Identity()).cwiseAbs().maxCoeff();
    const double dev_minus = (r + Mat4::Identity()).cwiseAbs().maxCoeff();
    if (dev_id < kDegenerateTol || dev_minus < kDegenerateTol) {
        d.degenerate = true;
        pi_plane = ref_pi;
    } else {
        const Mat4 sym = 0.5 * (r + r.transpose());
        Eigen::SelfAdjointEigenSolver<Mat4> es(sym);
        const Vec4 ev = es.eigenvalues();
        const double ca = 0.5 * (ev[0] + ev[1]);
        const double cb = 0.5 * (ev[2] + ev[3]);
        if (std::abs(ca - cb) < kDegenerateTol) {
            d.degenerate = true;
            const Mat4 skew = 0.5 * (r - r.transpose());
            const double s = std::sqrt(skew.squaredNorm() / 4.0);
            const Mat4 j = skew / s;
            Vec4 v = e1;
            Vec4 jv = j * v;
            jv -= jv.dot(v) * v;
            pi_plane << v, jv.normalized();
        } else {
            Mat42 a, b;
            a << es.eigenvectors().col(0), es.eigenvectors().col(1);
            b << es.eigenvectors().col(2), es.eigenvectors().col(3);
            const double oa = detail::plane_overlap(a, ref_pi);
            const double ob = detail::plane_overlap(b, ref_pi);
            if (std::abs(oa - ob) > 1e-12)
                pi_plane = oa > ob ? a : b;
            else
                pi_plane = (1.0 - cb) < (1.0 - ca) ? b : a;  // tie: smaller rotation angle
        }
    }
    d.plane_pi = detail::orient_plane(pi_plane, e1, e2);
    d.plane_n = detail::orient_plane(detail::complement(d.plane_pi), e3, e4);
    d.angle_phi = detail::rotation_angle(r, d.plane_pi);
    d.angle_psi = detail::rotation_angle(r, d.plane_n);
    if (previous) {
        d.angle_phi = unwrap_near(d.angle_phi, (*previous)[0]);
        d.angle_psi = unwrap_near(d.angle_psi, (*previous)[1]);
    }
    return d;
}

}  // namespace flagfol
