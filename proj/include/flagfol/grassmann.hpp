#pragma once

#include "flagfol/core.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <vector>

namespace flagfol {

// Two-plane in R^4 (frame components), stored by an orthonormal basis in canonical gauge.
struct TwoPlane {
    Mat42 basis;

    TwoPlane() : basis(Mat42::Zero()) {
        basis(0, 0) = 1.0;
        basis(1, 1) = 1.0;
    }

    // Orthonormalizes the columns of m (which must be independent) and fixes the gauge.
    static TwoPlane span(const Mat42& m) {
        TwoPlane p;
        const Mat4 proj = [&] {
            Eigen::HouseholderQR<Mat42> qr(m);
            const Mat42 q = qr.householderQ() * Mat42::Identity();
            return Mat4(q * q.transpose());
        }();
        p.basis = canonical_basis(proj);
        return p;
    }
    static TwoPlane span(const Vec4& a, const Vec4& b) {
        Mat42 m;
        m << a, b;
        return span(m);
    }

    Mat4 projector() const { return basis * basis.transpose(); }
    bool same_as(const TwoPlane& o, double tol = 1e-9) const {
        return (projector() - o.projector()).cwiseAbs().maxCoeff() <= tol;
    }

    // Column-pivoted basis of the projector's range with the first significant entry of each column positive.
    static Mat42 canonical_basis(const Mat4& proj) {
        Eigen::ColPivHouseholderQR<Mat4> qr(proj);
        const Mat4 q = qr.householderQ();
        Mat42 b = q.leftCols<2>();
        for (int c = 0; c < 2; ++c) {
            for (int r = 0; r < 4; ++r) {
                if (std::abs(b(r, c)) > 1e-12) {
                    if (b(r, c) < 0) b.col(c) = -b.col(c);
                    break;
                }
            }
        }
        return b;
    }
};

// Principal angles theta_1 <= theta_2 in [0, pi/2] with the paired principal vectors.
struct PrincipalAngles {
    Vec2 theta;
    Mat42 from;  // principal vectors in the first plane
    Mat42 to;    // matching principal vectors in the second plane
};

inline PrincipalAngles principal_angles(const TwoPlane& a, const TwoPlane& b) {
    const Mat2 m = a.basis.transpose() * b.basis;
    Eigen::JacobiSVD<Mat2> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    PrincipalAngles out;
    out.from = a.basis * svd.matrixU();
    out.to = b.basis * svd.matrixV();
    for (int i = 0; i < 2; ++i) {
        const Vec4 w = out.to.col(i) - out.from.col(i) * out.from.col(i).dot(out.to.col(i));
        const double c = out.from.col(i).dot(out.to.col(i));
        out.theta[i] = std::atan2(w.norm(), c);
    }
    if (out.theta[0] > out.theta[1]) {
        std::swap(out.theta[0], out.theta[1]);
        out.from.col(0).swap(out.from.col(1));
        out.to.col(0).swap(out.to.col(1));
    }
    return out;
}

// Geodesic distance of the submersion metric, sqrt(theta_1^2 + theta_2^2).
// Arguments are put in a fixed order first so the result is exactly symmetric.
inline double plane_distance(const TwoPlane& a, const TwoPlane& b) {
    const bool swap = std::lexicographical_compare(b.basis.data(), b.basis.data() + 8, a.basis.data(),
                                                   a.basis.data() + 8);
    return swap ? principal_angles(b, a).theta.norm() : principal_angles(a, b).theta.norm();
}

inline constexpr double kConjugateTol = 1e-9;

// Point at fraction s along the minimal geodesic from a to b.
inline TwoPlane plane_geodesic(const TwoPlane& a, const TwoPlane& b, double s) {
    const PrincipalAngles pa = principal_angles(a, b);
    if (pa.theta[1] >= kPi / 2 - kConjugateTol)
        throw MultipleGeodesics("principal angle reaches pi/2; the rotation plane must be chosen explicitly");
    Mat42 out;
    for (int i = 0; i < 2; ++i) {
        const Vec4 u = pa.from.col(i);
        Vec4 w = pa.to.col(i) - u * u.dot(pa.to.col(i));
        const double wn = w.norm();
        if (wn > 1e-14) w /= wn;
        else w.setZero();
        out.col(i) = u * std::cos(s * pa.theta[i]) + w * std::sin(s * pa.theta[i]);
    }
    return TwoPlane::span(out);
}

// Sampled curve of planes over an increasing parameter.
struct PlaneCurve {
    std::vector<double> t;
    std::vector<TwoPlane> planes;

    std::size_t size() const { return planes.size(); }

    void validate(double max_gap = 0.5) const {
        if (t.size() != planes.size() || planes.size() < 2)
            throw std::invalid_argument("plane curve needs at least two samples");
        for (std::size_t k = 1; k < planes.size(); ++k) {
            if (!(t[k] > t[k - 1])) throw std::invalid_argument("plane curve parameter must increase");
            if (plane_distance(planes[k - 1], planes[k]) > max_gap)
                throw std::invalid_argument("plane curve sampled too coarsely");
        }
    }
};

// Sum of chord distances between consecutive samples.
inline double curve_length(const PlaneCurve& c) {
    c.validate();
    double s = 0.0;
    for (std::size_t k = 1; k < c.size(); ++k) s += plane_distance(c.planes[k - 1], c.planes[k]);
    return s;
}

// Discrete geodesic curvature at interior sample k: the distance from L_k to the
// matching point of the geodesic through its neighbours, divided by (dt * speed)^2 / 2.
inline double geodesic_curvature(const PlaneCurve& c, std::size_t k) {
    if (k == 0 || k + 1 >= c.size()) throw std::invalid_argument("geodesic curvature needs both neighbours");
    const double span = c.t[k + 1] - c.t[k - 1];
    const double chord = plane_distance(c.planes[k - 1], c.planes[k + 1]);
    if (!(chord > 1e-14)) throw ZeroSpeed("consecutive samples coincide");
    const double s = (c.t[k] - c.t[k - 1]) / span;
    const TwoPlane mid = plane_geodesic(c.planes[k - 1], c.planes[k + 1], s);
    const double dev = plane_distance(c.planes[k], mid);
    const double half = 0.5 * chord;
    return 2.0 * dev / (half * half);
}

// Killing norm sum_{i<j} A_ij^2 of a skew matrix, square-rooted.
inline double skew_norm(const Mat4& a) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Geodesic curvature from the rotation generator: the curve moves by dL/dt = S L
// with S horizontal at L, and R is the block of dS/dt coupling L to its
// complement. Returns |R normal to the velocity| / |S|^2, which is the
// generator formula (speed^2) |R| read in unit-speed parametrization.
inline double geodesic_curvature_from_generator(const TwoPlane& l, const Mat4& s, const Mat4& ds) {
    Mat4 basis;
    basis.leftCols<2>() = l.basis;
    Mat4 proj = Mat4::Identity() - l.projector();
    Eigen::SelfAdjointEigenSolver<Mat4> es(proj);
    basis.col(2) = es.eigenvectors().col(2);
    basis.col(3) = es.eigenvectors().col(3);
    const Mat4 sl = basis.transpose() * s * basis;
    const Mat4 dl = basis.transpose() * ds * basis;
    const Mat2 vel = sl.block<2, 2>(2, 0);
    const Mat2 acc = dl.block<2, 2>(2, 0);
    const double speed2 = vel.squaredNorm();
    if (!(speed2 > 1e-28)) throw ZeroSpeed("generator has no horizontal part");
    const double along = (acc.array() * vel.array()).sum() / std::sqrt(speed2);
    const double normal2 = std::max(0.0, acc.squaredNorm() - along * along);
    return std::sqrt(normal2) / speed2;
}

// Principal-angle coordinates of l against a reference pair (Pi, N), largest first.
struct GrassCoords {
    double lambda = 0.0;
    double mu = 0.0;
};

inline GrassCoords grass_coords(const TwoPlane& l, const TwoPlane& pi_ref, const TwoPlane& n_ref) {
    if ((pi_ref.basis.transpose() * n_ref.basis).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("reference planes must be orthogonal");
    const Vec2 th = principal_angles(l, pi_ref).theta;
    return {th[1], th[0]};
}

// Whether l lies on the torus of planes equidistant from Pi and N.
inline bool equidistant(const TwoPlane& l, const TwoPlane& pi_ref, const TwoPlane& n_ref, double tol = 1e-9) {
    return std::abs(plane_distance(l, pi_ref) - plane_distance(l, n_ref)) <= tol;
}

}  // namespace flagfol
