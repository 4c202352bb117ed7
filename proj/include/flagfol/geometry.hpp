#pragma once

#include "flagfol/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace flagfol {

inline constexpr double kDefaultEpsPole = 1e-3;
inline constexpr double kDefaultFdStep = 1e-4;

struct ChartPoint {
    double alpha = 0.0;
    double beta = 0.0;
    double phi = 0.0;
    double psi = 0.0;

    // Canonical point: phi, psi in [0, 2pi); alpha, beta must lie in (-pi/2, pi/2).
    static ChartPoint make(double alpha, double beta, double phi, double psi) {
        if (!(std::abs(alpha) < kPi / 2) || !(std::abs(beta) < kPi / 2))
            throw std::invalid_argument("chart point outside the open square of latitudes");
        return {alpha, beta, wrap_two_pi(phi), wrap_two_pi(psi)};
    }
    static ChartPoint from(const Vec4& x) { return make(x[0], x[1], x[2], x[3]); }
    Vec4 vec() const { return {alpha, beta, phi, psi}; }
};

using MetricGradient = std::array<Mat4, 4>;

// Smooth field of symmetric positive-definite 4x4 matrices in the chart basis
// (d_alpha, d_beta, d_phi, d_psi). An optional analytic first jet replaces
// central differences when present.
class MetricField {
  public:
    using Eval = std::function<Mat4(const Vec4&)>;
    using Jet = std::function<void(const Vec4&, Mat4&, MetricGradient&)>;

    MetricField() = default;
    MetricField(std::string name, Eval eval, Jet jet = {}, double tau = 0.0)
        : name_(std::move(name)), eval_(std::move(eval)), jet_(std::move(jet)), tau_(tau) {}

    const std::string& name() const { return name_; }
    double tau() const { return tau_; }
    double eps_pole() const { return eps_pole_; }
    double fd_step() const { return fd_step_; }
    bool has_jet() const { return static_cast<bool>(jet_) && !force_fd_; }

    MetricField with_eps_pole(double eps) const {
        MetricField m = *this;
        m.eps_pole_ = eps;
        return m;
    }
    MetricField with_fd_step(double h) const {
        MetricField m = *this;
        m.fd_step_ = h;
        return m;
    }
    // Drops the analytic jet so every derivative goes through central differences.
    MetricField finite_difference_only() const {
        MetricField m = *this;
        m.force_fd_ = true;
        return m;
    }

    Vec4 clamp(const Vec4& x) const {
        const double lim = kPi / 2 - eps_pole_;
        Vec4 y = x;
        y[kAlpha] = std::clamp(y[kAlpha], -lim, lim);
        y[kBeta] = std::clamp(y[kBeta], -lim, lim);
        return y;
    }

    Mat4 operator()(const Vec4& x) const { return eval_(clamp(x)); }
    Mat4 operator()(const ChartPoint& p) const { return (*this)(p.vec()); }

    // Metric and its coordinate gradient dg[i] = d_i g.
    void jet(const Vec4& x, Mat4& g, MetricGradient& dg) const {
        if (has_jet()) {
            jet_(clamp(x), g, dg);
            return;
        }
        g = (*this)(x);
        for (int i = 0; i < 4; ++i) {
            Vec4 xp = x, xm = x;
            xp[i] += fd_step_;
            xm[i] -= fd_step_;
            dg[i] = ((*this)(xp) - (*this)(xm)) / (2.0 * fd_step_);
        }
    }

  private:
    std::string name_;
    Eval eval_;
    Jet jet_;
    double tau_ = 0.0;
    double eps_pole_ = kDefaultEpsPole;
    double fd_step_ = kDefaultFdStep;
    bool force_fd_ = false;
};

inline void product_jet(const Vec4& x, Mat4& g, MetricGradient& dg) {
    const double ca = std::cos(x[kAlpha]), sa = std::sin(x[kAlpha]);
    const double cb = std::cos(x[kBeta]), sb = std::sin(x[kBeta]);
    g.setZero();
    g(0, 0) = 1.0;
    g(1, 1) = 1.0;
    g(2, 2) = ca * ca;
    g(3, 3) = cb * cb;
    for (auto& d : dg) d.setZero();
    dg[kAlpha](2, 2) = -2.0 * sa * ca;
    dg[kBeta](3, 3) = -2.0 * sb * cb;
}

inline Mat4 product_eval(const Vec4& x) {
    const double ca = std::cos(x[kAlpha]), cb = std::cos(x[kBeta]);
    Mat4 g = Mat4::Zero();
    g(0, 0) = 1.0;
    g(1, 1) = 1.0;
    g(2, 2) = ca * ca;
    g(3, 3) = cb * cb;
    return g;
}

// d_alpha^2 + cos^2(alpha) d_phi^2 + d_beta^2 + cos^2(beta) d_psi^2.
inline MetricField product_metric() { return MetricField("product", product_eval, product_jet); }

// Identity matrix at every point; a flat reference for plumbing tests.
inline MetricField flat_metric() {
    return MetricField(
        "flat", [](const Vec4&) { return Mat4::Identity().eval(); },
        [](const Vec4&, Mat4& g, MetricGradient& dg) {
            g.setIdentity();
            for (auto& d : dg) d.setZero();
        });
}

// One-dimensional C-infinity bump exp(1 - 1/(1 - u^2)) on (-1, 1) with value and derivative.
inline void bump1d(double u, double& b, double& db) {
    const double q = 1.0 - u * u;
    if (q <= 0.0) {
        b = 0.0;
        db = 0.0;
        return;
    }
    b = std::exp(1.0 - 1.0 / q);
    db = b * (-2.0 * u / (q * q));
}

// One term c * B(x) * (dx_i . dx_j) with B a product of 1-D bumps. A width <= 0
// removes the dependence on that coordinate; phi and psi offsets wrap mod 2pi.
struct BumpTerm {
    int i = 0;
    int j = 0;
    double amplitude = 0.0;
    Vec4 center = Vec4::Zero();
    Vec4 widths = Vec4::Ones();

    bool in_support(const Vec4& x) const {
        for (int k = 0; k < 4; ++k) {
            if (widths[k] <= 0.0) continue;
            double d = x[k] - center[k];
            if (k >= kPhi) d = wrap_pi(d);
            if (std::abs(d) >= widths[k]) return false;
        }
        return true;
    }

    // Scalar profile B and its gradient.
    double profile(const Vec4& x, Vec4* grad) const {
        double b[4], db[4];
        for (int k = 0; k < 4; ++k) {
            if (widths[k] <= 0.0) {
                b[k] = 1.0;
                db[k] = 0.0;
                continue;
            }
            double d = x[k] - center[k];
            if (k >= kPhi) d = wrap_pi(d);
            bump1d(d / widths[k], b[k], db[k]);
            db[k] /= widths[k];
        }
        const double value = b[0] * b[1] * b[2] * b[3];
        if (grad) {
            for (int k = 0; k < 4; ++k) {
                double p = db[k];
                for (int m = 0; m < 4; ++m)
                    if (m != k) p *= b[m];
                (*grad)[k] = p;
            }
        }
        return value;
    }

    // Adds scale * c * B * (dx_i . dx_j) into g (and its gradient into dg when given).
    void accumulate(const Vec4& x, double scale, Mat4& g, MetricGradient* dg) const {
        if (!in_support(x)) return;
        Vec4 grad;
        const double value = profile(x, dg ? &grad : nullptr);
        const double w = (i == j ? 1.0 : 0.5) * scale * amplitude;
        g(i, j) += w * value;
        if (i != j) g(j, i) += w * value;
        if (dg) {
            for (int k = 0; k < 4; ++k) {
                (*dg)[k](i, j) += w * grad[k];
                if (i != j) (*dg)[k](j, i) += w * grad[k];
            }
        }
    }
};

struct PerturbationSpec {
    std::vector<BumpTerm> terms;
    bool empty() const { return terms.empty(); }
};

inline const char* coordinate_name(int k) {
    static const char* names[4] = {"alpha", "beta", "phi", "psi"};
    return names[k];
}

inline int coordinate_index(const std::string& s) {
    for (int k = 0; k < 4; ++k)
        if (s == coordinate_name(k)) return k;
    return -1;
}

// Blending ramp of the family; s(0) = 0, s(1) = 1.
inline double family_ramp(double tau) { return tau; }

inline bool is_positive_definite(const Mat4& g) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

namespace detail {

inline void check_positivity(const MetricField& m, const PerturbationSpec& spec) {
    std::vector<Vec4> samples;
    const double lim = kPi / 2 - m.eps_pole();
    const int na = 9, nf = 8;
    for (int a = 0; a < na; ++a)
        for (int b = 0; b < na; ++b)
            for (int f = 0; f < nf; ++f)
                for (int p = 0; p < nf; ++p)
                    samples.push_back({-lim + 2 * lim * a / (na - 1), -lim + 2 * lim * b / (na - 1),
                                       kTwoPi * f / nf, kTwoPi * p / nf});
    for (const auto& t : spec.terms) {
        samples.push_back(t.center);
        for (int k = 0; k < 4; ++k) {
            if (t.widths[k] <= 0.0) continue;
            for (double s : {-0.5, -0.25, 0.25, 0.5}) {
                Vec4 x = t.center;
                x[k] += s * t.widths[k];
                samples.push_back(x);
            }
        }
    }
    for (const auto& x : samples) {
        const Mat4 g = m(x);
        if (!is_positive_definite(g)) {
            const Vec4 y = m.clamp(x);
            throw PositivityLost("metric not positive definite at (" + show(y[0]) + ", " +
                                 show(y[1]) + ", " + show(y[2]) + ", " +
                                 show(y[3]) + ") for tau = " + show(m.tau()));
        }
    }
}

}  // namespace detail

// g(tau) = product + s(tau) * h with h the sum of bump terms.
inline MetricField metric_family(double tau, const PerturbationSpec& spec) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
    auto terms = std::make_shared<const std::vector<BumpTerm>>(spec.terms);
    const double s = family_ramp(tau);
    if (s == 0.0 || terms->empty()) {
        return MetricField("family", product_eval, product_jet, tau);
    }
    auto eval = [terms, s](const Vec4& x) {
        Mat4 g = product_eval(x);
        for (const auto& t : *terms) t.accumulate(x, s, g, nullptr);
        return g;
    };
    auto jet = [terms, s](const Vec4& x, Mat4& g, MetricGradient& dg) {
        product_jet(x, g, dg);
        for (const auto& t : *terms) t.accumulate(x, s, g, &dg);
    };
    MetricField m("family", eval, jet, tau);
    detail::check_positivity(m, spec);
    return m;
}

namespace detail {

inline Mat4 checked_inverse(const Mat4& g) {
    Eigen::LLT<Mat4> llt(g);
    if (llt.info() != Eigen::Success) throw SingularMetric("metric matrix is not positive definite");
    const Vec4 d = llt.matrixLLT().diagonal();
    const double ratio = d.minCoeff() / d.maxCoeff();
    if (!(ratio * ratio > 1e-14)) throw SingularMetric("metric condition number above 1e14");
    return llt.solve(Mat4::Identity());
}

}  // namespace detail

// Levi-Civita symbols Gamma^k_{ij}, symmetric in (i, j) by construction.
inline Christoffel christoffel(const MetricField& metric, const Vec4& x) {
    Mat4 g;
    MetricGradient dg;
    metric.jet(x, g, dg);
    const Mat4 ginv = detail::checked_inverse(g);
    double lower[4][4][4];  // lower[l][i][j] = Gamma_{l, ij}
    for (int l = 0; l < 4; ++l)
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                const double v = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                lower[l][i][j] = v;
                lower[l][j][i] = v;
            }
    Christoffel gam;
    for (int k = 0; k < 4; ++k) {
        Mat4& out = gam[k];
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                double v = 0.0;
                for (int l = 0; l < 4; ++l) v += ginv(k, l) * lower[l][i][j];
                out(i, j) = v;
                out(j, i) = v;
            }
    }
    return gam;
}

inline Christoffel christoffel(const MetricField& metric, const ChartPoint& p) {
    return christoffel(metric, p.vec());
}

// Connection matrix A(k, j) = Gamma^k_{ij} v^i, so that parallel transport reads w' = -A w.
inline Mat4 connection_matrix(const Christoffel& gam, const Vec4& v) {
    Mat4 a;
    for (int k = 0; k < 4; ++k) a.row(k) = (gam[k].transpose() * v).transpose();
    return a;
}

struct CurvatureTensor {
    Riemann lower;  // R_{ijkl} = g(R(d_i, d_j) d_k, d_l)
    Riemann up;     // R(d_i, d_j) d_k = up.c[i][j][k][l] d_l
    Mat4 metric;

    // Matrix of the endomorphism Z -> R(X, Y) Z in chart components.
    Mat4 operator_matrix(const Vec4& X, const Vec4& Y) const {
        Mat4 m = Mat4::Zero();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double w = X[i] * Y[j];
                if (w == 0.0) continue;
                for (int k = 0; k < 4; ++k)
                    for (int l = 0; l < 4; ++l) m(l, k) += w * up.c[i][j][k][l];
            }
        return m;
    }

    // R(X, Y, Z, W) = g(R(X, Y) Z, W).
    double evaluate(const Vec4& X, const Vec4& Y, const Vec4& Z, const Vec4& W) const {
        double s = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                    for (int l = 0; l < 4; ++l) s += lower.c[i][j][k][l] * X[i] * Y[j] * Z[k] * W[l];
        return s;
    }

    // K(X, Y) = R(X, Y, Y, X) / |X ^ Y|^2.
    double sectional(const Vec4& X, const Vec4& Y) const {
        const double xx = X.dot(metric * X), yy = Y.dot(metric * Y), xy = X.dot(metric * Y);
        const double area2 = xx * yy - xy * xy;
        if (!(area2 > 0.0)) throw std::invalid_argument("sectional curvature of a degenerate plane");
        return evaluate(X, Y, Y, X) / area2;
    }
};

// Curvature from Christoffel symbols and their central differences.
inline CurvatureTensor curvature(const MetricField& metric, const Vec4& x) {
    const double h = metric.fd_step();
    const Christoffel gam = christoffel(metric, x);
    std::array<Christoffel, 4> dgam;
    for (int i = 0; i < 4; ++i) {
        Vec4 xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const Christoffel gp = christoffel(metric, xp);
        const Christoffel gm = christoffel(metric, xm);
        for (int k = 0; k < 4; ++k) dgam[i][k] = (gp[k] - gm[k]) / (2.0 * h);
    }
    CurvatureTensor r;
    r.metric = metric(x);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) {
                    double v = dgam[i][l](j, k) - dgam[j][l](i, k);
                    for (int m = 0; m < 4; ++m) v += gam[m](j, k) * gam[l](i, m) - gam[m](i, k) * gam[l](j, m);
                    r.up.c[i][j][k][l] = v;
                }
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) {
                    double v = 0.0;
                    for (int m = 0; m < 4; ++m) v += r.metric(l, m) * r.up.c[i][j][k][m];
                    r.lower.c[i][j][k][l] = v;
                }
    return r;
}

inline CurvatureTensor curvature(const MetricField& metric, const ChartPoint& p) {
    return curvature(metric, p.vec());
}

// Coordinate vector d_k.
inline Vec4 coord(int k) { return Vec4::Unit(k); }

}  // namespace flagfol
