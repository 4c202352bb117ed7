#include "flagfol/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace flagfol;

namespace {

Vec4 random_point(std::mt19937_64& rng, double lim = 1.3) {
    std::uniform_real_distribution<double> lat(-lim, lim), ang(0.0, kTwoPi);
    return {lat(rng), lat(rng), ang(rng), ang(rng)};
}

PerturbationSpec sample_bumps() {
    PerturbationSpec spec;
    BumpTerm a;
    a.i = kPhi;
    a.j = kPhi;
    a.amplitude = 0.4;
    a.center = {0.2, -0.1, 1.0, 2.0};
    a.widths = {0.8, 0.8, 1.5, 1.5};
    BumpTerm b;
    b.i = kAlpha;
    b.j = kPsi;
    b.amplitude = 0.3;
    b.center = {-0.3, 0.4, 4.0, 0.5};
    b.widths = {0.9, 0.7, 2.0, 1.2};
    spec.terms = {a, b};
    return spec;
}

}  // namespace

TEST(ChartPoint, CanonicalizesAngles) {
    const ChartPoint p = ChartPoint::make(0.1, -0.2, -1.0, 7.0);
    EXPECT_NEAR(p.phi, kTwoPi - 1.0, 1e-15);
    EXPECT_NEAR(p.psi, 7.0 - kTwoPi, 1e-15);
    EXPECT_THROW(ChartPoint::make(kPi / 2, 0, 0, 0), std::invalid_argument);
}

TEST(ProductMetric, DiagonalValues) {
    const MetricField g = product_metric();
    EXPECT_TRUE(g(Vec4(0, 0, 0, 0)).isApprox(Mat4::Identity(), 1e-15));
    const Mat4 m = g(Vec4(kPi / 3, 0, 0, 0));
    EXPECT_NEAR(m(2, 2), 0.25, 1e-15);
    EXPECT_EQ(m(0, 0), 1.0);
    EXPECT_EQ(m(1, 1), 1.0);
    EXPECT_EQ(m(3, 3), 1.0);
    std::mt19937_64 rng(7);
    for (int n = 0; n < 20; ++n) {
        const Mat4 r = g(random_point(rng));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (i != j) EXPECT_EQ(r(i, j), 0.0);
    }
}

TEST(MetricFamily, TauZeroMatchesProductBitForBit) {
    const MetricField fam = metric_family(0.0, sample_bumps());
    const MetricField prod = product_metric();
    std::mt19937_64 rng(11);
    for (int n = 0; n < 64; ++n) {
        const Vec4 x = random_point(rng);
        EXPECT_TRUE((fam(x).array() == prod(x).array()).all());
    }
}

TEST(MetricFamily, ZeroPerturbationAtTauOne) {
    const MetricField fam = metric_family(1.0, PerturbationSpec{});
    std::mt19937_64 rng(12);
    for (int n = 0; n < 16; ++n) {
        const Vec4 x = random_point(rng);
        EXPECT_TRUE((fam(x).array() == product_metric()(x).array()).all());
    }
}

TEST(MetricFamily, LargeOffDiagonalBumpLosesPositivity) {
    PerturbationSpec spec;
    BumpTerm t;
    t.i = kAlpha;
    t.j = kBeta;
    t.amplitude = 10.0;
    t.center = Vec4::Zero();
    t.widths = {0.5, 0.5, 0.5, 0.5};
    spec.terms = {t};
    EXPECT_THROW(metric_family(0.5, spec), PositivityLost);
    EXPECT_NO_THROW(metric_family(0.0, spec));
}

TEST(MetricFamily, SymmetricAndPositiveAtRandomPoints) {
    const MetricField fam = metric_family(0.7, sample_bumps());
    std::mt19937_64 rng(13);
    for (int n = 0; n < 100; ++n) {
        const Mat4 g = fam(random_point(rng));
        EXPECT_LT((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_TRUE(is_positive_definite(g));
    }
}

TEST(MetricFamily, AnalyticJetMatchesFiniteDifferences) {
    const MetricField fam = metric_family(0.6, sample_bumps());
    const MetricField fd = fam.finite_difference_only();
    std::mt19937_64 rng(14);
    for (int n = 0; n < 50; ++n) {
        const Vec4 x = random_point(rng);
        const Christoffel a = christoffel(fam, x);
        const Christoffel b = christoffel(fd, x);
        for (int k = 0; k < 4; ++k) EXPECT_LT((a[k] - b[k]).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Christoffel, ProductClosedForm) {
    const MetricField g = product_metric();
    for (double a : {-1.1, -0.4, 0.3, 0.9, 1.4}) {
        const Christoffel c = christoffel(g, Vec4(a, 0, 0, 0));
        EXPECT_NEAR(c[kAlpha](kPhi, kPhi), std::sin(a) * std::cos(a), 1e-14);
        EXPECT_NEAR(c[kPhi](kAlpha, kPhi), -std::tan(a), 1e-12);
        EXPECT_EQ(c[kPhi](kAlpha, kPhi), c[kPhi](kPhi, kAlpha));
        const Christoffel f = christoffel(g.finite_difference_only(), Vec4(a, 0, 0, 0));
        for (int k = 0; k < 4; ++k) EXPECT_LT((c[k] - f[k]).cwiseAbs().maxCoeff(), 1e-6);
    }
    const Christoffel z = christoffel(g, Vec4(0, 0, 0, 0));
    for (int k = 0; k < 4; ++k) EXPECT_LT(z[k].cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Christoffel, FlatMetricVanishes) {
    const Christoffel c = christoffel(flat_metric(), Vec4(0.3, 0.2, 1.0, 4.0));
    for (int k = 0; k < 4; ++k) EXPECT_EQ(c[k].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Christoffel, SingularMetricRaises) {
    const MetricField bad("bad", [](const Vec4&) {
        Mat4 g = Mat4::Identity();
        g(3, 3) = 0.0;
        return g;
    });
    EXPECT_THROW(christoffel(bad, Vec4(0, 0, 0, 0)), SingularMetric);
}

TEST(Curvature, ProductSectionalCurvatures) {
    const MetricField g = product_metric();
    const CurvatureTensor r = curvature(g, Vec4(0.3, 0.2, 1, 1));
    EXPECT_NEAR(r.sectional(coord(kAlpha), coord(kPhi)), 1.0, 1e-6);
    EXPECT_NEAR(r.sectional(coord(kBeta), coord(kPsi)), 1.0, 1e-6);
    EXPECT_NEAR(r.sectional(coord(kAlpha), coord(kBeta)), 0.0, 1e-6);
    EXPECT_NEAR(r.sectional(coord(kPhi), coord(kPsi)), 0.0, 1e-6);
    EXPECT_NEAR(r.sectional(coord(kAlpha), coord(kPsi)), 0.0, 1e-6);
    std::mt19937_64 rng(21);
    for (int n = 0; n < 20; ++n) {
        const Vec4 x = random_point(rng);
        const CurvatureTensor q = curvature(g, x);
        EXPECT_NEAR(q.sectional(coord(kAlpha), coord(kPhi)), 1.0, 1e-6);
        EXPECT_NEAR(q.sectional(coord(kBeta), coord(kPsi)), 1.0, 1e-6);
        EXPECT_NEAR(q.sectional(coord(kPhi), coord(kBeta)), 0.0, 1e-6);
    }
}

TEST(Curvature, FlatMetricVanishes) {
    const CurvatureTensor r = curvature(flat_metric(), Vec4(0.1, 0.5, 2, 3));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) EXPECT_LE(std::abs(r.lower.c[i][j][k][l]), 1e-9);
}

TEST(Curvature, SymmetriesOnPerturbedFamily) {
    const MetricField fam = metric_family(0.8, sample_bumps());
    std::mt19937_64 rng(31);
    for (int n = 0; n < 100; ++n) {
        const Vec4 x = random_point(rng, 1.2);
        const CurvatureTensor r = curvature(fam, x);
        double worst = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                    for (int l = 0; l < 4; ++l) {
                        const double v = r.lower.c[i][j][k][l];
                        worst = std::max(worst, std::abs(v + r.lower.c[j][i][k][l]));
                        worst = std::max(worst, std::abs(v + r.lower.c[i][j][l][k]));
                        worst = std::max(worst, std::abs(v - r.lower.c[k][l][i][j]));
                        worst = std::max(worst, std::abs(v + r.lower.c[j][k][i][l] + r.lower.c[k][i][j][l]));
                    }
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(Curvature, ClosedFormAndFiniteDifferencePathsAgree) {
    const MetricField g = product_metric();
    const MetricField f = g.finite_difference_only();
    std::mt19937_64 rng(41);
    for (int n = 0; n < 10; ++n) {
        const Vec4 x = random_point(rng, 1.0);
        const CurvatureTensor a = curvature(g, x);
        const CurvatureTensor b = curvature(f, x);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                    for (int l = 0; l < 4; ++l)
                        EXPECT_NEAR(a.lower.c[i][j][k][l], b.lower.c[i][j][k][l], 1e-6);
    }
}
