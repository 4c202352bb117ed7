#include "flagfol/functional.hpp"

#include <gtest/gtest.h>

using namespace flagfol;

namespace {

PerturbationSpec localized_bump(double amplitude) {
    BumpTerm t;
    t.i = kPhi;
    t.j = kPsi;
    t.amplitude = amplitude;
    t.center = {0.15, 0.1, 1.0, 2.5};
    t.widths = {0.5, 0.5, 0.8, 0.8};
    return {{t}};
}

double circular_gap(double a, double b) { return std::abs(wrap_pi(a - b)); }

}  // namespace

TEST(LeafTorus, AreaElementOfProductLeaf) {
    const LeafTorus leaf{0.4, -0.7};
    for (double psi : {0.0, 2.0}) {
        for (double t : {0.3, 4.0}) {
            EXPECT_NEAR(leaf.area_element(product_metric(), psi, t), std::cos(0.4) * std::cos(0.7), 1e-14);
        }
    }
}

TEST(TangentPlane, EquatorLeafSpansFactorTangents) {
    const TwoPlane p = tangent_plane(product_metric(), LeafTorus{0, 0}, 0.3, 1.1);
    // Standard frame order is (alpha, phi, beta, psi).
    EXPECT_TRUE(p.same_as(TwoPlane::span(Vec4::Unit(1), Vec4::Unit(3))));
}

TEST(TangentPlane, InteriorProductLeafSpansFactorTangents) {
    const TwoPlane p = tangent_plane(product_metric(), LeafTorus{0.5, -1.1}, 2.0, 0.4);
    EXPECT_TRUE(p.same_as(TwoPlane::span(Vec4::Unit(1), Vec4::Unit(3))));
}

TEST(TangentPlane, CollapsedParallelRaises) {
    EXPECT_THROW(tangent_plane(product_metric(), LeafTorus{kPi / 2 - 1e-9, 0.2}, 0, 0), DegenerateLeaf);
    EXPECT_THROW(h_gamma(product_metric(), LeafTorus{0.1, -(kPi / 2 - 1e-9)}, 0), DegenerateLeaf);
}

TEST(HGamma, EquatorLeafIsSilent) {
    for (double psi : {0.0, 1.7, 4.4}) EXPECT_LT(h_gamma(product_metric(), LeafTorus{0, 0}, psi), 1e-6);
}

TEST(HGamma, LatitudeLeafLength) {
    EXPECT_NEAR(h_gamma(product_metric(), LeafTorus{kPi / 6, 0}, 0.0), kPi, 1e-3);
    const double h = h_gamma(product_metric(), LeafTorus{0, 1.45}, 0.0);
    EXPECT_NEAR(h, kTwoPi * std::sin(1.45), 1e-3);
    EXPECT_GT(h, 6.23);
}

TEST(HGamma, ProductLeafClosedForm) {
    for (auto [a, b] : {std::pair{0.3, 0.8}, std::pair{-1.0, 0.2}, std::pair{1.2, -1.3}}) {
        const double expect = kTwoPi * std::hypot(std::sin(a), std::sin(b));
        EXPECT_NEAR(h_gamma(product_metric(), LeafTorus{a, b}, 0.9), expect, 1e-3);
    }
}

TEST(HGamma, FlatMetricCurveIsConstant) {
    const PlaneCurve c = plane_curve(flat_metric(), LeafTorus{0.4, 0.6}, 1.0);
    for (std::size_t k = 0; k < c.size(); k += 128) EXPECT_TRUE(c.planes[k].same_as(c.planes[0], 1e-12));
}

TEST(HGamma, InvariantUnderPsiShiftForProduct) {
    const LeafTorus leaf{0.7, -0.4};
    const double ref = h_gamma(product_metric(), leaf, 0.0);
    for (double psi : {0.5, 2.2, 3.9, 6.0}) EXPECT_NEAR(h_gamma(product_metric(), leaf, psi), ref, 1e-6);
}

TEST(HGamma, DominatesEndpointChord) {
    const MetricField m = metric_family(1.0, localized_bump(0.3));
    for (double psi : {0.0, 1.5, 3.0}) {
        const PlaneCurve c = plane_curve(m, LeafTorus{0.2, 0.1}, psi);
        EXPECT_GE(curve_length(c) + 1e-12, plane_distance(c.planes.front(), c.planes.back()));
    }
}

TEST(HGamma, RefinementStability) {
    const MetricField m = metric_family(1.0, localized_bump(0.3));
    FunctionalOptions fine;
    fine.t_steps = 2 * kDefaultTransportSteps;
    for (double psi : {1.5, 4.0}) {
        const LeafTorus leaf{0.1, -0.2};
        EXPECT_LT(std::abs(h_gamma(m, leaf, psi) - h_gamma(m, leaf, psi, fine)), 1e-4);
    }
}

TEST(HLeaf, ProductLeafHasFullExtremalSet) {
    FunctionalOptions opt;
    opt.psi_samples = 16;
    const LeafValue v = h_leaf(product_metric(), LeafTorus{0.5, 0.3}, opt);
    EXPECT_NEAR(v.value, kTwoPi * std::hypot(std::sin(0.5), std::sin(0.3)), 1e-3);
    EXPECT_EQ(v.extremal_psi.size(), 16u);
}

TEST(HLeaf, EquatorLeafIsSilent) {
    EXPECT_LT(h_leaf(product_metric(), LeafTorus{0, 0}).value, 1e-4);
}

TEST(HLeaf, BumpExtremalsLocalizedNearBump) {
    // Wiring curve psi passes (phi, psi) = (t, psi + t); it meets the bump near psi = 2.5 - 1.0.
    const MetricField m = metric_family(1.0, localized_bump(0.3));
    FunctionalOptions opt;
    opt.psi_samples = 32;
    opt.t_steps = 1024;
    const LeafValue v = h_leaf(m, LeafTorus{0, 0}, opt);
    EXPECT_GT(v.value, 1e-3);
    ASSERT_FALSE(v.extremal_psi.empty());
    for (double psi : v.extremal_psi) EXPECT_LT(circular_gap(psi, 1.5), 1.0);
    EXPECT_LT(circular_gap(v.argmax_psi, 1.5), 1.0);
    // Loops that miss the support see the product metric and stay silent.
    EXPECT_LT(h_gamma(m, LeafTorus{0, 0}, 1.5 + kPi, opt), 1e-6);
}

TEST(HGlobal, ProductMinimumAtEquatorLeaf) {
    FunctionalOptions opt;
    opt.psi_samples = 4;
    opt.t_steps = 512;
    opt.jobs = 4;
    const GlobalValue g = h_global(product_metric(), Lattice{5}, opt);
    EXPECT_LT(g.value, 1e-4);
    EXPECT_NEAR(g.argmin.alpha, 0.0, 1e-12);
    EXPECT_NEAR(g.argmin.beta, 0.0, 1e-12);
}

TEST(HGlobal, FlatMetricIsSilentEverywhere) {
    FunctionalOptions opt;
    opt.psi_samples = 4;
    opt.t_steps = 256;
    const GlobalValue g = h_global(flat_metric(), Lattice{3}, opt);
    for (double h : g.h) EXPECT_LT(h, 1e-9);
}

TEST(HGlobal, ParallelSweepMatchesSerial) {
    const MetricField m = metric_family(1.0, localized_bump(0.3));
    FunctionalOptions opt;
    opt.psi_samples = 4;
    opt.t_steps = 512;
    const GlobalValue serial = h_global(m, Lattice{3}, opt);
    opt.jobs = 3;
    const GlobalValue par = h_global(m, Lattice{3}, opt);
    EXPECT_EQ(serial.h, par.h);
}

TEST(LiftEnergy, EquatorLeafLiftIsParallel) {
    const LiftEnergy e = t_ma_va(product_metric(), LeafTorus{0, 0}, 0.4);
    EXPECT_LT(e.energy, 1e-10);
    EXPECT_LT(e.plane_energy, 1e-10);
}

TEST(LiftEnergy, LatitudeLeafClosedForms) {
    for (double a : {0.3, 0.8, 1.2}) {
        const LiftEnergy e = t_ma_va(product_metric(), LeafTorus{a, 0}, 0.0);
        const double s2 = std::sin(a) * std::sin(a), c2 = std::cos(a) * std::cos(a);
        // The unit leaf normal of the wiring curve tilts with the first factor only.
        EXPECT_NEAR(e.energy, kTwoPi * s2 / (1.0 + c2), 1e-3);
        // The full tangent plane turns at speed sin a.
        EXPECT_NEAR(e.plane_energy, kTwoPi * s2, 1e-3);
    }
}

TEST(LiftEnergy, CauchySchwarzBound) {
    const MetricField m = metric_family(1.0, localized_bump(0.3));
    for (double psi : {0.0, 1.5}) {
        const LiftEnergy e = t_ma_va(m, LeafTorus{0.3, 0.1}, psi);
        EXPECT_GE(e.energy + 1e-12, e.lift_length * e.lift_length / kTwoPi);
    }
}

TEST(LiftEnergy, SupremumOverPsiGrid) {
    FunctionalOptions opt;
    opt.psi_samples = 8;
    opt.t_steps = 512;
    const double a = 0.6;
    EXPECT_NEAR(st_ma_va(product_metric(), LeafTorus{a, 0}, opt),
                t_ma_va(product_metric(), LeafTorus{a, 0}, 0.0, opt).energy, 1e-9);
}
