#include "flagfol/moduli.hpp"

#include <gtest/gtest.h>

using namespace flagfol;

namespace {

ModuliOptions coarse(int psi_samples = 8, int steps = 1024) {
    ModuliOptions o;
    o.functional.psi_samples = psi_samples;
    o.functional.t_steps = steps;
    return o;
}

PerturbationSpec bump(double amplitude) {
    BumpTerm t;
    t.i = kAlpha;
    t.j = kPsi;
    t.amplitude = amplitude;
    t.center = {0.3, -0.2, 1.0, 2.0};
    t.widths = {0.8, 0.8, 1.2, 1.2};
    return {{t}};
}

Vec2 analytic(double a, double b) { return {std::sin(a), std::sin(b)}; }
Vec2 reflected(double a, double b) { return {std::sin(a), -std::sin(b)}; }

}  // namespace

TEST(Profile, ProductLeafIsConstantOnContinuedBranch) {
    const double a = 1.2, b = -0.9;
    const ProfileCurve c = profile_curve(product_metric(), LeafTorus{a, b}, coarse());
    ASSERT_EQ(c.size(), 9u);
    for (const Vec2& v : c.angles) {
        EXPECT_NEAR(v[0], kTwoPi * std::sin(a), 1e-6);
        EXPECT_NEAR(v[1], kTwoPi * std::sin(b), 1e-6);
    }
}

TEST(Profile, EquatorLeafIsZero) {
    const ProfileCurve c = profile_curve(product_metric(), LeafTorus{0, 0}, coarse());
    for (const Vec2& v : c.angles) EXPECT_LT(v.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Profile, PerturbedProfileCloses) {
    const MetricField m = metric_family(1.0, bump(0.2));
    const ProfileCurve c = profile_curve(m, LeafTorus{0.4, -0.1}, coarse(32, 2048));
    EXPECT_LT(c.closure_gap(), 1e-5);
    double spread = 0.0;
    for (const Vec2& v : c.angles) spread = std::max(spread, (v - c.angles[0]).norm());
    EXPECT_GT(spread, 1e-3);
}

TEST(WField, ProductMatchesSines) {
    for (auto [a, b] : {std::pair{0.0, 0.0}, std::pair{0.5, -0.3}, std::pair{1.3, 1.1}, std::pair{-1.5, 0.7}}) {
        const WValue w = w_field(product_metric(), LeafTorus{a, b}, coarse());
        EXPECT_NEAR(w.w[0], std::sin(a), 1e-4);
        EXPECT_NEAR(w.w[1], std::sin(b), 1e-4);
        EXPECT_NEAR(w.raw[0], kWNormalization * w.w[0], 1e-12);
    }
}

TEST(WField, DeviationBoundedLinearlyInAmplitude) {
    const LeafTorus leaf{0.4, -0.1};
    const Vec2 base = w_field(product_metric(), leaf, coarse(16)).w;
    const double d1 = (w_field(metric_family(1.0, bump(1e-3)), leaf, coarse(16)).w - base).norm();
    const double d2 = (w_field(metric_family(1.0, bump(1e-2)), leaf, coarse(16)).w - base).norm();
    EXPECT_GT(d1, 0.0);
    // Deviation is O(c): the fitted exponent is at least one.
    EXPECT_GE(std::log(d2 / d1) / std::log(10.0), 0.95);
    EXPECT_LT(d2 / 1e-2, 1.0);
}

TEST(BoundaryIndex, AnalyticFields) {
    EXPECT_EQ(boundary_index(grid_from_field(Lattice{17}, analytic)), 1);
    EXPECT_EQ(boundary_index(grid_from_field(Lattice{17}, reflected)), -1);
}

TEST(BoundaryIndex, SmallBoundaryValueRaises) {
    const ModuliGrid g = grid_from_field(Lattice{9}, [](double a, double b) { return 1e-4 * analytic(a, b); });
    EXPECT_THROW(boundary_index(g), BoundaryZero);
}

TEST(FindZeros, AnalyticFieldIndices) {
    const Lattice l{17};
    std::vector<Zero> z = find_zeros(grid_from_field(l, analytic), analytic);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_NEAR(z[0].alpha, 0.0, 1e-9);
    EXPECT_NEAR(z[0].beta, 0.0, 1e-9);
    EXPECT_EQ(z[0].index, 1);
    z = find_zeros(grid_from_field(l, reflected), reflected);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_EQ(z[0].index, -1);
}

TEST(FindZeros, PoincareHopfCount) {
    const PlanarField pair = [](double a, double b) { return Vec2(a * a - 0.25, b); };
    const PlanarField shifted = [](double a, double b) { return Vec2(std::sin(a - 0.37), std::sin(b + 0.21)); };
    for (const PlanarField& f : {pair, shifted, PlanarField(analytic), PlanarField(reflected)}) {
        const ModuliGrid g = grid_from_field(Lattice{16}, f);
        EXPECT_EQ(index_sum(find_zeros(g, f)), boundary_index(g));
    }
    const std::vector<Zero> z = find_zeros(grid_from_field(Lattice{16}, pair), pair);
    ASSERT_EQ(z.size(), 2u);
    EXPECT_NEAR(z[0].alpha, -0.5, 1e-9);
    EXPECT_EQ(z[0].index, -1);
    EXPECT_NEAR(z[1].alpha, 0.5, 1e-9);
    EXPECT_EQ(z[1].index, 1);
}

TEST(FindZeros, DegenerateZeroIsFlagged) {
    const PlanarField cubic = [](double a, double b) { return Vec2(a * a * a, b); };
    const std::vector<Zero> z = find_zeros(grid_from_field(Lattice{15}, cubic), cubic, {1e-5, 200, 1e-15});
    ASSERT_EQ(z.size(), 1u);
    EXPECT_TRUE(z[0].degenerate);
    EXPECT_EQ(z[0].index, 0);
}

TEST(HeFunctional, SingleTermSum) {
    const PlanarField f = [](double a, double b) { return Vec2(std::sin(a - 0.3), std::sin(b + 0.2)); };
    const std::vector<Zero> z = find_zeros(grid_from_field(Lattice{17}, f), f);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_NEAR(he_functional(z, [](double, double) { return 0.7; }), 0.7, 1e-15);
}

TEST(ModuliGrid, ProductMetricSummary) {
    ModuliOptions opt = coarse(4, 1024);
    opt.functional.jobs = 4;
    const ModuliGrid g = build_grid(product_metric(), Lattice{9}, opt);
    EXPECT_LT(max_jump(g), 0.5);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            const LeafTorus l = g.lattice.leaf(g.index(i, j));
            EXPECT_NEAR(g.at(i, j)[0], std::sin(l.alpha), 1e-4);
            EXPECT_NEAR(g.at(i, j)[1], std::sin(l.beta), 1e-4);
            EXPECT_LT((g.at(i, j) + g.at(8 - i, 8 - j)).cwiseAbs().maxCoeff(), 1e-6);
        }
    EXPECT_EQ(boundary_index(g), 1);
    const std::vector<Zero> z = find_zeros(g, w_evaluator(product_metric(), opt));
    ASSERT_EQ(z.size(), 1u);
    EXPECT_EQ(z[0].index, 1);
    EXPECT_NEAR(z[0].alpha, 0.0, 1e-8);
    EXPECT_NEAR(z[0].beta, 0.0, 1e-8);
    EXPECT_NEAR(he_functional(product_metric(), z, opt.functional), 0.0, 1e-4);
}

TEST(ModuliGrid, BoundaryScopeMatchesFull) {
    ModuliOptions opt = coarse(4, 512);
    opt.functional.jobs = 4;
    const MetricField m = metric_family(1.0, bump(0.05));
    const ModuliGrid full = build_grid(m, Lattice{9}, opt);
    const ModuliGrid edge = build_grid(m, Lattice{9}, opt, GridScope::Boundary);
    for (int k = 0; k < 81; ++k) {
        if (on_boundary(full.lattice, k)) EXPECT_EQ(full.w[k], edge.w[k]);
        else EXPECT_FALSE(std::isfinite(edge.w[k][0]));
    }
    EXPECT_EQ(boundary_index(edge), 1);
}

TEST(ModuliGrid, CoarseLatticeAnchorsByContinuation) {
    // Spacing pi/6 puts the node alpha = pi/6 on the angle pi; substeps keep the branch.
    ModuliOptions opt = coarse(4, 512);
    const ModuliGrid g = build_grid(product_metric(), Lattice{7}, opt, GridScope::Boundary);
    EXPECT_EQ(boundary_index(g), 1);
    EXPECT_NEAR(g.at(6, 3)[0], std::sin(g.lattice.coord(6)), 1e-4);
}

TEST(ModuliGrid, EvenLatticeMatchesContinuation) {
    ModuliOptions opt = coarse(4, 512);
    const ModuliGrid g = build_grid(product_metric(), Lattice{6}, opt);
    for (int k = 0; k < 36; ++k) {
        const LeafTorus l = g.lattice.leaf(k);
        EXPECT_NEAR(g.w[k][0], std::sin(l.alpha), 1e-4);
        EXPECT_NEAR(g.w[k][1], std::sin(l.beta), 1e-4);
    }
}

TEST(ModuliGrid, FakeHolonomyShiftsAngles) {
    ModuliOptions opt = coarse(4, 512);
    opt.fake_eps = 0.01;
    const WValue w = w_field(product_metric(), LeafTorus{0.5, 0.2}, opt);
    EXPECT_NEAR(w.w[0], std::sin(0.5) + 0.01 * 0.5 * kTwoPi / kWNormalization, 1e-6);
}
