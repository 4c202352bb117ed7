#include "flagfol/nash.hpp"

#include <gtest/gtest.h>

using namespace flagfol;

namespace {

FunctionalOptions coarse() {
    FunctionalOptions o;
    o.psi_samples = 16;
    o.t_steps = 512;
    return o;
}

DescentOptions coarse_descent() {
    DescentOptions o;
    o.moduli.functional = coarse();
    return o;
}

MetricField descent_metric(double tau) {
    const MetricField m = metric_family(tau, descent_bump());
    return m.with_fd_step(kPullbackFdStep);
}

}  // namespace

TEST(FirstVariation, ZeroFieldIsZero) {
    const double fv = first_variation_h(descent_metric(0.1), DeformationField{}, LeafTorus{0.1, 0.05}, coarse());
    EXPECT_EQ(fv, 0.0);
}

TEST(FirstVariation, ProductEquatorIsStationary) {
    const LeafTorus leaf{0.0, 0.0};
    for (const Candidate& c : stage_candidates(Stage::Tuning, leaf, 1.0, 2.0, coarse_descent())) {
        const double fv = first_variation_h(product_metric(), c.field, leaf, coarse());
        EXPECT_LT(std::abs(fv), 1e-6) << c.label;
    }
}

TEST(FirstVariation, CurvatureAlignedSilencingIsNegative) {
    const MetricField m = descent_metric(0.1);
    const DescentOptions opt = coarse_descent();
    const TrackedZero z = initial_zero(w_evaluator(m, opt.moduli), LeafTorus{0, 0}, opt);
    const LeafTorus leaf{z.alpha, z.beta};
    const LeafValue v = h_leaf(m, leaf, opt.moduli.functional);
    const std::vector<Candidate> cs = stage_candidates(Stage::Silencing, leaf, v.argmax_psi, steepest_time(m, leaf, v.argmax_psi, opt.moduli.functional), opt);
    double best = 0.0;
    for (const Candidate& c : cs) best = std::min(best, first_variation_h(m, c.field, leaf, opt.moduli.functional));
    EXPECT_LT(best, -1e-4);
}

TEST(Labels, RoundTripRebuildsTheField) {
    const LeafTorus leaf{0.12, -0.07};
    const Vec4 x(0.1, -0.05, 1.3, 1.9);
    for (Stage stage : {Stage::Silencing, Stage::Tuning})
        for (const Candidate& c : stage_candidates(stage, leaf, 1.7, 2.2, coarse_descent())) {
            const DeformationField f = field_from_label(leaf, c.label);
            EXPECT_EQ(f(x), c.field(x)) << c.label;
            EXPECT_EQ(f.jet(x).jacobian, c.field.jet(x).jacobian) << c.label;
        }
    EXPECT_THROW(field_from_label(leaf, "tuning_y psi=oops"), ConfigError);
    EXPECT_THROW(field_from_label(leaf, "sideways psi=1"), ConfigError);
}

TEST(Configuration, ExtendMergesRepeatedField) {
    const Configuration c = Configuration::from(descent_metric(0.1));
    const Candidate k = stage_candidates(Stage::Tuning, LeafTorus{0.1, 0.05}, 1.0, 2.0, coarse_descent()).front();
    Configuration merged = c;
    for (int i = 0; i < 5; ++i) merged = merged.extend(k.field, -1e-2, k.label);
    ASSERT_EQ(merged.steps.size(), 1u);
    EXPECT_DOUBLE_EQ(merged.steps[0].delta, -5e-2);
    EXPECT_GE(merged.steps[0].flow_steps, 2);
    Configuration stacked = c;
    for (int i = 0; i < 5; ++i) stacked = stacked.apply(k.field, -1e-2);
    const Vec4 x(0.1, 0.05, 1.2, 2.1);
    EXPECT_LT((merged.metric(x) - stacked.metric(x)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(merged.extend(k.field, 1e-2, "other").steps.size(), 2u);
}

TEST(NashProcess, ProductMetricIsAlreadySilent) {
    const DescentTrace t = nash_process([](double) { return product_metric(); }, {0.0}, 50, coarse_descent());
    EXPECT_EQ(t.outcome, DescentOutcome::Silent);
    ASSERT_EQ(t.h.size(), 1u);
    EXPECT_LT(t.h[0], 1e-4);
    EXPECT_TRUE(t.records.empty());
    EXPECT_TRUE(t.config.steps.empty());
}

TEST(NashProcess, ShortDescentIsMonotoneAndBalanced) {
    const DescentOptions opt = coarse_descent();
    const DescentTrace t = nash_process(descent_metric, {kDescentTau}, 6, opt);
    ASSERT_NE(t.outcome, DescentOutcome::ZeroLost) << t.message;
    EXPECT_LE(t.records.size(), 6u);
    EXPECT_GE(t.accepted(), 1);
    EXPECT_LT(t.final(), t.initial());
    for (std::size_t k = 1; k < t.h.size(); ++k) EXPECT_LT(t.h[k], t.h[k - 1]);
    for (const TraceRecord& r : t.records) {
        if (!r.accepted) continue;
        EXPECT_LT(r.h_after, r.h_before);
        ASSERT_TRUE(r.w_leaf.has_value());
        EXPECT_LT(r.w_leaf->norm(), opt.w_balance);
    }
}

TEST(NashProcess, ResumeContinuesFromState) {
    const DescentOptions opt = coarse_descent();
    const DescentTrace first = nash_process(descent_metric, {kDescentTau}, 2, opt);
    NashState s;
    s.config = first.config;
    s.leaf = first.leaf;
    s.zero = first.zero;
    s.tau = kDescentTau;
    const DescentTrace more = nash_resume(descent_metric, {kDescentTau}, 2, opt, s);
    EXPECT_DOUBLE_EQ(more.initial(), first.final());
    EXPECT_LE(more.final(), more.initial());
}

TEST(NashProcess, RejectsBadArguments) {
    EXPECT_THROW(nash_process(descent_metric, {}, 5), ConfigError);
    EXPECT_THROW(nash_process(descent_metric, {kDescentTau}, -1), ConfigError);
}

TEST(Zero, LocateFollowsAShiftedField) {
    const DescentOptions opt;
    const PlanarField w = [](double a, double b) { return Vec2(std::sin(a - 0.05), std::sin(b + 0.02)); };
    TrackedZero start{0.0, 0.0, Mat2::Identity()};
    const TrackedZero z = locate_zero(w, start, opt);
    EXPECT_NEAR(z.alpha, 0.05, 1e-3);
    EXPECT_NEAR(z.beta, -0.02, 1e-3);
    const PlanarField none = [](double, double) { return Vec2(1.0, 0.0); };
    EXPECT_THROW(locate_zero(none, start, opt), ZeroLost);
    const PlanarField saddle = [](double a, double b) { return Vec2(a, -b); };
    EXPECT_THROW(initial_zero(saddle, LeafTorus{0.01, 0.01}, opt), ZeroLost);
}
