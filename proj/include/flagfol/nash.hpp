#pragma once

#include "flagfol/deform.hpp"

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace flagfol {

inline constexpr double kWBalance = 1e-2;
inline constexpr int kArmijoHalvings = 8;
inline constexpr double kFirstVariationDelta = 1e-3;
inline constexpr double kEquidistantTol = 1e-3;
// Finite-difference step for Christoffel symbols of pulled-back metrics. The default
// step leaves truncation errors that trip the transport drift guard on the bump family.
inline constexpr double kPullbackFdStep = 1e-5;

// Single phi-psi bump of the reference descent family, used at tau = 0.05.
inline PerturbationSpec descent_bump() {
    BumpTerm b;
    b.i = kPhi;
    b.j = kPsi;
    b.amplitude = 1.0;
    b.center = {0.15, 0.1, 1.0, 2.5};
    b.widths = {0.5, 0.5, 0.8, 0.8};
    return {{b}};
}

inline constexpr double kDescentTau = 0.05;

struct DescentOptions {
    ModuliOptions moduli;
    double w_balance = kWBalance;
    double tol_step = 0.0;      // an accepted step must lower h by more than this
    double h_tol = 1e-4;        // h at or below this counts as silent
    double fd_delta = kFirstVariationDelta;
    int flow_steps = kDefaultFlowSteps;
    double silencing_lambda = 4.0;
    double tune_half_width = 1.5;  // psi half-width of the tuning window
    double rho = 0.5;              // silencing sweep ends once the higher harmonics shrink by this factor
    int sweep_steps = 10;          // step attempts per sweep
    double collapse_bound = 1.0;   // partition condition: |h(tau_k+1) - h(tau_k)| <= collapse_bound / 2
    int max_refinements = 6;
    double zero_tol = 1e-3;  // above the labelling jumps of W near the equator, below w_balance
    int zero_iters = 20;
    double zero_reach = 0.25;  // the tracked zero may not move further than this in one step
};

// Central difference of h_leaf along the time-delta flows of the field.
inline double first_variation_h(const MetricField& metric, const DeformationField& field, const LeafTorus& leaf,
                                const FunctionalOptions& opt = {}, double delta = kFirstVariationDelta,
                                int flow_steps = kDefaultFlowSteps) {
    const double up = h_leaf(pullback(metric, field, delta, flow_steps), leaf, opt).value;
    const double down = h_leaf(pullback(metric, field, -delta, flow_steps), leaf, opt).value;
    return (up - down) / (2.0 * delta);
}

// Tuning function sin(t - t_c) windowed to |psi - psi_c| < half_width.
inline TuneFunction windowed_tune(double psi_c, double t_c, double half_width) {
    return [=](double psi, double t) {
        const auto [a, da] = plateau(wrap_pi(psi - psi_c) / half_width, 0.5);
        const double s = std::sin(t - t_c), c = std::cos(t - t_c);
        return TuneValue{a * s, da / half_width * s, a * c};
    };
}

enum class Stage { Silencing, Tuning };

inline const char* stage_name(Stage s) { return s == Stage::Silencing ? "silencing" : "tuning"; }

struct Candidate {
    Stage stage = Stage::Silencing;
    std::string label;
    DeformationField field;
    double first_variation = 0.0;
};

// Where the extremal loop turns fastest: the t of the longest chord of its plane curve.
inline double steepest_time(const MetricField& metric, const LeafTorus& leaf, double psi,
                            const FunctionalOptions& opt) {
    const PlaneCurve c = plane_curve(metric, leaf, psi, opt);
    std::size_t best = 1;
    double longest = -1.0;
    for (std::size_t k = 1; k < c.size(); ++k) {
        const double d = plane_distance(c.planes[k - 1], c.planes[k]);
        if (d > longest) {
            longest = d;
            best = k;
        }
    }
    return 0.5 * (c.t[best - 1] + c.t[best]);
}

// Fields of one stage placed at the extremal loop (psi*, t*) of the leaf: silencing
// templates along d_alpha and d_beta, or X and Y tuning windows.
inline std::vector<Candidate> stage_candidates(Stage stage, const LeafTorus& leaf, double psi_star, double t_star,
                                               const DescentOptions& opt) {
    std::vector<Candidate> out;
    if (stage == Stage::Silencing) {
        const double lam = opt.silencing_lambda, ht = kPi / lam, hp = 0.5 * kPi / lam;
        const double t0 = std::clamp(t_star, ht, kTwoPi - ht), psi0 = std::clamp(psi_star, hp, kTwoPi - hp);
        for (int dir : {kAlpha, kBeta}) {
            Candidate c;
            c.stage = stage;
            c.label = std::string("silencing d_") + coordinate_name(dir) + " t0=" + show(t0, 17) +
                      " psi0=" + show(psi0, 17) + " lambda=" + show(lam, 17);
            c.field = silencing_field(leaf, t0, psi0, lam, dir);
            out.push_back(std::move(c));
        }
    } else {
        for (TuneAxis axis : {TuneAxis::Y, TuneAxis::X}) {
            Candidate c;
            c.stage = stage;
            c.label = std::string(axis == TuneAxis::Y ? "tuning_y" : "tuning_x") + " psi=" + show(psi_star, 17) +
                      " t=" + show(t_star, 17) + " width=" + show(opt.tune_half_width, 17);
            c.field = tuning_field(leaf, windowed_tune(psi_star, t_star, opt.tune_half_width), axis);
            out.push_back(std::move(c));
        }
    }
    return out;
}

// Rebuilds a candidate field of the leaf from its label.
inline DeformationField field_from_label(const LeafTorus& leaf, const std::string& label) {
    std::istringstream in(label);
    std::string kind, dir;
    in >> kind;
    if (kind == "silencing") in >> dir;
    std::map<std::string, double> p;
    for (std::string kv; in >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed field label: " + label);
        try {
            p[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("malformed field label: " + label);
        }
    }
    auto get = [&](const char* key) {
        const auto it = p.find(key);
        if (it == p.end()) throw ConfigError("field label lacks " + std::string(key) + ": " + label);
        return it->second;
    };
    if (kind == "silencing") {
        const int k = dir.rfind("d_", 0) == 0 ? coordinate_index(dir.substr(2)) : -1;
        if (k != kAlpha && k != kBeta) throw ConfigError("silencing label needs d_alpha or d_beta: " + label);
        return silencing_field(leaf, get("t0"), get("psi0"), get("lambda"), k);
    }
    if (kind == "tuning_y" || kind == "tuning_x")
        return tuning_field(leaf, windowed_tune(get("psi"), get("t"), get("width")),
                            kind == "tuning_y" ? TuneAxis::Y : TuneAxis::X);
    throw ConfigError("unknown field kind in label: " + label);
}

// Discrete boundary-curve energy of the profile: sum |angle increment|^2 / d psi.
inline double profile_energy(const ProfileCurve& c) {
    double e = 0.0;
    for (std::size_t j = 1; j < c.size(); ++j)
        e += (c.angles[j] - c.angles[j - 1]).squaredNorm() / (c.psi[j] - c.psi[j - 1]);
    return e;
}

// |dist(L, Pi) - dist(L, N)| for the basepoint plane L of the loop at psi against the
// invariant planes of its holonomy.
inline double equidistant_gap(const MetricField& metric, const LeafTorus& leaf, double psi,
                              const FunctionalOptions& opt) {
    const LeafLoop ll = leaf_loop(metric, leaf, psi, opt);
    const HolonomyDecomposition d = decompose_holonomy(ll.transport.holonomy.matrix);
    const TwoPlane l = plane_curve(ll).planes.front();
    return std::abs(plane_distance(l, TwoPlane::span(d.plane_pi)) - plane_distance(l, TwoPlane::span(d.plane_n)));
}

struct TrackedZero {
    double alpha = 0.0;
    double beta = 0.0;
    Mat2 jacobian = Mat2::Identity();
    double residual = 0.0;
};

// Chord iteration from `start` with a frozen Jacobian; ZeroLost when it does not
// settle within the reach of the start.
inline TrackedZero locate_zero(const PlanarField& w, const TrackedZero& start, const DescentOptions& opt) {
    TrackedZero z = start;
    const auto solver = start.jacobian.partialPivLu();
    for (int it = 0; it <= opt.zero_iters; ++it) {
        const Vec2 v = w(z.alpha, z.beta);
        z.residual = v.norm();
        if (z.residual < opt.zero_tol) return z;
        if (it == opt.zero_iters) break;
        const Vec2 step = solver.solve(v);
        z.alpha -= step[0];
        z.beta -= step[1];
        if (std::hypot(z.alpha - start.alpha, z.beta - start.beta) > opt.zero_reach) break;
    }
    throw ZeroLost("no zero of W within " + show(opt.zero_reach) + " of (" + show(start.alpha) + ", " +
                   show(start.beta) + "), residual " + show(z.residual));
}

// Newton search for the index +1 zero nearest to a leaf, with a fresh Jacobian.
inline TrackedZero initial_zero(const PlanarField& w, const LeafTorus& near, const DescentOptions& opt) {
    const double h = 1e-4;
    TrackedZero z{near.alpha, near.beta};
    for (int it = 0; it < opt.zero_iters; ++it) {
        z.jacobian = detail::fd_jacobian(w, z.alpha, z.beta, h);
        const Vec2 v = w(z.alpha, z.beta);
        z.residual = v.norm();
        if (z.residual < opt.zero_tol) break;
        const Vec2 step = z.jacobian.partialPivLu().solve(v);
        z.alpha -= step[0];
        z.beta -= step[1];
    }
    if (!(z.residual < opt.zero_tol) || std::hypot(z.alpha - near.alpha, z.beta - near.beta) > opt.zero_reach)
        throw ZeroLost("no zero of W near (" + show(near.alpha) + ", " + show(near.beta) + ")");
    z.jacobian = detail::fd_jacobian(w, z.alpha, z.beta, h);
    if (!(z.jacobian.determinant() > 0.0)) throw ZeroLost("zero near the leaf does not have index +1");
    return z;
}

// One record per step attempt; rejected attempts carry the last trial.
struct TraceRecord {
    int step = 0;
    double tau = 0.0;
    std::string stage;
    std::string field;
    double first_variation = 0.0;
    double delta = 0.0;
    double h_before = 0.0;
    double h_after = 0.0;
    bool accepted = false;
    std::optional<Vec2> w_leaf;  // W at the descended leaf, when the trial got that far
    double zero_alpha = 0.0;
    double zero_beta = 0.0;
    double energy = 0.0;
    double harmonics = 0.0;
    double equidistant_gap = 0.0;
    std::string note;
    std::string zero_lost;  // set when the zero could not be re-located after this step
};

enum class DescentOutcome { Silent, Budget, Stall, ZeroLost };

inline const char* outcome_name(DescentOutcome o) {
    switch (o) {
        case DescentOutcome::Silent: return "silent";
        case DescentOutcome::Budget: return "budget";
        case DescentOutcome::Stall: return "stall";
        case DescentOutcome::ZeroLost: return "zero_lost";
    }
    return "unknown";
}

struct DescentTrace {
    LeafTorus leaf;               // descended leaf: the index +1 zero of the undeformed metric
    std::vector<double> h;        // h_leaf before the first step and after every accepted step
    std::vector<double> tau;      // partition point of every entry of h
    std::vector<TraceRecord> records;
    DescentOutcome outcome = DescentOutcome::Budget;
    std::string message;
    TrackedZero zero;
    Configuration config;  // deformed configuration at the end of the run

    double initial() const { return h.front(); }
    double final() const { return h.back(); }
    int accepted() const { return static_cast<int>(h.size()) - 1; }
};

// Descent state: the deformed configuration, the descended leaf and the tracked zero.
struct NashState {
    Configuration config;
    LeafTorus leaf;
    TrackedZero zero;
    LeafValue value;
    double tau = 0.0;
    int attempts = 0;
};

namespace detail {

struct Trial {
    double delta = 0.0;
    double h = 0.0;
    std::optional<Vec2> w;
    bool accepted = false;
    std::string note;
    std::optional<Configuration> config;
    std::optional<LeafValue> value;
};

// Armijo-style backtracking along one field: delta = sign * cap / 2^k, k = 0..8; the
// first trial that lowers h by more than tol_step with a balanced W is kept.
inline Trial backtrack(const NashState& s, const Candidate& c, double sign, const DescentOptions& opt) {
    Trial out;
    for (int k = 0; k <= kArmijoHalvings; ++k) {
        const double delta = sign * kMaxDeformationStep / std::pow(2.0, k);
        out.delta = delta;
        out.w.reset();
        try {
            Configuration next = s.config.extend(c.field, delta, c.label, opt.flow_steps);
            const LeafValue v = h_leaf(next.metric, s.leaf, opt.moduli.functional);
            out.h = v.value;
            if (!(v.value < s.value.value - opt.tol_step)) continue;
            out.w = w_field(next.metric, s.leaf, opt.moduli).w;
            if (!(out.w->norm() < opt.w_balance)) {
                out.note = "balance";
                continue;
            }
            out.accepted = true;
            out.config = std::move(next);
            out.value = v;
            return out;
        } catch (const StepSizeTooCoarse& e) {
            out.note = e.kind();
        } catch (const PositivityLost& e) {
            out.note = e.kind();
        } catch (const SingularMetric& e) {
            out.note = e.kind();
        }
    }
    return out;
}

}  // namespace detail

// One step attempt along a ranked candidate. Returns the record; on acceptance the
// state moves to the deformed configuration and the zero is re-located.
inline TraceRecord nash_step(NashState& s, const Candidate& c, const DescentOptions& opt) {
    TraceRecord r;
    r.step = ++s.attempts;
    r.tau = s.tau;
    r.stage = stage_name(c.stage);
    r.field = c.label;
    r.first_variation = c.first_variation;
    r.h_before = s.value.value;
    const double sign = c.first_variation > 0.0 ? -1.0 : 1.0;
    detail::Trial t = detail::backtrack(s, c, sign, opt);
    r.delta = t.delta;
    r.h_after = t.accepted ? t.value->value : t.h;
    r.w_leaf = t.w;
    r.note = t.note;
    r.zero_alpha = s.zero.alpha;
    r.zero_beta = s.zero.beta;
    if (!t.accepted) return r;
    r.accepted = true;
    s.config = std::move(*t.config);
    s.value = std::move(*t.value);
    try {
        s.zero = locate_zero(w_evaluator(s.config.metric, opt.moduli), s.zero, opt);
    } catch (const ZeroLost& e) {
        r.zero_lost = e.what();
        return r;
    }
    r.zero_alpha = s.zero.alpha;
    r.zero_beta = s.zero.beta;
    return r;
}

// Candidates of a stage at the current extremal loop, ranked by |first variation|.
inline std::vector<Candidate> ranked_candidates(const NashState& s, Stage stage, const DescentOptions& opt) {
    const FunctionalOptions& fo = opt.moduli.functional;
    const double t_star = steepest_time(s.config.metric, s.leaf, s.value.argmax_psi, fo);
    std::vector<Candidate> cs = stage_candidates(stage, s.leaf, s.value.argmax_psi, t_star, opt);
    for (Candidate& c : cs) c.first_variation = first_variation_h(s.config.metric, c.field, s.leaf, fo, opt.fd_delta, opt.flow_steps);
    std::stable_sort(cs.begin(), cs.end(), [](const Candidate& a, const Candidate& b) {
        return std::abs(a.first_variation) > std::abs(b.first_variation);
    });
    return cs;
}

inline double harmonics_of(const MetricField& metric, const LeafTorus& leaf, const ModuliOptions& opt) {
    return higher_harmonics(fourier_split(x_functions(metric, leaf, opt)));
}

namespace detail {

inline MetricField descent_member(const std::function<MetricField(double)>& family, double tau) {
    const MetricField m = family(tau);
    return m.with_fd_step(std::min(m.fd_step(), kPullbackFdStep));
}

inline void lose_zero(DescentTrace& trace, const NashState& s, const std::string& message) {
    trace.outcome = DescentOutcome::ZeroLost;
    trace.message = message;
    trace.zero = s.zero;
    trace.config = s.config;
}

// Sweeps at one partition member until silent, out of budget, stalled or zero lost.
// Returns false when the run must stop.
inline bool sweep_member(NashState& s, int budget, const DescentOptions& opt, DescentTrace& trace) {
    const FunctionalOptions& fo = opt.moduli.functional;
    Stage stage = Stage::Silencing;
    int idle_sweeps = 0;
    while (true) {
        if (s.value.value <= opt.h_tol) {
            trace.outcome = DescentOutcome::Silent;
            return true;
        }
        if (s.attempts >= budget) {
            trace.outcome = DescentOutcome::Budget;
            return false;
        }
        const std::vector<Candidate> cs = ranked_candidates(s, stage, opt);
        const double energy = profile_energy(profile_curve(s.config.metric, s.leaf, opt.moduli));
        const double gap = equidistant_gap(s.config.metric, s.leaf, s.value.argmax_psi, fo);
        const double harm0 = stage == Stage::Silencing ? harmonics_of(s.config.metric, s.leaf, opt.moduli) : 0.0;
        double harm = harm0;
        bool any = false, done = false;
        int sweep = 0;
        for (const Candidate& c : cs) {
            while (sweep < opt.sweep_steps && s.attempts < budget && s.value.value > opt.h_tol) {
                TraceRecord r = nash_step(s, c, opt);
                ++sweep;
                r.energy = energy;
                r.equidistant_gap = gap;
                if (gap > kEquidistantTol) r.note += r.note.empty() ? "equidistant_open" : ",equidistant_open";
                if (r.accepted && stage == Stage::Silencing) harm = harmonics_of(s.config.metric, s.leaf, opt.moduli);
                r.harmonics = harm;
                trace.records.push_back(r);
                if (!r.accepted) break;
                any = true;
                trace.h.push_back(s.value.value);
                trace.tau.push_back(s.tau);
                if (!r.zero_lost.empty()) {
                    lose_zero(trace, s, r.zero_lost);
                    return false;
                }
                if (stage == Stage::Silencing && harm <= opt.rho * harm0) {
                    done = true;
                    break;
                }
            }
            if (done || sweep >= opt.sweep_steps) break;
        }
        idle_sweeps = any ? 0 : idle_sweeps + 1;
        if (idle_sweeps >= 2) {
            trace.outcome = DescentOutcome::Stall;
            trace.message = "no admissible step lowers h_leaf by more than " + show(opt.tol_step);
            return false;
        }
        stage = stage == Stage::Silencing ? Stage::Tuning : Stage::Silencing;
    }
}

// Moves the state to the next partition member. Midpoints are inserted while the
// jump of h exceeds half the collapse bound.
inline bool advance_member(NashState& s, const std::function<MetricField(double)>& family, std::vector<double>& taus,
                           std::size_t k, const DescentOptions& opt, DescentTrace& trace) {
    const FunctionalOptions& fo = opt.moduli.functional;
    Configuration next = s.config.rebased(descent_member(family, taus[k]));
    LeafValue v = h_leaf(next.metric, s.leaf, fo);
    for (int r = 0; r < opt.max_refinements && std::abs(v.value - s.value.value) > 0.5 * opt.collapse_bound; ++r) {
        const double mid = 0.5 * (s.tau + taus[k]);
        taus.insert(taus.begin() + static_cast<std::ptrdiff_t>(k), mid);
        next = s.config.rebased(descent_member(family, mid));
        v = h_leaf(next.metric, s.leaf, fo);
    }
    s.tau = taus[k];
    s.config = std::move(next);
    s.value = std::move(v);
    try {
        s.zero = locate_zero(w_evaluator(s.config.metric, opt.moduli), s.zero, opt);
    } catch (const ZeroLost& e) {
        lose_zero(trace, s, e.what());
        return false;
    }
    trace.h.push_back(s.value.value);
    trace.tau.push_back(s.tau);
    return true;
}

inline DescentTrace run_descent(NashState s, const std::function<MetricField(double)>& family,
                                std::vector<double> taus, int budget, const DescentOptions& opt) {
    DescentTrace trace;
    trace.leaf = s.leaf;
    trace.zero = s.zero;
    trace.h.push_back(s.value.value);
    trace.tau.push_back(s.tau);
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (k > 0 && !advance_member(s, family, taus, k, opt, trace)) return trace;
        const bool go_on = sweep_member(s, budget, opt, trace);
        trace.zero = s.zero;
        trace.config = s.config;
        if (!go_on) break;
    }
    return trace;
}

}  // namespace detail

// Alternating silencing and tuning sweeps over a partition of the family parameter.
// Each sweep ranks its candidates once and walks down the ranking; a candidate is
// kept while its steps are accepted. The budget counts step attempts. The run ends
// silent (h <= h_tol), on the budget, on a stall (two consecutive sweeps without an
// accepted step), or when the tracked zero is lost. The descended leaf is the index
// +1 zero of the first partition member nearest to the equator leaf.
inline DescentTrace nash_process(const std::function<MetricField(double)>& family, const std::vector<double>& partition,
                                 int budget, const DescentOptions& opt = {}) {
    if (partition.empty()) throw ConfigError("descent partition is empty");
    if (budget < 0) throw ConfigError("descent budget must be non-negative");
    NashState s;
    s.tau = partition.front();
    s.config = Configuration::from(detail::descent_member(family, s.tau));
    try {
        s.zero = initial_zero(w_evaluator(s.config.metric, opt.moduli), LeafTorus{0.0, 0.0}, opt);
    } catch (const ZeroLost& e) {
        DescentTrace trace;
        detail::lose_zero(trace, s, e.what());
        return trace;
    }
    s.leaf = LeafTorus{s.zero.alpha, s.zero.beta};
    s.value = h_leaf(s.config.metric, s.leaf, opt.moduli.functional);
    return detail::run_descent(std::move(s), family, partition, budget, opt);
}

// Continues a descent from a saved state; partition members below the state's tau are skipped.
inline DescentTrace nash_resume(const std::function<MetricField(double)>& family, const std::vector<double>& partition,
                                int budget, const DescentOptions& opt, NashState s) {
    if (budget < 0) throw ConfigError("descent budget must be non-negative");
    std::vector<double> taus{s.tau};
    for (double t : partition)
        if (t > s.tau) taus.push_back(t);
    s.value = h_leaf(s.config.metric, s.leaf, opt.moduli.functional);
    return detail::run_descent(std::move(s), family, taus, budget, opt);
}

// Throws the error matching a failed outcome.
inline void raise_if_failed(const DescentTrace& t) {
    if (t.outcome == DescentOutcome::Stall) throw StallDetected(t.message);
    if (t.outcome == DescentOutcome::ZeroLost) throw ZeroLost(t.message);
}

}  // namespace flagfol
