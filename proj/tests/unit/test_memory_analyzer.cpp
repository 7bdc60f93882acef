#include <gtest/gtest.h>

#include <random>

#include "qwzmem/memory_analyzer.hpp"

using namespace qwzmem;

namespace {

VorticitySeries make_series(std::vector<int> idx, double dt = 1.0) {
    VorticitySeries s;
    s.dt = dt;
    for (std::size_t i = 0; i < idx.size(); ++i) s.times.push_back(i * dt);
    s.indices = idx;
    s.raw_windings = idx;
    s.rotations.assign(idx.size(), 0.0);
    return s;
}

QuenchProtocol quench(double m_quench, double t_max = 20.0, double delay = 0.0) {
    return {MassParameter{3}, MassParameter{m_quench}, t_max, 0.01, Gauge::b, delay};
}

const MomentumPoint pipi{pi, pi};
const MomentumPoint origin{0, 0};

}  // namespace

TEST(FlipTimes, ConstantSeriesHasNone) {
    EXPECT_TRUE(flip_times(make_series({1, 1, 1, 1})).empty());
    EXPECT_TRUE(flip_times(make_series({0, 0, 0})).empty());
    EXPECT_THROW(flip_times(make_series({})), std::invalid_argument);
}

TEST(FlipTimes, SingleTransitionMidpoint) {
    const auto f = flip_times(make_series({1, 1, -1, -1}));
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0], 1.5);
}

TEST(FlipTimes, LeadingZerosAreNotAFlip) {
    const auto f = flip_times(make_series({0, 0, 1, 1, -1}));
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0], 3.5);
}

TEST(FlipTimes, ShortZeroCrossingIsDebounced) {
    auto f = flip_times(make_series({1, 1, 0, -1, -1}));
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0], 2.0);  // midpoint of the last +1 and the first -1
    f = flip_times(make_series({1, 1, 0, 0, 1, 1}));
    EXPECT_TRUE(f.empty());
    f = flip_times(make_series({1, 0, 0, 0, -1}));
    EXPECT_EQ(f.size(), 2u);  // a three-sample zero plateau is real
}

TEST(EstimatePeriod, UniformGaps) {
    const std::vector<double> flips{1, 2, 3, 4, 5};
    const PeriodEstimate p = estimate_period(flips, 0.01);
    EXPECT_DOUBLE_EQ(p.period, 2.0);
    EXPECT_GE(p.uncertainty, 0.005);
    EXPECT_EQ(p.n_cycles_used, 2);
    EXPECT_THROW(estimate_period(std::vector<double>{1, 2}, 0.01), InsufficientCycles);
}

TEST(TheoreticalPeriod, Examples) {
    EXPECT_NEAR(theoretical_period(MassParameter{-1}, pipi), pi, 1e-12);
    EXPECT_NEAR(theoretical_period(MassParameter{-1}, origin), pi / 3, 1e-12);
    EXPECT_THROW(theoretical_period(MassParameter{-2}, pipi), GapClosed);
}

TEST(DefaultTMax, TenPeriodsCapped) {
    EXPECT_NEAR(default_t_max(MassParameter{-1}, pipi), 10 * pi, 1e-9);
    EXPECT_EQ(default_t_max(MassParameter{-1.999}, pipi), 1000.0);
    EXPECT_EQ(default_t_max(MassParameter{-2}, pipi), 1000.0);
}

TEST(VorticitySeries, AlternatingPlateausAfterQuench) {
    const KGrid g(100);
    const VorticitySeries s = vorticity_series(quench(1.0), g, pipi);
    ASSERT_EQ(s.times.size(), 2001u);
    EXPECT_EQ(s.indices[0], 0);
    bool plus = false, minus = false;
    for (int v : s.indices) {
        plus = plus || v == 1;
        minus = minus || v == -1;
    }
    EXPECT_TRUE(plus && minus);
    for (std::size_t i = 1; i < s.times.size(); ++i)
        EXPECT_NEAR(s.times[i] - s.times[i - 1], 0.01, 1e-12);
}

TEST(VorticitySeries, TrivialQuenchHasNoVortex) {
    const KGrid g(100);
    const VorticitySeries s = vorticity_series(quench(3.0), g, pipi);
    for (int v : s.indices) EXPECT_EQ(v, 0);
    EXPECT_TRUE(flip_times(s).empty());
}

TEST(VorticitySeries, PeriodAndRegularity) {
    const KGrid g(100);
    const VorticitySeries s = vorticity_series(quench(-1.0), g, pipi);
    const auto f = flip_times(s);
    ASSERT_GE(f.size(), 3u);
    const double gap0 = f[1] - f[0];
    for (std::size_t a = 1; a + 1 < f.size(); ++a) EXPECT_NEAR(f[a + 1] - f[a], gap0, 2 * 0.01);
    EXPECT_NEAR(estimate_period(f, 0.01).period, pi, 0.02 * pi);
    const auto f1 = flip_times(vorticity_series(quench(1.0), g, pipi));
    EXPECT_NEAR(estimate_period(f1, 0.01).period, two_pi / 6, 0.02 * two_pi / 6);
}

TEST(VorticitySeries, PlateausHaveNoGlitches) {
    const KGrid g(100);
    for (double mq : {1.0, -1.0, 0.5}) {
        const VorticitySeries s = vorticity_series(quench(mq), g, pipi);
        const auto f = flip_times(s);
        // between consecutive flips the index is constant
        for (std::size_t a = 0; a + 1 < f.size(); ++a) {
            int seen = 2;
            for (std::size_t i = 0; i < s.times.size(); ++i) {
                if (s.times[i] <= f[a] || s.times[i] >= f[a + 1]) continue;
                if (s.indices[i] == 0) continue;
                if (seen == 2) seen = s.indices[i];
                EXPECT_EQ(s.indices[i], seen) << "t=" << s.times[i];
            }
        }
    }
}

TEST(VorticitySeries, SparseMatchesFullField) {
    // per-time reading of the whole evolved field gives the same indices
    const KGrid g(40);
    const QuenchProtocol p = quench(1.0, 3.0);
    for (auto obs : {VortexObservable::pseudospin_texture, VortexObservable::berry_connection}) {
        VorticityOptions opt;
        opt.observable = obs;
        opt.radius = 0.5;
        const VorticitySeries s = vorticity_series(p, g, pipi, opt);
        for (std::size_t i = 0; i < s.times.size(); i += 37) {
            const SpinorField f = evolve_field(p, g, s.times[i]).field;
            const PlanarField field = obs == VortexObservable::pseudospin_texture
                                          ? pseudospin_texture(f)
                                          : berry_connection(f);
            const VortexReading r =
                read_vortex(field, make_loop(g, pipi, 0.5), opt.effective_floor());
            EXPECT_EQ(r.index, s.indices[i]);
            EXPECT_EQ(r.raw_winding, s.raw_windings[i]);
        }
    }
}

TEST(VorticitySeries, ExcludedNodeOnLoopThrows) {
    // gauge B at m = 1 is excluded at the origin; a loop through it must fail
    const KGrid g(100);
    QuenchProtocol p{MassParameter{1}, MassParameter{3}, 1, 0.01, Gauge::b, 0};
    EXPECT_THROW(vorticity_series(p, g, {g.spacing(), 0.0}), SingularField);
    p.initial_gauge = Gauge::patched;
    EXPECT_NO_THROW(vorticity_series(p, g, {g.spacing(), 0.0}));
}

TEST(VorticitySeries, PhaseEncodingShiftsFlips) {
    const KGrid g(100);
    const auto base = flip_times(vorticity_series(quench(1.0, 10.0), g, pipi));
    for (double tau : {0.3, 1.7}) {
        const auto shifted = flip_times(vorticity_series(quench(1.0, 10.0 + tau, tau), g, pipi));
        ASSERT_EQ(shifted.size(), base.size());
        for (std::size_t a = 0; a < base.size(); ++a)
            EXPECT_NEAR(shifted[a] - base[a], tau, 0.01);
    }
}

TEST(Scan, RatiosAndOrdering) {
    const KGrid g(100);
    const auto rows = scan_period_vs_mass(MassParameter{3}, {1.5, -1.5, 0.5, -0.5, 1.0, -1.0}, g, pipi);
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        ASSERT_TRUE(rows[a].measured.has_value());
        EXPECT_TRUE(rows[a].error.empty());
        EXPECT_GE(rows[a].ratio, 0.98);
        EXPECT_LE(rows[a].ratio, 1.02);
        if (a > 0) {
            EXPECT_GT(rows[a].m_quench, rows[a - 1].m_quench);
            EXPECT_LT(rows[a].measured->period, rows[a - 1].measured->period);
        }
    }
}

TEST(Scan, RowErrorsAreRecorded) {
    const KGrid g(100);
    ScanOptions opt;
    opt.t_max = 3.0;
    const auto rows = scan_period_vs_mass(MassParameter{3}, {-1.0, -2.0, 1.0}, g, pipi, opt);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_FALSE(rows[0].error.empty());  // m' = -2: gap closed
    EXPECT_TRUE(std::isnan(rows[0].period_theory));
    EXPECT_FALSE(rows[1].error.empty());  // m' = -1: too short for 3 flips
    EXPECT_FALSE(rows[1].measured.has_value());
    EXPECT_TRUE(rows[2].error.empty());
}

TEST(Coincidence, FlipsMatchLoschmidtSignChanges) {
    const KGrid g(100);
    for (double mq : {1.0, -1.0}) {
        const QuenchProtocol p = quench(mq);
        const auto res = coincidence_test(loschmidt_series(p, pipi), vorticity_series(p, g, pipi));
        EXPECT_FALSE(res.pairs.empty());
        EXPECT_LE(res.max_offset, 2 * p.dt + 1e-12);
    }
}

TEST(Coincidence, ConstantSeriesPairsNothing) {
    const KGrid g(100);
    const QuenchProtocol p = quench(3.0, 5.0);
    const auto res = coincidence_test(loschmidt_series(p, pipi), vorticity_series(p, g, pipi));
    EXPECT_TRUE(res.pairs.empty());
    EXPECT_EQ(res.max_offset, 0.0);
}

TEST(Coincidence, UnmatchedFlipThrows) {
    LoschmidtSeries l{pipi, {}, {}};
    for (int i = 0; i < 10; ++i) {
        l.times.push_back(i);
        l.values.push_back({1.0, 0.5});
    }
    const VorticitySeries v = make_series({1, 1, 1, -1, -1, -1, -1, -1, -1, -1});
    EXPECT_THROW(coincidence_test(l, v), UnmatchedFlip);
    l.times.pop_back();
    l.values.pop_back();
    EXPECT_THROW(coincidence_test(l, v), std::invalid_argument);
}

TEST(SignChanges, SkipExactZeros) {
    const std::vector<double> t{0, 1, 2, 3, 4};
    const std::vector<double> v{1, 0, -1, -1, 2};
    const auto c = sign_change_times(t, v);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0], 1.0);
    EXPECT_EQ(c[1], 3.5);
}

TEST(Decode, RoundTripWithHint) {
    const KGrid g(100);
    for (double mq : {-1.5, -1.0, -0.5, 0.5, 1.0, 1.5}) {
        QuenchProtocol p = quench(mq);
        p.t_max = default_t_max(p.m_quench, pipi);
        const DecodedMass d =
            decode_quench_mass(vorticity_series(p, g, pipi), pipi, BranchHint::above);
        EXPECT_NEAR(d.m_quench.value(), mq, 0.02 * std::abs(mq));
        EXPECT_GT(d.uncertainty, 0.0);
    }
}

TEST(Decode, OriginProbeBelowBranch) {
    const KGrid g(100);
    QuenchProtocol p = quench(-1.0);
    p.t_max = default_t_max(p.m_quench, origin);
    const VorticitySeries s = vorticity_series(p, g, origin);
    const DecodedMass d = decode_quench_mass(s, origin, BranchHint::below);
    EXPECT_NEAR(d.m_quench.value(), -1.0, 0.02);
    EXPECT_THROW(decode_quench_mass(s, origin, BranchHint::none), AmbiguousBranch);
    EXPECT_THROW(decode_quench_mass(s, pipi, BranchHint::above), std::invalid_argument);
}

TEST(Decode, ExactPeriodInversion) {
    // flips every pi/2 -> period pi at (pi,pi) -> m' = -2 +- 1
    VorticitySeries s = make_series({1, 1, 1}, 0.01);
    s.probe = pipi;
    s.times.clear();
    s.indices.clear();
    for (int i = 0; i <= 1000; ++i) {
        const double t = i * 0.01;
        s.times.push_back(t);
        s.indices.push_back(static_cast<int>(std::floor(t / (pi / 2))) % 2 == 0 ? 1 : -1);
    }
    s.raw_windings = s.indices;
    const DecodedMass d = decode_quench_mass(s, pipi, BranchHint::above);
    EXPECT_NEAR(d.m_quench.value(), -1.0, 0.01);
    EXPECT_NEAR(d.candidates[1], -3.0, 0.01);
}

TEST(Decode, JointResolvesBranch) {
    const KGrid g(100);
    for (double mq : {0.7, -1.0, 1.5, -0.5}) {
        QuenchProtocol p = quench(mq);
        p.t_max = default_t_max(p.m_quench, pipi);
        const VorticitySeries sp = vorticity_series(p, g, pipi);
        p.t_max = default_t_max(p.m_quench, origin);
        const VorticitySeries so = vorticity_series(p, g, origin);
        const JointDecode jd = decode_joint(sp, so);
        EXPECT_NEAR(jd.m_quench.value(), mq, 0.02 * std::abs(mq)) << mq;
        EXPECT_LT(jd.discrepancy, 0.05);
    }
}
