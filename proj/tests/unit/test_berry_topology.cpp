#include <gtest/gtest.h>

#include <random>

#include "qwzmem/berry_topology.hpp"

using namespace qwzmem;

namespace {

SpinorField uniform_field(const KGrid& g, cplx c1, cplx c2) {
    SpinorField f{g, std::vector<Spinor>(g.size(), Spinor{c1, c2}), Gauge::evolved, 0.0, {}};
    return f;
}

// multiply every spinor by exp(i theta(k)) with a smooth periodic theta
SpinorField redress(SpinorField f, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const int wx = static_cast<int>(rng() % 3) - 1;
    for (std::size_t idx = 0; idx < f.spinors.size(); ++idx) {
        const MomentumPoint k = f.grid.point(f.grid.node_at(idx));
        const double theta = a * std::sin(k.kx) + b * std::cos(k.ky) +
                             c * std::sin(k.kx + 2 * k.ky) + d + wx * k.kx;
        const cplx ph = std::polar(1.0, theta);
        f.spinors[idx].c1 *= ph;
        f.spinors[idx].c2 *= ph;
    }
    return f;
}

}  // namespace

TEST(BerryConnection, ConstantFieldIsZero) {
    const KGrid g(16);
    const ConnectionField a = berry_connection(uniform_field(g, 0.0, 1.0));
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(a.vx[i], 0.0);
        EXPECT_EQ(a.vy[i], 0.0);
    }
}

TEST(BerryConnection, PlaneWavePhaseGivesUnitConnection) {
    const KGrid g(32);
    SpinorField f = uniform_field(g, 0.0, 1.0);
    for (std::size_t idx = 0; idx < g.size(); ++idx)
        f.spinors[idx].c2 = std::polar(1.0, g.point(g.node_at(idx)).kx);
    const ConnectionField a = berry_connection(f);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(a.vx[i], 1.0, 1e-12);
        EXPECT_NEAR(a.vy[i], 0.0, 1e-12);
    }
}

TEST(BerryConnection, OrthogonalNeighboursThrow) {
    const KGrid g(8);
    SpinorField f = uniform_field(g, 0.0, 1.0);
    f.spinors[g.index(3, 3)] = {1.0, 0.0};
    EXPECT_THROW(berry_connection(f), SingularField);
    const ConnectionField m = berry_connection_masked(f);
    EXPECT_TRUE(std::isnan(m.vx[g.index(3, 3)]));
    EXPECT_TRUE(std::isnan(m.vx[g.index(2, 3)]));
    EXPECT_EQ(m.vx[g.index(5, 5)], 0.0);
}

TEST(BerryConnection, LoopIntegralAroundGaugeBSingularity) {
    // gauge B at m = 1 is singular only at the origin; its loop phase is about -2 pi
    const KGrid g(100);
    const SpinorField f = ground_state_field_excluding(MassParameter{1}, g, Gauge::b);
    const WindingLoop loop = make_loop(g, {0, 0}, 0.3);
    EXPECT_NEAR(loop_berry_phase(f, loop), -two_pi, 0.05 * two_pi);
    const ConnectionField a = berry_connection_masked(f);
    EXPECT_NEAR(loop_integral(a, loop), loop_berry_phase(f, loop), 1e-9);
}

TEST(WindingLoop, ClosedCounterclockwiseNearestNeighbour) {
    const KGrid g(100);
    for (double r : {g.spacing(), 0.2, 0.3, 0.5, 1.0}) {
        const WindingLoop loop = make_loop(g, {pi, pi}, r);
        ASSERT_GE(loop.size(), 5u);
        EXPECT_EQ(loop.offsets.front(), loop.offsets.back());
        double area = 0.0;
        for (std::size_t s = 0; s + 1 < loop.size(); ++s) {
            const auto& a = loop.offsets[s];
            const auto& b = loop.offsets[s + 1];
            EXPECT_EQ(std::abs(b[0] - a[0]) + std::abs(b[1] - a[1]), 1);
            EXPECT_FALSE(a[0] == 0 && a[1] == 0);
            area += a[0] * b[1] - a[1] * b[0];
        }
        EXPECT_GT(area, 0.0);
    }
}

TEST(WindingLoop, SimpleOnEveryGridAndRadius) {
    for (int n : {4, 8, 16, 32, 40, 64, 100, 1000})
        for (double r : {0.1, 0.2, 0.3, 0.45, 0.5, 0.8, 1.2, 1.5}) {
            const KGrid g(n);
            if (r < g.spacing()) continue;
            const WindingLoop loop = make_loop(g, {0, 0}, r);
            for (std::size_t a = 0; a + 1 < loop.size(); ++a)
                for (std::size_t b = a + 1; b + 1 < loop.size(); ++b)
                    ASSERT_NE(loop.offsets[a], loop.offsets[b]) << n << " " << r;
        }
}

TEST(WindingLoop, OneSpacingIsEightNodeRing) {
    const KGrid g(100);
    const WindingLoop loop = make_loop(g, {pi, pi}, g.spacing());
    EXPECT_EQ(loop.size(), 9u);
    for (std::size_t s = 0; s + 1 < loop.size(); ++s) {
        EXPECT_LE(std::abs(loop.offsets[s][0]), 1);
        EXPECT_LE(std::abs(loop.offsets[s][1]), 1);
    }
}

TEST(WindingLoop, RejectsBadInput) {
    const KGrid g(100);
    EXPECT_THROW(make_loop(g, {0.01, 0.0}, 0.3), std::invalid_argument);
    EXPECT_THROW(make_loop(g, {0, 0}, 0.01), std::invalid_argument);
    EXPECT_THROW(make_loop(g, {0, 0}, 2.0), std::invalid_argument);
}

TEST(TransitionPhase, Examples) {
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(gauge_transition_phase({r, r}).xi_ba, 0.0, 1e-15);
    const TransitionPhase t = gauge_transition_phase({r, cplx{0, r}});
    EXPECT_TRUE(t.defined);
    EXPECT_NEAR(t.xi_ba, pi / 2, 1e-15);
    EXPECT_FALSE(gauge_transition_phase({1.0, 0.0}).defined);
    EXPECT_FALSE(gauge_transition_phase({0.0, 1.0}).defined);
}

TEST(WindingNumber, GroundStateValues) {
    const KGrid g(100);
    const SpinorField f1 = ground_state_field(MassParameter{1}, g, Gauge::patched);
    EXPECT_EQ(winding_number(f1, make_loop(g, {0, 0}, 0.3)), 1);
    const SpinorField f3 = ground_state_field(MassParameter{3}, g, Gauge::b);
    EXPECT_EQ(winding_number(f3, make_loop(g, {pi, pi}, 0.3)), 1);
    EXPECT_EQ(winding_number(f3, make_loop(g, {pi, 0}, 0.3)), -1);
}

TEST(WindingNumber, SyntheticVortex) {
    const KGrid g(64);
    const MomentumPoint c{pi, pi};
    SpinorField f = uniform_field(g, 0.0, 0.0);
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const MomentumPoint k = g.point(g.node_at(idx));
        const double theta = std::atan2(k.ky - c.ky, k.kx - c.kx);
        f.spinors[idx] = {cplx{1 / std::sqrt(2.0), 0}, std::polar(1 / std::sqrt(2.0), theta)};
    }
    EXPECT_EQ(winding_number(f, make_loop(g, c, 0.5)), 1);
    for (auto& s : f.spinors) s.c2 = std::conj(s.c2);
    EXPECT_EQ(winding_number(f, make_loop(g, c, 0.5)), -1);
}

TEST(WindingNumber, UndefinedPhaseThrows) {
    const KGrid g(16);
    const SpinorField f = uniform_field(g, 1.0, 0.0);
    EXPECT_THROW(winding_number(f, make_loop(g, {pi, pi}, 0.5)), UndefinedPhaseOnLoop);
}

TEST(Chern, PatchwiseRegimes) {
    const KGrid g(100);
    EXPECT_EQ(chern_patchwise(MassParameter{3}, g), 0);
    EXPECT_EQ(chern_patchwise(MassParameter{-3}, g), 0);
    EXPECT_EQ(chern_patchwise(MassParameter{1}, g), 1);
    EXPECT_EQ(chern_patchwise(MassParameter{-1}, g), -1);
    EXPECT_THROW(chern_patchwise(MassParameter{2}, g), CriticalMass);
    EXPECT_THROW(chern_patchwise(MassParameter{0}, g), CriticalMass);
}

TEST(Chern, PatchDecompositionShape) {
    const KGrid g(100);
    const PatchwiseChern p = chern_patchwise_detail(MassParameter{1}, g);
    EXPECT_EQ(p.patches.outer_gauge, Gauge::b);
    ASSERT_EQ(p.patches.disks.size(), 1u);
    EXPECT_EQ(p.patches.disks[0].center, (MomentumPoint{0, 0}));
    EXPECT_EQ(p.patches.disks[0].radius, default_disk_radius);
    const PatchwiseChern q = chern_patchwise_detail(MassParameter{-1}, g);
    EXPECT_EQ(q.patches.outer_gauge, Gauge::a);
    ASSERT_EQ(q.patches.disks.size(), 1u);
    EXPECT_EQ(q.patches.disks[0].center, (MomentumPoint{pi, pi}));
}

TEST(Chern, FhsValues) {
    const KGrid g(100);
    EXPECT_EQ(chern_fhs(ground_state_field(MassParameter{3}, g, Gauge::b)), 0);
    EXPECT_EQ(chern_fhs(ground_state_field(MassParameter{0.5}, g, Gauge::patched)), 1);
    EXPECT_EQ(chern_fhs(ground_state_field(MassParameter{-0.5}, g, Gauge::patched)), -1);
}

TEST(Chern, OddInMass) {
    const KGrid g(40);
    for (double m : {0.5, 1.0, 1.5, 3.0})
        EXPECT_EQ(chern_fhs(ground_state_field(MassParameter{m}, g, Gauge::patched)),
                  -chern_fhs(ground_state_field(MassParameter{-m}, g, Gauge::patched)));
}

TEST(Chern, RoutesAgree) {
    for (int n : {40, 100}) {
        const KGrid g(n);
        for (double m : {3.0, -3.0, 1.5, -1.5, 1.0, -1.0, 0.5, -0.5})
            EXPECT_EQ(chern_patchwise(MassParameter{m}, g),
                      chern_fhs(ground_state_field(MassParameter{m}, g, Gauge::patched)))
                << "n=" << n << " m=" << m;
    }
}

TEST(Chern, FhsGaugeInvariant) {
    std::mt19937_64 rng(7);
    const KGrid g(40);
    for (double m : {3.0, 1.0, -1.0, -3.0, 0.5})
        for (int trial = 0; trial < 5; ++trial) {
            const SpinorField f = ground_state_field(MassParameter{m}, g, Gauge::patched);
            EXPECT_EQ(chern_fhs(redress(f, rng)), chern_fhs(f));
        }
}

TEST(Chern, FhsSingularPlaquette) {
    const KGrid g(8);
    SpinorField f = uniform_field(g, 0.0, 1.0);
    f.spinors[g.index(2, 2)] = {1.0, 0.0};
    EXPECT_THROW(chern_fhs(f), SingularPlaquette);
}

TEST(Chern, AdditivityOverHighSymmetryDisks) {
    // sum of raw transition-phase windings in the outer gauge, signed as in chern_patchwise
    const KGrid g(100);
    for (double m : {0.5, 1.0, 1.5}) {
        const SpinorField f = ground_state_field(MassParameter{m}, g, Gauge::patched);
        int total = 0;
        for (const MomentumPoint c : {MomentumPoint{0, 0}, MomentumPoint{pi, 0},
                                      MomentumPoint{0, pi}, MomentumPoint{pi, pi}}) {
            const bool b_singular = gauge_b_singular(r_vector(MassParameter{m}, c));
            if (b_singular) total += winding_number(f, make_loop(g, c, 0.3));
        }
        EXPECT_EQ(total, chern_fhs(f));
    }
}

TEST(Chern, LoopRadiusIndependence) {
    const KGrid g(100);
    for (double m : {1.0, -1.0, 3.0, -3.0, 0.5, 1.5})
        for (const MomentumPoint c : {MomentumPoint{0, 0}, MomentumPoint{pi, pi}}) {
            const SpinorField f = ground_state_field(MassParameter{m}, g, Gauge::patched);
            const int w = winding_number(f, make_loop(g, c, 0.2));
            EXPECT_EQ(winding_number(f, make_loop(g, c, 0.3)), w);
            EXPECT_EQ(winding_number(f, make_loop(g, c, 0.5)), w);
        }
}

TEST(HallConductance, MinusChern) {
    EXPECT_EQ(hall_conductance(-1), 1.0);
    EXPECT_EQ(hall_conductance(0), 0.0);
    EXPECT_FALSE(std::signbit(hall_conductance(0)));
    EXPECT_EQ(hall_conductance(2), -2.0);
}

TEST(Vorticity, GroundStateConnectionAtMassOne) {
    const KGrid g(100);
    const ConnectionField a =
        berry_connection_masked(ground_state_field_excluding(MassParameter{1}, g, Gauge::b));
    EXPECT_EQ(vorticity_z2(a, {0, 0}, 0.3), -1);
}

TEST(Vorticity, ZeroFieldReadsZero) {
    const KGrid g(32);
    const PlanarField z{g, std::vector<double>(g.size()), std::vector<double>(g.size()), 0.0};
    EXPECT_EQ(vorticity_z2(z, {pi, pi}, 0.5), 0);
}

TEST(Vorticity, CanonicalVortices) {
    const KGrid g(64);
    const MomentumPoint c{pi, pi};
    PlanarField f{g, std::vector<double>(g.size()), std::vector<double>(g.size()), 0.0};
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const MomentumPoint k = g.point(g.node_at(idx));
        const double th = std::atan2(k.ky - c.ky, k.kx - c.kx);
        f.vx[idx] = -std::sin(th);
        f.vy[idx] = std::cos(th);
    }
    const WindingLoop loop = make_loop(g, c, 0.5);
    const VortexReading r = read_vortex(f, loop);
    EXPECT_EQ(r.index, 1);
    EXPECT_EQ(r.raw_winding, 1);
    // a staircase loop sees about pi/4 of the ideal circulation
    EXPECT_GT(r.rotation, 0.7);
    for (std::size_t i = 0; i < g.size(); ++i) {
        f.vx[i] = -f.vx[i];
        f.vy[i] = -f.vy[i];
    }
    const VortexReading cw = read_vortex(f, loop);
    EXPECT_EQ(cw.index, -1);
    EXPECT_EQ(cw.raw_winding, 1);  // Poincare index cannot see the sense
}

TEST(Vorticity, SourceFieldHasNoRotation) {
    const KGrid g(64);
    const MomentumPoint c{pi, pi};
    PlanarField f{g, std::vector<double>(g.size()), std::vector<double>(g.size()), 0.0};
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const MomentumPoint k = g.point(g.node_at(idx));
        f.vx[idx] = k.kx - c.kx;
        f.vy[idx] = k.ky - c.ky;
    }
    EXPECT_EQ(vorticity_z2(f, c, 0.5), 0);
}

TEST(Vorticity, NonFiniteOnLoopThrows) {
    const KGrid g(32);
    PlanarField f{g, std::vector<double>(g.size(), 1.0), std::vector<double>(g.size()), 0.0};
    const WindingLoop loop = make_loop(g, {pi, pi}, 0.5);
    f.vx[g.index(loop.sample(3))] = std::nan("");
    EXPECT_THROW(read_vortex(f, loop), SingularField);
}
