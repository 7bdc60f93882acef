#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qwzmem/berry_topology.hpp"
#include "qwzmem/bloch_model.hpp"
#include "qwzmem/errors.hpp"
#include "qwzmem/quench_engine.hpp"

namespace qwzmem {

/// Which planar field the vortex index is read from.
enum class VortexObservable { pseudospin_texture, berry_connection };

inline constexpr double default_texture_floor = 1e-6;
/// Zero runs up to this many samples between plateaus are crossings, not plateaus.
inline constexpr std::size_t flip_debounce_samples = 2;
inline constexpr double default_period_count = 10.0;
inline constexpr double t_max_cap = 1000.0;

struct VorticityOptions {
    double radius = 0.0;  // <= 0: one grid spacing
    double floor = -1.0;  // < 0: observable default
    VortexObservable observable = VortexObservable::pseudospin_texture;

    double effective_radius(const KGrid& g) const { return radius > 0.0 ? radius : g.spacing(); }
    double effective_floor() const {
        if (floor >= 0.0) return floor;
        return observable == VortexObservable::pseudospin_texture ? default_texture_floor
                                                                  : default_vorticity_floor;
    }
};

struct VorticitySeries {
    MomentumPoint probe;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<int> indices;       // rotation sense, {-1, 0, +1}
    std::vector<int> raw_windings;  // Poincare index of the observable on the loop
    std::vector<double> rotations;  // normalized circulation
};

struct PeriodEstimate {
    double period = 0.0;
    int n_cycles_used = 0;
    double uncertainty = 0.0;
};

namespace detail {

struct ProbeNode {
    NodeIndex node;
    BlochVector r_initial;
    BlochVector r_quench;
    Spinor psi0;
};

inline std::size_t find_or_add(std::vector<ProbeNode>& nodes, NodeIndex n) {
    for (std::size_t a = 0; a < nodes.size(); ++a)
        if (nodes[a].node == n) return a;
    nodes.push_back({n, {}, {}, {}});
    return nodes.size() - 1;
}

}  // namespace detail

/**
 * @brief Vortex index around `probe` at every protocol sample time.
 *
 * Only the loop nodes (and, for the connection observable, their +x/+y
 * neighbours) are evolved. Each node evolves independently, so this agrees
 * exactly with reading the full evolved field.
 */
inline VorticitySeries vorticity_series(const QuenchProtocol& p, const KGrid& grid,
                                        const MomentumPoint& probe,
                                        const VorticityOptions& opt = {}) {
    p.validate();
    const WindingLoop loop = make_loop(grid, probe, opt.effective_radius(grid));
    const bool connection = opt.observable == VortexObservable::berry_connection;
    const double floor = opt.effective_floor();
    const double h = grid.spacing();

    std::vector<detail::ProbeNode> nodes;
    std::vector<std::array<std::size_t, 3>> slots(loop.size());  // self, +x, +y
    for (std::size_t s = 0; s < loop.size(); ++s) {
        const NodeIndex n = loop.sample(s);
        slots[s][0] = detail::find_or_add(nodes, n);
        if (connection) {
            slots[s][1] = detail::find_or_add(nodes, grid.node(n.i + 1L, n.j));
            slots[s][2] = detail::find_or_add(nodes, grid.node(n.i, n.j + 1L));
        }
    }
    for (auto& pn : nodes) {
        const MomentumPoint k = grid.point(pn.node);
        pn.r_initial = r_vector(p.m_initial, k);
        pn.r_quench = r_vector(p.m_quench, k);
        const bool singular = (p.initial_gauge == Gauge::a && gauge_a_singular(pn.r_initial)) ||
                              (p.initial_gauge == Gauge::b && gauge_b_singular(pn.r_initial));
        if (singular)
            throw SingularField("vortex loop around " + to_string(probe) +
                                    " passes the excluded node " + to_string(k) + " of gauge " +
                                    std::string(to_string(p.initial_gauge)),
                                "change the loop radius or use the patched initial gauge");
        pn.psi0 = ground_state(p.m_initial, k, p.initial_gauge);
    }

    VorticitySeries out;
    out.probe = probe;
    out.dt = p.dt;
    const std::size_t steps = p.steps();
    out.times.reserve(steps);
    out.indices.reserve(steps);
    out.raw_windings.reserve(steps);
    out.rotations.reserve(steps);

    std::vector<Spinor> states(nodes.size());
    std::vector<std::array<double, 2>> values(loop.size());
    for (std::size_t step = 0; step < steps; ++step) {
        const double t = p.time_at(step);
        for (std::size_t a = 0; a < nodes.size(); ++a)
            states[a] = protocol_state(p, nodes[a].r_initial, nodes[a].r_quench, nodes[a].psi0, t);
        for (std::size_t s = 0; s < loop.size(); ++s) {
            const Spinor& here = states[slots[s][0]];
            if (!connection) {
                const auto sp = pseudospin(here);
                values[s] = {sp[0], sp[1]};
                continue;
            }
            const cplx ux = overlap(here, states[slots[s][1]]);
            const cplx uy = overlap(here, states[slots[s][2]]);
            if (!(std::abs(ux) >= overlap_tolerance) || !(std::abs(uy) >= overlap_tolerance)) {
                std::ostringstream os;
                os << "adjacent states nearly orthogonal on the loop around " << to_string(probe)
                   << " at t = " << t;
                throw SingularField(os.str(), "increase n_side");
            }
            values[s] = {std::arg(ux) / h, std::arg(uy) / h};
        }
        const VortexReading r = vortex_reading(values, loop, floor);
        out.times.push_back(t);
        out.indices.push_back(r.index);
        out.raw_windings.push_back(r.raw_winding);
        out.rotations.push_back(r.rotation);
    }
    return out;
}

inline VorticitySeries vorticity_series(const QuenchProtocol& p, const KGrid& grid,
                                        const MomentumPoint& probe, double radius) {
    VorticityOptions opt;
    opt.radius = radius;
    return vorticity_series(p, grid, probe, opt);
}

/**
 * @brief Times at which the vortex index changes between plateaus.
 *
 * A flip is reported at the midpoint between the last sample of one plateau
 * and the first sample of the next. Leading zeros (no vortex yet) produce
 * no flip, and zero runs of at most two samples between plateaus count as
 * the crossing itself.
 */
inline std::vector<double> flip_times(const VorticitySeries& series) {
    if (series.indices.empty()) throw std::invalid_argument("flip_times: empty series");
    if (series.indices.size() != series.times.size())
        throw std::invalid_argument("flip_times: times and indices differ in length");

    struct Run {
        int value;
        std::size_t first;
        std::size_t last;
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < series.indices.size(); ++i) {
        if (!runs.empty() && runs.back().value == series.indices[i])
            runs.back().last = i;
        else
            runs.push_back({series.indices[i], i, i});
    }

    std::vector<Run> kept;
    for (const Run& r : runs) {
        if (r.value == 0) {
            if (kept.empty()) continue;
            if (r.last - r.first + 1 <= flip_debounce_samples) continue;
        }
        if (!kept.empty() && kept.back().value == r.value) {
            kept.back().last = r.last;
            continue;
        }
        kept.push_back(r);
    }

    std::vector<double> flips;
    for (std::size_t a = 0; a + 1 < kept.size(); ++a)
        flips.push_back(0.5 * (series.times[kept[a].last] + series.times[kept[a + 1].first]));
    return flips;
}

/// Period = twice the mean gap between flips (vortex -> antivortex -> vortex).
inline PeriodEstimate estimate_period(std::span<const double> flips, double dt) {
    if (flips.size() < 3) {
        std::ostringstream os;
        os << "only " << flips.size() << " vorticity flip(s) recorded; at least 3 are needed";
        throw InsufficientCycles(os.str(), "raise t_max");
    }
    const std::size_t n_gaps = flips.size() - 1;
    const double mean = (flips.back() - flips.front()) / static_cast<double>(n_gaps);
    double var = 0.0;
    for (std::size_t a = 0; a < n_gaps; ++a) {
        const double d = flips[a + 1] - flips[a] - mean;
        var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n_gaps));
    return {2.0 * mean, static_cast<int>(n_gaps / 2), std::max(0.5 * dt, sd)};
}

/// 2 pi / dE with dE = 2|R(m', k)|.
inline double theoretical_period(MassParameter m_quench, const MomentumPoint& k) {
    const double e = r_vector(m_quench, k).norm();
    if (e < 1e-12) {
        std::ostringstream os;
        os << "band gap closes at k = " << to_string(k) << " for m' = " << m_quench.value();
        throw GapClosed(os.str(), "no oscillation at a gap closing; move m' or the probe");
    }
    return pi / e;
}

/// Ten theoretical periods, capped at 1000; the cap alone if the gap is closed.
inline double default_t_max(MassParameter m_quench, const MomentumPoint& k) {
    const double e = r_vector(m_quench, k).norm();
    if (e < 1e-12) return t_max_cap;
    return std::min(default_period_count * pi / e, t_max_cap);
}

inline PeriodEstimate measure_period(const QuenchProtocol& p, const KGrid& grid,
                                     const MomentumPoint& probe,
                                     const VorticityOptions& opt = {}) {
    const VorticitySeries s = vorticity_series(p, grid, probe, opt);
    const auto flips = flip_times(s);
    return estimate_period(flips, p.dt);
}

struct ScanOptions {
    double dt = 0.01;
    double t_max = 0.0;  // <= 0: default_t_max per row
    Gauge initial_gauge = Gauge::b;
    VorticityOptions vortex;
};

struct ScanRow {
    double m_quench = 0.0;
    double t_max = 0.0;
    double period_theory = std::numeric_limits<double>::quiet_NaN();
    std::optional<PeriodEstimate> measured;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    std::string error;  // empty when the row succeeded
};

/// Measured vs predicted oscillation period for each m'; rows sorted by m'.
inline std::vector<ScanRow> scan_period_vs_mass(MassParameter m_initial,
                                                std::vector<double> m_values, const KGrid& grid,
                                                const MomentumPoint& probe,
                                                const ScanOptions& opt = {}) {
    std::sort(m_values.begin(), m_values.end());
    std::vector<ScanRow> rows;
    for (double mq : m_values) {
        ScanRow row;
        row.m_quench = mq;
        row.t_max = opt.t_max > 0.0 ? opt.t_max : default_t_max(MassParameter{mq}, probe);
        try {
            row.period_theory = theoretical_period(MassParameter{mq}, probe);
        } catch (const GapClosed& e) {
            row.error = e.what();
        }
        try {
            QuenchProtocol p{m_initial, MassParameter{mq}, row.t_max, opt.dt, opt.initial_gauge, 0.0};
            row.measured = measure_period(p, grid, probe, opt.vortex);
            if (std::isfinite(row.period_theory))
                row.ratio = row.measured->period / row.period_theory;
        } catch (const InsufficientCycles& e) {
            if (row.error.empty()) row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Loschmidt sign changes vs vortex flips.

/// Midpoints of intervals where the sign changes; exact zeros are skipped.
inline std::vector<double> sign_change_times(std::span<const double> times,
                                             std::span<const double> values) {
    std::vector<double> out;
    int last_sign = 0;
    std::size_t last_idx = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int sgn = (values[i] > 0.0) - (values[i] < 0.0);
        if (sgn == 0) continue;
        if (last_sign != 0 && sgn != last_sign) out.push_back(0.5 * (times[last_idx] + times[i]));
        last_sign = sgn;
        last_idx = i;
    }
    return out;
}

struct MatchedPair {
    double flip_time = 0.0;
    double sign_change_time = 0.0;
    double offset = 0.0;
};

struct CoincidenceResult {
    std::vector<MatchedPair> pairs;
    double max_offset = 0.0;
};

/**
 * @brief Pair each vortex flip with the nearest sign change of Re L or Im L.
 *
 * Throws UnmatchedFlip when a flip has no sign change within 5 dt.
 */
inline CoincidenceResult coincidence_test(const LoschmidtSeries& l, const VorticitySeries& v) {
    if (l.times.size() != v.times.size())
        throw std::invalid_argument("coincidence_test: series lengths differ");
    for (std::size_t i = 0; i < l.times.size(); ++i)
        if (std::abs(l.times[i] - v.times[i]) > 1e-12)
            throw std::invalid_argument("coincidence_test: series are on different time grids");

    std::vector<double> re(l.values.size()), im(l.values.size());
    for (std::size_t i = 0; i < l.values.size(); ++i) {
        re[i] = l.values[i].real();
        im[i] = l.values[i].imag();
    }
    std::vector<double> changes = sign_change_times(l.times, re);
    const auto im_changes = sign_change_times(l.times, im);
    changes.insert(changes.end(), im_changes.begin(), im_changes.end());
    std::sort(changes.begin(), changes.end());

    CoincidenceResult out;
    for (double f : flip_times(v)) {
        double best = std::numeric_limits<double>::infinity();
        double best_t = std::numeric_limits<double>::quiet_NaN();
        for (double c : changes)
            if (std::abs(c - f) < best) {
                best = std::abs(c - f);
                best_t = c;
            }
        if (!(best <= 5.0 * v.dt)) {
            std::ostringstream os;
            os << "vorticity flip at t = " << f
               << " has no Loschmidt sign change within 5 dt (nearest offset " << best << ")";
            throw UnmatchedFlip(os.str(), "reduce dt or the vortex loop radius");
        }
        out.pairs.push_back({f, best_t, best});
        out.max_offset = std::max(out.max_offset, best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reading the memory back.

enum class BranchHint { above, below, none };

struct DecodedMass {
    MassParameter m_quench;
    double uncertainty = 0.0;
    PeriodEstimate period;
    std::array<double, 2> candidates{};  // {above, below}
};

namespace detail {

/// Gap-closing mass whose band edge sits at the probe: -2 at (pi,pi), +2 at (0,0).
inline double probe_critical_mass(const MomentumPoint& probe) {
    auto near = [](double a, double b) { return std::abs(wrap_phase(a - b)) < 1e-9; };
    if (near(probe.kx, pi) && near(probe.ky, pi)) return -2.0;
    if (near(probe.kx, 0.0) && near(probe.ky, 0.0)) return 2.0;
    throw std::invalid_argument("decode: probe must be (pi,pi) or (0,0), got " +
                                to_string(probe));
}

}  // namespace detail

/**
 * @brief Invert the period law at a high-symmetry probe.
 *
 * At (pi,pi) |m' + 2| = pi / period, at (0,0) |m' - 2| = pi / period. The
 * law is even in the distance to the critical mass, so the caller names the
 * branch; BranchHint::none raises AmbiguousBranch.
 */
inline DecodedMass decode_quench_mass(const VorticitySeries& series, const MomentumPoint& probe,
                                      BranchHint hint) {
    if (!(series.probe == probe))
        throw std::invalid_argument("decode: series was recorded at " + to_string(series.probe));
    const double center = detail::probe_critical_mass(probe);
    const auto flips = flip_times(series);
    const PeriodEstimate pe = estimate_period(flips, series.dt);
    const double dist = pi / pe.period;
    DecodedMass out;
    out.period = pe;
    out.candidates = {center + dist, center - dist};
    out.uncertainty = pi * pe.uncertainty / (pe.period * pe.period);
    if (hint == BranchHint::none) {
        std::ostringstream os;
        os << "period " << pe.period << " at " << to_string(probe) << " fits m' = "
           << out.candidates[0] << " and m' = " << out.candidates[1];
        throw AmbiguousBranch(os.str(), "pass a branch hint or decode both probes jointly");
    }
    out.m_quench = MassParameter{hint == BranchHint::above ? out.candidates[0] : out.candidates[1]};
    return out;
}

struct JointDecode {
    MassParameter m_quench;
    double uncertainty = 0.0;
    double discrepancy = 0.0;  // distance between the two matched candidates
    DecodedMass at_pi_pi;
    DecodedMass at_origin;
};

/// Decode from the (pi,pi) and (0,0) series together; the candidate pair that agrees wins.
inline JointDecode decode_joint(const VorticitySeries& at_pi_pi, const VorticitySeries& at_origin) {
    JointDecode out;
    out.at_pi_pi = decode_quench_mass(at_pi_pi, MomentumPoint{pi, pi}, BranchHint::above);
    out.at_origin = decode_quench_mass(at_origin, MomentumPoint{0.0, 0.0}, BranchHint::above);
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double x = out.at_pi_pi.candidates[a];
            const double y = out.at_origin.candidates[b];
            if (std::abs(x - y) < best) {
                best = std::abs(x - y);
                out.m_quench = MassParameter{0.5 * (x + y)};
                out.at_pi_pi.m_quench = MassParameter{x};
                out.at_origin.m_quench = MassParameter{y};
            }
        }
    out.discrepancy = best;
    out.uncertainty = 0.5 * std::hypot(out.at_pi_pi.uncertainty, out.at_origin.uncertainty);
    return out;
}

}  // namespace qwzmem
