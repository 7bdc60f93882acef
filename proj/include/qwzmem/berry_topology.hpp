#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "qwzmem/bloch_model.hpp"
#include "qwzmem/errors.hpp"

namespace qwzmem {

inline constexpr double overlap_tolerance = 1e-6;
inline constexpr double plaquette_tolerance = 1e-9;
inline constexpr double transition_tolerance = 1e-9;
inline constexpr double default_disk_radius = 0.3;
inline constexpr std::array<double, 2> fallback_disk_radii{0.2, 0.45};
inline constexpr double default_vorticity_floor = 1e-3;
/// |circulation| / (sum of |v| |dl|) below this reads as "no rotation".
inline constexpr double rotation_tolerance = 1e-9;

/**
 * @brief A real 2-vector per grid node.
 *
 * Used for the Berry connection (radians per unit k) and for the in-plane
 * pseudospin texture. Non-finite entries mark nodes without a value.
 */
struct PlanarField {
    KGrid grid;
    std::vector<double> vx;
    std::vector<double> vy;
    double time = 0.0;

    std::array<double, 2> at(NodeIndex n) const {
        const std::size_t idx = grid.index(n);
        return {vx[idx], vy[idx]};
    }
};

using ConnectionField = PlanarField;

/**
 * @brief Link-phase Berry connection A_mu(k) = arg<psi(k)|psi(k + d_mu)> / dk.
 *
 * Wraps periodically. Throws SingularField if any neighbouring overlap has
 * modulus below 1e-6 or touches an excluded node.
 */
inline ConnectionField berry_connection(const SpinorField& field) {
    const KGrid& g = field.grid;
    const double h = g.spacing();
    ConnectionField out{g, std::vector<double>(g.size()), std::vector<double>(g.size()),
                        field.time};
    for (int i = 0; i < g.n_side(); ++i)
        for (int j = 0; j < g.n_side(); ++j) {
            const Spinor& here = field.at(i, j);
            const cplx ux = overlap(here, field.at(i + 1, j));
            const cplx uy = overlap(here, field.at(i, j + 1));
            for (const cplx u : {ux, uy}) {
                if (!(std::abs(u) >= overlap_tolerance)) {
                    std::ostringstream os;
                    os << "adjacent states nearly orthogonal at k = " << to_string(g.point(i, j))
                       << " (|overlap| = " << std::abs(u) << ", t = " << field.time << ")";
                    throw SingularField(os.str(), "increase n_side or avoid excluded nodes");
                }
            }
            const std::size_t idx = g.index(i, j);
            out.vx[idx] = std::arg(ux) / h;
            out.vy[idx] = std::arg(uy) / h;
        }
    return out;
}

/// berry_connection, but undefined links leave NaN at the node instead of throwing.
inline ConnectionField berry_connection_masked(const SpinorField& field) {
    const KGrid& g = field.grid;
    const double h = g.spacing();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    ConnectionField out{g, std::vector<double>(g.size(), nan), std::vector<double>(g.size(), nan),
                        field.time};
    for (int i = 0; i < g.n_side(); ++i)
        for (int j = 0; j < g.n_side(); ++j) {
            const Spinor& here = field.at(i, j);
            const cplx ux = overlap(here, field.at(i + 1, j));
            const cplx uy = overlap(here, field.at(i, j + 1));
            if (!(std::abs(ux) >= overlap_tolerance) || !(std::abs(uy) >= overlap_tolerance))
                continue;
            const std::size_t idx = g.index(i, j);
            out.vx[idx] = std::arg(ux) / h;
            out.vy[idx] = std::arg(uy) / h;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Loops.

/**
 * @brief Closed, counterclockwise lattice path approximating a circle.
 *
 * The path is the boundary of the plaquettes whose centres lie within the
 * radius (at least the four plaquettes touching the centre), so it is
 * simple and never passes through the centre node. Consecutive samples are
 * nearest neighbours; the first sample is repeated at the end.
 */
struct WindingLoop {
    KGrid grid;
    MomentumPoint center;
    NodeIndex center_node;
    double radius = 0.0;
    std::vector<std::array<int, 2>> offsets;  // relative to center_node

    std::size_t size() const { return offsets.size(); }
    NodeIndex sample(std::size_t s) const {
        return grid.node(static_cast<long>(center_node.i) + offsets[s][0],
                         static_cast<long>(center_node.j) + offsets[s][1]);
    }
};

inline WindingLoop make_loop(const KGrid& grid, const MomentumPoint& center, double radius) {
    const auto node = grid.node_of(center);
    if (!node) throw std::invalid_argument("make_loop: center " + to_string(center) +
                                           " is not a grid node");
    const double h = grid.spacing();
    if (!(radius >= h * (1.0 - 1e-9)) || !(radius <= pi / 2.0))
        throw std::invalid_argument("make_loop: radius must lie in [grid spacing, pi/2]");

    // plaquette (x, y) spans nodes x..x+1, y..y+1 relative to the centre
    const double rr = std::max(radius / h - 0.5, std::sqrt(0.5));
    const int reach = static_cast<int>(std::ceil(rr)) + 1;
    auto inside = [rr](int x, int y) { return std::hypot(x + 0.5, y + 0.5) <= rr + 1e-12; };

    // directed boundary edges, interior on the left
    std::map<std::array<int, 2>, std::array<int, 2>> next;
    auto edge = [&](std::array<int, 2> a, std::array<int, 2> b) {
        if (!next.emplace(a, b).second) throw std::logic_error("make_loop: pinched boundary");
    };
    for (int x = -reach; x <= reach; ++x)
        for (int y = -reach; y <= reach; ++y) {
            if (!inside(x, y)) continue;
            if (!inside(x, y - 1)) edge({x, y}, {x + 1, y});
            if (!inside(x + 1, y)) edge({x + 1, y}, {x + 1, y + 1});
            if (!inside(x, y + 1)) edge({x + 1, y + 1}, {x, y + 1});
            if (!inside(x - 1, y)) edge({x, y + 1}, {x, y});
        }

    // start on the +x axis
    std::array<int, 2> start{std::numeric_limits<int>::min(), 0};
    for (const auto& [a, b] : next)
        if (a[1] == 0 && a[0] > start[0]) start = a;
    std::vector<std::array<int, 2>> path{start};
    for (auto p = next.at(start); p != start; p = next.at(p)) path.push_back(p);
    path.push_back(start);
    if (path.size() - 1 != next.size())
        throw std::logic_error("make_loop: boundary is not a single loop");

    return {grid, grid.point(*node), *node, radius, std::move(path)};
}

// ---------------------------------------------------------------------------
// Transition phase and windings.

struct TransitionPhase {
    double xi_ba = 0.0;  // arg(c2) - arg(c1) in (-pi, pi]
    bool defined = false;
};

/// Relative phase between the two spinor components; a property of the ray.
inline TransitionPhase gauge_transition_phase(const Spinor& psi) {
    if (!psi.is_finite() || std::abs(psi.c1) < transition_tolerance ||
        std::abs(psi.c2) < transition_tolerance)
        return {0.0, false};
    return {wrap_phase(std::arg(psi.c2) - std::arg(psi.c1)), true};
}

/// Winding of the transition phase around the loop, before rounding.
inline double transition_phase_winding(const SpinorField& field, const WindingLoop& loop) {
    double total = 0.0;
    double prev = 0.0;
    for (std::size_t s = 0; s < loop.size(); ++s) {
        const NodeIndex n = loop.sample(s);
        const TransitionPhase tp = gauge_transition_phase(field.at(n));
        if (!tp.defined)
            throw UndefinedPhaseOnLoop("transition phase undefined at k = " +
                                           to_string(field.grid.point(n)) + " on loop around " +
                                           to_string(loop.center),
                                       "change the loop radius");
        if (s > 0) total += wrap_phase(tp.xi_ba - prev);
        prev = tp.xi_ba;
    }
    return total / two_pi;
}

inline int winding_number(const SpinorField& field, const WindingLoop& loop) {
    return static_cast<int>(std::lround(transition_phase_winding(field, loop)));
}

/// Lattice line integral of a connection field along a loop (radians).
inline double loop_integral(const ConnectionField& conn, const WindingLoop& loop) {
    const double h = conn.grid.spacing();
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < loop.size(); ++s) {
        const auto& a = loop.offsets[s];
        const auto& b = loop.offsets[s + 1];
        const NodeIndex from = loop.sample(s);
        const NodeIndex to = loop.sample(s + 1);
        if (b[0] - a[0] == 1) total += conn.at(from)[0] * h;
        if (b[0] - a[0] == -1) total -= conn.at(to)[0] * h;
        if (b[1] - a[1] == 1) total += conn.at(from)[1] * h;
        if (b[1] - a[1] == -1) total -= conn.at(to)[1] * h;
    }
    return total;
}

/// Berry phase sum of arg<psi_s|psi_{s+1}> along the loop.
inline double loop_berry_phase(const SpinorField& field, const WindingLoop& loop) {
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < loop.size(); ++s)
        total += std::arg(overlap(field.at(loop.sample(s)), field.at(loop.sample(s + 1))));
    return total;
}

// ---------------------------------------------------------------------------
// Chern numbers.

struct Disk {
    MomentumPoint center;
    double radius = 0.0;
};

struct PatchDecomposition {
    std::vector<Disk> disks;
    Gauge outer_gauge = Gauge::b;
    Gauge inner_gauge = Gauge::a;
};

struct PatchwiseChern {
    int chern = 0;
    PatchDecomposition patches;
    std::vector<int> windings;  // raw transition-phase winding per disk
};

namespace detail {

inline double torus_distance(const MomentumPoint& a, const MomentumPoint& b) {
    const double dx = std::abs(wrap_phase(a.kx - b.kx));
    const double dy = std::abs(wrap_phase(a.ky - b.ky));
    return std::hypot(dx, dy);
}

}  // namespace detail

/**
 * @brief Chern number as total vorticity of the transition phase.
 *
 * The outer gauge is the one with fewer singular nodes. Each of its
 * singular nodes gets a disk in the other gauge, and the disk contributes
 * the winding of arg(c2) - arg(c1) around its boundary, with sign +1 when
 * the outer gauge is B and -1 when it is A.
 */
inline PatchwiseChern chern_patchwise_detail(MassParameter m, const KGrid& grid,
                                             double radius = default_disk_radius) {
    if (m.critical()) {
        std::ostringstream os;
        os << "Chern number undefined at critical mass m = " << m.value();
        throw CriticalMass(os.str(), "move m away from 0 and +-2");
    }
    const auto sing_a = singular_nodes(m, grid, Gauge::a);
    const auto sing_b = singular_nodes(m, grid, Gauge::b);
    const bool outer_b = sing_b.size() <= sing_a.size();
    const auto& centers = outer_b ? sing_b : sing_a;
    const int sign = outer_b ? 1 : -1;

    const SpinorField field = ground_state_field(m, grid, Gauge::patched);

    std::vector<double> radii{radius};
    for (double r : fallback_disk_radii)
        if (r != radius) radii.push_back(r);

    for (double r : radii) {
        PatchwiseChern out;
        out.patches.outer_gauge = outer_b ? Gauge::b : Gauge::a;
        out.patches.inner_gauge = outer_b ? Gauge::a : Gauge::b;
        bool ok = true;
        for (const NodeIndex& c : centers)
            out.patches.disks.push_back({grid.point(c), r});
        for (std::size_t a = 0; a < centers.size() && ok; ++a)
            for (std::size_t b = a + 1; b < centers.size() && ok; ++b)
                if (detail::torus_distance(out.patches.disks[a].center,
                                           out.patches.disks[b].center) <= 2.0 * r)
                    ok = false;
        try {
            for (std::size_t a = 0; a < centers.size() && ok; ++a) {
                const WindingLoop loop = make_loop(grid, out.patches.disks[a].center, r);
                const int w = winding_number(field, loop);
                out.windings.push_back(w);
                out.chern += sign * w;
            }
        } catch (const UndefinedPhaseOnLoop&) {
            ok = false;
        }
        if (ok) return out;
    }
    throw UndefinedPhaseOnLoop("no disk radius gives well-defined, disjoint patch loops",
                               "increase n_side");
}

inline int chern_patchwise(MassParameter m, const KGrid& grid,
                           double radius = default_disk_radius) {
    return chern_patchwise_detail(m, grid, radius).chern;
}

/// Field strength of every plaquette, Im log of the four-link Wilson loop.
inline std::vector<double> plaquette_curvature(const SpinorField& field) {
    const KGrid& g = field.grid;
    std::vector<double> out(g.size());
    for (int i = 0; i < g.n_side(); ++i)
        for (int j = 0; j < g.n_side(); ++j) {
            const Spinor& p00 = field.at(i, j);
            const Spinor& p10 = field.at(i + 1, j);
            const Spinor& p11 = field.at(i + 1, j + 1);
            const Spinor& p01 = field.at(i, j + 1);
            const cplx w =
                overlap(p00, p10) * overlap(p10, p11) * overlap(p11, p01) * overlap(p01, p00);
            if (!(std::abs(w) >= plaquette_tolerance)) {
                std::ostringstream os;
                os << "plaquette at k = " << to_string(g.point(i, j))
                   << " has vanishing Wilson loop (|W| = " << std::abs(w) << ")";
                throw SingularPlaquette(os.str(), "increase n_side");
            }
            out[g.index(i, j)] = std::arg(w);
        }
    return out;
}

/// Gauge-invariant lattice Chern number (sum of plaquette field strengths / 2 pi).
inline int chern_fhs(const SpinorField& field) {
    const auto f = plaquette_curvature(field);
    double total = 0.0;
    for (double x : f) total += x;
    return static_cast<int>(std::lround(total / two_pi));
}

/// Hall conductance in units of e^2/h.
inline double hall_conductance(int chern) { return chern == 0 ? 0.0 : -double(chern); }

// ---------------------------------------------------------------------------
// Vortex detection on planar fields.

struct VortexReading {
    int index = 0;          // rotation sense: +1 counterclockwise, -1 clockwise, 0 none
    int raw_winding = 0;    // Poincare index of the vector field along the loop
    double circulation = 0.0;
    double rotation = 0.0;  // circulation / sum |v||dl|, in [-1, 1]
    double mean_magnitude = 0.0;
};

/**
 * @brief Rotation sense of a planar vector field along a loop.
 *
 * `values[s]` is the field at loop sample s (closed, so values.back() is the
 * first sample again). Returns 0 when the mean magnitude is below `floor`
 * or the normalized circulation is below rotation_tolerance.
 */
inline VortexReading vortex_reading(std::span<const std::array<double, 2>> values,
                                    const WindingLoop& loop, double floor) {
    if (values.size() != loop.size())
        throw std::invalid_argument("vortex_reading: one value per loop sample required");
    const double h = loop.grid.spacing();
    VortexReading r;
    const std::size_t n = values.size() - 1;
    bool has_zero = false;
    for (std::size_t s = 0; s < values.size(); ++s) {
        if (!std::isfinite(values[s][0]) || !std::isfinite(values[s][1]))
            throw SingularField("vortex loop around " + to_string(loop.center) +
                                    " touches a node without a value",
                                "choose a loop that avoids excluded nodes");
    }
    double angle_sum = 0.0;
    double abs_circ = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& a = values[s];
        const auto& b = values[s + 1];
        const double mag = std::hypot(a[0], a[1]);
        r.mean_magnitude += mag;
        if (mag == 0.0 || std::hypot(b[0], b[1]) == 0.0) has_zero = true;
        else angle_sum += wrap_phase(std::atan2(b[1], b[0]) - std::atan2(a[1], a[0]));
        const double dx = (loop.offsets[s + 1][0] - loop.offsets[s][0]) * h;
        const double dy = (loop.offsets[s + 1][1] - loop.offsets[s][1]) * h;
        const double mx = 0.5 * (a[0] + b[0]);
        const double my = 0.5 * (a[1] + b[1]);
        r.circulation += mx * dx + my * dy;
        abs_circ += std::hypot(mx, my) * std::hypot(dx, dy);
    }
    r.mean_magnitude /= static_cast<double>(n);
    r.raw_winding = has_zero ? 0 : static_cast<int>(std::lround(angle_sum / two_pi));
    r.rotation = abs_circ > 0.0 ? r.circulation / abs_circ : 0.0;
    if (r.mean_magnitude < floor || std::abs(r.rotation) < rotation_tolerance)
        r.index = 0;
    else
        r.index = r.circulation > 0.0 ? 1 : -1;
    return r;
}

inline std::vector<std::array<double, 2>> samples_along(const PlanarField& field,
                                                        const WindingLoop& loop) {
    std::vector<std::array<double, 2>> v(loop.size());
    for (std::size_t s = 0; s < loop.size(); ++s) v[s] = field.at(loop.sample(s));
    return v;
}

inline VortexReading read_vortex(const PlanarField& field, const WindingLoop& loop,
                                 double floor = default_vorticity_floor) {
    const auto v = samples_along(field, loop);
    return vortex_reading(v, loop, floor);
}

/// Z2 vortex index (rotation sense) of a planar field around `center`.
inline int vorticity_z2(const PlanarField& field, const MomentumPoint& center, double radius,
                        double floor = default_vorticity_floor) {
    return read_vortex(field, make_loop(field.grid, center, radius), floor).index;
}

}  // namespace qwzmem
