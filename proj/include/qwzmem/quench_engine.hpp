#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "qwzmem/berry_topology.hpp"
#include "qwzmem/bloch_model.hpp"
#include "qwzmem/errors.hpp"

namespace qwzmem {

/// Below this |E t| the propagator uses the series of sin(x)/x.
inline constexpr double sinc_series_threshold = 1e-4;

/**
 * @brief Instantaneous quench m -> m'.
 *
 * The system sits in the lower band of H(m_initial) until `quench_delay`,
 * then evolves under H(m_quench). Times are in inverse-energy units.
 */
struct QuenchProtocol {
    MassParameter m_initial{3.0};
    MassParameter m_quench{1.0};
    double t_max = 10.0;
    double dt = 0.01;
    Gauge initial_gauge = Gauge::b;
    double quench_delay = 0.0;

    std::size_t steps() const {
        return static_cast<std::size_t>(std::floor(t_max / dt + 1e-9)) + 1;
    }
    double time_at(std::size_t i) const { return static_cast<double>(i) * dt; }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw std::invalid_argument("QuenchProtocol: dt must be positive");
        if (!(t_max > 0.0) || !std::isfinite(t_max))
            throw std::invalid_argument("QuenchProtocol: t_max must be positive");
        if (dt > t_max) throw std::invalid_argument("QuenchProtocol: dt must not exceed t_max");
        if (!(quench_delay >= 0.0))
            throw std::invalid_argument("QuenchProtocol: quench_delay must be >= 0");
        if (initial_gauge == Gauge::evolved)
            throw std::invalid_argument("QuenchProtocol: initial gauge must be A, B or patched");
        if (m_initial.critical()) {
            std::ostringstream os;
            os << "initial mass m = " << m_initial.value() << " is critical";
            throw CriticalMass(os.str(), "choose m_initial away from 0 and +-2");
        }
    }
};

struct EvolvedState {
    double time = 0.0;
    SpinorField field;
};

/// exp(-i t R.sigma) psi, closed form; exact for any t.
inline Spinor evolve_with(const BlochVector& r, const Spinor& psi, double t) {
    const double e = r.norm();
    const double x = e * t;
    const double c = std::cos(x);
    const double s_over_e =
        std::abs(x) < sinc_series_threshold ? t * (1.0 - x * x / 6.0) : std::sin(x) / e;
    const auto h = apply_bloch(r, psi.c1, psi.c2);
    const cplx mi{0.0, -s_over_e};
    return {c * psi.c1 + mi * h[0], c * psi.c2 + mi * h[1], psi.band, Gauge::evolved};
}

inline Spinor evolve_spinor(const Spinor& psi0, MassParameter m_quench, const MomentumPoint& k,
                            double t) {
    return evolve_with(r_vector(m_quench, k), psi0, t);
}

/// State at time t of a node that started as the lower-band state psi0.
inline Spinor protocol_state(const QuenchProtocol& p, const BlochVector& r_initial,
                             const BlochVector& r_quench, const Spinor& psi0, double t) {
    const double before = std::min(t, p.quench_delay);
    Spinor psi = psi0;
    if (before > 0.0) {
        // lower band energy -|R| before the quench
        const cplx phase = std::polar(1.0, r_initial.norm() * before);
        psi.c1 *= phase;
        psi.c2 *= phase;
    }
    const double after = t - p.quench_delay;
    if (after > 0.0) psi = evolve_with(r_quench, psi, after);
    psi.gauge = Gauge::evolved;
    return psi;
}

inline Spinor protocol_state(const QuenchProtocol& p, const MomentumPoint& k, const Spinor& psi0,
                             double t) {
    return protocol_state(p, r_vector(p.m_initial, k), r_vector(p.m_quench, k), psi0, t);
}

/**
 * @brief Evolve the whole initial field to time t.
 *
 * Nodes where the initial gauge is singular stay excluded (NaN).
 */
inline EvolvedState evolve_field(const QuenchProtocol& p, const KGrid& grid, double t) {
    p.validate();
    SpinorField field = ground_state_field_excluding(p.m_initial, grid, p.initial_gauge);
    for (std::size_t idx = 0; idx < field.spinors.size(); ++idx) {
        if (field.is_excluded(idx)) continue;
        field.spinors[idx] = protocol_state(p, grid.point(grid.node_at(idx)), field.spinors[idx], t);
    }
    field.gauge = Gauge::evolved;
    field.time = t;
    return {t, std::move(field)};
}

/// <psi0| exp(-i t H(m')) |psi0> by explicit evolution of the lower-band state.
inline cplx loschmidt_pointwise(MassParameter m, MassParameter m_quench, const MomentumPoint& k,
                                double t, Gauge gauge = Gauge::b) {
    const Spinor psi0 = ground_state(m, k, gauge);
    return overlap(psi0, evolve_spinor(psi0, m_quench, k, t));
}

/// cos(|R'|t) + i sin(|R'|t) R^.R'^ for the lower band.
inline cplx loschmidt_closed_form(MassParameter m, MassParameter m_quench, const MomentumPoint& k,
                                  double t) {
    const BlochVector r = r_vector(m, k);
    const BlochVector rq = r_vector(m_quench, k);
    const double e = r.norm();
    if (e == 0.0)
        throw GaugeSingularity("lower band undefined at a gap closing, k = " + to_string(k),
                               {{k.kx, k.ky}});
    const double eq = rq.norm();
    const double x = eq * t;
    const double s_over_eq =
        std::abs(x) < sinc_series_threshold ? t * (1.0 - x * x / 6.0) : std::sin(x) / eq;
    return {std::cos(x), s_over_eq * dot(r, rq) / e};
}

struct LoschmidtSeries {
    MomentumPoint probe;
    std::vector<double> times;
    std::vector<cplx> values;
};

/**
 * @brief Loschmidt amplitude at one momentum on the protocol time grid.
 *
 * Time is measured from t = 0; before the quench the amplitude is 1.
 */
inline LoschmidtSeries loschmidt_series(const QuenchProtocol& p, const MomentumPoint& k) {
    p.validate();
    const Spinor psi0 = ground_state(p.m_initial, k, p.initial_gauge);
    const BlochVector rq = r_vector(p.m_quench, k);
    LoschmidtSeries out{k, {}, {}};
    const std::size_t n = p.steps();
    out.times.reserve(n);
    out.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = p.time_at(i);
        const double after = std::max(0.0, t - p.quench_delay);
        out.times.push_back(t);
        out.values.push_back(overlap(psi0, evolve_with(rq, psi0, after)));
    }
    return out;
}

inline ConnectionField time_dependent_connection(const QuenchProtocol& p, const KGrid& grid,
                                                 double t) {
    return berry_connection(evolve_field(p, grid, t).field);
}

/// (<sigma_x>, <sigma_y>, <sigma_z>) of a normalized spinor.
inline std::array<double, 3> pseudospin(const Spinor& s) {
    const cplx x = std::conj(s.c1) * s.c2;
    return {2.0 * x.real(), 2.0 * x.imag(), std::norm(s.c1) - std::norm(s.c2)};
}

/// In-plane pseudospin texture (<sigma_x>, <sigma_y>) of a field.
inline PlanarField pseudospin_texture(const SpinorField& field) {
    PlanarField out{field.grid, std::vector<double>(field.grid.size()),
                    std::vector<double>(field.grid.size()), field.time};
    for (std::size_t idx = 0; idx < field.spinors.size(); ++idx) {
        const auto s = pseudospin(field.spinors[idx]);
        out.vx[idx] = s[0];
        out.vy[idx] = s[1];
    }
    return out;
}

}  // namespace qwzmem
