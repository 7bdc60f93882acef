#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qwzmem/errors.hpp"

/**
 * @brief Two-band quantum anomalous Hall model on the momentum torus.
 *
 * H(m, k) = R(m, k) . sigma with
 *   R = (sin kx, sin ky, m - cos kx - cos ky).
 */
namespace qwzmem {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// rx^2 + ry^2 below this counts as an exact zero of the in-plane part.
inline constexpr double singularity_tolerance = 1e-18;
inline constexpr double critical_mass_tolerance = 1e-9;

/// Reduce an angle into [0, 2pi).
inline double wrap_angle(double x) {
    double r = std::fmod(x, two_pi);
    if (r < 0.0) r += two_pi;
    if (r >= two_pi) r = 0.0;
    return r;
}

/// Reduce a phase difference into (-pi, pi].
inline double wrap_phase(double x) {
    double r = std::remainder(x, two_pi);
    if (r <= -pi) r += two_pi;
    return r;
}

struct MomentumPoint {
    double kx = 0.0;
    double ky = 0.0;

    MomentumPoint() = default;
    MomentumPoint(double x, double y) : kx(wrap_angle(x)), ky(wrap_angle(y)) {}

    friend bool operator==(const MomentumPoint&, const MomentumPoint&) = default;
};

inline std::string to_string(const MomentumPoint& k) {
    std::ostringstream os;
    os.precision(6);
    os << "(" << k.kx << ", " << k.ky << ")";
    return os.str();
}

/// Integer node coordinates on a KGrid, already wrapped into [0, n_side).
struct NodeIndex {
    int i = 0;
    int j = 0;

    friend bool operator==(const NodeIndex&, const NodeIndex&) = default;
};

/**
 * @brief Uniform periodic discretization of the Brillouin zone.
 *
 * Node (i, j) sits at (2 pi i / n, 2 pi j / n). n_side must be even and at
 * least 4 so that all four high-symmetry points are nodes.
 */
class KGrid {
   public:
    explicit KGrid(int n_side = 100) : n_(n_side) {
        if (n_side < 4 || n_side % 2 != 0)
            throw std::invalid_argument("KGrid: n_side must be even and >= 4, got " +
                                        std::to_string(n_side));
    }

    int n_side() const noexcept { return n_; }
    double spacing() const noexcept { return two_pi / n_; }
    std::size_t size() const noexcept {
        return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
    }

    int wrap(long i) const noexcept {
        long r = i % n_;
        return static_cast<int>(r < 0 ? r + n_ : r);
    }

    NodeIndex node(long i, long j) const noexcept { return {wrap(i), wrap(j)}; }

    std::size_t index(long i, long j) const noexcept {
        return static_cast<std::size_t>(wrap(i)) * static_cast<std::size_t>(n_) +
               static_cast<std::size_t>(wrap(j));
    }
    std::size_t index(NodeIndex n) const noexcept { return index(n.i, n.j); }

    NodeIndex node_at(std::size_t idx) const noexcept {
        return {static_cast<int>(idx / static_cast<std::size_t>(n_)),
                static_cast<int>(idx % static_cast<std::size_t>(n_))};
    }

    MomentumPoint point(long i, long j) const {
        return {two_pi * wrap(i) / n_, two_pi * wrap(j) / n_};
    }
    MomentumPoint point(NodeIndex n) const { return point(n.i, n.j); }

    /// The grid node at k, if k lies on one (within tol radians).
    std::optional<NodeIndex> node_of(const MomentumPoint& k, double tol = 1e-9) const {
        const double fi = k.kx / spacing();
        const double fj = k.ky / spacing();
        const double ri = std::round(fi);
        const double rj = std::round(fj);
        if (std::abs(fi - ri) * spacing() > tol || std::abs(fj - rj) * spacing() > tol)
            return std::nullopt;
        return node(static_cast<long>(ri), static_cast<long>(rj));
    }

    friend bool operator==(const KGrid&, const KGrid&) = default;

   private:
    int n_;
};

struct BlochVector {
    double rx = 0.0;
    double ry = 0.0;
    double rz = 0.0;

    double norm() const { return std::sqrt(rx * rx + ry * ry + rz * rz); }
    double planar_norm_sq() const { return rx * rx + ry * ry; }
};

inline double dot(const BlochVector& a, const BlochVector& b) {
    return a.rx * b.rx + a.ry * b.ry + a.rz * b.rz;
}

/// Mass parameter m (or m' after a quench).
class MassParameter {
   public:
    constexpr MassParameter() = default;
    constexpr explicit MassParameter(double m) : m_(m) {}

    constexpr double value() const noexcept { return m_; }

    /// Gap closes somewhere in the zone: m = 0 or |m| = 2.
    bool critical() const noexcept {
        return std::abs(m_) < critical_mass_tolerance ||
               std::abs(std::abs(m_) - 2.0) < critical_mass_tolerance;
    }

   private:
    double m_ = 0.0;
};

enum class Band { lower, upper };

/**
 * Phase convention of a spinor.
 *  - a:       first component real and positive
 *  - b:       second component real and positive
 *  - patched: gauge b except on nodes where b is singular, which use a
 *  - evolved: whatever phase unitary evolution produced
 */
enum class Gauge { a, b, patched, evolved };

inline std::string_view to_string(Gauge g) {
    switch (g) {
        case Gauge::a: return "A";
        case Gauge::b: return "B";
        case Gauge::patched: return "patched";
        case Gauge::evolved: return "evolved";
    }
    return "?";
}

struct Spinor {
    cplx c1{};
    cplx c2{};
    Band band = Band::lower;
    Gauge gauge = Gauge::evolved;

    double norm_sq() const { return std::norm(c1) + std::norm(c2); }
    double norm() const { return std::sqrt(norm_sq()); }
    bool is_finite() const {
        return std::isfinite(c1.real()) && std::isfinite(c1.imag()) &&
               std::isfinite(c2.real()) && std::isfinite(c2.imag());
    }
};

/// <a|b>
inline cplx overlap(const Spinor& a, const Spinor& b) {
    return std::conj(a.c1) * b.c1 + std::conj(a.c2) * b.c2;
}

// ---------------------------------------------------------------------------
// Pauli matrices.

using Mat2 = std::array<std::array<cplx, 2>, 2>;

inline constexpr Mat2 pauli_x{{{cplx{0, 0}, cplx{1, 0}}, {cplx{1, 0}, cplx{0, 0}}}};
inline constexpr Mat2 pauli_y{{{cplx{0, 0}, cplx{0, -1}}, {cplx{0, 1}, cplx{0, 0}}}};
inline constexpr Mat2 pauli_z{{{cplx{1, 0}, cplx{0, 0}}, {cplx{0, 0}, cplx{-1, 0}}}};

/// R . sigma as an explicit 2x2 matrix.
inline Mat2 hamiltonian_matrix(const BlochVector& r) {
    Mat2 h{};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            h[a][b] = r.rx * pauli_x[a][b] + r.ry * pauli_y[a][b] + r.rz * pauli_z[a][b];
    return h;
}

/// (R . sigma) psi without forming the matrix.
inline std::array<cplx, 2> apply_bloch(const BlochVector& r, cplx c1, cplx c2) {
    const cplx minus{r.rx, -r.ry};
    const cplx plus{r.rx, r.ry};
    return {r.rz * c1 + minus * c2, plus * c1 - r.rz * c2};
}

// ---------------------------------------------------------------------------
// Spectral data.

inline BlochVector r_vector(MassParameter m, const MomentumPoint& k) {
    return {std::sin(k.kx), std::sin(k.ky), m.value() - std::cos(k.kx) - std::cos(k.ky)};
}

struct BandEnergies {
    double lower = 0.0;
    double upper = 0.0;

    double gap() const { return upper - lower; }
};

/// R at a grid node; the angle index is centred on 0 so nodes k and -k are exact mirrors.
inline BlochVector r_vector(MassParameter m, const KGrid& g, NodeIndex n) {
    const int half = g.n_side() / 2;
    const double x = two_pi * (n.i > half ? n.i - g.n_side() : n.i) / g.n_side();
    const double y = two_pi * (n.j > half ? n.j - g.n_side() : n.j) / g.n_side();
    return {std::sin(x), std::sin(y), m.value() - std::cos(x) - std::cos(y)};
}

inline BandEnergies band_energies(MassParameter m, const MomentumPoint& k) {
    const double e = r_vector(m, k).norm();
    return {-e, e};
}

inline BandEnergies band_energies(MassParameter m, const KGrid& g, NodeIndex n) {
    const double e = r_vector(m, g, n).norm();
    return {-e, e};
}

inline bool gauge_a_singular(const BlochVector& r) {
    return r.planar_norm_sq() < singularity_tolerance && r.rz >= 0.0;
}

inline bool gauge_b_singular(const BlochVector& r) {
    return r.planar_norm_sq() < singularity_tolerance && r.rz <= 0.0;
}

namespace detail {

inline std::string describe_singularity(std::string_view gauge, const MomentumPoint& k,
                                        const BlochVector& r) {
    std::ostringstream os;
    os.precision(6);
    os << "gauge " << gauge << " is ill-defined at k = " << to_string(k) << ", R = (" << r.rx
       << ", " << r.ry << ", " << r.rz << ")";
    return os.str();
}

inline Spinor normalized(cplx c1, cplx c2, Gauge g) {
    const double n = std::sqrt(std::norm(c1) + std::norm(c2));
    return {c1 / n, c2 / n, Band::lower, g};
}

}  // namespace detail

/**
 * @brief Lower-band eigenstate with the first component real and positive.
 *
 * Proportional to (|R| - R_z, -(R_x + i R_y)). Ill-defined where
 * R_x = R_y = 0 and R_z >= 0.
 */
inline Spinor ground_state_gauge_a(MassParameter m, const MomentumPoint& k) {
    const BlochVector r = r_vector(m, k);
    if (gauge_a_singular(r))
        throw GaugeSingularity(detail::describe_singularity("A", k, r), {{k.kx, k.ky}},
                               "use gauge B at this momentum");
    const double norm = r.norm();
    const double p2 = r.planar_norm_sq();
    // |R| - R_z without cancellation when R_z > 0
    const double first = r.rz > 0.0 ? p2 / (norm + r.rz) : norm - r.rz;
    return detail::normalized(cplx{first, 0.0}, -cplx{r.rx, r.ry}, Gauge::a);
}

/**
 * @brief Lower-band eigenstate with the second component real and positive.
 *
 * Proportional to (-R_x + i R_y, R_z + |R|). Ill-defined where
 * R_x = R_y = 0 and R_z <= 0.
 */
inline Spinor ground_state_gauge_b(MassParameter m, const MomentumPoint& k) {
    const BlochVector r = r_vector(m, k);
    if (gauge_b_singular(r))
        throw GaugeSingularity(detail::describe_singularity("B", k, r), {{k.kx, k.ky}},
                               "use gauge A at this momentum");
    const double norm = r.norm();
    const double p2 = r.planar_norm_sq();
    const double second = r.rz < 0.0 ? p2 / (norm - r.rz) : r.rz + norm;
    return detail::normalized(cplx{-r.rx, r.ry}, cplx{second, 0.0}, Gauge::b);
}

inline Spinor ground_state(MassParameter m, const MomentumPoint& k, Gauge g) {
    switch (g) {
        case Gauge::a: return ground_state_gauge_a(m, k);
        case Gauge::b: return ground_state_gauge_b(m, k);
        case Gauge::patched: {
            const BlochVector r = r_vector(m, k);
            Spinor s = gauge_b_singular(r) ? ground_state_gauge_a(m, k)
                                           : ground_state_gauge_b(m, k);
            return s;
        }
        case Gauge::evolved: break;
    }
    throw std::invalid_argument("ground_state: gauge must be A, B or patched");
}

// ---------------------------------------------------------------------------
// Fields over the grid.

/**
 * @brief One spinor per grid node.
 *
 * Nodes listed in `excluded` carry NaN spinors; they are nodes where the
 * requested gauge has no valid representative.
 */
struct SpinorField {
    KGrid grid;
    std::vector<Spinor> spinors;
    Gauge gauge = Gauge::b;
    double time = 0.0;
    std::vector<std::size_t> excluded;  // sorted node indices

    const Spinor& at(long i, long j) const { return spinors[grid.index(i, j)]; }
    const Spinor& at(NodeIndex n) const { return spinors[grid.index(n)]; }

    bool is_excluded(std::size_t idx) const {
        return std::binary_search(excluded.begin(), excluded.end(), idx);
    }
};

/// Nodes where the given gauge is ill-defined for mass m.
inline std::vector<NodeIndex> singular_nodes(MassParameter m, const KGrid& grid, Gauge g) {
    std::vector<NodeIndex> out;
    if (g == Gauge::patched || g == Gauge::evolved) return out;
    for (int i = 0; i < grid.n_side(); ++i)
        for (int j = 0; j < grid.n_side(); ++j) {
            const BlochVector r = r_vector(m, grid.point(i, j));
            if (g == Gauge::a ? gauge_a_singular(r) : gauge_b_singular(r))
                out.push_back({i, j});
        }
    return out;
}

namespace detail {

inline SpinorField build_ground_field(MassParameter m, const KGrid& grid, Gauge g,
                                      bool exclude_singular) {
    SpinorField field{grid, std::vector<Spinor>(grid.size()), g, 0.0, {}};
    std::vector<GaugeSingularity::Node> bad;
    for (int i = 0; i < grid.n_side(); ++i)
        for (int j = 0; j < grid.n_side(); ++j) {
            const MomentumPoint k = grid.point(i, j);
            const BlochVector r = r_vector(m, k);
            const bool singular = (g == Gauge::a && gauge_a_singular(r)) ||
                                  (g == Gauge::b && gauge_b_singular(r));
            const std::size_t idx = grid.index(i, j);
            if (singular) {
                bad.emplace_back(k.kx, k.ky);
                field.excluded.push_back(idx);
                const double nan = std::nan("");
                field.spinors[idx] = {cplx{nan, nan}, cplx{nan, nan}, Band::lower, g};
                continue;
            }
            field.spinors[idx] = ground_state(m, k, g);
        }
    if (!bad.empty() && !exclude_singular) {
        std::ostringstream os;
        os << "gauge " << to_string(g) << " is ill-defined at " << bad.size()
           << " grid node(s) for m = " << m.value() << ":";
        for (const auto& [kx, ky] : bad) os << " " << to_string(MomentumPoint{kx, ky});
        throw GaugeSingularity(os.str(), std::move(bad),
                               "choose the other gauge or the patched field");
    }
    std::sort(field.excluded.begin(), field.excluded.end());
    return field;
}

}  // namespace detail

/// Lower-band field in one gauge; throws GaugeSingularity listing every bad node.
inline SpinorField ground_state_field(MassParameter m, const KGrid& grid, Gauge g) {
    if (g == Gauge::evolved)
        throw std::invalid_argument("ground_state_field: gauge must be A, B or patched");
    return detail::build_ground_field(m, grid, g, false);
}

/// Same as ground_state_field, but singular nodes are excluded instead of fatal.
inline SpinorField ground_state_field_excluding(MassParameter m, const KGrid& grid, Gauge g) {
    if (g == Gauge::evolved)
        throw std::invalid_argument("ground_state_field: gauge must be A, B or patched");
    return detail::build_ground_field(m, grid, g, true);
}

}  // namespace qwzmem
