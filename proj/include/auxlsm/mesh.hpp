#pragma once

// Tensor-product unit-cell discretization on [0,1]^d with uniform open knot
// vectors. Control points sit at Greville abscissae, so the geometry map is
// the identity and every element has the same constant Jacobian.

#include "quadrature.hpp"
#include "splines.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace auxlsm {

template <int Dim>
using Point = std::array<double, Dim>;

template <int Dim>
class ControlMesh {
public:
    ControlMesh() = default;

    ControlMesh(int elems_per_dir, int degree) {
        if (elems_per_dir < 2) throw std::invalid_argument("build_mesh: elems_per_dir must be >= 2");
        if (degree < 1) throw std::invalid_argument("build_mesh: degree must be >= 1");
        degree_ = degree;
        std::array<KnotVector, Dim> kvs;
        for (int d = 0; d < Dim; ++d) {
            elems_[d] = elems_per_dir;
            kvs[d] = KnotVector::open_uniform(degree, elems_per_dir);
            cps_[d] = kvs[d].num_basis();
            greville_[d] = greville_points(kvs[d]);
            h_[d] = 1.0 / elems_per_dir;
        }
        knots_ = kvs;
        ext_ = build_extraction<Dim>(kvs);
        rule_ = gauss_legendre(degree + 1);

        jac_det_ = 1.0;
        for (int d = 0; d < Dim; ++d) jac_det_ *= 0.5 * h_[d];

        const int ncp = num_control_points();
        coords_.resize(static_cast<std::size_t>(ncp));
        for (int I = 0; I < ncp; ++I) {
            const auto idx = cp_multi_index(I);
            for (int d = 0; d < Dim; ++d) coords_[static_cast<std::size_t>(I)][d] = greville_[d][static_cast<std::size_t>(idx[d])];
        }

        conn_.resize(static_cast<std::size_t>(num_elements()));
        for (int e = 0; e < num_elements(); ++e) conn_[static_cast<std::size_t>(e)] = ext_.connectivity(e);

        // univariate basis tables at the Gauss points, per direction and element
        const int nq = degree + 1;
        for (int d = 0; d < Dim; ++d) {
            auto& tab = tables_[d];
            tab.resize(static_cast<std::size_t>(elems_[d] * nq));
            for (int e = 0; e < elems_[d]; ++e)
                for (int q = 0; q < nq; ++q)
                    tab[static_cast<std::size_t>(e * nq + q)] = local_basis(ext_.dirs[d], e, rule_.points[static_cast<std::size_t>(q)]);
        }
    }

    int degree() const { return degree_; }
    int elems_per_dir(int d = 0) const { return elems_[d]; }
    int cps_per_dir(int d = 0) const { return cps_[d]; }
    double element_size(int d = 0) const { return h_[d]; }
    double jacobian_det() const { return jac_det_; }

    int num_elements() const {
        int n = 1;
        for (int d = 0; d < Dim; ++d) n *= elems_[d];
        return n;
    }
    int num_control_points() const {
        int n = 1;
        for (int d = 0; d < Dim; ++d) n *= cps_[d];
        return n;
    }
    int local_count() const { return ext_.local_count(); }
    int num_qp() const {
        int n = 1;
        for (int d = 0; d < Dim; ++d) n *= degree_ + 1;
        return n;
    }

    const ExtractionSet<Dim>& extraction() const { return ext_; }
    ExtractionSet<Dim>& extraction() { return ext_; }
    const std::array<KnotVector, Dim>& knots() const { return knots_; }
    const std::vector<Point<Dim>>& coords() const { return coords_; }
    const std::vector<int>& connectivity(int e) const { return conn_[static_cast<std::size_t>(e)]; }
    const GaussRule& rule() const { return rule_; }

    std::array<int, Dim> cp_multi_index(int I) const {
        std::array<int, Dim> idx{};
        for (int d = 0; d < Dim; ++d) {
            idx[d] = I % cps_[d];
            I /= cps_[d];
        }
        return idx;
    }
    int cp_index(const std::array<int, Dim>& idx) const {
        int I = 0;
        int stride = 1;
        for (int d = 0; d < Dim; ++d) {
            I += idx[d] * stride;
            stride *= cps_[d];
        }
        return I;
    }
    std::array<int, Dim> element_multi_index(int e) const { return ext_.element_multi_index(e); }
    std::array<int, Dim> qp_multi_index(int q) const {
        std::array<int, Dim> idx{};
        for (int d = 0; d < Dim; ++d) {
            idx[d] = q % (degree_ + 1);
            q /= degree_ + 1;
        }
        return idx;
    }

    /// Quadrature weight times Jacobian determinant.
    double qp_measure(int q) const {
        const auto qi = qp_multi_index(q);
        double w = jac_det_;
        for (int d = 0; d < Dim; ++d) w *= rule_.weights[static_cast<std::size_t>(qi[d])];
        return w;
    }

    Point<Dim> qp_parent(int q) const {
        const auto qi = qp_multi_index(q);
        Point<Dim> xi{};
        for (int d = 0; d < Dim; ++d) xi[d] = rule_.points[static_cast<std::size_t>(qi[d])];
        return xi;
    }

    Point<Dim> to_physical(int e, const Point<Dim>& xi) const {
        const auto ei = element_multi_index(e);
        Point<Dim> x{};
        for (int d = 0; d < Dim; ++d) x[d] = (ei[d] + 0.5 * (xi[d] + 1.0)) * h_[d];
        return x;
    }

    /// Element containing x and the parent coordinates of x in it.
    std::pair<int, Point<Dim>> locate(const Point<Dim>& x) const {
        int e = 0;
        int stride = 1;
        Point<Dim> xi{};
        for (int d = 0; d < Dim; ++d) {
            const double u = std::clamp(x[d], 0.0, 1.0);
            int k = static_cast<int>(std::floor(u / h_[d]));
            k = std::clamp(k, 0, elems_[d] - 1);
            xi[d] = std::clamp(2.0 * (u / h_[d] - k) - 1.0, -1.0, 1.0);
            e += k * stride;
            stride *= elems_[d];
        }
        return {e, xi};
    }

    bool rational() const {
        return std::any_of(ext_.weights.begin(), ext_.weights.end(), [](double w) { return w != 1.0; });
    }

    /// Basis values and physical gradients at quadrature point q of element e.
    BasisEval<Dim> basis_at_qp(int e, int q) const {
        const auto ei = element_multi_index(e);
        const auto qi = qp_multi_index(q);
        const int nq = degree_ + 1;
        std::array<LocalBasis1D, Dim> uni;
        for (int d = 0; d < Dim; ++d) uni[d] = tables_[d][static_cast<std::size_t>(ei[d] * nq + qi[d])];
        return finish(e, tensor_product<Dim>(uni));
    }

    /// Basis values and physical gradients at an arbitrary parent point.
    BasisEval<Dim> basis_at(int e, const Point<Dim>& xi) const {
        const auto ei = element_multi_index(e);
        std::array<LocalBasis1D, Dim> uni;
        for (int d = 0; d < Dim; ++d) uni[d] = local_basis(ext_.dirs[d], ei[d], xi[d]);
        return finish(e, tensor_product<Dim>(uni));
    }

private:
    BasisEval<Dim> finish(int e, BasisEval<Dim> be) const {
        if (rational()) apply_weights<Dim>(be, conn_[static_cast<std::size_t>(e)], ext_.weights);
        for (int d = 0; d < Dim; ++d) be.grads.col(d) *= 2.0 / h_[d];
        return be;
    }

    int degree_ = 1;
    std::array<int, Dim> elems_{};
    std::array<int, Dim> cps_{};
    std::array<double, Dim> h_{};
    std::array<std::vector<double>, Dim> greville_;
    std::array<KnotVector, Dim> knots_;
    ExtractionSet<Dim> ext_;
    GaussRule rule_;
    double jac_det_ = 1.0;
    std::vector<Point<Dim>> coords_;
    std::vector<std::vector<int>> conn_;
    std::array<std::vector<LocalBasis1D>, Dim> tables_;
};

template <int Dim>
ControlMesh<Dim> build_mesh(int elems_per_dir, int degree) {
    return ControlMesh<Dim>(elems_per_dir, degree);
}

/// Periodic identification of control points plus a single anchored point.
///
/// Points with index n-1 in any direction are slaves of the point obtained by
/// replacing those indices with 0. The origin corner is the anchor; all of its
/// displacement components are eliminated to remove rigid translation.
struct PeriodicMap {
    int dim = 2;
    std::vector<int> master;       // full point -> master full point
    std::vector<int> reduced;      // full point -> reduced point, -1 for the anchor
    std::vector<int> reduced_to_full;  // reduced point -> master full point
    int anchor = 0;
    int num_reduced_points = 0;    // masters excluding the anchor

    int num_free_points() const { return num_reduced_points + 1; }  // masters incl. anchor
    int num_reduced_dofs() const { return num_reduced_points * dim; }
    int num_full_dofs() const { return static_cast<int>(master.size()) * dim; }
    bool is_slave(int I) const { return master[static_cast<std::size_t>(I)] != I; }

    /// Reduced DOF of a full DOF, or -1 if eliminated by the anchor.
    int reduced_dof(int full_dof) const {
        const int I = full_dof / dim;
        const int r = reduced[static_cast<std::size_t>(I)];
        return r < 0 ? -1 : r * dim + full_dof % dim;
    }

    /// Full vector from reduced coefficients; periodic copies filled, anchor zero.
    Eigen::VectorXd scatter(const Eigen::VectorXd& red) const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(num_full_dofs());
        for (int k = 0; k < num_full_dofs(); ++k) {
            const int r = reduced_dof(k);
            if (r >= 0) full(k) = red(r);
        }
        return full;
    }

    /// Reduced vector holding the master values of a full vector.
    Eigen::VectorXd gather(const Eigen::VectorXd& full) const {
        Eigen::VectorXd red(num_reduced_dofs());
        for (int r = 0; r < num_reduced_points; ++r)
            for (int c = 0; c < dim; ++c)
                red(r * dim + c) = full(reduced_to_full[static_cast<std::size_t>(r)] * dim + c);
        return red;
    }

    /// Transpose of scatter: sums slave contributions into masters.
    Eigen::VectorXd fold(const Eigen::VectorXd& full) const {
        Eigen::VectorXd red = Eigen::VectorXd::Zero(num_reduced_dofs());
        for (int k = 0; k < num_full_dofs(); ++k) {
            const int r = reduced_dof(k);
            if (r >= 0) red(r) += full(k);
        }
        return red;
    }
};

template <int Dim>
PeriodicMap build_periodic_map(const ControlMesh<Dim>& mesh) {
    PeriodicMap pm;
    pm.dim = Dim;
    const int ncp = mesh.num_control_points();
    pm.master.resize(static_cast<std::size_t>(ncp));
    for (int I = 0; I < ncp; ++I) {
        auto idx = mesh.cp_multi_index(I);
        for (int d = 0; d < Dim; ++d)
            if (idx[d] == mesh.cps_per_dir(d) - 1) idx[d] = 0;
        const int M = mesh.cp_index(idx);
        // transverse coordinates of paired points must coincide
        for (int d = 0; d < Dim; ++d) {
            const double a = mesh.coords()[static_cast<std::size_t>(I)][d];
            const double b = mesh.coords()[static_cast<std::size_t>(M)][d];
            assert(a == b || (std::abs(a - 1.0) < 1e-14 && b == 0.0));
            (void)a;
            (void)b;
        }
        pm.master[static_cast<std::size_t>(I)] = M;
    }
    pm.anchor = 0;
    pm.reduced.assign(static_cast<std::size_t>(ncp), -1);
    int next = 0;
    for (int I = 0; I < ncp; ++I) {
        if (pm.master[static_cast<std::size_t>(I)] == I && I != pm.anchor) {
            pm.reduced[static_cast<std::size_t>(I)] = next++;
            pm.reduced_to_full.push_back(I);
        }
    }
    for (int I = 0; I < ncp; ++I) pm.reduced[static_cast<std::size_t>(I)] = pm.reduced[static_cast<std::size_t>(pm.master[static_cast<std::size_t>(I)])];
    pm.num_reduced_points = next;
    return pm;
}

/// Reflection orbits of control points; each orbit is one design variable.
struct SymmetryMap {
    std::vector<int> orbit_of;               // control point -> orbit
    std::vector<std::vector<int>> members;   // orbit -> control points
    std::vector<int> representative;         // orbit -> first member

    int num_orbits() const { return static_cast<int>(members.size()); }

    Eigen::VectorXd scatter(const Eigen::VectorXd& orbit_values) const {
        Eigen::VectorXd full(static_cast<Eigen::Index>(orbit_of.size()));
        for (std::size_t I = 0; I < orbit_of.size(); ++I) full(static_cast<Eigen::Index>(I)) = orbit_values(orbit_of[I]);
        return full;
    }
    Eigen::VectorXd gather(const Eigen::VectorXd& full) const {
        Eigen::VectorXd out(num_orbits());
        for (int o = 0; o < num_orbits(); ++o) out(o) = full(representative[static_cast<std::size_t>(o)]);
        return out;
    }
};

/// Reflection orbits along a line of n points: i ~ n-1-i.
inline std::vector<int> reflection_orbits_1d(int n) {
    std::vector<int> orbit(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) orbit[static_cast<std::size_t>(i)] = std::min(i, n - 1 - i);
    return orbit;
}

template <int Dim>
SymmetryMap build_symmetry_map(const ControlMesh<Dim>& mesh, bool enabled) {
    SymmetryMap sm;
    const int ncp = mesh.num_control_points();
    sm.orbit_of.resize(static_cast<std::size_t>(ncp));
    if (!enabled) {
        sm.members.resize(static_cast<std::size_t>(ncp));
        sm.representative.resize(static_cast<std::size_t>(ncp));
        for (int I = 0; I < ncp; ++I) {
            sm.orbit_of[static_cast<std::size_t>(I)] = I;
            sm.members[static_cast<std::size_t>(I)] = {I};
            sm.representative[static_cast<std::size_t>(I)] = I;
        }
        return sm;
    }
    std::array<std::vector<int>, Dim> orb;
    std::array<int, Dim> counts{};
    for (int d = 0; d < Dim; ++d) {
        orb[d] = reflection_orbits_1d(mesh.cps_per_dir(d));
        counts[d] = (mesh.cps_per_dir(d) + 1) / 2;
    }
    int norb = 1;
    for (int d = 0; d < Dim; ++d) norb *= counts[d];
    sm.members.resize(static_cast<std::size_t>(norb));
    for (int I = 0; I < ncp; ++I) {
        const auto idx = mesh.cp_multi_index(I);
        int o = 0;
        int stride = 1;
        for (int d = 0; d < Dim; ++d) {
            o += orb[d][static_cast<std::size_t>(idx[d])] * stride;
            stride *= counts[d];
        }
        sm.orbit_of[static_cast<std::size_t>(I)] = o;
        sm.members[static_cast<std::size_t>(o)].push_back(I);
    }
    sm.representative.resize(static_cast<std::size_t>(norb));
    for (int o = 0; o < norb; ++o) sm.representative[static_cast<std::size_t>(o)] = sm.members[static_cast<std::size_t>(o)].front();
    return sm;
}

}  // namespace auxlsm
