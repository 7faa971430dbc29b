#pragma once

// Parameterized level set: phi(x) = sum_I R_I(x) alpha_I with a cubic
// regularized Heaviside acting as an ersatz density.

#include "mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace auxlsm {

struct DesignField {
    Eigen::VectorXd alpha;  // one coefficient per control point
    double alpha_min = -1.0;
    double alpha_max = 1.0;
    double xi = 0.1;        // smoothing half-width
    double rho_min = 1e-6;

    void check() const {
        if (!(xi > 0.0)) throw std::invalid_argument("DesignField: xi must be positive");
        if (!(rho_min > 0.0 && rho_min < 1.0)) throw std::invalid_argument("DesignField: rho_min must lie in (0, 1)");
    }
};

template <int Dim>
struct Hole {
    Point<Dim> center{};
    double radius = 0.1;
};

template <int Dim>
struct HoleSeedConfig {
    std::vector<Hole<Dim>> holes;
    bool fully_solid = false;

    /// Regular m^d lattice of equal holes centred in the m^d sub-cells.
    static HoleSeedConfig lattice(int m, double radius) {
        HoleSeedConfig cfg;
        int total = 1;
        for (int d = 0; d < Dim; ++d) total *= m;
        for (int k = 0; k < total; ++k) {
            Hole<Dim> h;
            int rem = k;
            for (int d = 0; d < Dim; ++d) {
                h.center[d] = (rem % m + 0.5) / m;
                rem /= m;
            }
            h.radius = radius;
            cfg.holes.push_back(h);
        }
        return cfg;
    }
    static HoleSeedConfig solid() {
        HoleSeedConfig cfg;
        cfg.fully_solid = true;
        return cfg;
    }
};

/// Smoothing half-width tied to the element size.
template <int Dim>
double default_smoothing(const ControlMesh<Dim>& mesh, double factor = 1.5) {
    return factor * mesh.element_size();
}

/// Signed distance to the nearest hole, clamped to +-3 xi. The clamp range
/// doubles as the fixed design bounds.
template <int Dim>
DesignField init_from_holes(const ControlMesh<Dim>& mesh, const HoleSeedConfig<Dim>& seeds, double xi,
                            double rho_min = 1e-6) {
    if (!seeds.fully_solid && seeds.holes.empty())
        throw std::invalid_argument("init_from_holes: empty seed list without the solid preset");
    for (const auto& h : seeds.holes) {
        if (!(h.radius > 0.0)) throw std::invalid_argument("init_from_holes: hole radius must be positive");
        for (int d = 0; d < Dim; ++d)
            if (h.center[d] < 0.0 || h.center[d] > 1.0)
                throw std::invalid_argument("init_from_holes: hole centre outside the unit cell");
    }
    DesignField f;
    f.xi = xi;
    f.rho_min = rho_min;
    f.check();
    const double cap = 3.0 * xi;
    const int ncp = mesh.num_control_points();
    f.alpha.resize(ncp);
    for (int I = 0; I < ncp; ++I) {
        double a = cap;
        if (!seeds.fully_solid) {
            a = std::numeric_limits<double>::infinity();
            const auto& x = mesh.coords()[static_cast<std::size_t>(I)];
            for (const auto& h : seeds.holes) {
                double r2 = 0.0;
                for (int d = 0; d < Dim; ++d) r2 += (x[d] - h.center[d]) * (x[d] - h.center[d]);
                a = std::min(a, std::sqrt(r2) - h.radius);
            }
        }
        f.alpha(I) = std::clamp(a, -cap, cap);
    }
    f.alpha_min = -cap;
    f.alpha_max = cap;
    return f;
}

/// Regularized Heaviside, floored at rho_min.
inline double heaviside(double phi, double xi, double rho_min) {
    if (phi > xi) return 1.0;
    if (phi < -xi) return rho_min;
    const double t = phi / xi;
    return std::max(rho_min, 0.75 * (t - t * t * t / 3.0) + 0.5);
}

/// Derivative of heaviside(); zero outside the band and where the floor is active.
inline double dirac(double phi, double xi, double rho_min = 0.0) {
    if (phi > xi || phi < -xi) return 0.0;
    const double t = phi / xi;
    if (0.75 * (t - t * t * t / 3.0) + 0.5 < rho_min) return 0.0;
    return 0.75 / xi * (1.0 - t * t);
}

template <int Dim>
struct PhiValue {
    double value = 0.0;
    Eigen::Matrix<double, Dim, 1> grad = Eigen::Matrix<double, Dim, 1>::Zero();
};

template <int Dim>
PhiValue<Dim> phi_from_basis(const ControlMesh<Dim>& mesh, const Eigen::VectorXd& alpha, int element,
                             const BasisEval<Dim>& be) {
    const auto& conn = mesh.connectivity(element);
    PhiValue<Dim> out;
    for (std::size_t l = 0; l < conn.size(); ++l) {
        const double a = alpha(conn[l]);
        out.value += be.values(static_cast<Eigen::Index>(l)) * a;
        out.grad += a * be.grads.row(static_cast<Eigen::Index>(l)).transpose();
    }
    return out;
}

template <int Dim>
PhiValue<Dim> eval_phi(const DesignField& field, const ControlMesh<Dim>& mesh, int element, const Point<Dim>& xi) {
    return phi_from_basis(mesh, field.alpha, element, mesh.basis_at(element, xi));
}

/// phi at every quadrature point, element-major.
template <int Dim>
std::vector<double> phi_at_qps(const DesignField& field, const ControlMesh<Dim>& mesh) {
    const int nq = mesh.num_qp();
    std::vector<double> out(static_cast<std::size_t>(mesh.num_elements() * nq));
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int q = 0; q < nq; ++q)
            out[static_cast<std::size_t>(e * nq + q)] = phi_from_basis(mesh, field.alpha, e, mesh.basis_at_qp(e, q)).value;
    return out;
}

/// Solid volume fraction: quadrature of H(phi) over the unit cell.
template <int Dim>
double volume(const DesignField& field, const ControlMesh<Dim>& mesh) {
    const int nq = mesh.num_qp();
    double v = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int q = 0; q < nq; ++q) {
            const double phi = phi_from_basis(mesh, field.alpha, e, mesh.basis_at_qp(e, q)).value;
            v += heaviside(phi, field.xi, field.rho_min) * mesh.qp_measure(q);
        }
    return v;
}

}  // namespace auxlsm
