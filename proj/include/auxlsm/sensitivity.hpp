#pragma once

// Design sensitivities of the homogenized tensor, the least-squares objective
// and the volume, all projected onto the control-point basis through the
// Dirac layer delta(phi) R_I.

#include "fem.hpp"
#include "rom.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace auxlsm {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sign of dC^H/dalpha relative to the energy density form. Fixed against
/// finite differences; tests/test_sensitivity.cpp guards it.
inline constexpr double kSensitivitySign = 1.0;

/// Least-squares target on the independent (upper-triangle) Voigt components.
template <int Dim>
struct ObjectiveSpec {
    VoigtMatrix<Dim> target = VoigtMatrix<Dim>::Zero();
    VoigtMatrix<Dim> weights = VoigtMatrix<Dim>::Zero();  // only i <= j is read

    void validate() const {
        bool any = false;
        for (int i = 0; i < voigt_size<Dim>; ++i)
            for (int j = i; j < voigt_size<Dim>; ++j) {
                if (!(weights(i, j) >= 0.0)) throw std::invalid_argument("ObjectiveSpec: weights must be nonnegative");
                any = any || weights(i, j) > 0.0;
            }
        if (!any) throw std::invalid_argument("ObjectiveSpec: at least one weight must be positive");
    }

    double value(const VoigtMatrix<Dim>& C) const {
        double J = 0.0;
        for (int i = 0; i < voigt_size<Dim>; ++i)
            for (int j = i; j < voigt_size<Dim>; ++j) {
                const double d = C(i, j) - target(i, j);
                J += 0.5 * weights(i, j) * d * d;
            }
        return J;
    }

    /// Symmetric W with sum_ij W_ij dC_ij = dJ for symmetric dC.
    VoigtMatrix<Dim> contraction(const VoigtMatrix<Dim>& C) const {
        VoigtMatrix<Dim> W = VoigtMatrix<Dim>::Zero();
        for (int i = 0; i < voigt_size<Dim>; ++i) {
            W(i, i) = weights(i, i) * (C(i, i) - target(i, i));
            for (int j = i + 1; j < voigt_size<Dim>; ++j) {
                const double w = 0.5 * weights(i, j) * (C(i, j) - target(i, j));
                W(i, j) = w;
                W(j, i) = w;
            }
        }
        return W;
    }
};

/// Per-control-point accumulation of sum_q density(e, q) * delta * w * R_I,
/// skipping elements outside the band. Element kernels run in parallel and
/// are scattered in element order, so the result is independent of threads.
template <int Dim, typename T, typename Density>
std::vector<T> project_on_band(const ControlMesh<Dim>& mesh, const QpField& qf, const T& zero, int threads,
                               Density&& density) {
    const int nel = mesh.num_elements();
    const int nloc = mesh.local_count();
    std::vector<int> band;
    for (int e = 0; e < nel; ++e)
        if (qf.in_band(e)) band.push_back(e);
    std::vector<std::vector<T>> local(band.size(), std::vector<T>(static_cast<std::size_t>(nloc), zero));
    parallel_ranges(static_cast<int>(band.size()), threads, [&](int b, int en, int) {
        for (int k = b; k < en; ++k) {
            const int e = band[static_cast<std::size_t>(k)];
            auto& loc = local[static_cast<std::size_t>(k)];
            for (int q = 0; q < mesh.num_qp(); ++q) {
                const double dw = qf.d(e, q) * mesh.qp_measure(q);
                if (dw == 0.0) continue;
                const auto be = mesh.basis_at_qp(e, q);
                const T dens = density(e, q, be);
                for (int l = 0; l < nloc; ++l) loc[static_cast<std::size_t>(l)] += (dw * be.values(l)) * dens;
            }
        }
    });
    std::vector<T> out(static_cast<std::size_t>(mesh.num_control_points()), zero);
    for (std::size_t k = 0; k < band.size(); ++k) {
        const auto& conn = mesh.connectivity(band[k]);
        for (std::size_t l = 0; l < conn.size(); ++l) out[static_cast<std::size_t>(conn[l])] += local[k][l];
    }
    return out;
}

/// Columns e0_i - eps(chi_i) at a quadrature point.
template <int Dim>
VoigtMatrix<Dim> corrected_strains(const BasisEval<Dim>& be, const Eigen::MatrixXd& loc) {
    VoigtMatrix<Dim> S = VoigtMatrix<Dim>::Identity();
    S.noalias() -= strain_operator<Dim>(be) * loc;
    return S;
}

/// dC^H_ij / dalpha_I for every control point I (full-solution form).
template <int Dim>
std::vector<VoigtMatrix<Dim>> tensor_sensitivity(const ControlMesh<Dim>& mesh, const QpField& qf,
                                                 const MaterialModel& mat, const Eigen::MatrixXd& chi_full,
                                                 int threads = 1) {
    const VoigtMatrix<Dim> C = mat.voigt<Dim>();
    return project_on_band<Dim>(mesh, qf, VoigtMatrix<Dim>(VoigtMatrix<Dim>::Zero()), threads,
                                [&](int e, int, const BasisEval<Dim>& be) -> VoigtMatrix<Dim> {
                                    const VoigtMatrix<Dim> S = corrected_strains<Dim>(be, gather_element(mesh, e, chi_full));
                                    return kSensitivitySign * (S.transpose() * C * S);
                                });
}

/// The same derivative assembled through the explicit adjoint field
/// v_i = 2 (x . e0_i - chi_i): energy term plus a'(chi_j, v_i) - l'_j(v_i).
/// Because v_i is not periodic the result is the negated energy form.
template <int Dim>
std::vector<VoigtMatrix<Dim>> self_adjoint_route(const ControlMesh<Dim>& mesh, const PeriodicMap& pm,
                                                 const QpField& qf, const MaterialModel& mat,
                                                 const Eigen::MatrixXd& chi_full) {
    constexpr int NV = voigt_size<Dim>;
    const VoigtMatrix<Dim> C = mat.voigt<Dim>();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(pm.num_full_dofs(), NV);
    for (int I = 0; I < mesh.num_control_points(); ++I) {
        const auto& x = mesh.coords()[static_cast<std::size_t>(I)];
        for (int i = 0; i < NV; ++i) {
            // displacement of unit macroscopic strain i (engineering shear)
            Eigen::Matrix<double, Dim, Dim> E = Eigen::Matrix<double, Dim, Dim>::Zero();
            if (i < Dim) {
                E(i, i) = 1.0;
            } else if constexpr (Dim == 2) {
                E(0, 1) = E(1, 0) = 0.5;
            } else {
                const int a = i == 3 ? 1 : 0;
                const int b = i == 5 ? 1 : 2;
                E(a, b) = E(b, a) = 0.5;
            }
            for (int c = 0; c < Dim; ++c) {
                double u = 0.0;
                for (int d = 0; d < Dim; ++d) u += E(c, d) * x[d];
                v(I * Dim + c, i) = 2.0 * (u - chi_full(I * Dim + c, i));
            }
        }
    }
    return project_on_band<Dim>(mesh, qf, VoigtMatrix<Dim>(VoigtMatrix<Dim>::Zero()), 1,
                                [&](int e, int, const BasisEval<Dim>& be) -> VoigtMatrix<Dim> {
                                    const auto B = strain_operator<Dim>(be);
                                    const VoigtMatrix<Dim> S = corrected_strains<Dim>(be, gather_element(mesh, e, chi_full));
                                    const VoigtMatrix<Dim> Ev = B * gather_element(mesh, e, v);
                                    const VoigtMatrix<Dim> energy = S.transpose() * C * S;
                                    return energy - Ev.transpose() * C * S;
                                });
}

/// Additive correction to dC^H when the solutions come from projected solves
/// with fixed bases. For off-diagonal (i, j) it adds
/// int eps(z_ij)^T C (e0_j - eps chi_j) + (i <-> j), z_ij = Phi_j A_j^-1 Phi_j^T r_i.
/// Diagonal terms vanish by Galerkin orthogonality.
template <int Dim>
std::vector<VoigtMatrix<Dim>> rom_correction(const ControlMesh<Dim>& mesh, const PeriodicMap& pm, const QpField& qf,
                                             const MaterialModel& mat, const CellProblem<Dim>& prob,
                                             const RomModel<Dim>& rom, int threads = 1) {
    constexpr int NV = voigt_size<Dim>;
    for (int c = 0; c < NV; ++c)
        if (rom.basis(c).empty())
            throw ConfigError("exact ROM sensitivity requested but no stored full solutions are available");
    const VoigtMatrix<Dim> C = mat.voigt<Dim>();

    std::vector<Eigen::VectorXd> r(NV);
    for (int i = 0; i < NV; ++i) r[static_cast<std::size_t>(i)] = prob.K * prob.chi_red.col(i) - prob.F.col(i);

    // Z column i*NV + j holds z_ij in the full layout
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(pm.num_full_dofs(), NV * NV);
    for (int j = 0; j < NV; ++j) {
        const Eigen::MatrixXd& Phi = rom.basis(j).matrix();
        Eigen::MatrixXd A = Phi.transpose() * (prob.K * Phi);
        A = 0.5 * (A + A.transpose()).eval();
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) throw SolverError("projected stiffness is not positive definite");
        for (int i = 0; i < NV; ++i) {
            if (i == j) continue;
            const Eigen::VectorXd z = Phi * llt.solve(Phi.transpose() * r[static_cast<std::size_t>(i)]);
            Z.col(i * NV + j) = pm.scatter(z);
        }
    }
    return project_on_band<Dim>(mesh, qf, VoigtMatrix<Dim>(VoigtMatrix<Dim>::Zero()), threads,
                                [&](int e, int, const BasisEval<Dim>& be) -> VoigtMatrix<Dim> {
                                    const auto B = strain_operator<Dim>(be);
                                    const VoigtMatrix<Dim> S = corrected_strains<Dim>(be, gather_element(mesh, e, prob.chi));
                                    const Eigen::MatrixXd Ez = B * gather_element(mesh, e, Z);
                                    VoigtMatrix<Dim> T = VoigtMatrix<Dim>::Zero();
                                    for (int i = 0; i < NV; ++i)
                                        for (int j = 0; j < NV; ++j)
                                            if (i != j) T(i, j) = Ez.col(i * NV + j).dot(C * S.col(j));
                                    return kSensitivitySign * (T + T.transpose());
                                });
}

/// dV/dalpha_I = int delta(phi) R_I.
template <int Dim>
Eigen::VectorXd volume_gradient(const ControlMesh<Dim>& mesh, const QpField& qf, int threads = 1) {
    const auto g = project_on_band<Dim>(mesh, qf, 0.0, threads, [](int, int, const BasisEval<Dim>&) { return 1.0; });
    return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

template <int Dim>
struct ObjectiveGradient {
    double J = 0.0;
    Eigen::VectorXd grad;
};

/// J1 and dJ1/dalpha from retained tensor sensitivities.
template <int Dim>
ObjectiveGradient<Dim> objective_and_gradient(const ObjectiveSpec<Dim>& spec, const VoigtMatrix<Dim>& CH,
                                              const std::vector<VoigtMatrix<Dim>>& dC) {
    ObjectiveGradient<Dim> out;
    out.J = spec.value(CH);
    const VoigtMatrix<Dim> W = spec.contraction(CH);
    out.grad.resize(static_cast<Eigen::Index>(dC.size()));
    for (std::size_t I = 0; I < dC.size(); ++I) out.grad(static_cast<Eigen::Index>(I)) = W.cwiseProduct(dC[I]).sum();
    return out;
}

/// Orbit gradient: sum of member gradients.
inline Eigen::VectorXd fold_symmetry(const Eigen::VectorXd& grad, const SymmetryMap& sym) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(sym.num_orbits());
    for (std::size_t I = 0; I < sym.orbit_of.size(); ++I) out(sym.orbit_of[I]) += grad(static_cast<Eigen::Index>(I));
    return out;
}

template <typename M>
std::vector<M> add(std::vector<M> a, const std::vector<M>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    return a;
}

/// Central-difference comparison at selected control points.
struct GradCheckEntry {
    int index = 0;
    double analytic = 0.0;
    double fd = 0.0;
    double rel_error = 0.0;
};

/// Relative error with a floor tied to the largest gradient magnitude.
inline double gradient_rel_error(double analytic, double fd, double scale) {
    return std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-6 * scale});
}

}  // namespace auxlsm
