#pragma once

// Homogenization cell problem on the extracted spline space: Heaviside
// modulated stiffness, unit-strain loads, periodic solve and the effective
// (homogenized) elasticity tensor in Voigt form with engineering shears.

#include "levelset.hpp"
#include "mesh.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace auxlsm {

template <int Dim>
inline constexpr int voigt_size = Dim == 2 ? 3 : 6;

template <int Dim>
using VoigtMatrix = Eigen::Matrix<double, voigt_size<Dim>, voigt_size<Dim>>;

template <int Dim>
using VoigtVector = Eigen::Matrix<double, voigt_size<Dim>, 1>;

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Isotropic linear elastic solid; plane stress in 2D.
struct MaterialModel {
    double E = 1.0;
    double nu = 0.3;

    template <int Dim>
    VoigtMatrix<Dim> voigt() const {
        VoigtMatrix<Dim> C = VoigtMatrix<Dim>::Zero();
        if constexpr (Dim == 2) {
            const double f = E / (1.0 - nu * nu);
            C << f, f * nu, 0.0,
                 f * nu, f, 0.0,
                 0.0, 0.0, f * (1.0 - nu) / 2.0;
        } else {
            const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
            const double mu = E / (2.0 * (1.0 + nu));
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) C(i, j) = lambda;
                C(i, i) = lambda + 2.0 * mu;
                C(i + 3, i + 3) = mu;
            }
        }
        return C;
    }
};

/// Strain-displacement operator (Voigt rows, interleaved DOF columns).
template <int Dim>
Eigen::Matrix<double, voigt_size<Dim>, Eigen::Dynamic> strain_operator(const BasisEval<Dim>& be) {
    const int nb = static_cast<int>(be.values.size());
    Eigen::Matrix<double, voigt_size<Dim>, Eigen::Dynamic> B =
        Eigen::Matrix<double, voigt_size<Dim>, Eigen::Dynamic>::Zero(voigt_size<Dim>, Dim * nb);
    for (int a = 0; a < nb; ++a) {
        const double dx = be.grads(a, 0);
        const double dy = be.grads(a, 1);
        if constexpr (Dim == 2) {
            B(0, 2 * a) = dx;
            B(1, 2 * a + 1) = dy;
            B(2, 2 * a) = dy;
            B(2, 2 * a + 1) = dx;
        } else {
            const double dz = be.grads(a, 2);
            B(0, 3 * a) = dx;
            B(1, 3 * a + 1) = dy;
            B(2, 3 * a + 2) = dz;
            B(3, 3 * a + 1) = dz;
            B(3, 3 * a + 2) = dy;
            B(4, 3 * a) = dz;
            B(4, 3 * a + 2) = dx;
            B(5, 3 * a) = dy;
            B(5, 3 * a + 1) = dx;
        }
    }
    return B;
}

/// phi, H(phi) and delta(phi) at every quadrature point (element-major).
struct QpField {
    int qp_per_element = 0;
    std::vector<double> phi;
    std::vector<double> H;
    std::vector<double> delta;

    double h(int e, int q) const { return H[static_cast<std::size_t>(e * qp_per_element + q)]; }
    double d(int e, int q) const { return delta[static_cast<std::size_t>(e * qp_per_element + q)]; }
    double p(int e, int q) const { return phi[static_cast<std::size_t>(e * qp_per_element + q)]; }

    /// True if any quadrature point of the element lies inside the smoothing band.
    bool in_band(int e) const {
        for (int q = 0; q < qp_per_element; ++q)
            if (d(e, q) != 0.0) return true;
        return false;
    }
};

template <int Dim>
QpField evaluate_qp_field(const DesignField& field, const ControlMesh<Dim>& mesh) {
    QpField out;
    out.qp_per_element = mesh.num_qp();
    out.phi = phi_at_qps(field, mesh);
    out.H.resize(out.phi.size());
    out.delta.resize(out.phi.size());
    for (std::size_t k = 0; k < out.phi.size(); ++k) {
        out.H[k] = heaviside(out.phi[k], field.xi, field.rho_min);
        out.delta[k] = dirac(out.phi[k], field.xi, field.rho_min);
    }
    return out;
}

/// Assembled (and, after solve_full, solved) homogenization cell problem.
template <int Dim>
struct CellProblem {
    static constexpr int NV = voigt_size<Dim>;
    SparseMatrix K;          // reduced: periodic masters without the anchor
    Eigen::MatrixXd F;       // reduced loads, one column per unit strain
    Eigen::VectorXd load_scale;  // sqrt(sum_e |f_e|^2) per case; nonzero even when F cancels
    Eigen::MatrixXd chi_red; // reduced solutions
    Eigen::MatrixXd chi;     // full-DOF solutions with periodic copies filled
    bool solved = false;

    double relative_residual(int c, const Eigen::VectorXd& x) const {
        const double denom = std::max(F.col(c).norm(), 1e-14 * load_scale(c));
        return (K * x - F.col(c)).norm() / denom;
    }
};

/// Element stiffness/load kernels plus the fixed global sparsity pattern.
template <int Dim>
class Assembler {
public:
    static constexpr int NV = voigt_size<Dim>;

    Assembler(const ControlMesh<Dim>& mesh, const PeriodicMap& pm, bool periodic = true)
        : mesh_(&mesh), pm_(&pm), periodic_(periodic) {
        const int ndof = periodic_ ? pm.num_reduced_dofs() : pm.num_full_dofs();
        // Node-level adjacency keyed by the node's first DOF, then expanded
        // to a CSC pattern. A triplet list would need nel * nloc^2 entries.
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(ndof));
        std::vector<int> key_of(static_cast<std::size_t>(ndof), -1);
        std::vector<int> dofs, keys;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            element_dofs(e, dofs);
            keys.clear();
            for (std::size_t l = 0; l < dofs.size(); l += Dim) {
                const int k = dofs[l];
                if (k < 0) continue;
                keys.push_back(k);
                for (int c = 0; c < Dim; ++c) key_of[static_cast<std::size_t>(dofs[l + static_cast<std::size_t>(c)])] = k;
            }
            for (int a : keys) {
                auto& row = adj[static_cast<std::size_t>(a)];
                row.insert(row.end(), keys.begin(), keys.end());
            }
        }
        std::vector<Eigen::Index> outer(static_cast<std::size_t>(ndof) + 1, 0);
        for (auto& row : adj) {
            std::sort(row.begin(), row.end());
            row.erase(std::unique(row.begin(), row.end()), row.end());
            row.shrink_to_fit();
        }
        for (int j = 0; j < ndof; ++j) {
            const int k = key_of[static_cast<std::size_t>(j)];
            const std::size_t n = k < 0 ? 0 : adj[static_cast<std::size_t>(k)].size() * Dim;
            outer[static_cast<std::size_t>(j) + 1] = outer[static_cast<std::size_t>(j)] + static_cast<Eigen::Index>(n);
        }
        pattern_.resize(ndof, ndof);
        pattern_.resizeNonZeros(outer.back());
        for (int j = 0; j < ndof; ++j) {
            pattern_.outerIndexPtr()[j] = static_cast<int>(outer[static_cast<std::size_t>(j)]);
            const int k = key_of[static_cast<std::size_t>(j)];
            if (k < 0) continue;
            auto pos = outer[static_cast<std::size_t>(j)];
            for (int m : adj[static_cast<std::size_t>(k)])
                for (int c = 0; c < Dim; ++c) {
                    pattern_.innerIndexPtr()[pos] = m + c;
                    pattern_.valuePtr()[pos] = 0.0;
                    ++pos;
                }
        }
        pattern_.outerIndexPtr()[ndof] = static_cast<int>(outer.back());
        pattern_.makeCompressed();
    }

    int num_dofs() const { return static_cast<int>(pattern_.rows()); }
    const SparseMatrix& pattern() const { return pattern_; }

    /// Global (reduced or full) DOF per local DOF; -1 when eliminated.
    void element_dofs(int e, std::vector<int>& dofs) const {
        const auto& conn = mesh_->connectivity(e);
        dofs.resize(conn.size() * Dim);
        for (std::size_t l = 0; l < conn.size(); ++l)
            for (int c = 0; c < Dim; ++c) {
                const int full = conn[l] * Dim + c;
                dofs[l * Dim + static_cast<std::size_t>(c)] = periodic_ ? pm_->reduced_dof(full) : full;
            }
    }

    /// Element stiffness and unit-strain loads with H modulation at quadrature points.
    void element_matrices(int e, const QpField& qf, const VoigtMatrix<Dim>& C, Eigen::MatrixXd& ke,
                          Eigen::MatrixXd& fe) const {
        const int nloc = Dim * mesh_->local_count();
        ke.setZero(nloc, nloc);
        fe.setZero(nloc, NV);
        Eigen::Matrix<double, NV, Eigen::Dynamic> CB(NV, nloc);
        for (int q = 0; q < mesh_->num_qp(); ++q) {
            const double wH = qf.h(e, q) * mesh_->qp_measure(q);
            const auto B = strain_operator<Dim>(mesh_->basis_at_qp(e, q));
            CB.noalias() = C * B;
            ke.noalias() += wH * B.transpose() * CB;
            fe.noalias() += wH * CB.transpose();  // B^T C eps0 for each unit strain
        }
    }

    CellProblem<Dim> assemble(const QpField& qf, const MaterialModel& mat, int threads = 1,
                              bool deterministic = true) const {
        const VoigtMatrix<Dim> C = mat.voigt<Dim>();
        CellProblem<Dim> prob;
        prob.K = pattern_;
        prob.K.coeffs().setZero();
        prob.F = Eigen::MatrixXd::Zero(num_dofs(), NV);
        prob.load_scale = Eigen::VectorXd::Zero(NV);

        const int nel = mesh_->num_elements();
        const int block = deterministic ? 256 : std::max(1, nel / std::max(1, threads));
        std::vector<Eigen::MatrixXd> kes(static_cast<std::size_t>(block));
        std::vector<Eigen::MatrixXd> fes(static_cast<std::size_t>(block));
        std::vector<int> dofs;
        for (int start = 0; start < nel; start += block) {
            const int count = std::min(block, nel - start);
            parallel_ranges(count, threads, [&](int b, int en, int) {
                for (int k = b; k < en; ++k)
                    element_matrices(start + k, qf, C, kes[static_cast<std::size_t>(k)], fes[static_cast<std::size_t>(k)]);
            });
            // serial scatter in element order
            for (int k = 0; k < count; ++k) {
                element_dofs(start + k, dofs);
                const auto& ke = kes[static_cast<std::size_t>(k)];
                const auto& fe = fes[static_cast<std::size_t>(k)];
                for (int c = 0; c < NV; ++c) prob.load_scale(c) += fe.col(c).squaredNorm();
                for (std::size_t a = 0; a < dofs.size(); ++a) {
                    const int ga = dofs[a];
                    if (ga < 0) continue;
                    prob.F.row(ga) += fe.row(static_cast<Eigen::Index>(a));
                    for (std::size_t b = 0; b < dofs.size(); ++b) {
                        const int gb = dofs[b];
                        if (gb < 0) continue;
                        prob.K.coeffRef(ga, gb) += ke(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                    }
                }
            }
        }
        prob.load_scale = prob.load_scale.cwiseSqrt();
        return prob;
    }

private:
    const ControlMesh<Dim>* mesh_;
    const PeriodicMap* pm_;
    bool periodic_;
    SparseMatrix pattern_;
};

template <int Dim>
CellProblem<Dim> assemble(const ControlMesh<Dim>& mesh, const PeriodicMap& pm, const DesignField& field,
                          const MaterialModel& mat, int threads = 1) {
    Assembler<Dim> asmb(mesh, pm);
    return asmb.assemble(evaluate_qp_field(field, mesh), mat, threads);
}

enum class SolverKind { Auto, Direct, Pcg };

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sparse SPD solve: LDL^T factorization or IC-preconditioned CG.
class LinearSolver {
public:
    explicit LinearSolver(SolverKind kind = SolverKind::Direct, double tol = 1e-9, int max_iter = 20000)
        : kind_(kind), tol_(tol), max_iter_(max_iter) {}

    SolverKind kind() const { return kind_; }

    void factorize(const SparseMatrix& K) {
        K_ = &K;
        if (kind_ == SolverKind::Pcg) {
            cg_.setTolerance(tol_ * 0.1);
            cg_.setMaxIterations(max_iter_);
            cg_.compute(K);
            if (cg_.info() != Eigen::Success) throw SolverError("PCG preconditioner setup failed");
        } else {
            if (!symbolic_done_ || ldlt_.rows() != K.rows()) {
                ldlt_.analyzePattern(K);
                symbolic_done_ = true;
            }
            ldlt_.factorize(K);
            if (ldlt_.info() != Eigen::Success) throw SolverError("sparse LDL^T factorization failed");
            const auto D = ldlt_.vectorD();
            if ((D.array() <= 0.0).any()) throw SolverError("stiffness matrix is not positive definite");
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd* guess = nullptr) {
        if (kind_ == SolverKind::Pcg) {
            Eigen::VectorXd x = guess ? cg_.solveWithGuess(rhs, *guess) : Eigen::VectorXd(cg_.solve(rhs));
            if (cg_.info() != Eigen::Success) throw SolverError("PCG did not converge");
            return x;
        }
        Eigen::VectorXd x = ldlt_.solve(rhs);
        if (ldlt_.info() != Eigen::Success) throw SolverError("sparse LDL^T solve failed");
        return x;
    }

private:
    SolverKind kind_;
    double tol_;
    int max_iter_;
    const SparseMatrix* K_ = nullptr;
    bool symbolic_done_ = false;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg_;
};

inline SolverKind resolve_solver(SolverKind kind, int dim) {
    if (kind != SolverKind::Auto) return kind;
    return dim == 2 ? SolverKind::Direct : SolverKind::Pcg;
}

/// Solves K chi = F for every unit strain and scatters to the full layout.
template <int Dim>
void solve_full(CellProblem<Dim>& prob, const PeriodicMap& pm, LinearSolver& solver,
                const Eigen::MatrixXd* guess = nullptr, double tol = 1e-9) {
    solver.factorize(prob.K);
    const int NV = voigt_size<Dim>;
    prob.chi_red.resize(prob.K.rows(), NV);
    prob.chi.resize(pm.num_full_dofs(), NV);
    for (int c = 0; c < NV; ++c) {
        Eigen::VectorXd g;
        if (guess && guess->cols() == NV && guess->rows() == prob.K.rows()) g = guess->col(c);
        Eigen::VectorXd x = solver.solve(prob.F.col(c), g.size() ? &g : nullptr);
        const double res = prob.relative_residual(c, x);
        if (!(res <= tol))
            throw SolverError("cell problem residual " + std::to_string(res) + " exceeds tolerance for load case " +
                              std::to_string(c));
        prob.chi_red.col(c) = x;
        prob.chi.col(c) = pm.scatter(x);
    }
    prob.solved = true;
}

template <int Dim>
void solve_full(CellProblem<Dim>& prob, const PeriodicMap& pm) {
    LinearSolver solver(resolve_solver(SolverKind::Auto, Dim));
    solve_full(prob, pm, solver);
}

/// Homogenized tensor with the volume fraction it was evaluated at.
template <int Dim>
struct EffectiveTensor {
    VoigtMatrix<Dim> C = VoigtMatrix<Dim>::Zero();
    double volume_fraction = 0.0;
};

/// Local solution coefficients of one element for every load case.
template <int Dim>
Eigen::MatrixXd gather_element(const ControlMesh<Dim>& mesh, int e, const Eigen::MatrixXd& chi_full) {
    const auto& conn = mesh.connectivity(e);
    Eigen::MatrixXd loc(static_cast<Eigen::Index>(conn.size()) * Dim, chi_full.cols());
    for (std::size_t l = 0; l < conn.size(); ++l)
        for (int c = 0; c < Dim; ++c)
            loc.row(static_cast<Eigen::Index>(l) * Dim + c) = chi_full.row(conn[l] * Dim + c);
    return loc;
}

/// Sums fn(e) over elements in fixed blocks; the summation order does not
/// depend on the worker count when deterministic is set.
template <typename Acc, typename Fn>
Acc reduce_elements(int nel, int threads, bool deterministic, const Acc& zero, Fn&& fn) {
    const int block = deterministic ? 64 : std::max(1, (nel + std::max(1, threads) - 1) / std::max(1, threads));
    const int nblocks = (nel + block - 1) / block;
    std::vector<Acc> partial(static_cast<std::size_t>(nblocks), zero);
    parallel_ranges(nblocks, threads, [&](int b, int en, int) {
        for (int k = b; k < en; ++k) {
            Acc acc = zero;
            for (int e = k * block; e < std::min(nel, (k + 1) * block); ++e) fn(e, acc);
            partial[static_cast<std::size_t>(k)] = acc;
        }
    });
    Acc total = zero;
    for (const auto& p : partial) total += p;
    return total;
}

/// C^H_ij = |Y|^-1 sum_e int (e0_i - B chi_i)^T C H (e0_j - B chi_j).
template <int Dim>
EffectiveTensor<Dim> effective_tensor(const ControlMesh<Dim>& mesh, const QpField& qf, const MaterialModel& mat,
                                      const Eigen::MatrixXd& chi_full, int threads = 1, bool deterministic = true) {
    constexpr int NV = voigt_size<Dim>;
    const VoigtMatrix<Dim> C = mat.voigt<Dim>();
    const VoigtMatrix<Dim> zero = VoigtMatrix<Dim>::Zero();
    VoigtMatrix<Dim> CH = reduce_elements(mesh.num_elements(), threads, deterministic, zero, [&](int e, VoigtMatrix<Dim>& acc) {
        const Eigen::MatrixXd loc = gather_element(mesh, e, chi_full);
        for (int q = 0; q < mesh.num_qp(); ++q) {
            const auto B = strain_operator<Dim>(mesh.basis_at_qp(e, q));
            VoigtMatrix<Dim> strain = VoigtMatrix<Dim>::Identity();  // column i: e0_i - B chi_i
            strain.noalias() -= B * loc;
            acc.noalias() += (qf.h(e, q) * mesh.qp_measure(q)) * strain.transpose() * C * strain;
        }
    });
    EffectiveTensor<Dim> out;
    out.C = 0.5 * (CH + CH.transpose());
    double vol = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int q = 0; q < mesh.num_qp(); ++q) vol += qf.h(e, q) * mesh.qp_measure(q);
    out.volume_fraction = vol;
    (void)NV;
    return out;
}

/// Engineering constants from the compliance S = (C^H)^-1.
/// nu(i, j) is the Poisson ratio nu_ij = -S_ji / S_ii.
template <int Dim>
struct EngineeringConstants {
    bool defined = false;
    Eigen::Matrix<double, Dim, 1> youngs = Eigen::Matrix<double, Dim, 1>::Constant(std::numeric_limits<double>::quiet_NaN());
    Eigen::Matrix<double, Dim, Dim> nu = Eigen::Matrix<double, Dim, Dim>::Constant(std::numeric_limits<double>::quiet_NaN());
    Eigen::Matrix<double, voigt_size<Dim> - Dim, 1> shear =
        Eigen::Matrix<double, voigt_size<Dim> - Dim, 1>::Constant(std::numeric_limits<double>::quiet_NaN());

    double nu_xy() const { return nu(0, 1); }
    double nu_yx() const { return nu(1, 0); }
};

template <int Dim>
EngineeringConstants<Dim> engineering_constants(const VoigtMatrix<Dim>& CH) {
    EngineeringConstants<Dim> out;
    Eigen::FullPivLU<VoigtMatrix<Dim>> lu(CH);
    const double scale = CH.cwiseAbs().maxCoeff();
    lu.setThreshold(1e-12);
    if (!(scale > 0.0) || !lu.isInvertible()) return out;
    const VoigtMatrix<Dim> S = lu.inverse();
    out.defined = true;
    for (int i = 0; i < Dim; ++i) {
        out.youngs(i) = 1.0 / S(i, i);
        for (int j = 0; j < Dim; ++j) out.nu(i, j) = (i == j) ? 0.0 : -S(j, i) / S(i, i);
    }
    for (int k = Dim; k < voigt_size<Dim>; ++k) out.shear(k - Dim) = 1.0 / S(k, k);
    return out;
}

}  // namespace auxlsm
