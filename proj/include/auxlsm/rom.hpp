#pragma once

// On-the-fly reduced basis for the cell problems. One orthonormal basis per
// load case, stored in the reduced (periodic, anchored) DOF layout.

#include "fem.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace auxlsm {

enum class EnrichStatus { Appended, Evicted, RejectedDependent, RejectedZero };

inline const char* to_string(EnrichStatus s) {
    switch (s) {
        case EnrichStatus::Appended: return "appended";
        case EnrichStatus::Evicted: return "appended (oldest evicted)";
        case EnrichStatus::RejectedDependent: return "rejected: linearly dependent";
        case EnrichStatus::RejectedZero: return "rejected: zero vector";
    }
    return "?";
}

/// Orthonormal columns, oldest first, at most capacity of them.
class ReducedBasis {
public:
    explicit ReducedBasis(int capacity = 12, double dependence_tol = 1e-10)
        : capacity_(capacity), dep_tol_(dependence_tol) {
        if (capacity < 1) throw std::invalid_argument("ReducedBasis: capacity must be at least 1");
    }

    int size() const { return static_cast<int>(phi_.cols()); }
    int capacity() const { return capacity_; }
    bool empty() const { return phi_.cols() == 0; }
    Eigen::Index rows() const { return phi_.rows(); }
    const Eigen::MatrixXd& matrix() const { return phi_; }
    long reorthonormalizations() const { return reorth_count_; }

    void clear() { phi_.resize(0, 0); }

    /// Restores a stored basis (checkpoint). Columns must be orthonormal.
    void assign(const Eigen::MatrixXd& phi) {
        if (phi.cols() > capacity_) throw std::invalid_argument("ReducedBasis: stored basis exceeds capacity");
        phi_ = phi;
        if (orthonormality_error() > 1e-8) reorthonormalize();
    }

    EnrichStatus enrich(const Eigen::VectorXd& v) {
        if (!v.allFinite()) throw std::invalid_argument("ReducedBasis::enrich: non-finite vector");
        if (phi_.cols() > 0 && v.size() != phi_.rows())
            throw std::invalid_argument("ReducedBasis::enrich: dimension mismatch");
        const double vn = v.norm();
        if (vn == 0.0) return EnrichStatus::RejectedZero;

        const bool full = size() >= capacity_;
        // when full, the oldest column is about to leave, so project only on the rest
        const Eigen::Index first = full ? 1 : 0;
        const Eigen::Index keep = phi_.cols() - first;
        Eigen::VectorXd c = v;
        if (keep > 0) {
            const auto P = phi_.rightCols(keep);
            for (int pass = 0; pass < 2; ++pass) c.noalias() -= P * (P.transpose() * c);
        }
        const double cn = c.norm();
        if (!(cn > dep_tol_ * vn)) return EnrichStatus::RejectedDependent;

        Eigen::MatrixXd next(v.size(), keep + 1);
        if (keep > 0) next.leftCols(keep) = phi_.rightCols(keep);
        next.col(keep) = c / cn;
        phi_.swap(next);
        if (orthonormality_error() > 1e-8) reorthonormalize();
        return full ? EnrichStatus::Evicted : EnrichStatus::Appended;
    }

    /// max |Phi^T Phi - I|.
    double orthonormality_error() const {
        if (phi_.cols() == 0) return 0.0;
        const Eigen::MatrixXd G = phi_.transpose() * phi_;
        return (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
    }

    /// Modified Gram-Schmidt pass over the columns in insertion order.
    void reorthonormalize() {
        ++reorth_count_;
        Eigen::MatrixXd out(phi_.rows(), 0);
        for (Eigen::Index k = 0; k < phi_.cols(); ++k) {
            Eigen::VectorXd c = phi_.col(k);
            for (int pass = 0; pass < 2; ++pass)
                for (Eigen::Index j = 0; j < out.cols(); ++j) c -= out.col(j).dot(c) * out.col(j);
            const double n = c.norm();
            if (!(n > dep_tol_)) continue;
            out.conservativeResize(Eigen::NoChange, out.cols() + 1);
            out.col(out.cols() - 1) = c / n;
        }
        phi_.swap(out);
    }

private:
    int capacity_;
    double dep_tol_;
    Eigen::MatrixXd phi_;
    long reorth_count_ = 0;
};

/// Projected solution of one load case.
struct ReducedCaseSolution {
    bool ok = false;                  // projected system was factorized
    Eigen::VectorXd coords;           // reduced coordinates
    Eigen::VectorXd x;                // lifted solution Phi * coords
    Eigen::MatrixXd projected;        // Phi^T K Phi
    double error = std::numeric_limits<double>::infinity();
    double galerkin = std::numeric_limits<double>::infinity();  // max |Phi^T r|
};

/// Solves (Phi^T K Phi) c = Phi^T f and reports ||K Phi c - f|| / ||f||.
/// denom_floor guards loads that cancel to (numerically) zero.
inline ReducedCaseSolution reduced_solve(const ReducedBasis& basis, const SparseMatrix& K, const Eigen::VectorXd& f,
                                         double denom_floor = 0.0) {
    ReducedCaseSolution out;
    if (basis.empty()) return out;
    const Eigen::MatrixXd& Phi = basis.matrix();
    const Eigen::MatrixXd KPhi = K * Phi;
    out.projected = Phi.transpose() * KPhi;
    out.projected = 0.5 * (out.projected + out.projected.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(out.projected);
    if (llt.info() != Eigen::Success) return out;
    out.coords = llt.solve(Phi.transpose() * f);
    if (!out.coords.allFinite()) return out;
    out.x = Phi * out.coords;
    const Eigen::VectorXd r = KPhi * out.coords - f;
    const double denom = std::max(f.norm(), denom_floor);
    out.error = denom > 0.0 ? r.norm() / denom : (r.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    out.galerkin = (Phi.transpose() * r).cwiseAbs().maxCoeff();
    out.ok = true;
    return out;
}

/// Accept iff every case was solved and its error is below tol.
inline bool gate(const std::vector<double>& errors, double tol) {
    if (errors.empty()) return false;
    for (double e : errors)
        if (!(e < tol)) return false;
    return true;
}

struct RomSettings {
    bool enabled = true;
    int capacity = 12;
    double tol = 0.01;
    bool exact_sensitivity = false;
};

/// Per-iteration outcome surfaced to the driver log.
struct RomTelemetry {
    bool attempted = false;
    bool used = false;
    std::vector<double> errors;
};

/// One basis per unit-strain load case.
template <int Dim>
class RomModel {
public:
    static constexpr int NV = voigt_size<Dim>;

    explicit RomModel(RomSettings s = {}) : settings_(s) {
        for (int c = 0; c < NV; ++c) bases_.emplace_back(s.capacity);
    }

    const RomSettings& settings() const { return settings_; }
    const ReducedBasis& basis(int c) const { return bases_[static_cast<std::size_t>(c)]; }
    ReducedBasis& basis(int c) { return bases_[static_cast<std::size_t>(c)]; }
    bool any_empty() const {
        for (const auto& b : bases_)
            if (b.empty()) return true;
        return false;
    }

    /// Tries all cases against the current bases. On acceptance prob receives
    /// the lifted solutions; otherwise prob is left untouched.
    RomTelemetry try_reduced(CellProblem<Dim>& prob, const PeriodicMap& pm,
                             std::vector<ReducedCaseSolution>* cases = nullptr) const {
        RomTelemetry t;
        t.attempted = true;
        std::vector<ReducedCaseSolution> sol(static_cast<std::size_t>(NV));
        for (int c = 0; c < NV; ++c) {
            sol[static_cast<std::size_t>(c)] =
                reduced_solve(bases_[static_cast<std::size_t>(c)], prob.K, prob.F.col(c), 1e-14 * prob.load_scale(c));
            t.errors.push_back(sol[static_cast<std::size_t>(c)].error);
        }
        t.used = gate(t.errors, settings_.tol) && !any_empty();
        if (t.used) {
            prob.chi_red.resize(prob.K.rows(), NV);
            prob.chi.resize(pm.num_full_dofs(), NV);
            for (int c = 0; c < NV; ++c) {
                prob.chi_red.col(c) = sol[static_cast<std::size_t>(c)].x;
                prob.chi.col(c) = pm.scatter(prob.chi_red.col(c));
            }
            prob.solved = true;
        }
        if (cases) *cases = std::move(sol);
        return t;
    }

    /// Adds every load case of a full solution to its basis.
    std::vector<EnrichStatus> enrich(const CellProblem<Dim>& prob) {
        std::vector<EnrichStatus> st;
        for (int c = 0; c < NV; ++c) st.push_back(bases_[static_cast<std::size_t>(c)].enrich(prob.chi_red.col(c)));
        return st;
    }

private:
    RomSettings settings_;
    std::vector<ReducedBasis> bases_;
};

}  // namespace auxlsm
