#pragma once

// Optimization campaign: analysis (full or reduced), sensitivities, MMA
// update, logging and checkpointing. Also the one-shot homogenization and
// finite-difference gradient check used by the command line tool.

#include "config.hpp"
#include "fem.hpp"
#include "io.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "mma.hpp"
#include "rom.hpp"
#include "sensitivity.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace auxlsm {

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <int Dim>
std::vector<double> upper_triangle(const VoigtMatrix<Dim>& C) {
    std::vector<double> v;
    for (int i = 0; i < voigt_size<Dim>; ++i)
        for (int j = i; j < voigt_size<Dim>; ++j) v.push_back(C(i, j));
    return v;
}

template <int Dim>
std::vector<double> poisson_list(const EngineeringConstants<Dim>& ec) {
    if constexpr (Dim == 2) {
        return {ec.nu(0, 1), ec.nu(1, 0)};
    } else {
        return {ec.nu(0, 1), ec.nu(1, 0), ec.nu(0, 2), ec.nu(2, 0), ec.nu(1, 2), ec.nu(2, 1)};
    }
}

}  // namespace detail

/// Result of analysing one design.
template <int Dim>
struct Analysis {
    QpField qf;
    CellProblem<Dim> prob;
    EffectiveTensor<Dim> tensor;
    double J = 0.0;
    bool rom_used = false;
    std::vector<double> rom_errors;
    double assemble_time = 0.0;
    double solve_time = 0.0;
};

struct RunSummary {
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    double J = 0.0;
    double volume = 0.0;
    std::vector<double> C;
    std::vector<double> nu;
    int rom_iterations = 0;
    int full_solves = 0;
    double solve_time = 0.0;
    double total_time = 0.0;
};

template <int Dim>
class Optimizer {
public:
    static constexpr int NV = voigt_size<Dim>;

    explicit Optimizer(RunConfig cfg)
        : cfg_(std::move(cfg)),
          mesh_(build_mesh<Dim>(cfg_.elems, cfg_.degree)),
          pm_(build_periodic_map(mesh_)),
          sym_(build_symmetry_map(mesh_, cfg_.symmetry)),
          asmb_(mesh_, pm_),
          spec_(cfg_.objective<Dim>()),
          mma_(cfg_.mma),
          rom_(cfg_.rom),
          solver_(resolve_solver(cfg_.solver_kind(), Dim)) {
        if (cfg_.dim != Dim) throw ConfigError("config dimension does not match the optimizer");
        cfg_.validate();
        spec_.validate();
        threads_ = cfg_.threads > 0 ? cfg_.threads : default_threads();
        field_ = init_from_holes(mesh_, cfg_.hole_seeds<Dim>(), default_smoothing(mesh_, cfg_.xi_factor), cfg_.rho_min);
        x_ = sym_.gather(field_.alpha);
        field_.alpha = sym_.scatter(x_);
    }

    const RunConfig& config() const { return cfg_; }
    const ControlMesh<Dim>& mesh() const { return mesh_; }
    const PeriodicMap& periodic() const { return pm_; }
    const SymmetryMap& symmetry() const { return sym_; }
    const DesignField& field() const { return field_; }
    const Eigen::VectorXd& design() const { return x_; }
    const RomModel<Dim>& rom() const { return rom_; }
    int completed_iterations() const { return iteration_; }

    /// Field for a design vector (orbit values).
    DesignField field_for(const Eigen::VectorXd& x) const {
        DesignField f = field_;
        f.alpha = sym_.scatter(x);
        return f;
    }

    /// Full-solve analysis of an arbitrary field.
    Analysis<Dim> analyze_full(const DesignField& f) {
        Analysis<Dim> a;
        auto t0 = std::chrono::steady_clock::now();
        a.qf = evaluate_qp_field(f, mesh_);
        a.prob = asmb_.assemble(a.qf, cfg_.material, threads_, cfg_.deterministic);
        a.assemble_time = detail::seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        solve_full(a.prob, pm_, solver_);
        a.solve_time = detail::seconds_since(t0);
        finish(a);
        return a;
    }

    Checkpoint checkpoint() const {
        Checkpoint c;
        c.dim = Dim;
        c.elems = cfg_.elems;
        c.degree = cfg_.degree;
        c.iteration = iteration_;
        c.full_solves = full_solves_;
        c.gated_iterations = gated_;
        c.volume_fraction = cfg_.volume_fraction;
        c.x = x_;
        c.mma = mma_.state();
        for (int k = 0; k < NV; ++k) c.bases.push_back(rom_.basis(k).matrix());
        c.j_history = j_history_;
        return c;
    }

    /// Restores the loop state. Mesh or layout mismatches are fatal;
    /// a changed volume fraction is reported as an event.
    std::vector<std::string> restore(const Checkpoint& c) {
        std::vector<std::string> events;
        if (c.dim != Dim || c.elems != cfg_.elems || c.degree != cfg_.degree)
            throw ConfigError("checkpoint mesh (" + std::to_string(c.dim) + "D, " + std::to_string(c.elems) + " elements, p=" +
                              std::to_string(c.degree) + ") does not match the configuration");
        if (c.x.size() != x_.size()) throw ConfigError("checkpoint design size does not match the symmetry setting");
        if (static_cast<int>(c.bases.size()) != NV) throw ConfigError("checkpoint holds the wrong number of bases");
        if (c.volume_fraction != cfg_.volume_fraction)
            events.push_back("config change: volume_fraction " + format_double(c.volume_fraction) + " -> " +
                             format_double(cfg_.volume_fraction));
        iteration_ = c.iteration;
        full_solves_ = c.full_solves;
        gated_ = c.gated_iterations;
        x_ = c.x;
        mma_.state() = c.mma;
        for (int k = 0; k < NV; ++k) {
            rom_.basis(k).clear();
            if (c.bases[static_cast<std::size_t>(k)].cols() > 0) {
                if (c.bases[static_cast<std::size_t>(k)].rows() != pm_.num_reduced_dofs())
                    throw ConfigError("checkpoint basis size does not match the mesh");
                rom_.basis(k).assign(c.bases[static_cast<std::size_t>(k)]);
            }
        }
        j_history_ = c.j_history;
        field_.alpha = sym_.scatter(x_);
        return events;
    }

    /// Runs until convergence or max_iter, writing into cfg.output.
    RunSummary run(std::ostream* progress = nullptr, const std::vector<std::string>& events = {}) {
        namespace fs = std::filesystem;
        const fs::path out(cfg_.output);
        fs::create_directories(out);
        {
            std::ofstream cj(out / "config.json");
            cj << to_json(cfg_).dump(2) << '\n';
        }
        std::ofstream ev(out / "events.log", std::ios::app);
        for (const auto& e : events) {
            ev << "iteration " << iteration_ << ": " << e << '\n';
            if (progress) *progress << "event: " << e << '\n';
        }
        CsvLog log(out / "log.csv", Dim, iteration_);
        std::ofstream timings(out / "timings.csv", iteration_ > 0 ? std::ios::app : std::ios::trunc);
        if (iteration_ == 0) timings << "iter,assemble_s,solve_s,sensitivity_s,total_s\n";

        RunSummary sum;
        const auto run_start = std::chrono::steady_clock::now();
        DesignField last = field_for(x_);
        for (int k = iteration_ + 1; k <= cfg_.loop.max_iter; ++k) {
            const auto t_iter = std::chrono::steady_clock::now();
            const DesignField f = field_for(x_);
            Analysis<Dim> a;
            auto t0 = std::chrono::steady_clock::now();
            a.qf = evaluate_qp_field(f, mesh_);
            a.prob = asmb_.assemble(a.qf, cfg_.material, threads_, cfg_.deterministic);
            a.assemble_time = detail::seconds_since(t0);
            a.rom_errors.assign(NV, std::numeric_limits<double>::quiet_NaN());

            t0 = std::chrono::steady_clock::now();
            const bool warm = k <= cfg_.rom.capacity;
            if (cfg_.rom.enabled && !warm) {
                const auto t = rom_.try_reduced(a.prob, pm_);
                a.rom_used = t.used;
                a.rom_errors = t.errors;
            }
            if (!a.rom_used) {
                solve_full(a.prob, pm_, solver_);
                ++full_solves_;
                if (cfg_.rom.enabled) rom_.enrich(a.prob);
            }
            a.solve_time = detail::seconds_since(t0);
            finish(a);

            IterationRecord rec;
            rec.iteration = k;
            rec.J = a.J;
            rec.volume = a.tensor.volume_fraction;
            rec.C = detail::upper_triangle<Dim>(a.tensor.C);
            rec.nu = detail::poisson_list<Dim>(engineering_constants<Dim>(a.tensor.C));
            rec.rom_used = a.rom_used;
            rec.rom_errors = a.rom_errors;

            if (a.rom_used) {
                ++gated_;
                if (gated_ == 1 || k % cfg_.loop.rom_check_every == 0) {
                    auto check = a.prob;
                    LinearSolver s(resolve_solver(cfg_.solver_kind(), Dim));
                    solve_full(check, pm_, s);
                    rec.j1_full_check =
                        spec_.value(effective_tensor(mesh_, a.qf, cfg_.material, check.chi, threads_, cfg_.deterministic).C);
                }
            }
            rec.full_solves = full_solves_;

            t0 = std::chrono::steady_clock::now();
            auto dC = tensor_sensitivity(mesh_, a.qf, cfg_.material, a.prob.chi, threads_);
            if (a.rom_used && cfg_.rom.exact_sensitivity)
                dC = add(dC, rom_correction(mesh_, pm_, a.qf, cfg_.material, a.prob, rom_, threads_));
            const auto og = objective_and_gradient(spec_, a.tensor.C, dC);
            const Eigen::VectorXd dV = volume_gradient(mesh_, a.qf, threads_);
            const Eigen::VectorXd gJ = fold_symmetry(og.grad, sym_);
            const Eigen::VectorXd gV = fold_symmetry(dV, sym_);
            const double sens_time = detail::seconds_since(t0);

            log.append(csv_row(rec));
            j_history_.push_back(a.J);
            last = f;
            iteration_ = k;
            solve_time_ += a.solve_time;
            if (a.rom_used) ++sum.rom_iterations;

            if (progress) {
                *progress << "it " << std::setw(4) << k << "  J1 " << std::scientific << std::setprecision(4) << a.J
                          << "  Vf " << std::fixed << std::setprecision(4) << rec.volume << "  nu_xy " << std::setprecision(4)
                          << rec.nu[0] << (a.rom_used ? "  [rom]" : "") << std::defaultfloat << '\n';
            }

            const std::string reason = converged(rec.volume);
            // MMA sees J1 relative to its first value and V relative to v_f
            const double jref = std::max(j_history_.front(), 1e-12);
            const double g = rec.volume / cfg_.volume_fraction - 1.0;
            const Eigen::VectorXd x_prev = x_;
            x_ = mma_.update(x_, gJ / jref, g, gV / cfg_.volume_fraction, field_.alpha_min, field_.alpha_max).x;
            if (observer_) observer_(rec, a, x_prev, x_);

            timings << k << ',' << format_double(a.assemble_time) << ',' << format_double(a.solve_time) << ','
                    << format_double(sens_time) << ',' << format_double(detail::seconds_since(t_iter)) << '\n';
            sum.J = a.J;
            sum.volume = rec.volume;
            sum.C = rec.C;
            sum.nu = rec.nu;
            if (!reason.empty()) {
                sum.converged = true;
                sum.stop_reason = reason;
                break;
            }
            if (k % cfg_.loop.checkpoint_every == 0) write_checkpoint(out / "checkpoint.bin", checkpoint());
        }
        if (!sum.converged) sum.stop_reason = "max_iter";
        write_checkpoint(out / "checkpoint.bin", checkpoint());
        export_vtk(out / "design.vtk", last, mesh_);
        sum.iterations = iteration_;
        sum.full_solves = full_solves_;
        sum.solve_time = solve_time_;
        sum.total_time = detail::seconds_since(run_start);
        write_summary(out / "summary.json", sum);
        return sum;
    }

    double cumulative_solve_time() const { return solve_time_; }

    /// Called after every design update with the record, the analysis and
    /// the design before and after the step.
    using Observer = std::function<void(const IterationRecord&, const Analysis<Dim>&, const Eigen::VectorXd&,
                                        const Eigen::VectorXd&)>;
    void set_observer(Observer f) { observer_ = std::move(f); }

private:
    void finish(Analysis<Dim>& a) const {
        a.tensor = effective_tensor(mesh_, a.qf, cfg_.material, a.prob.chi, threads_, cfg_.deterministic);
        a.J = spec_.value(a.tensor.C);
    }

    /// Empty string while the loop should continue.
    std::string converged(double volume) const {
        const bool feasible = volume <= cfg_.volume_fraction + cfg_.loop.volume_slack;
        if (!feasible) return {};
        if (j_history_.back() <= 1e-20) return "objective at zero";
        const int w = cfg_.loop.conv_window;
        if (static_cast<int>(j_history_.size()) <= w) return {};
        double worst = 0.0;
        for (std::size_t k = j_history_.size() - static_cast<std::size_t>(w); k < j_history_.size(); ++k) {
            const double d = std::abs(j_history_[k] - j_history_[k - 1]) / std::max(std::abs(j_history_[k]), 1e-30);
            worst = std::max(worst, d);
        }
        return worst < cfg_.loop.conv_tol ? "objective stationary" : std::string{};
    }

    static void write_summary(const std::filesystem::path& path, const RunSummary& s) {
        nlohmann::json j{{"iterations", s.iterations},   {"converged", s.converged},     {"stop_reason", s.stop_reason},
                         {"J1", s.J},                    {"Vf", s.volume},               {"C_upper", s.C},
                         {"nu", s.nu},                   {"rom_iterations", s.rom_iterations},
                         {"full_solves", s.full_solves}, {"solve_time_s", s.solve_time}, {"total_time_s", s.total_time}};
        write_atomic(path, j.dump(2) + "\n");
    }

    RunConfig cfg_;
    ControlMesh<Dim> mesh_;
    PeriodicMap pm_;
    SymmetryMap sym_;
    Assembler<Dim> asmb_;
    ObjectiveSpec<Dim> spec_;
    Mma mma_;
    RomModel<Dim> rom_;
    LinearSolver solver_;
    int threads_ = 1;
    DesignField field_;
    Eigen::VectorXd x_;
    int iteration_ = 0;
    int full_solves_ = 0;
    int gated_ = 0;
    double solve_time_ = 0.0;
    std::vector<double> j_history_;
    Observer observer_;
};

/// Effective tensor and engineering constants of one design.
template <int Dim>
struct HomogenizationReport {
    EffectiveTensor<Dim> tensor;
    EngineeringConstants<Dim> constants;
    double J = 0.0;
};

template <int Dim>
HomogenizationReport<Dim> homogenize(Optimizer<Dim>& opt, const DesignField& f) {
    const auto a = opt.analyze_full(f);
    return {a.tensor, engineering_constants<Dim>(a.tensor.C), a.J};
}

struct GradCheckReport {
    std::vector<GradCheckEntry> objective;
    std::vector<GradCheckEntry> volume;
    int in_band = 0;
    double pass_fraction_objective = 0.0;
    double pass_fraction_volume = 0.0;
};

/// Central differences of J1 and V against the analytic gradients at up to
/// max_points control points inside the band (evenly strided).
template <int Dim>
GradCheckReport grad_check(Optimizer<Dim>& opt, const DesignField& f, int max_points = 40, double step = 1e-4,
                           double tol = 1e-3) {
    const auto& mesh = opt.mesh();
    const auto a = opt.analyze_full(f);
    const auto og = objective_and_gradient(opt.config().template objective<Dim>(), a.tensor.C,
                                           tensor_sensitivity(mesh, a.qf, opt.config().material, a.prob.chi));
    const Eigen::VectorXd dV = volume_gradient(mesh, a.qf);
    std::vector<int> band;
    for (int I = 0; I < mesh.num_control_points(); ++I)
        if (dV(I) != 0.0) band.push_back(I);
    GradCheckReport rep;
    rep.in_band = static_cast<int>(band.size());
    if (band.empty()) return rep;
    const double sJ = og.grad.cwiseAbs().maxCoeff(), sV = dV.cwiseAbs().maxCoeff();
    const std::size_t stride = std::max<std::size_t>(1, band.size() / static_cast<std::size_t>(std::max(1, max_points)));
    int okJ = 0, okV = 0, n = 0;
    for (std::size_t k = 0; k < band.size() && n < max_points; k += stride, ++n) {
        const int I = band[k];
        DesignField fp = f, fm = f;
        fp.alpha(I) += step;
        fm.alpha(I) -= step;
        const auto ap = opt.analyze_full(fp), am = opt.analyze_full(fm);
        const double fdJ = (ap.J - am.J) / (2 * step);
        const double fdV = (ap.tensor.volume_fraction - am.tensor.volume_fraction) / (2 * step);
        GradCheckEntry eJ{I, og.grad(I), fdJ, gradient_rel_error(og.grad(I), fdJ, sJ)};
        GradCheckEntry eV{I, dV(I), fdV, gradient_rel_error(dV(I), fdV, sV)};
        okJ += eJ.rel_error <= tol;
        okV += eV.rel_error <= tol;
        rep.objective.push_back(eJ);
        rep.volume.push_back(eV);
    }
    rep.pass_fraction_objective = static_cast<double>(okJ) / n;
    rep.pass_fraction_volume = static_cast<double>(okV) / n;
    return rep;
}

}  // namespace auxlsm
