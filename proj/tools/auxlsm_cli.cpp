// auxlsm command line: run, homogenize, grad-check, export.

#include <auxlsm/driver.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

using namespace auxlsm;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string resume;
    bool no_rom = false;
    int max_iter = -1;
    double scale = 1.0;
    std::string design;   // checkpoint to evaluate instead of the seeds
    std::string vtk;      // export target
    int points = 40;
    double step = 1e-5;
    double tol = 1e-3;
};

RunConfig resolve(const Options& o) {
    RunConfig c = o.config.empty() ? auxetic_2d_config() : load_config(o.config);
    if (!o.out.empty()) c.output = o.out;
    if (o.no_rom) c.rom.enabled = false;
    if (o.max_iter >= 0) c.loop.max_iter = o.max_iter;
    if (o.scale != 1.0) c.elems = scaled_elems(c.elems, o.scale);
    c.validate();
    return c;
}

template <int Dim>
DesignField design_of(Optimizer<Dim>& opt, const Options& o) {
    if (o.design.empty()) return opt.field();
    opt.restore(read_checkpoint(o.design));
    return opt.field();
}

void print_tensor(const Eigen::MatrixXd& C) {
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
        std::cout << "  ";
        for (Eigen::Index j = 0; j < C.cols(); ++j) std::cout << ' ' << std::setw(24) << format_double(C(i, j));
        std::cout << '\n';
    }
}

template <int Dim>
int run(const RunConfig& c, const Options& o) {
    Optimizer<Dim> opt(c);
    std::vector<std::string> events;
    if (!o.resume.empty()) {
        events = opt.restore(read_checkpoint(o.resume));
        std::cerr << "resuming after iteration " << opt.completed_iterations() << '\n';
    }
    const auto s = opt.run(&std::cerr, events);
    std::cout << "stop: " << s.stop_reason << " after " << s.iterations << " iterations\n";
    if (!s.nu.empty())
        std::cout << "J1 " << format_double(s.J) << "  Vf " << format_double(s.volume) << "  nu_xy " << format_double(s.nu[0])
                  << '\n';
    std::cout << "reduced iterations " << s.rom_iterations << ", full solves " << s.full_solves << "\noutput in "
              << c.output << '\n';
    return 0;
}

template <int Dim>
int homogenize_cmd(const RunConfig& c, const Options& o) {
    Optimizer<Dim> opt(c);
    const auto r = homogenize(opt, design_of(opt, o));
    std::cout << "C^H:\n";
    print_tensor(r.tensor.C);
    std::cout << "volume fraction " << format_double(r.tensor.volume_fraction) << "\nJ1 " << format_double(r.J) << '\n';
    if (!r.constants.defined) {
        std::cout << "engineering constants undefined (singular tensor)\n";
        return 0;
    }
    for (int i = 0; i < Dim; ++i) std::cout << "E" << i + 1 << ' ' << format_double(r.constants.youngs(i)) << '\n';
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j)
            if (i != j) std::cout << "nu" << i + 1 << j + 1 << ' ' << format_double(r.constants.nu(i, j)) << '\n';
    return 0;
}

template <int Dim>
int grad_check_cmd(const RunConfig& c, const Options& o) {
    Optimizer<Dim> opt(c);
    const auto rep = grad_check(opt, design_of(opt, o), o.points, o.step, o.tol);
    std::cout << "control points in band: " << rep.in_band << "\n";
    std::cout << "index,analytic_J1,fd_J1,rel_err_J1,analytic_V,fd_V,rel_err_V\n";
    for (std::size_t k = 0; k < rep.objective.size(); ++k) {
        const auto& a = rep.objective[k];
        const auto& b = rep.volume[k];
        std::cout << a.index << ',' << format_double(a.analytic) << ',' << format_double(a.fd) << ','
                  << format_double(a.rel_error) << ',' << format_double(b.analytic) << ',' << format_double(b.fd) << ','
                  << format_double(b.rel_error) << '\n';
    }
    std::cout << "pass fraction J1 " << rep.pass_fraction_objective << ", V " << rep.pass_fraction_volume << " (tol "
              << o.tol << ")\n";
    return rep.in_band > 0 && rep.pass_fraction_objective >= 0.95 && rep.pass_fraction_volume >= 0.95 ? 0 : 1;
}

template <int Dim>
int export_cmd(const RunConfig& c, const Options& o) {
    Optimizer<Dim> opt(c);
    const auto f = design_of(opt, o);
    const fs::path target = o.vtk.empty() ? fs::path(c.output) / "design.vtk" : fs::path(o.vtk);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    export_vtk(target, f, opt.mesh(), c.name);
    std::cout << "wrote " << target.string() << " (" << vtk_samples(opt.mesh()) << " samples per direction)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Level-set topology optimization of periodic unit cells"};
    app.require_subcommand(1);
    Options o;
    const auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config, "JSON configuration (default: built-in 2D auxetic case)")->check(CLI::ExistingFile);
        s->add_option("--out", o.out, "output directory");
        s->add_flag("--no-rom", o.no_rom, "disable the reduced-order model");
        s->add_option("--max-iter", o.max_iter, "iteration cap")->check(CLI::PositiveNumber);
        s->add_option("--scale", o.scale, "multiply elements per direction")->check(CLI::PositiveNumber);
    };
    auto* run_cmd = app.add_subcommand("run", "optimize a unit cell");
    common(run_cmd);
    run_cmd->add_option("--resume", o.resume, "checkpoint to continue from")->check(CLI::ExistingFile);

    auto* hom = app.add_subcommand("homogenize", "effective tensor of the seed design or a checkpoint");
    common(hom);
    hom->add_option("--design", o.design, "checkpoint holding the design")->check(CLI::ExistingFile);

    auto* gc = app.add_subcommand("grad-check", "compare sensitivities with central differences");
    common(gc);
    gc->add_option("--design", o.design, "checkpoint holding the design")->check(CLI::ExistingFile);
    gc->add_option("--points", o.points, "control points to probe")->check(CLI::PositiveNumber);
    gc->add_option("--step", o.step, "finite difference step")->check(CLI::PositiveNumber);
    gc->add_option("--tol", o.tol, "relative error tolerance")->check(CLI::PositiveNumber);

    auto* ex = app.add_subcommand("export", "write the level set and density as VTK");
    common(ex);
    ex->add_option("--design", o.design, "checkpoint holding the design")->check(CLI::ExistingFile);
    ex->add_option("--vtk", o.vtk, "output file (default <out>/design.vtk)");

    CLI11_PARSE(app, argc, argv);
    try {
        const RunConfig c = resolve(o);
        const bool d2 = c.dim == 2;
        if (run_cmd->parsed()) return d2 ? run<2>(c, o) : run<3>(c, o);
        if (hom->parsed()) return d2 ? homogenize_cmd<2>(c, o) : homogenize_cmd<3>(c, o);
        if (gc->parsed()) return d2 ? grad_check_cmd<2>(c, o) : grad_check_cmd<3>(c, o);
        return d2 ? export_cmd<2>(c, o) : export_cmd<3>(c, o);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
