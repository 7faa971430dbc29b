#pragma once

// Run configuration: JSON (de)serialization with a versioned schema.

#include "fem.hpp"
#include "levelset.hpp"
#include "mma.hpp"
#include "rom.hpp"
#include "sensitivity.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace auxlsm {

inline constexpr int kConfigSchemaVersion = 1;

struct HoleSpec {
    std::vector<double> center;
    double radius = 0.1;
};

struct SeedSpec {
    std::string preset = "lattice";  // lattice | solid | explicit
    int lattice = 2;
    double radius = 0.15;
    std::vector<HoleSpec> holes;
};

struct LoopSettings {
    int max_iter = 300;
    int conv_window = 10;
    double conv_tol = 1e-6;
    double volume_slack = 1e-3;
    int checkpoint_every = 10;
    int rom_check_every = 25;
};

struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    std::string name = "run";
    int dim = 2;
    int elems = 60;
    int degree = 2;
    MaterialModel material{};
    SeedSpec seeds{};
    double xi_factor = 1.5;
    double rho_min = 1e-6;
    std::vector<std::vector<double>> target;   // Voigt matrix
    std::vector<std::vector<double>> weights;  // upper triangle read
    double volume_fraction = 0.3;
    MmaSettings mma{};
    RomSettings rom{};
    LoopSettings loop{};
    bool symmetry = true;
    std::string output = "out";
    bool deterministic = true;
    int threads = 0;
    std::string solver = "auto";  // auto | direct | pcg

    int voigt() const { return dim == 2 ? 3 : 6; }

    void validate() const {
        const auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
        if (schema_version != kConfigSchemaVersion)
            fail("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                 std::to_string(kConfigSchemaVersion) + ")");
        if (dim != 2 && dim != 3) fail("dim must be 2 or 3");
        if (elems < 2) fail("mesh.elems must be at least 2");
        if (degree < 1 || degree > 4) fail("mesh.degree must lie in [1, 4]");
        if (!(material.E > 0.0)) fail("material.E must be positive");
        if (!(material.nu > -1.0 && material.nu < (dim == 2 ? 1.0 : 0.5))) fail("material.nu out of range");
        if (!(xi_factor > 0.0)) fail("levelset.xi_factor must be positive");
        if (!(rho_min > 0.0 && rho_min < 1.0)) fail("levelset.rho_min must lie in (0, 1)");
        if (seeds.preset != "lattice" && seeds.preset != "solid" && seeds.preset != "explicit")
            fail("levelset.seeds.preset must be lattice, solid or explicit");
        if (seeds.preset == "lattice" && (seeds.lattice < 1 || !(seeds.radius > 0.0))) fail("invalid lattice seeds");
        if (seeds.preset == "explicit") {
            if (seeds.holes.empty()) fail("explicit seeds need at least one hole");
            for (const auto& h : seeds.holes)
                if (static_cast<int>(h.center.size()) != dim || !(h.radius > 0.0)) fail("invalid hole specification");
        }
        const auto check_matrix = [&](const std::vector<std::vector<double>>& m, const char* what) {
            if (static_cast<int>(m.size()) != voigt()) fail(std::string(what) + " must be a square Voigt matrix");
            for (const auto& r : m)
                if (static_cast<int>(r.size()) != voigt()) fail(std::string(what) + " must be a square Voigt matrix");
        };
        check_matrix(target, "objective.target");
        check_matrix(weights, "objective.weights");
        if (!(volume_fraction > 0.0 && volume_fraction <= 1.0)) fail("constraint.volume_fraction must lie in (0, 1]");
        try {
            mma.validate();
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (rom.capacity < 1) fail("rom.capacity must be positive");
        if (!(rom.tol > 0.0)) fail("rom.tol must be positive");
        if (loop.max_iter < 1) fail("loop.max_iter must be at least 1");
        if (loop.conv_window < 1) fail("loop.conv_window must be positive");
        if (loop.checkpoint_every < 1) fail("loop.checkpoint_every must be positive");
        if (loop.rom_check_every < 1) fail("loop.rom_check_every must be positive");
        if (solver != "auto" && solver != "direct" && solver != "pcg") fail("solver must be auto, direct or pcg");
        if (threads < 0) fail("threads must be nonnegative");
    }

    SolverKind solver_kind() const {
        if (solver == "direct") return SolverKind::Direct;
        if (solver == "pcg") return SolverKind::Pcg;
        return SolverKind::Auto;
    }

    template <int Dim>
    ObjectiveSpec<Dim> objective() const {
        ObjectiveSpec<Dim> s;
        for (int i = 0; i < voigt_size<Dim>; ++i)
            for (int j = 0; j < voigt_size<Dim>; ++j) {
                s.target(i, j) = target[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                s.weights(i, j) = weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
        return s;
    }

    template <int Dim>
    HoleSeedConfig<Dim> hole_seeds() const {
        if (seeds.preset == "solid") return HoleSeedConfig<Dim>::solid();
        if (seeds.preset == "lattice") return HoleSeedConfig<Dim>::lattice(seeds.lattice, seeds.radius);
        HoleSeedConfig<Dim> out;
        for (const auto& h : seeds.holes) {
            Hole<Dim> hole;
            for (int d = 0; d < Dim; ++d) hole.center[d] = h.center[static_cast<std::size_t>(d)];
            hole.radius = h.radius;
            out.holes.push_back(hole);
        }
        return out;
    }
};

inline void to_json(nlohmann::json& j, const HoleSpec& h) { j = {{"center", h.center}, {"radius", h.radius}}; }
inline void from_json(const nlohmann::json& j, HoleSpec& h) {
    j.at("center").get_to(h.center);
    j.at("radius").get_to(h.radius);
}

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    return json{
        {"schema_version", c.schema_version},
        {"name", c.name},
        {"mesh", {{"dim", c.dim}, {"elems", c.elems}, {"degree", c.degree}}},
        {"material", {{"E", c.material.E}, {"nu", c.material.nu}}},
        {"levelset",
         {{"xi_factor", c.xi_factor},
          {"rho_min", c.rho_min},
          {"seeds",
           {{"preset", c.seeds.preset}, {"lattice", c.seeds.lattice}, {"radius", c.seeds.radius}, {"holes", c.seeds.holes}}}}},
        {"objective", {{"target", c.target}, {"weights", c.weights}}},
        {"constraint", {{"volume_fraction", c.volume_fraction}}},
        {"mma",
         {{"asy_init", c.mma.asy_init},
          {"asy_incr", c.mma.asy_incr},
          {"asy_decr", c.mma.asy_decr},
          {"asy_min", c.mma.asy_min},
          {"asy_max", c.mma.asy_max},
          {"move", c.mma.move},
          {"albefa", c.mma.albefa},
          {"raa0", c.mma.raa0}}},
        {"rom",
         {{"enabled", c.rom.enabled},
          {"capacity", c.rom.capacity},
          {"tol", c.rom.tol},
          {"exact_sensitivity", c.rom.exact_sensitivity}}},
        {"loop",
         {{"max_iter", c.loop.max_iter},
          {"conv_window", c.loop.conv_window},
          {"conv_tol", c.loop.conv_tol},
          {"volume_slack", c.loop.volume_slack},
          {"checkpoint_every", c.loop.checkpoint_every},
          {"rom_check_every", c.loop.rom_check_every}}},
        {"symmetry", c.symmetry},
        {"output", c.output},
        {"deterministic", c.deterministic},
        {"threads", c.threads},
        {"solver", c.solver},
    };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    const auto known = [](const nlohmann::json& obj, std::initializer_list<const char*> keys, const std::string& where) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) throw ConfigError("config: unknown key '" + where + it.key() + "'");
        }
    };
    const auto get = [](const nlohmann::json& obj, const char* key, auto& out) {
        if (obj.contains(key)) obj.at(key).get_to(out);
    };
    try {
        if (!j.is_object()) throw ConfigError("config: top level must be an object");
        known(j, {"schema_version", "name", "mesh", "material", "levelset", "objective", "constraint", "mma", "rom", "loop",
                  "symmetry", "output", "deterministic", "threads", "solver"},
              "");
        if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
        get(j, "schema_version", c.schema_version);
        get(j, "name", c.name);
        if (j.contains("mesh")) {
            const auto& m = j["mesh"];
            known(m, {"dim", "elems", "degree"}, "mesh.");
            get(m, "dim", c.dim);
            get(m, "elems", c.elems);
            get(m, "degree", c.degree);
        }
        if (j.contains("material")) {
            known(j["material"], {"E", "nu"}, "material.");
            get(j["material"], "E", c.material.E);
            get(j["material"], "nu", c.material.nu);
        }
        if (j.contains("levelset")) {
            const auto& l = j["levelset"];
            known(l, {"xi_factor", "rho_min", "seeds"}, "levelset.");
            get(l, "xi_factor", c.xi_factor);
            get(l, "rho_min", c.rho_min);
            if (l.contains("seeds")) {
                const auto& s = l["seeds"];
                known(s, {"preset", "lattice", "radius", "holes"}, "levelset.seeds.");
                get(s, "preset", c.seeds.preset);
                get(s, "lattice", c.seeds.lattice);
                get(s, "radius", c.seeds.radius);
                get(s, "holes", c.seeds.holes);
            }
        }
        if (!j.contains("objective")) throw ConfigError("config: objective is required");
        known(j["objective"], {"target", "weights"}, "objective.");
        j["objective"].at("target").get_to(c.target);
        j["objective"].at("weights").get_to(c.weights);
        if (j.contains("constraint")) {
            known(j["constraint"], {"volume_fraction"}, "constraint.");
            get(j["constraint"], "volume_fraction", c.volume_fraction);
        }
        if (j.contains("mma")) {
            const auto& m = j["mma"];
            known(m, {"asy_init", "asy_incr", "asy_decr", "asy_min", "asy_max", "move", "albefa", "raa0"}, "mma.");
            get(m, "asy_init", c.mma.asy_init);
            get(m, "asy_incr", c.mma.asy_incr);
            get(m, "asy_decr", c.mma.asy_decr);
            get(m, "asy_min", c.mma.asy_min);
            get(m, "asy_max", c.mma.asy_max);
            get(m, "move", c.mma.move);
            get(m, "albefa", c.mma.albefa);
            get(m, "raa0", c.mma.raa0);
        }
        if (j.contains("rom")) {
            const auto& r = j["rom"];
            known(r, {"enabled", "capacity", "tol", "exact_sensitivity"}, "rom.");
            get(r, "enabled", c.rom.enabled);
            get(r, "capacity", c.rom.capacity);
            get(r, "tol", c.rom.tol);
            get(r, "exact_sensitivity", c.rom.exact_sensitivity);
        }
        if (j.contains("loop")) {
            const auto& l = j["loop"];
            known(l, {"max_iter", "conv_window", "conv_tol", "volume_slack", "checkpoint_every", "rom_check_every"}, "loop.");
            get(l, "max_iter", c.loop.max_iter);
            get(l, "conv_window", c.loop.conv_window);
            get(l, "conv_tol", c.loop.conv_tol);
            get(l, "volume_slack", c.loop.volume_slack);
            get(l, "checkpoint_every", c.loop.checkpoint_every);
            get(l, "rom_check_every", c.loop.rom_check_every);
        }
        get(j, "symmetry", c.symmetry);
        get(j, "output", c.output);
        get(j, "deterministic", c.deterministic);
        get(j, "threads", c.threads);
        get(j, "solver", c.solver);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// 2D auxetic target: diagonal 0.1, off-diagonal -0.05.
inline RunConfig auxetic_2d_config() {
    RunConfig c;
    c.name = "auxetic-2d";
    c.target = {{0.1, -0.05, 0.0}, {-0.05, 0.1, 0.0}, {0.0, 0.0, 0.0}};
    c.weights = {{0.01, 0.5, 0.0}, {0.0, 0.01, 0.0}, {0.0, 0.0, 0.0}};
    return c;
}

/// Elements per direction after a --scale factor.
inline int scaled_elems(int elems, double scale) {
    if (!(scale > 0.0)) throw ConfigError("--scale must be positive");
    return std::max(2, static_cast<int>(std::lround(elems * scale)));
}

}  // namespace auxlsm
