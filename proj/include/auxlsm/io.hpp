#pragma once

// File formats: convergence CSV, VTK legacy structured points and the binary
// checkpoint.
//
// Checkpoint layout (little endian, native doubles):
//   char[8]  "AUXLSMCK"
//   u32      schema version
//   i32      dim, elems, degree, iteration, full_solves, gated_iterations
//   f64      volume_fraction
//   vec      design variables
//   i32      mma iteration; vec xold1, xold2, low, upp
//   i32      basis count; per basis: i32 rows, i32 cols, f64[rows*cols] (column major)
//   vec      objective history
//   u64      FNV-1a hash of every preceding byte
// where vec = i64 length followed by f64 values.

#include "levelset.hpp"
#include "mesh.hpp"
#include "mma.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace auxlsm {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

// ---------------------------------------------------------------- CSV log

struct IterationRecord {
    int iteration = 0;
    double J = 0.0;
    double volume = 0.0;
    std::vector<double> C;       // upper triangle, row major
    std::vector<double> nu;      // 2D: nu_xy nu_yx; 3D: xy yx xz zx yz zy
    bool rom_used = false;
    std::vector<double> rom_errors;  // NaN when no projection was attempted
    int full_solves = 0;
    double j1_full_check = std::numeric_limits<double>::quiet_NaN();
};

/// Wall-clock split, kept out of the CSV so that log stays reproducible.
struct IterationTiming {
    int iteration = 0;
    double assemble = 0.0;
    double solve = 0.0;
    double sensitivity = 0.0;
    double total = 0.0;
};

inline std::vector<std::string> csv_columns(int dim) {
    const int nv = dim == 2 ? 3 : 6;
    std::vector<std::string> cols{"iter", "J1", "Vf"};
    for (int i = 0; i < nv; ++i)
        for (int j = i; j < nv; ++j) cols.push_back("C" + std::to_string(i + 1) + std::to_string(j + 1));
    if (dim == 2) {
        cols.insert(cols.end(), {"nu_xy", "nu_yx"});
    } else {
        cols.insert(cols.end(), {"nu_xy", "nu_yx", "nu_xz", "nu_zx", "nu_yz", "nu_zy"});
    }
    cols.push_back("rom_used");
    for (int c = 0; c < nv; ++c) cols.push_back("rom_err" + std::to_string(c + 1));
    cols.insert(cols.end(), {"full_solves", "j1_full_check"});
    return cols;
}

inline std::string csv_header(int dim) {
    std::string s;
    for (const auto& c : csv_columns(dim)) s += (s.empty() ? "" : ",") + c;
    return s;
}

inline std::string csv_row(const IterationRecord& r) {
    std::ostringstream os;
    os << r.iteration << ',' << format_double(r.J) << ',' << format_double(r.volume);
    for (double v : r.C) os << ',' << format_double(v);
    for (double v : r.nu) os << ',' << format_double(v);
    os << ',' << (r.rom_used ? 1 : 0);
    for (double v : r.rom_errors) os << ',' << format_double(v);
    os << ',' << r.full_solves << ',' << format_double(r.j1_full_check);
    return os.str();
}

/// Parsed CSV: header names and rows of raw cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        throw IoError("CSV column not found: " + name);
    }
    double number(std::size_t row, const std::string& name) const {
        const auto& cell = rows[row][static_cast<std::size_t>(column(name))];
        return cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell);
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    const auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(l);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!l.empty() && l.back() == ',') out.emplace_back();
        return out;
    };
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

/// Appends records; on resume keeps the header and the first keep_rows rows.
class CsvLog {
public:
    CsvLog(const std::filesystem::path& path, int dim, int keep_rows) : path_(path) {
        std::vector<std::string> kept;
        if (keep_rows > 0 && std::filesystem::exists(path)) {
            std::ifstream in(path);
            std::string line;
            std::getline(in, line);
            while (static_cast<int>(kept.size()) < keep_rows && std::getline(in, line)) kept.push_back(line);
        }
        std::string text = csv_header(dim) + "\n";
        for (const auto& l : kept) text += l + "\n";
        write_atomic(path, text);
        out_.open(path, std::ios::app);
        if (!out_) throw IoError("cannot append to " + path.string());
    }

    void append(const std::string& line) {
        out_ << line << '\n';
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// ---------------------------------------------------------------- VTK

/// Samples per direction: twice the quadrature points per element, plus one.
template <int Dim>
int vtk_samples(const ControlMesh<Dim>& mesh) {
    return 2 * (mesh.degree() + 1) * mesh.elems_per_dir() + 1;
}

struct SampledFields {
    int n = 0;    // samples per direction
    int dim = 2;
    std::vector<double> phi;
    std::vector<double> density;
};

template <int Dim>
SampledFields sample_fields(const DesignField& field, const ControlMesh<Dim>& mesh) {
    SampledFields s;
    s.n = vtk_samples(mesh);
    s.dim = Dim;
    std::size_t total = 1;
    for (int d = 0; d < Dim; ++d) total *= static_cast<std::size_t>(s.n);
    s.phi.resize(total);
    s.density.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
        Point<Dim> x{};
        std::size_t rem = k;
        for (int d = 0; d < Dim; ++d) {
            x[d] = static_cast<double>(rem % static_cast<std::size_t>(s.n)) / (s.n - 1);
            rem /= static_cast<std::size_t>(s.n);
        }
        const auto [e, xi] = mesh.locate(x);
        const double phi = eval_phi<Dim>(field, mesh, e, xi).value;
        s.phi[k] = phi;
        s.density[k] = heaviside(phi, field.xi, field.rho_min);
    }
    return s;
}

inline std::string vtk_text(const SampledFields& s, const std::string& title) {
    std::ostringstream os;
    const double h = 1.0 / (s.n - 1);
    os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    os << "DIMENSIONS " << s.n << ' ' << s.n << ' ' << (s.dim == 3 ? s.n : 1) << '\n';
    os << "ORIGIN 0 0 0\n";
    os << "SPACING " << format_double(h) << ' ' << format_double(h) << ' ' << (s.dim == 3 ? format_double(h) : "1") << '\n';
    os << "POINT_DATA " << s.phi.size() << '\n';
    const auto block = [&](const char* name, const std::vector<double>& v) {
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (double x : v) os << format_double(x) << '\n';
    };
    block("phi", s.phi);
    block("density", s.density);
    return os.str();
}

template <int Dim>
void export_vtk(const std::filesystem::path& path, const DesignField& field, const ControlMesh<Dim>& mesh,
                const std::string& title = "auxlsm level set") {
    write_atomic(path, vtk_text(sample_fields(field, mesh), title));
}

/// Reads the named scalar block of a file written by export_vtk.
inline std::vector<double> read_vtk_scalars(const std::filesystem::path& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string tok;
    long count = -1;
    while (in >> tok) {
        if (tok == "POINT_DATA") in >> count;
        if (tok == "SCALARS") {
            std::string n, type, line;
            in >> n >> type;
            std::getline(in, line);
            std::getline(in, line);  // LOOKUP_TABLE
            if (n != name) continue;
            if (count < 0) throw IoError("VTK: POINT_DATA missing before SCALARS");
            std::vector<double> v(static_cast<std::size_t>(count));
            for (auto& x : v) {
                if (!(in >> tok)) throw IoError("VTK: truncated scalars " + name);
                x = std::strtod(tok.c_str(), nullptr);
            }
            return v;
        }
    }
    throw IoError("VTK: scalars '" + name + "' not found in " + path.string());
}

// ---------------------------------------------------------------- checkpoint

inline constexpr char kCheckpointMagic[8] = {'A', 'U', 'X', 'L', 'S', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    int dim = 2, elems = 0, degree = 0;
    int iteration = 0;  // completed iterations
    int full_solves = 0;
    int gated_iterations = 0;
    double volume_fraction = 0.0;
    Eigen::VectorXd x;
    MmaState mma;
    std::vector<Eigen::MatrixXd> bases;
    std::vector<double> j_history;
};

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t k = 0; k < n; ++k) {
        h ^= static_cast<unsigned char>(data[k]);
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

class Writer {
public:
    template <typename T>
    void pod(const T& v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void vec(const Eigen::VectorXd& v) {
        pod<std::int64_t>(v.size());
        buf_.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
    }
    std::string& bytes() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
    template <typename T>
    T pod() {
        if (pos_ + sizeof(T) > end_) throw IoError("checkpoint truncated");
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    Eigen::VectorXd vec() {
        const auto n = pod<std::int64_t>();
        if (n < 0 || static_cast<std::size_t>(n) > (end_ - pos_) / sizeof(double)) throw IoError("checkpoint corrupt vector");
        Eigen::VectorXd v(n);
        std::memcpy(v.data(), b_.data() + pos_, static_cast<std::size_t>(n) * sizeof(double));
        pos_ += static_cast<std::size_t>(n) * sizeof(double);
        return v;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& b_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& c) {
    detail::Writer w;
    w.bytes().append(kCheckpointMagic, 8);
    w.pod(kCheckpointVersion);
    for (int v : {c.dim, c.elems, c.degree, c.iteration, c.full_solves, c.gated_iterations}) w.pod<std::int32_t>(v);
    w.pod(c.volume_fraction);
    w.vec(c.x);
    w.pod<std::int32_t>(c.mma.iteration);
    w.vec(c.mma.xold1);
    w.vec(c.mma.xold2);
    w.vec(c.mma.low);
    w.vec(c.mma.upp);
    w.pod<std::int32_t>(static_cast<std::int32_t>(c.bases.size()));
    for (const auto& B : c.bases) {
        w.pod<std::int32_t>(static_cast<std::int32_t>(B.rows()));
        w.pod<std::int32_t>(static_cast<std::int32_t>(B.cols()));
        w.bytes().append(reinterpret_cast<const char*>(B.data()), static_cast<std::size_t>(B.size()) * sizeof(double));
    }
    w.vec(Eigen::Map<const Eigen::VectorXd>(c.j_history.data(), static_cast<Eigen::Index>(c.j_history.size())));
    w.pod(fnv1a(w.bytes().data(), w.bytes().size()));
    return w.bytes();
}

inline Checkpoint deserialize(const std::string& b) {
    if (b.size() < 8 + 4 + 8 || std::memcmp(b.data(), kCheckpointMagic, 8) != 0) throw IoError("not a checkpoint file");
    const std::size_t end = b.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, b.data() + end, sizeof stored);
    std::uint32_t version;
    std::memcpy(&version, b.data() + 8, sizeof version);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint schema version " + std::to_string(version) + " does not match supported version " +
                      std::to_string(kCheckpointVersion));
    if (fnv1a(b.data(), end) != stored) throw IoError("checkpoint checksum mismatch (corrupt file)");
    detail::Reader r(b, end);
    for (int k = 0; k < 8; ++k) r.pod<char>();
    r.pod<std::uint32_t>();
    Checkpoint c;
    c.dim = r.pod<std::int32_t>();
    c.elems = r.pod<std::int32_t>();
    c.degree = r.pod<std::int32_t>();
    c.iteration = r.pod<std::int32_t>();
    c.full_solves = r.pod<std::int32_t>();
    c.gated_iterations = r.pod<std::int32_t>();
    c.volume_fraction = r.pod<double>();
    c.x = r.vec();
    c.mma.iteration = r.pod<std::int32_t>();
    c.mma.xold1 = r.vec();
    c.mma.xold2 = r.vec();
    c.mma.low = r.vec();
    c.mma.upp = r.vec();
    const int nb = r.pod<std::int32_t>();
    if (nb < 0 || nb > 64) throw IoError("checkpoint corrupt basis count");
    for (int k = 0; k < nb; ++k) {
        const int rows = r.pod<std::int32_t>(), cols = r.pod<std::int32_t>();
        if (rows < 0 || cols < 0) throw IoError("checkpoint corrupt basis shape");
        Eigen::MatrixXd B(rows, cols);
        for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = r.pod<double>();
        c.bases.push_back(std::move(B));
    }
    const Eigen::VectorXd jh = r.vec();
    c.j_history.assign(jh.data(), jh.data() + jh.size());
    if (!r.done()) throw IoError("checkpoint has trailing bytes");
    return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_atomic(path, serialize(c)); }

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace auxlsm
