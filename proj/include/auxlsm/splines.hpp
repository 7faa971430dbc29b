#pragma once

// Univariate and tensor-product B-spline / NURBS machinery built on Bezier
// extraction. Bernstein polynomials live on the parent interval [-1, 1].

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace auxlsm {

/// Open knot vector on [0, 1] with its polynomial degree.
struct KnotVector {
    int degree = 1;
    std::vector<double> knots;

    KnotVector() = default;
    KnotVector(int p, std::vector<double> u) : degree(p), knots(std::move(u)) { validate(); }

    /// Uniform open knot vector with `elements` knot spans.
    static KnotVector open_uniform(int p, int elements) {
        if (p < 1 || elements < 1) throw std::invalid_argument("open_uniform: p >= 1 and elements >= 1 required");
        std::vector<double> u;
        u.reserve(static_cast<std::size_t>(elements + 2 * p + 1));
        for (int i = 0; i < p; ++i) u.push_back(0.0);
        for (int e = 0; e <= elements; ++e) u.push_back(static_cast<double>(e) / elements);
        for (int i = 0; i < p; ++i) u.push_back(1.0);
        return KnotVector(p, std::move(u));
    }

    int num_basis() const { return static_cast<int>(knots.size()) - degree - 1; }

    void validate() const {
        const int p = degree;
        if (p < 1) throw std::invalid_argument("KnotVector: degree must be >= 1");
        const auto m = knots.size();
        if (m < static_cast<std::size_t>(2 * p + 2))
            throw std::invalid_argument("KnotVector: too few knots for degree");
        if (knots.front() != 0.0 || knots.back() != 1.0)
            throw std::invalid_argument("KnotVector: knots must span [0, 1]");
        for (std::size_t i = 0; i + 1 < m; ++i)
            if (knots[i] > knots[i + 1]) throw std::invalid_argument("KnotVector: knots must be nondecreasing");
        for (int i = 0; i <= p; ++i)
            if (knots[static_cast<std::size_t>(i)] != 0.0 || knots[m - 1 - static_cast<std::size_t>(i)] != 1.0)
                throw std::invalid_argument("KnotVector: end knots must be repeated p+1 times");
        // interior multiplicities
        std::size_t i = static_cast<std::size_t>(p + 1);
        while (i < m - static_cast<std::size_t>(p + 1)) {
            std::size_t j = i;
            while (j + 1 < m && knots[j + 1] == knots[i]) ++j;
            if (knots[i] != 1.0 && static_cast<int>(j - i + 1) > p)
                throw std::invalid_argument("KnotVector: interior multiplicity exceeds degree");
            i = j + 1;
        }
        if (num_basis() < p + 1) throw std::invalid_argument("KnotVector: fewer than p+1 basis functions");
    }
};

/// Bernstein values and first derivatives (w.r.t. the parent coordinate).
struct BernsteinValues {
    Eigen::VectorXd values;
    Eigen::VectorXd derivs;
};

/// Bernstein polynomials of degree p at xi in [-1, 1].
inline BernsteinValues bernstein_eval(int p, double xi) {
    if (p < 1) throw std::invalid_argument("bernstein_eval: p must be >= 1");
    if (!(xi >= -1.0 - 1e-14 && xi <= 1.0 + 1e-14))
        throw std::domain_error("bernstein_eval: xi outside [-1, 1]: " + std::to_string(xi));
    const double t = 0.5 * (xi + 1.0);
    const double s = 1.0 - t;

    // de Casteljau style triangle: B_{i,k} = s B_{i,k-1} + t B_{i-1,k-1}
    auto degree_values = [&](int k) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k + 1);
        b(0) = 1.0;
        for (int j = 1; j <= k; ++j) {
            double saved = 0.0;
            for (int i = 0; i < j; ++i) {
                const double tmp = b(i);
                b(i) = saved + s * tmp;
                saved = t * tmp;
            }
            b(j) = saved;
        }
        return b;
    };

    BernsteinValues out;
    out.values = degree_values(p);
    const Eigen::VectorXd lower = degree_values(p - 1);
    out.derivs = Eigen::VectorXd::Zero(p + 1);
    // dB_{i,p}/dt = p (B_{i-1,p-1} - B_{i,p-1}); dt/dxi = 1/2
    for (int i = 0; i <= p; ++i) {
        const double left = i > 0 ? lower(i - 1) : 0.0;
        const double right = i < p ? lower(i) : 0.0;
        out.derivs(i) = 0.5 * p * (left - right);
    }
    return out;
}

/// Univariate extraction: one operator per nonzero knot span.
struct ExtractionSet1D {
    int degree = 1;
    int num_basis = 0;
    std::vector<Eigen::MatrixXd> operators;  // rows: local B-splines, cols: Bernstein
    std::vector<int> first_basis;            // global index of local function 0
    std::vector<std::array<double, 2>> spans;

    int num_elements() const { return static_cast<int>(operators.size()); }
};

/// Bezier extraction operators of an open knot vector (knot-insertion recurrence).
inline ExtractionSet1D build_extraction(const KnotVector& kv) {
    kv.validate();
    const int p = kv.degree;
    const auto& U = kv.knots;
    const int m = static_cast<int>(U.size());

    ExtractionSet1D ext;
    ext.degree = p;
    ext.num_basis = kv.num_basis();

    // element spans and first-basis indices
    for (int k = p; k < m - p - 1; ++k) {
        if (U[static_cast<std::size_t>(k)] < U[static_cast<std::size_t>(k + 1)]) {
            ext.spans.push_back({U[static_cast<std::size_t>(k)], U[static_cast<std::size_t>(k + 1)]});
            ext.first_basis.push_back(k - p);
        }
    }
    const int nel = static_cast<int>(ext.spans.size());

    // 0-based transcription of the standard algorithm (a, b index knots)
    std::vector<Eigen::MatrixXd> C;
    C.push_back(Eigen::MatrixXd::Identity(p + 1, p + 1));
    std::vector<double> alphas(static_cast<std::size_t>(p), 0.0);
    int a = p;
    int b = a + 1;
    int e = 0;
    while (b < m - 1) {
        C.push_back(Eigen::MatrixXd::Identity(p + 1, p + 1));
        const int i = b;
        while (b < m - 1 && U[static_cast<std::size_t>(b + 1)] == U[static_cast<std::size_t>(b)]) ++b;
        const int mult = b - i + 1;
        if (mult < p) {
            const double numer = U[static_cast<std::size_t>(b)] - U[static_cast<std::size_t>(a)];
            for (int j = p; j > mult; --j)
                alphas[static_cast<std::size_t>(j - mult - 1)] =
                    numer / (U[static_cast<std::size_t>(a + j)] - U[static_cast<std::size_t>(a)]);
            const int r = p - mult;
            for (int j = 1; j <= r; ++j) {
                const int save = r - j;
                const int s = mult + j;
                for (int k = p; k >= s; --k) {
                    const double alpha = alphas[static_cast<std::size_t>(k - s)];
                    C[static_cast<std::size_t>(e)].col(k) =
                        alpha * C[static_cast<std::size_t>(e)].col(k) +
                        (1.0 - alpha) * C[static_cast<std::size_t>(e)].col(k - 1);
                }
                if (b < m - 1) {
                    // C^{e+1}(save : save+j, save) = C^e(p-j : p, p)
                    C[static_cast<std::size_t>(e + 1)].block(save, save, j + 1, 1) =
                        C[static_cast<std::size_t>(e)].block(p - j, p, j + 1, 1);
                }
            }
        }
        ++e;
        if (b < m - 1) {
            a = b;
            ++b;
        }
    }
    C.resize(static_cast<std::size_t>(nel));
    ext.operators = std::move(C);
    return ext;
}

/// Greville abscissae: averages of p consecutive interior knots.
inline std::vector<double> greville_points(const KnotVector& kv) {
    kv.validate();
    const int p = kv.degree;
    const int n = kv.num_basis();
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 1; j <= p; ++j) acc += kv.knots[static_cast<std::size_t>(i + j)];
        g[static_cast<std::size_t>(i)] = acc / p;
    }
    return g;
}

/// Univariate B-spline values on one element via extraction.
struct LocalBasis1D {
    Eigen::VectorXd values;
    Eigen::VectorXd derivs;  // w.r.t. parent coordinate
};

inline LocalBasis1D local_basis(const ExtractionSet1D& ext, int element, double xi) {
    const auto bern = bernstein_eval(ext.degree, xi);
    const auto& Ce = ext.operators.at(static_cast<std::size_t>(element));
    return {Ce * bern.values, Ce * bern.derivs};
}

/// Tensor-product extraction: one univariate set per direction plus weights.
/// Local functions are ordered with direction 0 fastest.
template <int Dim>
struct ExtractionSet {
    std::array<ExtractionSet1D, Dim> dirs;
    std::vector<double> weights;  // one per control point, positive

    int num_control_points() const {
        int n = 1;
        for (const auto& d : dirs) n *= d.num_basis;
        return n;
    }
    int num_elements() const {
        int n = 1;
        for (const auto& d : dirs) n *= d.num_elements();
        return n;
    }
    int local_count() const {
        int n = 1;
        for (const auto& d : dirs) n *= d.degree + 1;
        return n;
    }
    std::array<int, Dim> element_multi_index(int element) const {
        std::array<int, Dim> idx{};
        for (int d = 0; d < Dim; ++d) {
            idx[d] = element % dirs[d].num_elements();
            element /= dirs[d].num_elements();
        }
        return idx;
    }
    /// Global control-point indices supported on an element, local ordering.
    std::vector<int> connectivity(int element) const {
        const auto eidx = element_multi_index(element);
        std::vector<int> conn(static_cast<std::size_t>(local_count()));
        std::array<int, Dim> local{};
        for (int l = 0; l < local_count(); ++l) {
            int rem = l;
            for (int d = 0; d < Dim; ++d) {
                local[d] = rem % (dirs[d].degree + 1);
                rem /= dirs[d].degree + 1;
            }
            int g = 0;
            int stride = 1;
            for (int d = 0; d < Dim; ++d) {
                g += (dirs[d].first_basis[static_cast<std::size_t>(eidx[d])] + local[d]) * stride;
                stride *= dirs[d].num_basis;
            }
            conn[static_cast<std::size_t>(l)] = g;
        }
        return conn;
    }
};

template <int Dim>
ExtractionSet<Dim> build_extraction(const std::array<KnotVector, Dim>& kvs) {
    ExtractionSet<Dim> ext;
    for (int d = 0; d < Dim; ++d) ext.dirs[d] = build_extraction(kvs[d]);
    ext.weights.assign(static_cast<std::size_t>(ext.num_control_points()), 1.0);
    return ext;
}

/// Basis values and gradients (w.r.t. parent coordinates) on one element.
template <int Dim>
struct BasisEval {
    Eigen::VectorXd values;
    Eigen::Matrix<double, Eigen::Dynamic, Dim> grads;
};

/// Tensor-product B-spline values from univariate tables (no weights).
template <int Dim>
BasisEval<Dim> tensor_product(const std::array<LocalBasis1D, Dim>& uni) {
    int n = 1;
    for (const auto& u : uni) n *= static_cast<int>(u.values.size());
    BasisEval<Dim> out;
    out.values.resize(n);
    out.grads.resize(n, Dim);
    std::array<int, Dim> local{};
    for (int l = 0; l < n; ++l) {
        int rem = l;
        for (int d = 0; d < Dim; ++d) {
            const int sz = static_cast<int>(uni[d].values.size());
            local[d] = rem % sz;
            rem /= sz;
        }
        double v = 1.0;
        for (int d = 0; d < Dim; ++d) v *= uni[d].values(local[d]);
        out.values(l) = v;
        for (int g = 0; g < Dim; ++g) {
            double dv = 1.0;
            for (int d = 0; d < Dim; ++d) dv *= (d == g) ? uni[d].derivs(local[d]) : uni[d].values(local[d]);
            out.grads(l, g) = dv;
        }
    }
    return out;
}

/// Rationalize B-spline values with the local weights.
template <int Dim>
void apply_weights(BasisEval<Dim>& be, const std::vector<int>& conn, const std::vector<double>& weights) {
    const int n = static_cast<int>(be.values.size());
    double W = 0.0;
    Eigen::Matrix<double, 1, Dim> dW = Eigen::Matrix<double, 1, Dim>::Zero();
    for (int l = 0; l < n; ++l) {
        const double w = weights[static_cast<std::size_t>(conn[static_cast<std::size_t>(l)])];
        W += w * be.values(l);
        dW += w * be.grads.row(l);
    }
    for (int l = 0; l < n; ++l) {
        const double w = weights[static_cast<std::size_t>(conn[static_cast<std::size_t>(l)])];
        const double R = w * be.values(l) / W;
        be.grads.row(l) = (w * be.grads.row(l) - R * dW) / W;
        be.values(l) = R;
    }
}

/// NURBS basis R and parent-coordinate gradients on an element.
template <int Dim>
BasisEval<Dim> nurbs_eval(const ExtractionSet<Dim>& ext, int element, const std::array<double, Dim>& xi) {
    if (element < 0 || element >= ext.num_elements()) throw std::out_of_range("nurbs_eval: element index");
    const auto eidx = ext.element_multi_index(element);
    std::array<LocalBasis1D, Dim> uni;
    for (int d = 0; d < Dim; ++d) uni[d] = local_basis(ext.dirs[d], eidx[d], xi[d]);
    auto be = tensor_product<Dim>(uni);
    apply_weights<Dim>(be, ext.connectivity(element), ext.weights);
    return be;
}

}  // namespace auxlsm
