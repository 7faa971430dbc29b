#pragma once

// Method of moving asymptotes with a single inequality constraint. The
// convex separable subproblem is solved through its scalar dual.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace auxlsm {

struct MmaSettings {
    double asy_init = 0.5;
    double asy_incr = 1.2;
    double asy_decr = 0.7;
    double asy_min = 1e-4;   // asymptote distance bounds, fractions of range
    double asy_max = 10.0;
    double move = 0.05;      // move limit, fraction of range
    double albefa = 0.1;
    double raa0 = 1e-5;

    void validate() const {
        if (!(asy_init > 0.0 && asy_incr >= 1.0 && asy_decr > 0.0 && asy_decr <= 1.0))
            throw std::invalid_argument("MmaSettings: invalid asymptote factors");
        if (!(asy_min > 0.0 && asy_max > asy_min)) throw std::invalid_argument("MmaSettings: invalid asymptote bounds");
        if (!(move > 0.0 && move <= 1.0)) throw std::invalid_argument("MmaSettings: move limit must lie in (0, 1]");
        if (!(albefa > 0.0 && albefa < 1.0)) throw std::invalid_argument("MmaSettings: albefa must lie in (0, 1)");
        if (!(raa0 > 0.0)) throw std::invalid_argument("MmaSettings: raa0 must be positive");
    }
};

class MmaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MmaState {
    int iteration = 0;
    Eigen::VectorXd xold1, xold2, low, upp;
};

/// Outcome of one update (beyond the new point).
struct MmaStep {
    Eigen::VectorXd x;
    double lambda = 0.0;
    bool constraint_feasible = true;  // linearized constraint satisfiable in the box
};

class Mma {
public:
    explicit Mma(MmaSettings s = {}) : s_(s) { s_.validate(); }

    const MmaSettings& settings() const { return s_; }
    const MmaState& state() const { return st_; }
    MmaState& state() { return st_; }

    /// Minimizes the MMA approximation of f subject to g(x) <= 0 within
    /// [xmin, xmax] and the move limits.
    MmaStep update(const Eigen::VectorXd& x, const Eigen::VectorXd& df, double g, const Eigen::VectorXd& dg,
                   double xmin, double xmax) {
        const Eigen::Index n = x.size();
        if (!(xmin < xmax)) throw MmaError("MMA: lower bound must be below upper bound");
        if (df.size() != n || dg.size() != n) throw MmaError("MMA: gradient size mismatch");
        if (!x.allFinite() || !df.allFinite() || !dg.allFinite() || !std::isfinite(g))
            throw MmaError("MMA: non-finite design, gradient or constraint value");
        if ((x.array() < xmin).any() || (x.array() > xmax).any()) throw MmaError("MMA: design outside its bounds");

        const double range = xmax - xmin;
        ++st_.iteration;
        if (st_.iteration <= 2 || st_.low.size() != n) {
            st_.low = x.array() - s_.asy_init * range;
            st_.upp = x.array() + s_.asy_init * range;
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double z = (x(i) - st_.xold1(i)) * (st_.xold1(i) - st_.xold2(i));
                const double f = z < 0.0 ? s_.asy_decr : (z > 0.0 ? s_.asy_incr : 1.0);
                st_.low(i) = x(i) - f * (st_.xold1(i) - st_.low(i));
                st_.upp(i) = x(i) + f * (st_.upp(i) - st_.xold1(i));
            }
        }
        st_.low = st_.low.cwiseMax((x.array() - s_.asy_max * range).matrix()).cwiseMin((x.array() - s_.asy_min * range).matrix());
        st_.upp = st_.upp.cwiseMin((x.array() + s_.asy_max * range).matrix()).cwiseMax((x.array() + s_.asy_min * range).matrix());

        Eigen::VectorXd lo(n), hi(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            lo(i) = std::max({xmin, st_.low(i) + s_.albefa * (x(i) - st_.low(i)), x(i) - s_.move * range});
            hi(i) = std::min({xmax, st_.upp(i) - s_.albefa * (st_.upp(i) - x(i)), x(i) + s_.move * range});
            if (!(lo(i) <= hi(i))) throw MmaError("MMA: empty subproblem box at variable " + std::to_string(i));
        }

        const auto coeffs = [&](const Eigen::VectorXd& d, Eigen::VectorXd& p, Eigen::VectorXd& q) {
            p.resize(n);
            q.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double dp = std::max(d(i), 0.0), dm = std::max(-d(i), 0.0);
                const double reg = s_.raa0 / range;
                const double ux = st_.upp(i) - x(i), xl = x(i) - st_.low(i);
                p(i) = ux * ux * (1.001 * dp + 0.001 * dm + reg);
                q(i) = xl * xl * (0.001 * dp + 1.001 * dm + reg);
            }
        };
        Eigen::VectorXd p0, q0, p1, q1;
        coeffs(df, p0, q0);
        coeffs(dg, p1, q1);
        double r1 = g;
        for (Eigen::Index i = 0; i < n; ++i) r1 -= p1(i) / (st_.upp(i) - x(i)) + q1(i) / (x(i) - st_.low(i));

        const auto x_of = [&](double lam, double w0) {
            Eigen::VectorXd y(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double P = w0 * p0(i) + lam * p1(i);
                const double Q = w0 * q0(i) + lam * q1(i);
                const double sp = std::sqrt(P), sq = std::sqrt(Q);
                double v = (sp + sq) > 0.0 ? (sp * st_.low(i) + sq * st_.upp(i)) / (sp + sq) : x(i);
                y(i) = std::clamp(v, lo(i), hi(i));
            }
            return y;
        };
        const auto gapprox = [&](const Eigen::VectorXd& y) {
            double v = r1;
            for (Eigen::Index i = 0; i < n; ++i) v += p1(i) / (st_.upp(i) - y(i)) + q1(i) / (y(i) - st_.low(i));
            return v;
        };

        MmaStep out;
        Eigen::VectorXd y = x_of(0.0, 1.0);
        if (gapprox(y) > 0.0) {
            double a = 0.0, b = 1.0;
            while (gapprox(x_of(b, 1.0)) > 0.0 && b < 1e30) {
                a = b;
                b *= 10.0;
            }
            if (gapprox(x_of(b, 1.0)) > 0.0) {
                // constraint cannot be met in the box: minimize it alone
                out.constraint_feasible = false;
                out.lambda = std::numeric_limits<double>::infinity();
                y = x_of(1.0, 0.0);
            } else {
                for (int k = 0; k < 200 && (b - a) > 1e-15 * b; ++k) {
                    const double m = 0.5 * (a + b);
                    (gapprox(x_of(m, 1.0)) > 0.0 ? a : b) = m;
                }
                out.lambda = b;
                y = x_of(b, 1.0);
            }
        }
        if (!y.allFinite()) throw MmaError("MMA: subproblem produced a non-finite point");

        st_.xold2 = st_.xold1.size() == n ? st_.xold1 : x;
        st_.xold1 = x;
        out.x = y;
        return out;
    }

private:
    MmaSettings s_;
    MmaState st_;
};

}  // namespace auxlsm
