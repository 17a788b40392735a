#pragma once

// Shared numerics: dimensional constants, smooth transition profiles and the
// error taxonomy used by every module.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scalarflat {

// ---------------------------------------------------------------------------
// errors

// Bad user input / malformed configuration. CLI exit code 2.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An iteration failed to converge (no contraction, max_iter, ...). Exit code 3.
struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A hypothesis of the construction is violated (e.g. Ricci-flat caps in
// deformation mode, no sign change in a scan). Exit code 4.
struct assumption_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grid too coarse to resolve a requested feature.
struct resolution_error : validation_error {
    using validation_error::validation_error;
};

// ---------------------------------------------------------------------------
// small math helpers

// Area of the unit (n-1)-sphere in R^n.
inline double sphere_area(int n) {
    return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

// Degree-5 smoothstep on [0,1]: s(0)=0, s(1)=1, s'=s''=0 at both ends,
// s(x) + s(1-x) = 1. C^2 transitions keep second differences bounded
// uniformly in the grid spacing.
inline double smoothstep5(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

// Transition from 1 to 0 across [a, a+width].
inline double step_down(double t, double a, double width = 1.0) {
    return 1.0 - smoothstep5((t - a) / width);
}

// Transition from 0 to 1 across [a, a+width].
inline double step_up(double t, double a, double width = 1.0) {
    return smoothstep5((t - a) / width);
}

// ---------------------------------------------------------------------------
// conformal constants

// Constants of the m-dimensional Yamabe problem and the codimension-n neck.
struct ConformalConstants {
    int m = 0;             // ambient dimension
    int n = 0;             // codimension of the gluing locus (n = m - k)
    double c_m = 0.0;      // -(m-2)/(4(m-1)), coefficient of the conformal equation
    double p_exp = 0.0;    // (m+2)/(m-2), critical exponent
    double neck_exp = 0.0; // 4/(n-2), conformal power of the neck metric

    ConformalConstants() = default;
    ConformalConstants(int m_, int k_ = 0) : m(m_), n(m_ - k_) {
        if (m < 3) throw validation_error("dimension m must be >= 3");
        if (n < 3) throw validation_error("codimension n = m - k must be >= 3");
        c_m = -(m - 2.0) / (4.0 * (m - 1.0));
        p_exp = (m + 2.0) / (m - 2.0);
        neck_exp = 4.0 / (n - 2.0);
    }

    // (n-2)/(4(n-1)), positive constant of the neck conformal curvature formula
    double c_n() const { return (n - 2.0) / (4.0 * (n - 1.0)); }
    // (n-2)/2, decay rate of the model conformal factors
    double kappa() const { return 0.5 * (n - 2.0); }
};

// Nonlinear remainder f(v) = (1+v)^{(m+2)/(m-2)} - 1 - (m+2)/(m-2) v.
// Removes the constant and linear part of the critical power.
inline double conformal_remainder(double v, const ConformalConstants& cc) {
    if (1.0 + v <= 0.0)
        throw std::domain_error("conformal factor 1+v must stay positive");
    return std::pow(1.0 + v, cc.p_exp) - 1.0 - cc.p_exp * v;
}

// ---------------------------------------------------------------------------
// least-squares line fit (used by every O(eps^p) slope check)

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; // rms of fit residuals
};

// Ordinary least squares of ys against xs.
inline SlopeFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 3)
        throw validation_error("fit_line needs at least 3 points");
    const std::size_t n = xs.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) throw validation_error("fit_line: degenerate abscissae");
    SlopeFit f;
    f.slope = (n * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / n;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (f.slope * xs[i] + f.intercept);
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    return f;
}

// OLS on (log x, log y); inputs must be positive.
inline SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] <= 0.0 || ys[i] <= 0.0)
            throw validation_error("fit_slope: inputs must be positive");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    return fit_line(lx, ly);
}

} // namespace scalarflat
