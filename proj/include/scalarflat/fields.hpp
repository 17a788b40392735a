#pragma once

// Scalar fields on the composite grid, volume integration, and the weighted
// sup-norms that drive every estimate of the linear and nonlinear theory.

#include <cmath>
#include <cstddef>
#include <vector>

#include "core.hpp"
#include "geometry.hpp"

namespace scalarflat {

// ---------------------------------------------------------------------------
// GridField: one real value per composite node.

struct GridField {
    std::vector<double> values;

    GridField() = default;
    explicit GridField(std::size_t n, double fill = 0.0) : values(n, fill) {}
    explicit GridField(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    GridField& operator+=(const GridField& o) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
        return *this;
    }
    GridField& operator-=(const GridField& o) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
        return *this;
    }
    GridField& operator*=(double a) {
        for (double& v : values) v *= a;
        return *this;
    }
    friend GridField operator+(GridField a, const GridField& b) { return a += b; }
    friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
    friend GridField operator*(double a, GridField f) { return f *= a; }
};

inline void check_matches(const GridField& f, const GluedGeometry& g) {
    if (static_cast<int>(f.size()) != g.node_count())
        throw validation_error("field size does not match geometry node count");
}

inline double max_abs(const GridField& f) {
    double m = 0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
}

// ---------------------------------------------------------------------------
// WeightProfile: psi = eps cosh t deep in the neck, 1 on the caps, smooth
// monotone interpolation on [log eps, log eps + alpha] and its mirror.

struct WeightProfile {
    std::vector<double> psi; // per composite node
};

inline WeightProfile weight(const GluedGeometry& g) {
    WeightProfile w;
    w.psi.assign(g.node_count(), 1.0);
    const double eps = g.neck.eps;
    const double L = g.neck.half_length();
    const double a = g.neck.alpha;
    const int Nt = g.neck.node_count();
    const int half = Nt / 2;

    // Left half including the midpoint, then mirror. The blend is done in
    // log space so the profile stays positive and monotone.
    for (int j = 0; j <= half; ++j) {
        const double t = g.neck.t(j);
        const double core = eps * std::cosh(t);
        const double s = smoothstep5((t + L) / a); // 0 at the collar mouth, 1 on T^eps_alpha
        w.psi[g.neck_index(j)] = std::exp(s * std::log(core));
    }
    for (int j = half + 1; j < Nt; ++j)
        w.psi[g.neck_index(j)] = w.psi[g.neck_index(g.neck.mirror(j))];
    return w;
}

// ---------------------------------------------------------------------------
// operations

// sup_M | psi^gamma f |
inline double weighted_norm(const GridField& f, double gamma, const WeightProfile& w) {
    double m = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        m = std::max(m, std::pow(w.psi[i], gamma) * std::abs(f[i]));
    return m;
}

// Restricted variant, used for estimates localized to a node subset.
template <class Pred>
double weighted_norm_where(const GridField& f, double gamma, const WeightProfile& w, Pred keep) {
    double m = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (keep(i)) m = std::max(m, std::pow(w.psi[i], gamma) * std::abs(f[i]));
    return m;
}

inline double integrate(const GridField& f, const GluedGeometry& g) {
    check_matches(f, g);
    double s = 0;
    for (int i = 0; i < g.node_count(); ++i) s += f[i] * g.vol_weight[i];
    return s;
}

inline double mean_value(const GridField& f, const GluedGeometry& g) {
    return integrate(f, g) / g.total_volume();
}

inline GridField project_mean_zero(const GridField& f, const GluedGeometry& g) {
    GridField out = f;
    const double c = mean_value(f, g);
    for (double& v : out.values) v -= c;
    return out;
}

} // namespace scalarflat
