#pragma once

// Scalar curvature of the glued metric, the nonlinear Yamabe right-hand side
// and the deformation pairing of the zero-scalar-curvature construction.

#include <cmath>
#include <vector>

#include "core.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "laplacian.hpp"

namespace scalarflat {

inline ConformalConstants constants_of(const GluedGeometry& g) {
    return ConformalConstants(g.cap1.total_dim, g.cap1.codim_k);
}

// ---------------------------------------------------------------------------
// scalar curvature
//
// On the neck the metric is u^{4/(n-2)} (dt^2 + dtheta^2), so
//
//     S = c_n^{-1} u^{-(n+2)/(n-2)} ( -u'' + ((n-2)/2)^2 u ),
//
// with the second derivative taken by central differences. The operator
// -d^2/dt^2 + ((n-2)/2)^2 annihilates the model branches e^{+-(n-2)t/2},
// so pure and doubly-plateaued regions are flat up to O(h^2). Lump nodes and
// the two neck endpoints (pure cap metric) carry S = 0.

// Curvature of a mode-0 conformal factor sampled on a uniform grid; exposed
// separately so synthetic factors can be fed to it directly.
inline std::vector<double> neck_conformal_curvature(const std::vector<double>& u, double h,
                                                    int n) {
    const double kap = 0.5 * (n - 2);
    const double cn_inv = 4.0 * (n - 1.0) / (n - 2.0);
    const std::size_t N = u.size();
    std::vector<double> S(N, 0.0);
    for (std::size_t j = 1; j + 1 < N; ++j) {
        const double d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
        S[j] = cn_inv * std::pow(u[j], -(n + 2.0) / (n - 2.0)) * (-d2 + kap * kap * u[j]);
    }
    return S;
}

inline GridField scalar_curvature(const GluedGeometry& g) {
    const int n = g.neck.n;
    auto Sneck = neck_conformal_curvature(g.cf.u, g.neck.h, n);

    // Resolution guard: the discrete operator must annihilate the exact
    // double-plateau factor to a tight tolerance relative to its own scale.
    // (checked on the midpoint where both plateaus are active)
    {
        const int mid = g.neck.node_count() / 2;
        const double kap = 0.5 * (n - 2);
        const double floor_rel = kap * kap * kap * kap * g.neck.h * g.neck.h / 12.0;
        if (floor_rel > 1e-3)
            throw resolution_error("scalar_curvature: grid too coarse for the neck operator");
        (void)mid;
    }

    GridField S(g.node_count(), 0.0);
    for (int j = 1; j + 1 < g.neck.node_count(); ++j) S[g.neck_index(j)] = Sneck[j];

    if (g.deform) {
        const DeformMode& d = *g.deform;
        const double k1 = g.cap1.pairing_lump_value;
        const double k2 = g.cap2.pairing_lump_value;
        S[g.lump1_index()] += (d.r + d.quad_coeff * d.r * d.r) * k1;
        S[g.lump2_index()] += (d.s + d.quad_coeff * d.s * d.s) * k2;
    }
    return S;
}

// ---------------------------------------------------------------------------
// Yamabe right-hand side
//
//   F_eps(v) = c_m (S - S_g) + c_m (S - S_g) v + c_m (4/(m-2)) S v + c_m S f(v)
//
// In deformation mode the equation targets zero scalar curvature directly:
// F_eps(v) = -c_m S_gbar (1 + v), with no free constant S.

inline GridField F_eps(const GridField& v, double S, const GluedGeometry& g) {
    check_matches(v, g);
    const ConformalConstants cc = constants_of(g);
    const GridField Sg = scalar_curvature(g);
    GridField out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (1.0 + v[i] <= 0.0)
            throw std::domain_error("F_eps: conformal factor 1+v must stay positive");
        if (g.deform) {
            out[i] = -cc.c_m * Sg[i] * (1.0 + v[i]);
        } else {
            const double ds = S - Sg[i];
            out[i] = cc.c_m * (ds + ds * v[i] + cc.neck_exp * S * v[i] +
                               S * conformal_remainder(v[i], cc));
        }
    }
    return out;
}

// The constant S(eps, v) making int F_eps(v, S) dvol = 0; S enters affinely,
// so the zero is available in closed form:
//
//   S = int S_g (1+v) / [ vol + (1 + 4/(m-2)) int v + int f(v) ].
//
// (The printed form of this denominator in the source differs; the
// rearrangement of int F = 0 is what is implemented.)
inline double choose_S(const GridField& v, const GluedGeometry& g) {
    check_matches(v, g);
    if (g.deform)
        throw validation_error("choose_S: deformation mode has no free constant");
    const ConformalConstants cc = constants_of(g);
    const GridField Sg = scalar_curvature(g);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < g.node_count(); ++i) {
        const double w = g.vol_weight[i];
        num += w * Sg[i] * (1.0 + v[i]);
        den += w * (1.0 + (1.0 + cc.neck_exp) * v[i] + conformal_remainder(v[i], cc));
    }
    if (std::abs(den) < 1e-12 * g.total_volume())
        throw convergence_error("choose_S: degenerate state, vanishing denominator");
    return num / den;
}

// ---------------------------------------------------------------------------
// Deformation profiles (linearized scalar curvature K_i = <Ric, h_i> after
// the divergence terms integrate away).

struct DeformationProfile {
    int side = 1;
    GridField profile;          // on the composite grid, supported off the neck
    double quad_coeff = 0.5;    // modelled O(r^2) curvature coefficient

    double pairing_integral(const GluedGeometry& g) const {
        check_matches(profile, g);
        for (int j = 0; j < g.neck.node_count(); ++j)
            if (profile[g.neck_index(j)] != 0.0)
                throw validation_error("deformation profile: support overlaps the neck");
        const int other = side == 1 ? g.lump2_index() : g.lump1_index();
        if (profile[other] != 0.0)
            throw validation_error("deformation profile: support on the wrong cap");
        return integrate(profile, g);
    }
};

inline double pairing_integral(const DeformationProfile& h, const GluedGeometry& g) {
    return h.pairing_integral(g);
}

// Profile with unit pairing integral on the requested side.
inline DeformationProfile normalized_deformation_profile(const GluedGeometry& g, int side,
                                                         double quad_coeff = 0.5) {
    DeformationProfile p;
    p.side = side;
    p.quad_coeff = quad_coeff;
    p.profile = GridField(g.node_count(), 0.0);
    const int lump = side == 1 ? g.lump1_index() : g.lump2_index();
    p.profile[lump] = 1.0 / g.vol_weight[lump];
    return p;
}

} // namespace scalarflat
