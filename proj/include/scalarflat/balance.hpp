#pragma once

// The two eigenvalue-killing procedures.
//
// Homothety balancing: scale the cap metrics by R and Q until the eigenvalue
// estimate of the solved projected problem changes sign along the path
// (R_max,1) -> (1,R_max), then bisect it to zero.
//
// Deformation balancing (non-Ricci-flat caps): perturb the metric by
// r h_1 + s h_2 supported on the lumps; the solvability function G(r,s,v)
// vanishes on an implicit curve s = f(r) close to r + s = eps^{n-2}; scanning
// r along the curve kills the eigenvalue and yields an exactly scalar-flat
// conformal metric.

#include <cmath>
#include <functional>
#include <vector>

#include "core.hpp"
#include "curvature.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "linsolve.hpp"
#include "nonlinear.hpp"

namespace scalarflat {

// ---------------------------------------------------------------------------

struct BalanceSetup {
    ModelCap cap1, cap2;
    double eps = 0.015625; // 2^-6
    double alpha = 0.0;    // 0 -> default |log eps| / (2(n-2))
    double h_t = 0.05;
    YamabeParams yamabe;

    double alpha_or_default() const {
        return alpha > 0.0 ? alpha : default_alpha(eps, cap1.n());
    }
    GluedGeometry build(double R, double Q, std::optional<DeformMode> deform = {}) const {
        return build_glued_geometry(cap1, cap2, eps, alpha_or_default(), R, Q, h_t, deform);
    }
};

// ---------------------------------------------------------------------------
// homothety balancing

struct EigenvalueProbe {
    double R = 1.0, Q = 1.0;
    double lambda = 0.0;
    double S = 0.0;
    double lambda_hat = 0.0; // leading-order surrogate, diagnostics only
    bool converged = false;
    int iterations = 0;
};

inline EigenvalueProbe lambda_of_scaling(double R, double Q, const BalanceSetup& setup) {
    GluedGeometry g = setup.build(R, Q);
    PicardState st = solve_yamabe(g, setup.yamabe);

    EigenvalueProbe probe;
    probe.R = R;
    probe.Q = Q;
    probe.lambda = st.lambda;
    probe.S = st.S;
    probe.converged = st.converged;
    probe.iterations = st.iteration;

    // first-order surrogate [int (S - S_g) chi1 - int (S - S_g) chi2] / int(c1 chi1 + c2 chi2)
    const ProjectionBasis basis = make_projection_basis(g);
    const GridField Sg = scalar_curvature(g);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < g.node_count(); ++i) {
        const double ds = st.S - Sg[i];
        num += g.vol_weight[i] * ds * (basis.chi1[i] - basis.chi2[i]);
        den += g.vol_weight[i] * (basis.c1 * basis.chi1[i] + basis.c2 * basis.chi2[i]);
    }
    probe.lambda_hat = num / den;
    return probe;
}

struct BalancedScaling {
    double R0 = 1.0, Q0 = 1.0;
    double lambda = 0.0;
    double lambda_11 = 0.0; // eigenvalue estimate of the unscaled geometry
    int probes = 0;
    std::vector<EigenvalueProbe> scan; // endpoint / bisection history
};

inline BalancedScaling find_balanced_scaling(const BalanceSetup& setup, double R_max_cap = 64.0) {
    BalancedScaling out;
    EigenvalueProbe base = lambda_of_scaling(1.0, 1.0, setup);
    out.lambda_11 = base.lambda;
    out.probes = 1;
    const double atol = 1e-10 * std::abs(base.lambda) + 1e-14;
    if (std::abs(base.lambda) <= atol) {
        out.R0 = 1.0;
        out.Q0 = 1.0;
        out.lambda = base.lambda;
        return out; // symmetric configuration is already balanced
    }

    // doubling search for opposite signs at the two path endpoints
    double R_max = 2.0;
    EigenvalueProbe left, right;
    bool bracketed = false;
    while (R_max <= R_max_cap + 1e-12) {
        left = lambda_of_scaling(R_max, 1.0, setup);
        right = lambda_of_scaling(1.0, R_max, setup);
        out.probes += 2;
        out.scan.push_back(left);
        out.scan.push_back(right);
        if (left.lambda == 0.0 || right.lambda == 0.0 || (left.lambda > 0) != (right.lambda > 0)) {
            bracketed = true;
            break;
        }
        R_max *= 2.0;
    }
    if (!bracketed)
        throw assumption_error("find_balanced_scaling: no sign change up to R_max = " +
                               std::to_string(R_max_cap) + " (lambda endpoints " +
                               std::to_string(left.lambda) + ", " + std::to_string(right.lambda) +
                               ")");

    // bisection along R(xi) = R_max^{1-xi}, Q(xi) = R_max^{xi}
    auto probe_at = [&](double xi) {
        return lambda_of_scaling(std::pow(R_max, 1.0 - xi), std::pow(R_max, xi), setup);
    };
    double lo = 0.0, hi = 1.0;
    double f_lo = left.lambda;
    EigenvalueProbe mid_probe = left;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        mid_probe = probe_at(mid);
        ++out.probes;
        if (std::abs(mid_probe.lambda) <= atol) break;
        if ((mid_probe.lambda > 0) == (f_lo > 0)) {
            lo = mid;
            f_lo = mid_probe.lambda;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-16) break;
    }
    if (std::abs(mid_probe.lambda) > atol)
        throw convergence_error("find_balanced_scaling: bisection stalled at |lambda| = " +
                                std::to_string(std::abs(mid_probe.lambda)));
    out.R0 = mid_probe.R;
    out.Q0 = mid_probe.Q;
    out.lambda = mid_probe.lambda;
    out.scan.push_back(mid_probe);
    return out;
}

// ---------------------------------------------------------------------------
// deformation balancing

struct DeformState {
    double r = 0.0, s = 0.0;   // in paper-normalized units (int S_g dvol = -eps^{n-2})
    double G_value = 0.0;      // normalized G(r, s, v)
    double E1 = 0.0, E2 = 0.0; // normalized error terms
    GridField v;
    double lambda = 0.0;
    bool converged = false;
};

// Unit scale sigma making int S_g dvol = -eps^{n-2} in reported units.
struct DeformUnits {
    double sigma = 1.0;   // raw = sigma * normalized
    double I0 = 0.0;      // int S_g dvol of the undeformed geometry
    double eps_pow = 0.0; // eps^{n-2}
};

inline DeformUnits deform_units(const BalanceSetup& setup) {
    GluedGeometry g = setup.build(1.0, 1.0);
    const GridField Sg = scalar_curvature(g);
    DeformUnits u;
    u.I0 = integrate(Sg, g);
    u.eps_pow = std::pow(setup.eps, g.neck.n - 2.0);
    if (!(u.I0 < 0.0))
        throw assumption_error("deform_units: int S_g dvol must be negative in this model");
    u.sigma = -u.I0 / u.eps_pow;
    return u;
}

inline void require_normalized_profiles(const BalanceSetup& setup) {
    if (setup.cap1.pairing_lump_value == 0.0 || setup.cap2.pairing_lump_value == 0.0)
        throw assumption_error(
            "deformation balancing requires non-Ricci-flat caps: pairing integrals vanish, "
            "there is no correction term to adjust");
    const double p1 = setup.cap1.pairing_lump_value * setup.cap1.lump_volume;
    const double p2 = setup.cap2.pairing_lump_value * setup.cap2.lump_volume;
    if (std::abs(p1 - 1.0) > 1e-12 || std::abs(p2 - 1.0) > 1e-12)
        throw validation_error("deformation profiles must be normalized to unit pairing integral");
}

// Caps with unit pairing integral.
inline ModelCap with_unit_pairing(ModelCap cap) {
    cap.pairing_lump_value = 1.0 / cap.lump_volume;
    return cap;
}

// Evaluate G and its split at normalized (r, s) with a given conformal state v.
inline DeformState G_function(double r, double s, const GridField& v, const BalanceSetup& setup,
                              const DeformUnits& units, double quad_coeff = 0.5) {
    require_normalized_profiles(setup);
    DeformMode dm;
    dm.r = r * units.sigma;
    dm.s = s * units.sigma;
    dm.quad_coeff = quad_coeff;
    GluedGeometry g = setup.build(1.0, 1.0, dm);
    check_matches(v, g);

    const GridField Sbar = scalar_curvature(g);
    double G_raw = 0.0;
    for (int i = 0; i < g.node_count(); ++i) G_raw += g.vol_weight[i] * Sbar[i] * (1.0 + v[i]);

    // E1: the v-weighted first-order terms; E2: the quadratic curvature model
    const double k1 = g.cap1.pairing_lump_value, k2 = g.cap2.pairing_lump_value;
    const double w1 = g.vol_weight[g.lump1_index()], w2 = g.vol_weight[g.lump2_index()];
    GluedGeometry g0 = setup.build(1.0, 1.0);
    const GridField Sg = scalar_curvature(g0);
    double E1_raw = 0.0;
    for (int i = 0; i < g0.node_count(); ++i) E1_raw += g0.vol_weight[i] * Sg[i] * v[i];
    E1_raw += dm.r * k1 * w1 * v[g.lump1_index()] + dm.s * k2 * w2 * v[g.lump2_index()];
    const double E2_raw = quad_coeff * (dm.r * dm.r * k1 * w1 * (1.0 + v[g.lump1_index()]) +
                                        dm.s * dm.s * k2 * w2 * (1.0 + v[g.lump2_index()]));

    DeformState st;
    st.r = r;
    st.s = s;
    st.v = v;
    st.G_value = G_raw / units.sigma;
    st.E1 = E1_raw / units.sigma;
    st.E2 = E2_raw / units.sigma;
    return st;
}

// Inner solve at fixed (r, s): Picard iteration on the deformed geometry.
inline DeformState deform_probe(double r, double s, const BalanceSetup& setup,
                                const DeformUnits& units, double quad_coeff = 0.5) {
    require_normalized_profiles(setup);
    DeformMode dm;
    dm.r = r * units.sigma;
    dm.s = s * units.sigma;
    dm.quad_coeff = quad_coeff;
    GluedGeometry g = setup.build(1.0, 1.0, dm);
    PicardState ps = solve_yamabe(g, setup.yamabe);
    DeformState st = G_function(r, s, ps.v, setup, units, quad_coeff);
    st.lambda = ps.lambda;
    st.converged = ps.converged;
    // consistency: the projected solve reports the same solvability defect
    st.G_value = ps.g_value / units.sigma;
    return st;
}

// Root of s -> G(r, s, v(r,s)) with the v-dependence re-solved at every
// probe (nested loops; the interleaved construction has the same limit).
inline DeformState solve_G_root_in_s(double r, const BalanceSetup& setup, const DeformUnits& units,
                                     double quad_coeff = 0.5, double gtol_rel = 1e-11) {
    const double eps_pow = units.eps_pow;
    const double gtol = gtol_rel * eps_pow;
    double s0 = eps_pow - r; // root of the leading part H(r,s) = -eps^{n-2} + r + s
    DeformState st0 = deform_probe(r, s0, setup, units, quad_coeff);
    if (std::abs(st0.G_value) <= gtol) return st0;
    // secant; G is affine in s to leading order with unit slope
    double s1 = s0 - st0.G_value;
    DeformState st1 = deform_probe(r, s1, setup, units, quad_coeff);
    for (int it = 0; it < 60; ++it) {
        if (std::abs(st1.G_value) <= gtol) return st1;
        const double dG = st1.G_value - st0.G_value;
        double s2 = dG != 0.0 ? s1 - st1.G_value * (s1 - s0) / dG : s1 - st1.G_value;
        s0 = s1;
        st0 = st1;
        s1 = s2;
        st1 = deform_probe(r, s1, setup, units, quad_coeff);
    }
    throw convergence_error("solve_G_root_in_s: inner root solve did not converge, |G| = " +
                            std::to_string(std::abs(st1.G_value)));
}

struct ImplicitCurve {
    std::vector<DeformState> samples; // (r, f(r)) with diagnostics
    double lipschitz = 0.0;           // max |f(r_i+1)-f(r_i)| / |r_i+1 - r_i|
};

inline ImplicitCurve implicit_curve(const std::vector<double>& r_samples,
                                    const BalanceSetup& setup, const DeformUnits& units,
                                    double quad_coeff = 0.5) {
    const double c_band = 0.1;
    ImplicitCurve curve;
    for (double r : r_samples) {
        if (!(r > 0.0 && r < (1.0 - c_band) * units.eps_pow))
            throw validation_error("implicit_curve: r sample outside (0, (1-c) eps^{n-2})");
        curve.samples.push_back(solve_G_root_in_s(r, setup, units, quad_coeff));
    }
    for (std::size_t i = 1; i < curve.samples.size(); ++i) {
        const double dr = curve.samples[i].r - curve.samples[i - 1].r;
        const double ds = curve.samples[i].s - curve.samples[i - 1].s;
        if (dr != 0.0) curve.lipschitz = std::max(curve.lipschitz, std::abs(ds / dr));
    }
    return curve;
}

// Scalar curvature of the final conformal metric (1+v)^{4/(m-2)} g, computed
// from the conformal identity with the discrete operator.
inline GridField final_scalar_curvature(const GluedGeometry& g, const GridField& v) {
    const ConformalConstants cc = constants_of(g);
    const GridField Sg = scalar_curvature(g);
    const GridField Lv = laplacian_apply(g, v);
    GridField out(g.node_count());
    for (int i = 0; i < g.node_count(); ++i)
        out[i] = std::pow(1.0 + v[i], -cc.p_exp) * (Lv[i] / cc.c_m + Sg[i] * (1.0 + v[i]));
    return out;
}

struct DeformationResult {
    DeformState root;              // the balanced state (r_bar, s_bar)
    ImplicitCurve curve;           // sampled implicit curve
    double final_S_integral = 0.0; // int of the final scalar curvature
    double final_S_sup = 0.0;      // sup |final scalar curvature|
    double lambda_scale = 0.0;     // scan lambda scale used for the tolerance
    int probes = 0;
};

inline DeformationResult solve_deformation(const BalanceSetup& setup, double quad_coeff = 0.5,
                                           int scan_samples = 9) {
    require_normalized_profiles(setup);
    const DeformUnits units = deform_units(setup);
    const double eps_pow = units.eps_pow;

    // sample the implicit curve over the admissible range
    std::vector<double> rs;
    for (int i = 0; i < scan_samples; ++i)
        rs.push_back(eps_pow * (0.05 + 0.80 * i / (scan_samples - 1.0)));
    DeformationResult out;
    out.curve = implicit_curve(rs, setup, units, quad_coeff);
    out.probes = static_cast<int>(rs.size());

    // hypothesis of the scan: the unit pairing integrals dominate the
    // curvature asymmetry at the scan endpoints, 1 > C eps^{n-2} / |f(r)-r|
    {
        GluedGeometry g0 = setup.build(1.0, 1.0);
        const ProjectionBasis basis = make_projection_basis(g0);
        const GridField Sg = scalar_curvature(g0);
        double asym = 0.0;
        for (int i = 0; i < g0.node_count(); ++i)
            asym += g0.vol_weight[i] * Sg[i] * (basis.chi1[i] - basis.chi2[i]);
        const double C_hat = std::abs(asym) / (units.sigma * eps_pow);
        for (const DeformState* st : {&out.curve.samples.front(), &out.curve.samples.back()}) {
            const double gap = std::abs(st->s - st->r);
            if (!(gap > 0.0) || C_hat * eps_pow / gap >= 1.0)
                throw assumption_error(
                    "solve_deformation: scan range cannot dominate the curvature asymmetry");
        }
    }

    // find a sign change of lambda along the curve
    int k = -1;
    for (std::size_t i = 1; i < out.curve.samples.size(); ++i) {
        const double a = out.curve.samples[i - 1].lambda;
        const double b = out.curve.samples[i].lambda;
        out.lambda_scale = std::max({out.lambda_scale, std::abs(a), std::abs(b)});
        if (a == 0.0 || (a > 0) != (b > 0)) {
            k = static_cast<int>(i);
            break;
        }
    }
    if (k < 0)
        throw assumption_error("solve_deformation: eigenvalue estimate does not change sign "
                               "on the admissible scan range");

    const double atol = 1e-10 * out.lambda_scale + 1e-16;
    double lo = out.curve.samples[k - 1].r, hi = out.curve.samples[k].r;
    double f_lo = out.curve.samples[k - 1].lambda;
    DeformState mid = out.curve.samples[k - 1];
    for (int it = 0; it < 200; ++it) {
        const double rm = 0.5 * (lo + hi);
        mid = solve_G_root_in_s(rm, setup, units, quad_coeff);
        ++out.probes;
        if (std::abs(mid.lambda) <= atol) break;
        if ((mid.lambda > 0) == (f_lo > 0)) {
            lo = rm;
            f_lo = mid.lambda;
        } else {
            hi = rm;
        }
        if (hi - lo < 1e-18) break;
    }
    if (std::abs(mid.lambda) > atol)
        throw convergence_error("solve_deformation: lambda bisection stalled at |lambda| = " +
                                std::to_string(std::abs(mid.lambda)));
    out.root = mid;

    // final metric: exactly scalar-flat up to solver tolerance
    DeformMode dm;
    dm.r = mid.r * units.sigma;
    dm.s = mid.s * units.sigma;
    dm.quad_coeff = quad_coeff;
    GluedGeometry g = setup.build(1.0, 1.0, dm);
    const GridField Sfin = final_scalar_curvature(g, mid.v);
    out.final_S_integral = integrate(Sfin, g);
    out.final_S_sup = max_abs(Sfin);
    return out;
}

} // namespace scalarflat
