#pragma once

// Composite discrete manifold: two scalar-flat model caps joined by a
// cylindrical neck chart carrying the glued conformal factor.
//
// Mode-0 reduction: every field is a function of the neck coordinate t alone
// (constant on the cross-sectional sphere), so the manifold discretizes to a
// chain of nodes
//
//     [lump1] - [t_0 = log eps] - ... - [t_{N-1} = -log eps] - [lump2]
//
// Each lump is a single finite-volume cell standing for everything in the
// model manifold outside the unit collar around the gluing locus.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "core.hpp"

namespace scalarflat {

// ---------------------------------------------------------------------------
// ModelCap: one summand of the connected sum, reduced to a flat radial collar
// plus one lumped interior cell.

struct ModelCap {
    int total_dim = 3;              // m
    int codim_k = 0;                // k; codimension n = m - k
    double lump_volume = 1.0;       // volume outside the unit collar
    double pairing_lump_value = 0.0;// <Ric,h> density on the lump (deformation mode)
    int side = 1;                   // 1 or 2

    int n() const { return total_dim - codim_k; }

    void validate() const {
        if (total_dim < 3) throw validation_error("cap: total_dim must be >= 3");
        if (n() < 3) throw validation_error("cap: codimension m-k must be >= 3");
        if (!(lump_volume > 0.0)) throw validation_error("cap: lump_volume must be > 0");
        if (side != 1 && side != 2) throw validation_error("cap: side must be 1 or 2");
    }
};

// ---------------------------------------------------------------------------
// NeckChart: uniform grid on [log eps, -log eps].

struct NeckChart {
    double eps = 0.0;
    double alpha = 0.0;   // half-width parameter of the projection cutoffs
    int n = 3;            // codimension
    double h = 0.0;       // actual grid spacing
    int n_half = 0;       // t_j = (j - n_half) * h, j = 0 .. 2*n_half

    NeckChart() = default;
    NeckChart(double eps_, double alpha_, int n_, double h_request) : eps(eps_), alpha(alpha_), n(n_) {
        if (!(eps > 0.0 && eps < 1.0)) throw validation_error("neck: eps must lie in (0,1)");
        if (!(h_request > 0.0 && h_request <= 0.05))
            throw validation_error("neck: grid spacing must satisfy 0 < h_t <= 0.05");
        const double L = -std::log(eps);
        if (!(alpha > 0.0)) throw validation_error("neck: alpha must be positive");
        if (!(alpha < L - 2.0))
            throw validation_error("neck: alpha must satisfy alpha < |log eps| - 2 "
                                   "(transition bands would not fit in the half-neck)");
        n_half = static_cast<int>(std::ceil(L / h_request));
        h = L / n_half;
        // Snap alpha to the grid so the boundary of T^eps_alpha falls on
        // nodes; the cutoff case tables then hold exactly nodewise.
        alpha = h * std::llround(alpha / h);
        if (!(alpha > 0.0)) alpha = h;
        if (!(alpha < L - 2.0))
            throw validation_error("neck: alpha must satisfy alpha < |log eps| - 2 "
                                   "after grid alignment");
    }

    int node_count() const { return 2 * n_half + 1; }
    // Exactly antisymmetric: t(mirror(j)) == -t(j) bitwise.
    double t(int j) const { return (j - n_half) * h; }
    int mirror(int j) const { return 2 * n_half - j; }
    double half_length() const { return n_half * h; } // == |log eps| up to rounding
};

// Default cutoff half-width: alpha = |log eps| / (2(n-2)).
inline double default_alpha(double eps, int n) {
    return -std::log(eps) / (2.0 * (n - 2));
}

// Coordinate change between the neck parameter t and the Fermi radius |x| of
// one side: |x| = eps e^{-t} (side 1), |x| = eps e^{t} (side 2).
inline double chart_map(int side, double t, double eps) {
    const double L = -std::log(eps);
    if (t < -L - 1e-12 || t > L + 1e-12)
        throw validation_error("chart_map: t outside [log eps, -log eps]");
    if (side == 1) return eps * std::exp(-t);
    if (side == 2) return eps * std::exp(t);
    throw validation_error("chart_map: side must be 1 or 2");
}

// ---------------------------------------------------------------------------
// CutoffSet: all transition profiles sampled on the neck grid.
//
//   zeta   : 1 on (log eps, -1], 0 on [1, -log eps)         (metric blending)
//   eta_p  : eta(t),  1 up to -log eps - 1, 0 at -log eps   (conformal gluing)
//   eta_m  : eta(-t), mirror image
//   chi1/chiP/chi2 : partition of unity for the source split
//   phi1/phi2      : wider cutoffs used to glue the cap solutions
//
// Mirror-image profiles are produced by index reflection, never by
// re-evaluating the polynomial, so symmetric geometries are symmetric bitwise.

struct CutoffSet {
    std::vector<double> zeta, eta_p, eta_m, chi1, chi2, chiP, phi1, phi2;

    std::size_t size() const { return zeta.size(); }
};

inline CutoffSet make_cutoffs(const NeckChart& neck) {
    const int N = neck.node_count();
    const double L = neck.half_length();
    const double a = neck.alpha;
    if (neck.h > 0.25)
        throw resolution_error("make_cutoffs: grid too coarse to resolve a unit transition band");

    CutoffSet c;
    c.zeta.resize(N);
    c.eta_p.resize(N);
    c.eta_m.resize(N);
    c.chi1.resize(N);
    c.chi2.resize(N);
    c.chiP.resize(N);
    c.phi1.resize(N);
    c.phi2.resize(N);

    for (int j = 0; j < N; ++j) {
        const double t = neck.t(j);
        c.zeta[j] = step_down(t, -1.0, 2.0);          // 1 -> 0 across [-1, 1]
        c.eta_p[j] = step_down(t, L - 1.0);           // 1 -> 0 across [-log eps - 1, -log eps]
        c.chi1[j] = step_down(t, -L + a);             // 1 -> 0 across [log eps + a, log eps + a + 1]
        c.phi1[j] = step_down(t, -L + a + 1.0);       // 1 -> 0 across [log eps + a + 1, log eps + a + 2]
    }
    for (int j = 0; j < N; ++j) {
        const int m = neck.mirror(j);
        c.eta_m[j] = c.eta_p[m];
        c.chi2[j] = c.chi1[m];
        c.phi2[j] = c.phi1[m];
        c.chiP[j] = 1.0 - c.chi1[j] - c.chi2[j];      // partition exact by construction
    }
    return c;
}

// ---------------------------------------------------------------------------
// Conformal factor of the glued neck metric,
//   u_eps(t) = eta(t) R^{(n-2)/4} u1(t) + eta(-t) Q^{(n-2)/4} u2(t),
// with model branches u1 = eps^{(n-2)/2} e^{-(n-2)t/2}, u2 its mirror.
// Homothety factors enter here and nowhere else on the neck; scaling a cap
// metric by R multiplies its branch by R^{(n-2)/4}.

struct ConformalFactor {
    std::vector<double> u;      // glued factor on neck nodes
    std::vector<double> u1, u2; // pure model branches including homothety
};

inline ConformalFactor conformal_factor(const NeckChart& neck, const CutoffSet& cut,
                                        double R = 1.0, double Q = 1.0) {
    if (neck.n < 3) throw validation_error("conformal_factor: requires n >= 3");
    const int N = neck.node_count();
    const double kap = 0.5 * (neck.n - 2);
    const double ebar = std::pow(neck.eps, kap);
    const double rs = std::pow(R, 0.25 * (neck.n - 2));
    const double qs = std::pow(Q, 0.25 * (neck.n - 2));

    ConformalFactor cf;
    cf.u1.resize(N);
    cf.u2.resize(N);
    cf.u.resize(N);
    for (int j = 0; j < N; ++j) cf.u1[j] = ebar * std::exp(-kap * neck.t(j));
    for (int j = 0; j < N; ++j) cf.u2[j] = cf.u1[neck.mirror(j)];
    for (int j = 0; j < N; ++j) {
        cf.u[j] = cut.eta_p[j] * rs * cf.u1[j] + cut.eta_m[j] * qs * cf.u2[j];
        if (!(cf.u[j] > 0.0)) throw validation_error("conformal_factor: u_eps must be positive");
    }
    return cf;
}

// ---------------------------------------------------------------------------
// Deformation mode (zero-scalar-curvature balancing): the metric is perturbed
// by r h1 + s h2 with h_i supported on the lumps, acting through the
// linearized scalar curvature profile K_i.

struct DeformMode {
    double r = 0.0, s = 0.0;
    double quad_coeff = 0.5;   // coefficient of the modelled O(r^2) curvature term
};

// Hook for second-order Fermi corrections of the cap metrics. The flat-collar
// model has none; sensitivity experiments can switch them on. Modelled as a
// conformal perturbation (1 + quad_i |x|^2) of cap i, blended with zeta.
struct FermiCorrection {
    double quad1 = 0.0, quad2 = 0.0;
    bool active() const { return quad1 != 0.0 || quad2 != 0.0; }
};

// ---------------------------------------------------------------------------
// GluedGeometry: the immutable composite manifold.
//
// Node layout: index 0 = lump1, 1..Nt = neck nodes in ascending t,
// Nt+1 = lump2. Edges connect consecutive nodes; the whole operator chain is
// tridiagonal.

enum class Chart { cap1, neck, cap2 };

struct GluedGeometry {
    ModelCap cap1, cap2;
    NeckChart neck;
    CutoffSet cutoffs;
    ConformalFactor cf;
    double R = 1.0, Q = 1.0;
    std::optional<DeformMode> deform;

    std::vector<double> vol_weight; // per composite node
    std::vector<double> cond;       // conductance of edge (i, i+1)

    // --- indexing -----------------------------------------------------------
    int neck_nodes() const { return neck.node_count(); }
    int node_count() const { return neck_nodes() + 2; }
    int lump1_index() const { return 0; }
    int lump2_index() const { return node_count() - 1; }
    int neck_index(int j) const { return 1 + j; }
    bool is_neck(int i) const { return i >= 1 && i <= neck_nodes(); }
    int neck_offset(int i) const { return i - 1; }
    Chart chart_of(int i) const {
        if (i == lump1_index()) return Chart::cap1;
        if (i == lump2_index()) return Chart::cap2;
        return Chart::neck;
    }
    // Coordinate for dumps: t on the neck, +-(|log eps| + 1) markers on lumps.
    double coordinate(int i) const {
        if (i == lump1_index()) return -(neck.half_length() + 1.0);
        if (i == lump2_index()) return neck.half_length() + 1.0;
        return neck.t(neck_offset(i));
    }
    int mirror_node(int i) const { return node_count() - 1 - i; }

    double total_volume() const {
        double v = 0;
        for (double w : vol_weight) v += w;
        return v;
    }

    // Cutoff value of a profile extended to the composite grid: chi1-type
    // profiles are 1 on lump1 and 0 on lump2, chi2-type the reverse.
    std::vector<double> extend(const std::vector<double>& neckvals, double lump1_val,
                               double lump2_val) const {
        std::vector<double> out(node_count());
        out[lump1_index()] = lump1_val;
        out[lump2_index()] = lump2_val;
        for (int j = 0; j < neck_nodes(); ++j) out[neck_index(j)] = neckvals[j];
        return out;
    }
};

// Volume of the flat collar eps^2 < rho < 1 of one cap (unit homothety).
inline double collar_volume(double eps, int n) {
    return sphere_area(n) * (1.0 - std::pow(eps, 2.0 * n)) / n;
}

inline GluedGeometry build_glued_geometry(const ModelCap& cap1, const ModelCap& cap2,
                                          double eps, double alpha, double R = 1.0,
                                          double Q = 1.0, double h_request = 0.05,
                                          std::optional<DeformMode> deform = std::nullopt,
                                          FermiCorrection corr = {}) {
    cap1.validate();
    cap2.validate();
    if (cap1.total_dim != cap2.total_dim || cap1.n() != cap2.n())
        throw validation_error("build_glued_geometry: caps must have equal dimensions");
    if (!(R > 0.0 && Q > 0.0)) throw validation_error("build_glued_geometry: R, Q must be > 0");
    if (!(eps > 0.0 && eps < std::exp(-alpha)))
        throw validation_error("build_glued_geometry: need eps in (0, e^{-alpha})");

    GluedGeometry g;
    g.cap1 = cap1;
    g.cap2 = cap2;
    g.cap1.side = 1;
    g.cap2.side = 2;
    g.R = R;
    g.Q = Q;
    g.deform = deform;
    g.neck = NeckChart(eps, alpha, cap1.n(), h_request);
    g.cutoffs = make_cutoffs(g.neck);
    g.cf = conformal_factor(g.neck, g.cutoffs, R, Q);
    if (corr.active()) {
        const double ex = 0.25 * (g.neck.n - 2);
        for (int j = 0; j < g.neck.node_count(); ++j) {
            const double t = g.neck.t(j);
            const double r1 = chart_map(1, t, eps), r2 = chart_map(2, t, eps);
            const double z = g.cutoffs.zeta[j];
            const double blend = 1.0 + z * corr.quad1 * r1 * r1 + (1.0 - z) * corr.quad2 * r2 * r2;
            if (!(blend > 0.0))
                throw validation_error("build_glued_geometry: Fermi correction too large");
            g.cf.u[j] *= std::pow(blend, ex);
        }
    }

    const int n = g.neck.n;
    const int m = cap1.total_dim;
    const int Nt = g.neck.node_count();
    const double omega = sphere_area(n);
    const double h = g.neck.h;
    const double p = 2.0 * n / (n - 2.0); // volume power of the conformal factor

    g.vol_weight.assign(g.node_count(), 0.0);
    g.vol_weight[g.lump1_index()] = std::pow(R, 0.5 * m) * cap1.lump_volume;
    g.vol_weight[g.lump2_index()] = std::pow(Q, 0.5 * m) * cap2.lump_volume;
    for (int j = 0; j < Nt; ++j)
        g.vol_weight[g.neck_index(j)] = omega * std::pow(g.cf.u[j], p) * h;

    // Finite-volume conductances sigma = omega * u_i u_{i+1} / h. The lump
    // couples through the u-value at the adjacent collar end (mean-value
    // stencil); u(log eps) = R^{(n-2)/4} exactly, so the coupling obeys the
    // homothety scaling of the cap metric.
    g.cond.assign(g.node_count() - 1, 0.0);
    g.cond.front() = omega * g.cf.u.front() * g.cf.u.front() / h;
    for (int j = 0; j + 1 < Nt; ++j)
        g.cond[1 + j] = omega * g.cf.u[j] * g.cf.u[j + 1] / h;
    g.cond.back() = omega * g.cf.u.back() * g.cf.u.back() / h;

    for (double w : g.vol_weight)
        if (!(w > 0.0)) throw validation_error("build_glued_geometry: nonpositive volume weight");
    return g;
}

// Model cap chain used for the cap-side solves: same node set as
// {lump_i} + neck, but with the pure (scaled) flat branch as conformal
// factor. Ordered from the lump outward toward the gluing locus, i.e. for
// side 1 the node order coincides with the composite order, for side 2 it is
// reversed relative to t but still starts at the lump.
struct CapChain {
    int side = 1;
    std::vector<double> weight; // node 0 = lump, nodes 1..Nt = collar
    std::vector<double> cond;   // edge (i, i+1)
    std::vector<double> rho;    // Fermi radius of collar nodes (rho[0] unused for lump)
    double scale = 1.0;         // homothety factor of this cap
};

inline CapChain make_cap_chain(const GluedGeometry& g, int side) {
    const int n = g.neck.n;
    const int m = g.cap1.total_dim;
    const int Nt = g.neck.node_count();
    const double omega = sphere_area(n);
    const double h = g.neck.h;
    const double p = 2.0 * n / (n - 2.0);
    const double hom = side == 1 ? g.R : g.Q;
    const double us = std::pow(hom, 0.25 * (n - 2));
    const ModelCap& cap = side == 1 ? g.cap1 : g.cap2;

    CapChain c;
    c.side = side;
    c.scale = hom;
    c.weight.resize(Nt + 1);
    c.cond.resize(Nt);
    c.rho.resize(Nt + 1, 0.0);
    c.weight[0] = std::pow(hom, 0.5 * m) * cap.lump_volume;

    // collar node j (1-based) corresponds to neck node: side 1 ascending t,
    // side 2 descending t; pure branch value u = us * u_side.
    for (int j = 0; j < Nt; ++j) {
        const int neckj = side == 1 ? j : Nt - 1 - j;
        const double u = us * (side == 1 ? g.cf.u1[neckj] : g.cf.u2[neckj]);
        c.weight[1 + j] = omega * std::pow(u, p) * h;
        c.rho[1 + j] = chart_map(side, g.neck.t(neckj), g.neck.eps);
    }
    c.cond[0] = omega * (us * 1.0) * (us * 1.0) / h; // u = us at the collar mouth
    for (int j = 0; j + 1 < Nt; ++j) {
        const int neckj = side == 1 ? j : Nt - 1 - j;
        const int neckj1 = side == 1 ? j + 1 : Nt - 2 - j;
        const double ua = us * (side == 1 ? g.cf.u1[neckj] : g.cf.u2[neckj]);
        const double ub = us * (side == 1 ? g.cf.u1[neckj1] : g.cf.u2[neckj1]);
        c.cond[1 + j] = omega * ua * ub / h;
    }
    return c;
}

// Composite node index of cap-chain node i (for transferring fields).
inline int cap_chain_to_composite(const GluedGeometry& g, int side, int i) {
    if (i == 0) return side == 1 ? g.lump1_index() : g.lump2_index();
    const int Nt = g.neck.node_count();
    const int neckj = side == 1 ? i - 1 : Nt - i;
    return g.neck_index(neckj);
}

} // namespace scalarflat
