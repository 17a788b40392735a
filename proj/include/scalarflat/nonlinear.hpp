#pragma once

// Fixed-point solution of the projected Yamabe problem
//     Delta v = F_eps(v) - lambda(eps, v) beta.
// One Picard step inverts the Laplacian through the Neumann-series solver;
// the iteration starts at v = 0 and contracts at rate O(eps).

#include <cmath>
#include <vector>

#include "core.hpp"
#include "curvature.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "linsolve.hpp"

namespace scalarflat {

// ---------------------------------------------------------------------------

struct BallParams {
    double gamma = 0.25; // weighted-norm exponent, (0, 1/2) for the contraction
    double r_eps = 0.0;  // invariant-ball radius

    void validate() const {
        if (!(gamma > 0.0 && gamma < 0.5))
            throw validation_error("BallParams: gamma must lie in (0, 1/2)");
    }
};

// Invariant ball radius: r_eps = c0 eps for n = 3, c0 eps^{1+gamma} for n >= 4.
inline double ball_radius(int n, double eps, double gamma, double c0) {
    if (!(gamma > 0.0 && gamma < 0.5))
        throw validation_error("ball_radius: gamma must lie in (0, 1/2)");
    if (!(c0 > 0.0)) throw validation_error("ball_radius: c0 must be positive");
    if (n == 3) return c0 * eps;
    return c0 * std::pow(eps, 1.0 + gamma);
}

// ---------------------------------------------------------------------------

struct PicardState {
    GridField v;
    double S = 0.0;        // chosen constant (standard mode); 0 in deformation mode
    double lambda = 0.0;   // eigenvalue estimate of the last linear solve
    double g_value = 0.0;  // deformation mode: int F dvol / |c_m| (solvability defect)
    int iteration = 0;
    std::vector<double> step_norms;
    double final_residual = 0.0; // |Delta v - F + lambda beta|_{gamma+2} / |F|_{gamma+2}
    bool converged = false;
};

struct YamabeParams {
    BallParams ball;
    double tol = 1e-13;   // absolute step-norm tolerance in |.|_gamma
    int max_iter = 25;
    LinearSolveParams linear;
};

struct PicardStepResult {
    GridField v_next;
    double S = 0.0;
    double lambda = 0.0;
    double g_value = 0.0;
};

// One application of v -> Delta^{-1} (F_eps(v) - lambda beta). In deformation
// mode the right-hand side has no free constant; its volume mean (the
// solvability defect, zero exactly on the deformation root set) is projected
// out before inverting.
inline PicardStepResult picard_step(const GridField& v, const GluedGeometry& g,
                                    const ProjectionBasis& basis, const WeightProfile& w,
                                    const YamabeParams& params) {
    PicardStepResult out;
    GridField F(g.node_count());
    if (g.deform) {
        F = F_eps(v, 0.0, g);
        const ConformalConstants cc = constants_of(g);
        out.g_value = integrate(F, g) / std::abs(cc.c_m);
        F = project_mean_zero(F, g);
    } else {
        out.S = choose_S(v, g);
        F = F_eps(v, out.S, g);
    }
    LinearSolveParams lp = params.linear;
    lp.gamma = params.ball.gamma;
    LinearSolveResult sol = iterate_linear_solve(F, g, basis, w, lp);
    out.v_next = std::move(sol.u);
    out.lambda = sol.lambda;
    return out;
}

inline PicardState solve_yamabe(const GluedGeometry& g, const YamabeParams& params = {}) {
    params.ball.validate();
    const ProjectionBasis basis = make_projection_basis(g);
    const WeightProfile w = weight(g);
    const double gamma = params.ball.gamma;

    PicardState st;
    st.v = GridField(g.node_count(), 0.0);

    for (int j = 0; j < params.max_iter; ++j) {
        PicardStepResult step = picard_step(st.v, g, basis, w, params);
        GridField diff = step.v_next - st.v;
        const double dn = weighted_norm(diff, gamma, w);
        st.step_norms.push_back(dn);
        st.v = std::move(step.v_next);
        st.S = step.S;
        st.lambda = step.lambda;
        st.g_value = step.g_value;
        st.iteration = j + 1;
        for (int i = 0; i < g.node_count(); ++i)
            if (1.0 + st.v[i] <= 0.0)
                throw convergence_error("solve_yamabe: conformal factor lost positivity");
        if (dn <= params.tol) {
            st.converged = true;
            break;
        }
    }
    if (!st.converged)
        throw convergence_error("solve_yamabe: max_iter exceeded before step tolerance");

    // fixed-point residual at the accepted state
    {
        GridField F = g.deform ? project_mean_zero(F_eps(st.v, 0.0, g), g)
                               : F_eps(st.v, st.S, g);
        GridField Lv = laplacian_apply(g, st.v);
        GridField r(g.node_count());
        for (int i = 0; i < g.node_count(); ++i)
            r[i] = Lv[i] - F[i] + st.lambda * basis.beta[i];
        const double nf = weighted_norm(F, gamma + 2.0, w);
        st.final_residual = nf > 0.0 ? weighted_norm(r, gamma + 2.0, w) / nf : 0.0;
    }
    return st;
}

} // namespace scalarflat
