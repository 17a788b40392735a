#pragma once

// Discrete Laplace operator of the glued metric, in finite-volume form.
//
// Every manifold here is a chain of nodes with positive node weights w_i
// (the volume element) and positive edge conductances c_{i,i+1}:
//
//     (L f)_i = (1/w_i) * sum_edges c_ij (f_j - f_i).
//
// This form annihilates constants, satisfies the divergence theorem
// sum_i w_i (Lf)_i = 0 and the adjointness sum w g Lf = sum w f Lg exactly
// (not up to O(h^2)), which the Green-formula cancellations downstream rely
// on. On neck nodes the stencil reproduces
//
//     u^{-4/(n-2)} [ f'' + (n-2) tanh((n-2)t/2) f' ]
//
// to second order in the grid spacing; the implied drift coefficient can be
// compared against the closed form with drift_mismatch(). With the
// multiplicative conductances c = omega u_i u_{i+1} / h the pure model
// branches have exact discrete harmonics {1, rho^{2-n}}, so the cap Green
// functions below are exact on source-free regions.

#include <cmath>
#include <cstddef>
#include <vector>

#include "core.hpp"
#include "fields.hpp"
#include "geometry.hpp"

namespace scalarflat {

// ---------------------------------------------------------------------------
// ChainOperator

struct ChainOperator {
    std::vector<double> weight; // size N
    std::vector<double> cond;   // size N-1, edge (i, i+1)

    std::size_t size() const { return weight.size(); }

    std::vector<double> apply(const std::vector<double>& f) const {
        const std::size_t N = size();
        std::vector<double> out(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            double acc = 0.0;
            if (i > 0) acc += cond[i - 1] * (f[i - 1] - f[i]);
            if (i + 1 < N) acc += cond[i] * (f[i + 1] - f[i]);
            out[i] = acc / weight[i];
        }
        return out;
    }

    // Discrete carre du champ: L(fg) = f Lg + g Lf + pairing(f,g), exactly.
    // Continuum limit: 2 g_eps(grad f, grad g).
    std::vector<double> grad_pairing(const std::vector<double>& f,
                                     const std::vector<double>& g) const {
        const std::size_t N = size();
        std::vector<double> out(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            double acc = 0.0;
            if (i > 0) acc += cond[i - 1] * (f[i - 1] - f[i]) * (g[i - 1] - g[i]);
            if (i + 1 < N) acc += cond[i] * (f[i + 1] - f[i]) * (g[i + 1] - g[i]);
            out[i] = acc / weight[i];
        }
        return out;
    }
};

inline ChainOperator chain_operator(const GluedGeometry& g) {
    return ChainOperator{g.vol_weight, g.cond};
}

inline ChainOperator chain_operator(const CapChain& c) {
    return ChainOperator{c.weight, c.cond};
}

// Spec-level entry point on the composite grid.
inline GridField laplacian_apply(const GluedGeometry& g, const GridField& f) {
    check_matches(f, g);
    return GridField(chain_operator(g).apply(f.values));
}

inline GridField grad_pairing(const GluedGeometry& g, const GridField& f, const GridField& h) {
    return GridField(chain_operator(g).grad_pairing(f.values, h.values));
}

// ---------------------------------------------------------------------------
// Drift-coefficient diagnostic.
//
// The neck stencil can be written A_j (D^2 f + B_j D^1 f) with central
// differences; B_j is the implied drift. The printed closed form is
// (n-2) tanh((n-2) t / 2); the finite-volume B_j matches it to O(h^2) on the
// double-plateau region. Any mismatch is reported, never corrected.

struct DriftMismatch {
    double max_abs_mismatch = 0.0;
    double at_t = 0.0;
    double implied = 0.0;
    double printed = 0.0;
};

inline DriftMismatch drift_mismatch(const GluedGeometry& g) {
    DriftMismatch dm;
    const int Nt = g.neck.node_count();
    const double h = g.neck.h;
    const double L = g.neck.half_length();
    for (int j = 1; j + 1 < Nt; ++j) {
        const double t = g.neck.t(j);
        if (std::abs(t) > L - 1.0) continue; // plateau region only
        const double cp = g.cond[g.neck_index(j)];      // edge to j+1
        const double cm = g.cond[g.neck_index(j) - 1];  // edge to j-1
        const double implied = (2.0 / h) * (cp - cm) / (cp + cm);
        const double printed = (g.neck.n - 2) * std::tanh(0.5 * (g.neck.n - 2) * t);
        const double d = std::abs(implied - printed);
        if (d > dm.max_abs_mismatch) {
            dm.max_abs_mismatch = d;
            dm.at_t = t;
            dm.implied = implied;
            dm.printed = printed;
        }
    }
    return dm;
}

// ---------------------------------------------------------------------------
// Tridiagonal solves on chains (Thomas algorithm). The systems are strict
// M-matrices after eliminating the fixed nodes, so no pivoting is needed.

namespace detail {

// Solve sum_edges c_ij (u_j - u_i) = w_i rhs_i for i in [lo, hi] of the chain,
// with u at lo-1 / hi+1 (when they exist) held at given values.
inline std::vector<double> chain_solve_range(const ChainOperator& op,
                                             const std::vector<double>& rhs, int lo, int hi,
                                             double left_value, double right_value) {
    const int N = static_cast<int>(op.size());
    if (lo < 0 || hi >= N || lo > hi) throw validation_error("chain_solve_range: bad range");
    const int M = hi - lo + 1;
    std::vector<double> a(M, 0.0), b(M, 0.0), c(M, 0.0), d(M, 0.0);
    for (int k = 0; k < M; ++k) {
        const int i = lo + k;
        double diag = 0.0;
        d[k] = op.weight[i] * rhs[i];
        if (i > 0) {
            diag -= op.cond[i - 1];
            if (k == 0)
                d[k] -= op.cond[i - 1] * left_value;
            else
                a[k] = op.cond[i - 1];
        }
        if (i + 1 < N) {
            diag -= op.cond[i];
            if (k == M - 1)
                d[k] -= op.cond[i] * right_value;
            else
                c[k] = op.cond[i];
        }
        b[k] = diag;
    }
    // forward elimination
    for (int k = 1; k < M; ++k) {
        const double m = a[k] / b[k - 1];
        b[k] -= m * c[k - 1];
        d[k] -= m * d[k - 1];
    }
    std::vector<double> u(M);
    u[M - 1] = d[M - 1] / b[M - 1];
    for (int k = M - 2; k >= 0; --k) u[k] = (d[k] - c[k] * u[k + 1]) / b[k];
    return u;
}

} // namespace detail

// Dirichlet solve on a sub-interval of the composite chain: unknowns at nodes
// [lo, hi], zero values just outside, rest of the chain untouched (field is
// extended by zero).
inline std::vector<double> dirichlet_solve(const ChainOperator& op, const std::vector<double>& rhs,
                                           int lo, int hi) {
    std::vector<double> full(op.size(), 0.0);
    auto u = detail::chain_solve_range(op, rhs, lo, hi, 0.0, 0.0);
    for (int k = 0; k <= hi - lo; ++k) full[lo + k] = u[k];
    return full;
}

// Solve with the last node pinned to a given value (used by the cap solves:
// the pinned node carries the point source, its equation is dropped).
inline std::vector<double> pinned_end_solve(const ChainOperator& op,
                                            const std::vector<double>& rhs,
                                            double pinned_value) {
    const int N = static_cast<int>(op.size());
    std::vector<double> full(op.size(), 0.0);
    full[N - 1] = pinned_value;
    auto u = detail::chain_solve_range(op, rhs, 0, N - 2, 0.0, pinned_value);
    for (int k = 0; k <= N - 2; ++k) full[k] = u[k];
    return full;
}

} // namespace scalarflat
