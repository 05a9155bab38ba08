"""Compiled kernels for the inner solver.

Everything here operates on the flat array layout prepared by the solver:
fields are C-contiguous (n_cells, l) float64, edge fields (n_edges, l), and
the cell adjacency is a CSR-style neighbour list.  The Gauss-Seidel sweep is
sequential in ascending cell order on purpose: the run must be bit-for-bit
reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MANIFOLD_SPHERE = 0
MANIFOLD_SO3 = 1


@njit(cache=True)
def project_rows(manifold_id, u, v, out):
    """Pointwise tangent projection at u, row by row."""
    n, l = v.shape
    if manifold_id == MANIFOLD_SPHERE:
        for a in range(n):
            dot = 0.0
            for c in range(l):
                dot += u[a, c] * v[a, c]
            for c in range(l):
                out[a, c] = v[a, c] - dot * u[a, c]
    else:
        # (V - U V^T U) / 2 with rows as flattened 3x3 matrices
        for a in range(n):
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for p in range(3):
                        for q in range(3):
                            s += u[a, 3 * i + p] * v[a, 3 * q + p] * u[a, 3 * q + j]
                    out[a, 3 * i + j] = 0.5 * (v[a, 3 * i + j] - s)


@njit(cache=True)
def shrink_rows(a, threshold, out):
    """Row-wise proximal map of the Euclidean norm (zero rows stay zero)."""
    n, l = a.shape
    for g in range(n):
        nrm2 = 0.0
        for c in range(l):
            nrm2 += a[g, c] * a[g, c]
        nrm = math.sqrt(nrm2)
        fac = 0.0
        if nrm > threshold:
            fac = (nrm - threshold) / nrm
        for c in range(l):
            out[g, c] = fac * a[g, c]


@njit(cache=True)
def gs_solve(x, b, diag, coef, meas, indptr, nbr_cell, nbr_h, active,
             tol_abs, max_sweeps):
    """Gauss-Seidel sweeps for ((1+rho)I + rho M^-1 D* D) x = b.

    ``diag`` and ``coef = rho / cell measure`` are precomputed; inactive
    (Dirichlet boundary) cells are skipped and must hold zeros.  Returns the
    sweep count and the final weighted residual norm; the count is negative
    if the sweep budget ran out.
    """
    n, l = x.shape
    res = math.inf
    for sweep in range(1, max_sweeps + 1):
        for a in range(n):
            if not active[a]:
                continue
            for c in range(l):
                acc = 0.0
                for j in range(indptr[a], indptr[a + 1]):
                    acc += nbr_h[j] * x[nbr_cell[j], c]
                x[a, c] = (b[a, c] + coef[a] * acc) / diag[a]
        res2 = 0.0
        for a in range(n):
            if not active[a]:
                continue
            for c in range(l):
                acc = 0.0
                for j in range(indptr[a], indptr[a + 1]):
                    acc += nbr_h[j] * x[nbr_cell[j], c]
                r = b[a, c] + coef[a] * acc - diag[a] * x[a, c]
                res2 += meas[a] * r * r
        res = math.sqrt(res2)
        if res <= tol_abs:
            return sweep, res
    return -max_sweeps, res


@njit(cache=True)
def x_step_rhs(rho, z0, z1, b0, b1, du, meas, indptr, nbr_edge, nbr_h,
               nbr_sign, active, out):
    """Right-hand side rho*(z1 - b1) + rho * adjoint(z0 - du - b0).

    Returns its weighted norm.  Inactive cells get zero.
    """
    n, l = out.shape
    bn2 = 0.0
    for a in range(n):
        if not active[a]:
            for c in range(l):
                out[a, c] = 0.0
            continue
        for c in range(l):
            acc = 0.0
            for j in range(indptr[a], indptr[a + 1]):
                g = nbr_edge[j]
                acc += nbr_h[j] * nbr_sign[j] * (z0[g, c] - du[g, c] - b0[g, c])
            v = rho * (z1[a, c] - b1[a, c]) + (rho / meas[a]) * acc
            out[a, c] = v
            bn2 += meas[a] * v * v
    return math.sqrt(bn2)


@njit(cache=True)
def sbi_loop(manifold_id, u, du, tau, rho, inner_tol, inner_max,
             gs_tol, gs_max, meas, diag, coef, indptr, nbr_cell, nbr_edge,
             nbr_h, nbr_sign, ea, eb, eh, active,
             x, z0, z1, b0, b1, phi_out, record_phi):
    """Full alternating split Bregman iteration for one movement step.

    Runs (x-step, shrinkage z0-step, projection z1-step, multiplier update)
    until the relative increment drops to ``inner_tol`` or the budget runs
    out.  All state arrays are updated in place; callers pass zeros for the
    cold start.  Returns (status, iterations, relative error, total sweeps):
    status 0 on convergence, 1 if the iteration cap was hit, 2 if a linear
    solve ran out of sweeps.
    """
    n, l = x.shape
    ne = du.shape[0]
    x_prev = np.zeros((n, l))
    rhs = np.zeros((n, l))
    tmp = np.zeros((n, l))
    ztmp = np.zeros((n, l))
    thr = tau / rho
    rel = math.inf
    total_sweeps = 0
    k = 0
    for k in range(1, inner_max + 1):
        bn = x_step_rhs(rho, z0, z1, b0, b1, du, meas, indptr, nbr_edge,
                        nbr_h, nbr_sign, active, rhs)
        sweeps, _ = gs_solve(x, rhs, diag, coef, meas, indptr, nbr_cell,
                             nbr_h, active, gs_tol * (1.0 + bn), gs_max)
        if sweeps < 0:
            return 2, k, rel, total_sweeps
        total_sweeps += sweeps
        # z0-step (edgewise shrinkage) fused with the b0 update
        for g in range(ne):
            nrm2 = 0.0
            for c in range(l):
                av = x[ea[g], c] - x[eb[g], c] + du[g, c] + b0[g, c]
                z0[g, c] = av
                nrm2 += av * av
            nrm = math.sqrt(nrm2)
            fac = 0.0
            if nrm > thr:
                fac = (nrm - thr) / nrm
            for c in range(l):
                av = z0[g, c]
                z0[g, c] = fac * av
                b0[g, c] = av - z0[g, c]
        # z1-step (tangent projection) and b1 update
        for a in range(n):
            for c in range(l):
                tmp[a, c] = x[a, c] + b1[a, c]
        project_rows(manifold_id, u, tmp, ztmp)
        for a in range(n):
            for c in range(l):
                zv = ztmp[a, c] if active[a] else 0.0
                z1[a, c] = zv
                b1[a, c] = tmp[a, c] - zv
        if record_phi:
            # localized objective tau*TV(u + x) + 0.5 |x|^2
            tv = 0.0
            for g in range(ne):
                j2 = 0.0
                for c in range(l):
                    d = u[ea[g], c] - u[eb[g], c] + x[ea[g], c] - x[eb[g], c]
                    j2 += d * d
                tv += eh[g] * math.sqrt(j2)
            xn2 = 0.0
            for a in range(n):
                for c in range(l):
                    xn2 += meas[a] * x[a, c] * x[a, c]
            phi_out[k - 1] = tau * tv + 0.5 * xn2
        # stopping: |x_k - x_{k-1}| <= inner_tol * |x_k| in the cell norm
        dn2 = 0.0
        xn2 = 0.0
        for a in range(n):
            for c in range(l):
                d = x[a, c] - x_prev[a, c]
                dn2 += meas[a] * d * d
                xn2 += meas[a] * x[a, c] * x[a, c]
                x_prev[a, c] = x[a, c]
        xn = math.sqrt(xn2)
        dn = math.sqrt(dn2)
        rel = dn / xn if xn > 0.0 else (0.0 if dn == 0.0 else math.inf)
        if dn <= inner_tol * xn:
            return 0, k, rel, total_sweeps
    return 1, inner_max, rel, total_sweeps
