"""Sparse gradient-domain least squares.

Both flow completion and Poisson reconstruction minimise a sum of squared
forward-difference residuals ``(I[b] - I[a] - g)^2`` over a set of active
pixel pairs, with values fixed at known pixels. :func:`assemble` builds the
normal equations over the unknown pixels only; :func:`conjugate_gradient`
solves them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ConvergenceError

log = logging.getLogger(__name__)


@dataclass
class LinearSystem:
    A: sparse.csr_matrix
    b: np.ndarray  # (n, C)
    index: np.ndarray  # (H, W) unknown index or -1
    ys: np.ndarray
    xs: np.ndarray
    labels: np.ndarray  # component id per unknown
    anchored: np.ndarray  # per component: touches a known pixel

    @property
    def n(self):
        return len(self.ys)

    def isolated(self):
        """Boolean per unknown: belongs to a component with no known neighbour."""
        if self.n == 0:
            return np.zeros(0, dtype=bool)
        return ~self.anchored[self.labels]


def _pairs(active, unknown, known, shift):
    """Indices (flat a, flat b) of retained pairs along one axis."""
    h, w = unknown.shape
    if shift == "x":
        a = np.s_[:, :-1]
        b = np.s_[:, 1:]
    else:
        a = np.s_[:-1, :]
        b = np.s_[1:, :]
    ua, ub = unknown[a], unknown[b]
    ka, kb = known[a], known[b]
    keep = active[a] & (ua | ub) & (ua | ka) & (ub | kb)
    flat = np.arange(h * w).reshape(h, w)
    return flat[a][keep], flat[b][keep]


def assemble(unknown, known, values, gx, gy, active_x, active_y) -> LinearSystem:
    """Normal equations for ``sum (I[p+d] - I[p] - g_d[p])^2`` over active pairs.

    ``active_x[y, x]`` enables the pair ``(y, x)-(y, x+1)``; ``active_y`` the
    pair ``(y, x)-(y+1, x)``. A pair is dropped when an endpoint is neither
    unknown nor known, or when both endpoints are known.
    """
    unknown = np.asarray(unknown, dtype=bool)
    known = np.asarray(known, dtype=bool) & ~unknown
    h, w = unknown.shape
    values = np.asarray(values, dtype=np.float64).reshape(h * w, -1)
    channels = values.shape[1]
    gx = np.asarray(gx, dtype=np.float64).reshape(h * w, channels)
    gy = np.asarray(gy, dtype=np.float64).reshape(h * w, channels)

    index = np.full(h * w, -1, dtype=np.intp)
    flat_unknown = unknown.ravel()
    n = int(flat_unknown.sum())
    index[flat_unknown] = np.arange(n)

    rows, cols = [], []
    rhs = np.zeros((n, channels))
    diag = np.zeros(n)
    touches_known = np.zeros(n, dtype=bool)
    for axis, g, active in (("x", gx, active_x), ("y", gy, active_y)):
        pa, pb = _pairs(np.asarray(active, dtype=bool), unknown, known, axis)
        ia, ib = index[pa], index[pb]
        target = g[pa]
        both = (ia >= 0) & (ib >= 0)
        only_a = (ia >= 0) & (ib < 0)
        only_b = (ia < 0) & (ib >= 0)
        # a unknown: d/dI_a gives I_a - I_b = -g
        np.add.at(diag, ia[ia >= 0], 1.0)
        np.add.at(diag, ib[ib >= 0], 1.0)
        np.add.at(rhs, ia[ia >= 0], -target[ia >= 0])
        np.add.at(rhs, ib[ib >= 0], target[ib >= 0])
        rows.extend([ia[both], ib[both]])
        cols.extend([ib[both], ia[both]])
        # known neighbour moves to the right-hand side
        np.add.at(rhs, ia[only_a], values[pb[only_a]])
        np.add.at(rhs, ib[only_b], values[pa[only_b]])
        touches_known[ia[only_a]] = True
        touches_known[ib[only_b]] = True

    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.intp)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.intp)
    off = sparse.coo_matrix((-np.ones(len(r)), (r, c)), shape=(n, n))
    A = (off + sparse.diags(diag)).tocsr()
    A.sum_duplicates()

    if n:
        adjacency = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
        ncomp, labels = csgraph.connected_components(adjacency, directed=False)
        anchored = np.zeros(ncomp, dtype=bool)
        anchored[labels[touches_known]] = True
    else:
        labels = np.zeros(0, dtype=np.intp)
        anchored = np.zeros(0, dtype=bool)

    ys, xs = np.divmod(np.flatnonzero(flat_unknown), w)
    return LinearSystem(A, rhs, index.reshape(h, w), ys, xs, labels, anchored)


def conjugate_gradient(A, b, *, tol=1e-6, maxiter=10_000, x0=None):
    """Jacobi-preconditioned CG for one right-hand side.

    Stops once ``||b - A x|| <= tol * ||b||``; raises :class:`ConvergenceError`
    otherwise.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    d = A.diagonal()
    inv_d = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    r = b - A @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    goal = tol * bnorm
    for it in range(maxiter):
        rnorm = np.linalg.norm(r)
        if rnorm <= goal:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ConvergenceError(
                "matrix is not positive definite along search direction",
                residual=rnorm / bnorm,
                iterations=it,
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rnorm = np.linalg.norm(r)
    if rnorm <= goal:
        return x
    raise ConvergenceError(
        f"CG did not converge in {maxiter} iterations (relative residual {rnorm / bnorm:.3e})",
        residual=rnorm / bnorm,
        iterations=maxiter,
    )


def solve(system: LinearSystem, *, tol=1e-6, maxiter=10_000, anchor=None, anchor_weight=1e-2):
    """Solve every channel of ``system``.

    Components without a known neighbour are singular. With ``anchor``
    (``(n, C)`` values) they receive a weak pull ``anchor_weight * (x - anchor)^2``
    and are solved too; without it their rows come back as NaN for the caller
    to fill.
    """
    n = system.n
    channels = system.b.shape[1]
    x = np.full((n, channels), np.nan)
    if n == 0:
        return x
    isolated = system.isolated()
    A = system.A
    b = system.b.copy()
    if anchor is not None and isolated.any():
        bump = np.where(isolated, anchor_weight, 0.0)
        A = (A + sparse.diags(bump)).tocsr()
        b[isolated] += anchor_weight * np.asarray(anchor, dtype=np.float64)[isolated]
        solvable = np.ones(n, dtype=bool)
    else:
        solvable = ~isolated
        if isolated.any():
            log.info("%d unknowns lie in components with no known boundary", int(isolated.sum()))
    if not solvable.any():
        return x
    sub = np.flatnonzero(solvable)
    A_sub = A[sub][:, sub] if len(sub) < n else A
    for ch in range(channels):
        x[sub, ch] = conjugate_gradient(A_sub, b[sub, ch], tol=tol, maxiter=maxiter)
    return x
