"""Edge-guided piecewise-smooth flow completion.

Inside the (dilated) hole the flow is the minimiser of the squared forward
differences, with every difference term dropped when either of its two pixels
lies on a flow edge. Known pixels act as Dirichlet boundary values. Each of
the ``u`` and ``v`` components shares one system matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import linsys
from .raster import as_flow, as_mask, check_same_size

log = logging.getLogger(__name__)


@dataclass
class FlowCompletionProblem:
    flow: np.ndarray
    mask_dilated: np.ndarray
    edges: np.ndarray | None = None
    solver_tolerance: float = 1e-6
    max_iterations: int = 10_000
    isolated_count: int = field(default=0, init=False)

    def __post_init__(self):
        self.flow = as_flow(self.flow)
        self.mask_dilated = as_mask(self.mask_dilated)
        if self.edges is None:
            self.edges = np.zeros(self.mask_dilated.shape, dtype=bool)
        self.edges = as_mask(self.edges)
        check_same_size(self.flow, self.mask_dilated, self.edges, names=("flow", "mask", "edges"))
        if self.solver_tolerance <= 0:
            raise ValueError("solver_tolerance must be positive")


def edge_free_pairs(edges):
    """Active-pair maps: a pair is kept only if neither endpoint is an edge pixel."""
    free = ~np.asarray(edges, dtype=bool)
    active_x = np.zeros_like(free)
    active_y = np.zeros_like(free)
    active_x[:, :-1] = free[:, :-1] & free[:, 1:]
    active_y[:-1] = free[:-1] & free[1:]
    return active_x, active_y


def assemble_system(problem: FlowCompletionProblem) -> linsys.LinearSystem:
    unknown = problem.mask_dilated
    zeros = np.zeros_like(problem.flow)
    ax, ay = edge_free_pairs(problem.edges)
    return linsys.assemble(unknown, ~unknown, problem.flow, zeros, zeros, ax, ay)


def _fill_isolated(system, known_values, unknown, isolated):
    """Mean of the nearest known values over each boundary-less component."""
    _, (iy, ix) = ndimage.distance_transform_edt(unknown, return_indices=True)
    ys, xs = system.ys[isolated], system.xs[isolated]
    nearest = known_values[iy[ys, xs], ix[ys, xs]]
    labels = system.labels[isolated]
    out = np.empty_like(nearest)
    for lab in np.unique(labels):
        sel = labels == lab
        out[sel] = nearest[sel].mean(axis=0)
    return out


def complete_flow(problem: FlowCompletionProblem) -> np.ndarray:
    """Return the completed flow; known pixels are copied through unchanged."""
    unknown = problem.mask_dilated
    out = problem.flow.copy()
    if not unknown.any():
        return out
    if unknown.all():
        raise ValueError("flow completion needs at least one known pixel")
    system = assemble_system(problem)
    x = linsys.solve(system, tol=problem.solver_tolerance, maxiter=problem.max_iterations)
    isolated = system.isolated()
    problem.isolated_count = int(isolated.sum())
    if isolated.any():
        log.info("filling %d edge-enclosed flow pixels from nearest known values", problem.isolated_count)
        x[isolated] = _fill_isolated(system, problem.flow, unknown, isolated)
    out[system.ys, system.xs] = x
    return out
