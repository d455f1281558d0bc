"""Semilinear elliptic control benchmark on a 2D grid.

Per grid node i the variables are x_i = (u_i, z_i): state and control. The
state equation -lap(u) + u^p - z = 0 is discretized with the 5-point stencil
and homogeneous Dirichlet data imposed through zero ghost values outside the
grid, so every grid node keeps its variables and one constraint. The
objective is the h^2-weighted quadrature of (u - u_d)^2 + alpha * z^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError
from .graph import Graph, NodeSet, grid_graph, strip_partition
from .model import GsNlpModel, NodeFunctions


@dataclass(frozen=True)
class PdeConfig:
    rows: int = 40
    cols: int = 40
    u_d: float = -5.0
    alpha: float = 0.5
    p: int = 4
    h: float = 1.0
    strips: int = 5

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise InputValidationError("grid must be at least 3x3")
        if self.p < 1:
            raise InputValidationError("exponent p must be a positive integer")
        if self.h <= 0:
            raise InputValidationError("mesh spacing must be positive")
        if self.strips < 1 or self.strips > self.cols:
            raise InputValidationError("strip count must be in 1..cols")


def build_pde_model(cfg: PdeConfig) -> tuple[GsNlpModel, Graph, list[NodeSet]]:
    """Model, grid graph, and vertical-strip partition for the benchmark."""
    g = grid_graph(cfg.rows, cfg.cols)
    funcs = [_pde_node(i, g.adjacency[i], cfg) for i in range(g.node_count)]
    model = GsNlpModel(g, funcs)
    parts = strip_partition(g, cfg.rows, cfg.cols, cfg.strips)
    return model, g, parts


def _pde_node(i: int, neighbors: tuple[int, ...], cfg: PdeConfig) -> NodeFunctions:
    h2 = cfg.h * cfg.h
    inv_h2 = 1.0 / h2
    u_d, alpha, p = cfg.u_d, cfg.alpha, cfg.p

    def objective(xs):
        u, z = xs[i]
        return h2 * ((u - u_d) ** 2 + alpha * z * z)

    def gradient(xs):
        u, z = xs[i]
        return {i: np.array([2.0 * h2 * (u - u_d), 2.0 * h2 * alpha * z])}

    def obj_hessian(xs):
        return {(i, i): np.array([[2.0 * h2, 0.0], [0.0, 2.0 * h2 * alpha]])}

    def constraint(xs):
        u, z = xs[i]
        # missing neighbors are Dirichlet ghosts fixed to zero
        lap = (sum(xs[j][0] for j in neighbors) - 4.0 * u) * inv_h2
        return np.array([-lap + u**p - z])

    def jacobian(xs):
        u = xs[i][0]
        out = {i: np.array([[4.0 * inv_h2 + p * u ** (p - 1), -1.0]])}
        for j in neighbors:
            out[j] = np.array([[-inv_h2, 0.0]])
        return out

    def con_hessian(xs, lam_i):
        if p < 2:
            return {}
        u = xs[i][0]
        val = float(lam_i[0]) * p * (p - 1) * u ** (p - 2)
        return {(i, i): np.array([[val, 0.0], [0.0, 0.0]])}

    return NodeFunctions(2, 1, objective, gradient, obj_hessian,
                         constraint, jacobian, con_hessian)
