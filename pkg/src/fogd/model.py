"""Graph-structured NLP models: per-node callbacks and snapshot evaluation.

A model supplies, for each node i, an objective piece, an equality
constraint, and their derivatives, all as functions of the stacked variables
of the closed neighborhood of i. Callbacks must be pure; the engine may call
them for different nodes concurrently.

Callback conventions (xs is a dict {j: x_j} over the closed neighborhood):

  objective(xs)            -> float
  gradient(xs)             -> {j: (r_j,) array}           (omit zero blocks)
  obj_hessian(xs)          -> {(j, k): (r_j, r_k) array}  with j <= k
  constraint(xs)           -> (m_i,) array
  jacobian(xs)             -> {j: (m_i, r_j) array}
  con_hessian(xs, lam_i)   -> {(j, k): (r_j, r_k) array}  with j <= k,
                              already contracted with the multiplier lam_i
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .blocks import (
    KktFactorization,
    NodeBlockMatrix,
    NodeBlockVector,
    kkt_assemble,
    spectral_norm_estimate,
)
from .errors import EvaluationError, InputValidationError, ModificationError
from .graph import Graph, NodeSet


@dataclass
class NodeFunctions:
    primal_dim: int
    constraint_dim: int
    objective: Callable
    gradient: Callable
    obj_hessian: Callable
    constraint: Callable | None = None
    jacobian: Callable | None = None
    con_hessian: Callable | None = None


class GsNlpModel:
    """Equality-constrained NLP whose couplings follow a graph."""

    def __init__(self, graph: Graph, node_functions: Sequence[NodeFunctions]):
        if len(node_functions) != graph.node_count:
            raise InputValidationError("one NodeFunctions per node required")
        self.graph = graph
        self.node_functions = tuple(node_functions)
        self.all_nodes = NodeSet(graph, tuple(range(graph.node_count)))
        self.primal_dims = {i: nf.primal_dim for i, nf in enumerate(node_functions)}
        self.dual_dims = {i: nf.constraint_dim for i, nf in enumerate(node_functions)}
        self.total_primal = sum(self.primal_dims.values())
        self.total_dual = sum(self.dual_dims.values())
        self._closed_neighborhoods = tuple(
            (i,) + graph.adjacency[i] for i in range(graph.node_count)
        )

    def zeros_primal(self) -> NodeBlockVector:
        return NodeBlockVector.zeros(self.all_nodes, self.primal_dims)

    def zeros_dual(self) -> NodeBlockVector:
        return NodeBlockVector.zeros(self.all_nodes, self.dual_dims)

    def neighborhood_values(self, x: NodeBlockVector, i: int) -> dict[int, np.ndarray]:
        return {j: x.block(j) for j in sorted(self._closed_neighborhoods[i])}

    def _first_bad_node(self, x: NodeBlockVector) -> int | None:
        """Cold path: attribute a non-finite evaluation to a node."""
        for i in range(self.graph.node_count):
            nf = self.node_functions[i]
            xs = self.neighborhood_values(x, i)
            pieces = [np.atleast_1d(np.asarray(nf.objective(xs), dtype=float))]
            pieces.extend(np.asarray(b, dtype=float).ravel() for b in nf.gradient(xs).values())
            if nf.constraint_dim > 0:
                pieces.append(np.asarray(nf.constraint(xs), dtype=float).ravel())
                pieces.extend(np.asarray(b, dtype=float).ravel() for b in nf.jacobian(xs).values())
            if not all(np.isfinite(p).all() for p in pieces):
                return i
        return None

    def evaluate(
        self,
        x: NodeBlockVector,
        lam: NodeBlockVector,
        hessian_mode: str = "adaptive",
        gamma_h: float = 0.1,
        sigma_min: float = 1e-8,
        sigma_max: float = 1e12,
        level: str = "full",
    ) -> "EvaluationSnapshot":
        """Evaluate objective, constraints, Lagrangian gradient and matrices.

        level='merit' yields only f, c, and the Lagrangian gradient (enough
        for merit values during line search); level='gradient' additionally
        assembles the Jacobian; level='full' also assembles H and the
        modified Hessian.
        """
        g = self.graph
        nodes = self.all_nodes
        f_total = 0.0
        c = NodeBlockVector.zeros(nodes, self.dual_dims)
        grad_l = NodeBlockVector.zeros(nodes, self.primal_dims)
        full = level == "full"
        jac = (
            NodeBlockMatrix(nodes, self.dual_dims, nodes, self.primal_dims, graph=g, band=1)
            if level != "merit" else None
        )
        hess = (
            NodeBlockMatrix(nodes, self.primal_dims, nodes, self.primal_dims,
                            symmetric=True, graph=g, band=2)
            if full else None
        )

        for i in range(g.node_count):
            nf = self.node_functions[i]
            xs = self.neighborhood_values(x, i)
            f_total += float(nf.objective(xs))
            for j, block in nf.gradient(xs).items():
                grad_l.block(j)[:] += block
            lam_i = lam.block(i)
            if nf.constraint_dim > 0:
                c.set_block(i, np.asarray(nf.constraint(xs), dtype=float))
                for j, block in nf.jacobian(xs).items():
                    block = np.asarray(block, dtype=float)
                    if jac is not None:
                        jac.add_block(i, j, block)
                    grad_l.block(j)[:] += block.T @ lam_i
            if full:
                for (j, k), block in nf.obj_hessian(xs).items():
                    if j > k:
                        raise EvaluationError(
                            f"objective Hessian key ({j},{k}) must have j <= k", node=i
                        )
                    hess.add_block(j, k, block)
                if nf.constraint_dim > 0 and nf.con_hessian is not None and np.any(lam_i):
                    for (j, k), block in nf.con_hessian(xs, lam_i).items():
                        if j > k:
                            raise EvaluationError(
                                f"constraint Hessian key ({j},{k}) must have j <= k", node=i
                            )
                        hess.add_block(j, k, block)

        if not (np.isfinite(f_total)
                and np.isfinite(c.data).all()
                and np.isfinite(grad_l.data).all()):
            raise EvaluationError(
                "model callbacks returned non-finite values",
                node=self._first_bad_node(x),
            )
        snapshot = EvaluationSnapshot(
            model=self, x=x.copy(), lam=lam.copy(), f=f_total, c=c,
            grad_l=grad_l, jac=jac, hess=hess,
        )
        if full:
            hess_mod, sigma, fact = modify_hessian(
                hess,
                inertia_probe=lambda cand: kkt_assemble(cand, jac).factorize(),
                mode=hessian_mode,
                gamma_h=gamma_h,
                sigma_min=sigma_min,
                sigma_max=sigma_max,
            )
            snapshot.hess_mod = hess_mod
            snapshot.sigma = sigma
            snapshot.kkt_fact = fact
        return snapshot


@dataclass
class EvaluationSnapshot:
    """All quantities of one point (x, lam), evaluated together. Immutable by
    convention: the engine never mutates a snapshot after construction."""

    model: GsNlpModel
    x: NodeBlockVector
    lam: NodeBlockVector
    f: float
    c: NodeBlockVector
    grad_l: NodeBlockVector
    jac: NodeBlockMatrix | None
    hess: NodeBlockMatrix | None = None
    hess_mod: NodeBlockMatrix | None = None
    sigma: float = 0.0
    kkt_fact: KktFactorization | None = None

    @property
    def lagrangian(self) -> float:
        return self.f + float(self.lam.data @ self.c.data)

    def kkt_residual(self) -> float:
        return float(np.sqrt(self.grad_l.norm() ** 2 + self.c.norm() ** 2))

    def full_kkt_factorization(self) -> KktFactorization:
        if self.kkt_fact is None:
            self.kkt_fact = kkt_assemble(self.hess_mod, self.jac).factorize()
        return self.kkt_fact

    def with_shift(self, sigma: float) -> "EvaluationSnapshot":
        """Same point and derivatives, different diagonal Hessian shift."""
        return EvaluationSnapshot(
            model=self.model, x=self.x, lam=self.lam, f=self.f, c=self.c,
            grad_l=self.grad_l, jac=self.jac, hess=self.hess,
            hess_mod=_shifted(self.hess, sigma), sigma=sigma,
        )


def _shifted(hess: NodeBlockMatrix, sigma: float) -> NodeBlockMatrix:
    if sigma == 0.0:
        return hess
    out = NodeBlockMatrix(
        hess.rows, hess.row_dims, hess.cols, hess.col_dims,
        symmetric=True, graph=hess.graph, band=hess.band,
    )
    for (i, j), block in hess.blocks.items():
        out.set_block(i, j, block)
    for i in hess.rows:
        out.add_block(i, i, sigma * np.eye(hess.row_dims[i]))
    return out


def modify_hessian(
    hess: NodeBlockMatrix,
    inertia_probe: Callable[[NodeBlockMatrix], KktFactorization],
    mode: str = "adaptive",
    gamma_h: float = 0.1,
    sigma_min: float = 1e-8,
    sigma_max: float = 1e12,
):
    """Structure-preserving Hessian modification (diagonal shift only).

    Returns (modified Hessian, shift sigma, KKT factorization or None). In
    adaptive mode the shift escalates tenfold until the probe reports inertia
    (n, m, 0); the successful factorization is returned for reuse.
    """
    if mode == "none":
        return hess, 0.0, None
    if mode == "levenberg":
        shift = gamma_h + spectral_norm_estimate(hess)
        return _shifted(hess, shift), shift, None
    if mode != "adaptive":
        raise InputValidationError(f"unknown hessian mode {mode!r}")

    sigma = 0.0
    while True:
        candidate = _shifted(hess, sigma)
        fact = inertia_probe(candidate)
        n, m = fact.system.n, fact.system.m
        if fact.sign_inertia == (n, m, 0):
            return candidate, sigma, fact
        sigma = max(sigma_min, 10.0 * sigma)
        if sigma > sigma_max:
            raise ModificationError(
                f"adaptive Hessian shift exceeded cap {sigma_max:g}"
            )


def toy_chain_model(
    n: int,
    coupling: float = 0.3,
    cubic: float = 0.0,
    constrained_every: int = 2,
    seed: int = 7,
) -> GsNlpModel:
    """Small path-graph test model with mixed block sizes.

    Quadratic tracking objectives; every `constrained_every`-th node carries
    one constraint coupling its neighborhood, linear unless cubic > 0.
    """
    from .graph import Graph

    g = Graph(tuple(
        tuple(j for j in (i - 1, i + 1) if 0 <= j < n) for i in range(n)
    ))
    return toy_graph_model(g, coupling, cubic, constrained_every, seed)


def toy_graph_model(
    g: Graph,
    coupling: float = 0.3,
    cubic: float = 0.0,
    constrained_every: int = 2,
    seed: int = 7,
) -> GsNlpModel:
    """Same construction as the chain model on an arbitrary graph."""
    n = g.node_count
    rng = np.random.default_rng(seed)
    funcs = []
    for i in range(n):
        r = 1 + (i % 2)
        m = 1 if i % constrained_every == 0 else 0
        t = rng.uniform(-1.0, 1.0, size=r)
        beta = float(rng.uniform(-0.5, 0.5))
        funcs.append(_toy_node(i, r, m, t, beta, coupling, cubic, g.adjacency[i]))
    return GsNlpModel(g, funcs)


def _toy_node(i, r, m, target, beta, coupling, cubic, neighbors):
    def objective(xs):
        d = xs[i] - target
        return 0.5 * float(d @ d)

    def gradient(xs):
        return {i: xs[i] - target}

    def obj_hessian(xs):
        return {(i, i): np.eye(r)}

    if m == 0:
        return NodeFunctions(r, 0, objective, gradient, obj_hessian)

    def constraint(xs):
        value = float(np.sum(xs[i])) + cubic * float(xs[i][0]) ** 3 - beta
        for j in neighbors:
            value += coupling * float(np.sum(xs[j]))
        return np.array([value])

    def jacobian(xs):
        own = np.ones((1, r))
        own[0, 0] += 3.0 * cubic * float(xs[i][0]) ** 2
        out = {i: own}
        for j in neighbors:
            out[j] = coupling * np.ones((1, xs[j].shape[0]))
        return out

    def con_hessian(xs, lam_i):
        block = np.zeros((r, r))
        block[0, 0] = 6.0 * cubic * float(xs[i][0]) * float(lam_i[0])
        return {(i, i): block}

    return NodeFunctions(r, m, objective, gradient, obj_hessian,
                         constraint, jacobian, con_hessian)
