"""Overlapping subproblem assembly/solve, direction composition, exact oracle.

One SQP iteration decomposes the full Newton QP into per-subdomain QPs: the
objective is truncated to the subdomain, coupling constraints on the
combined boundary move into a quadratic penalty weighted by mu, and internal
constraints stay hard. Boundary parameters d (primal over the depth-2
external boundary, dual over the combined boundary) reproduce the truncated
exact direction when set from the full solution; d = 0 is the production
path.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blocks import KktSystem, NodeBlockVector
from .errors import (
    CompositionError,
    DegenerateSubdomainError,
    InputValidationError,
    SolverError,
    SubproblemRegularityError,
)
from .graph import OverlapDecomposition
from .model import EvaluationSnapshot

BoundaryParameters = tuple[NodeBlockVector, NodeBlockVector]


@dataclass
class Subproblem:
    index: int
    system: KktSystem
    rhs: np.ndarray
    mu: float
    d: BoundaryParameters | None
    jac_internal: np.ndarray
    c_internal: np.ndarray


@dataclass
class SubSolution:
    index: int
    omega: NodeBlockVector
    zeta: NodeBlockVector


def assemble_subproblem(
    snap: EvaluationSnapshot,
    dec: OverlapDecomposition,
    ell: int,
    mu: float,
    d: BoundaryParameters | None = None,
) -> Subproblem:
    if mu <= 0:
        raise InputValidationError("mu must be positive")
    model = snap.model
    w = dec.subdomains[ell]
    interior = dec.exclusive_interior(ell)
    hat = dec.combined_boundary[ell]
    bar = dec.external_depth2[ell]
    if len(interior) == 0:
        raise DegenerateSubdomainError(f"subdomain {ell} has empty exclusive interior")

    hess_w = snap.hess_mod.restrict(w, w).to_dense()
    grad_w = snap.grad_l.restrict(w).data
    jac_internal = snap.jac.restrict(interior, w).to_dense()
    c_internal = snap.c.restrict(interior).data

    if len(hat) > 0:
        jac_hat_w = snap.jac.restrict(hat, w).to_dense()
        c_hat = snap.c.restrict(hat).data
        hess_w = hess_w + mu * (jac_hat_w.T @ jac_hat_w)
        rhs_primal = -mu * (jac_hat_w.T @ c_hat) - grad_w
    else:
        jac_hat_w = None
        rhs_primal = -grad_w

    if d is not None:
        omega_bar, zeta_bar = d
        if omega_bar.nodes.nodes != bar.nodes or zeta_bar.nodes.nodes != hat.nodes:
            raise InputValidationError("boundary parameter node sets do not match the subdomain")
        coupling = snap.hess_mod.restrict(w, bar).to_dense() @ omega_bar.data
        if jac_hat_w is not None:
            jac_hat_bar = snap.jac.restrict(hat, bar).to_dense()
            coupling = coupling + mu * (jac_hat_w.T @ (jac_hat_bar @ omega_bar.data))
            coupling = coupling + jac_hat_w.T @ zeta_bar.data
        rhs_primal = rhs_primal - coupling

    system = KktSystem(
        hess=hess_w,
        jac=jac_internal,
        primal_nodes=w,
        primal_dims=model.primal_dims,
        dual_nodes=interior,
        dual_dims=model.dual_dims,
    )
    rhs = np.concatenate([rhs_primal, -c_internal])
    return Subproblem(ell, system, rhs, mu, d, jac_internal, c_internal)


def solve_subproblem(sp: Subproblem) -> SubSolution:
    try:
        fact = sp.system.factorize()
        # only nonsingularity is required: with a small penalty weight the
        # subproblem may be indefinite yet still have a unique KKT point
        if fact.is_singular:
            raise SolverError(
                "singular subproblem KKT factorization",
                min_pivot=fact.min_pivot,
                inertia=fact.sign_inertia,
            )
        omega, zeta = fact.solve_system(sp.rhs)
    except SolverError as exc:
        gamma = 0.0
        if sp.jac_internal.size:
            gamma = float(np.linalg.svd(sp.jac_internal, compute_uv=False)[-1]) ** 2
        raise SubproblemRegularityError(
            f"subproblem {sp.index} KKT solve failed ({exc}); "
            f"measured min eig of G G^T = {gamma:.3e}",
            min_pivot=getattr(exc, "min_pivot", None),
            inertia=getattr(exc, "inertia", None),
        ) from exc
    # internal constraints must come out linearly feasible
    residual = sp.c_internal + sp.jac_internal @ omega.data
    scale = 1.0 + np.linalg.norm(sp.rhs) + np.linalg.norm(omega.data)
    if sp.c_internal.size and np.linalg.norm(residual) > 1e-8 * scale:
        raise SolverError(
            f"subproblem {sp.index} internal-constraint residual "
            f"{np.linalg.norm(residual):.3e} exceeds tolerance"
        )
    return SubSolution(sp.index, omega, zeta)


def decompose(
    dec: OverlapDecomposition, x: NodeBlockVector, lam: NodeBlockVector
) -> list[tuple[NodeBlockVector, NodeBlockVector]]:
    return [
        (x.restrict(dec.subdomains[ell]), lam.restrict(dec.exclusive_interior(ell)))
        for ell in range(dec.num_subdomains)
    ]


def compose(
    dec: OverlapDecomposition, pieces: list[SubSolution]
) -> tuple[NodeBlockVector, NodeBlockVector]:
    """Assemble full-domain vectors from the exclusive part of each piece."""
    if len(pieces) != dec.num_subdomains:
        raise CompositionError(
            f"expected {dec.num_subdomains} pieces, got {len(pieces)}"
        )
    by_index = {p.index: p for p in pieces}
    if len(by_index) != dec.num_subdomains:
        raise CompositionError("duplicate or missing subdomain pieces")
    first = pieces[0]
    graph = dec.graph
    from .graph import NodeSet

    all_nodes = NodeSet(graph, tuple(range(graph.node_count)))
    primal = NodeBlockVector.zeros(all_nodes, first.omega.dims)
    dual = NodeBlockVector.zeros(all_nodes, first.zeta.dims)
    for ell in range(dec.num_subdomains):
        piece = by_index[ell]
        interior = dec.exclusive_interior(ell)
        for k in dec.disjoint_parts[ell]:
            primal.set_block(k, piece.omega.block(k))
            if k not in interior:
                raise CompositionError(
                    f"node {k} of part {ell} lies on the internal boundary; "
                    "its dual piece is undefined (b too small)"
                )
            dual.set_block(k, piece.zeta.block(k))
    return primal, dual


def exact_newton_direction(
    snap: EvaluationSnapshot,
) -> tuple[NodeBlockVector, NodeBlockVector]:
    """Solve the full Newton system directly (the exact-SQP oracle)."""
    fact = snap.full_kkt_factorization()
    if fact.is_singular:
        raise SolverError(
            "singular full KKT factorization",
            min_pivot=fact.min_pivot,
            inertia=fact.sign_inertia,
        )
    rhs = -np.concatenate([snap.grad_l.data, snap.c.data])
    return fact.solve_system(rhs)


def ogd_direction(
    snap: EvaluationSnapshot,
    dec: OverlapDecomposition,
    mu: float,
    workers: int = 1,
) -> tuple[NodeBlockVector, NodeBlockVector]:
    """Solve all subproblems with d = 0 and compose the exclusive parts.

    Deterministic regardless of worker count: pieces are gathered in
    subdomain order before composition.
    """

    def run(ell: int) -> SubSolution:
        return solve_subproblem(assemble_subproblem(snap, dec, ell, mu))

    indices = range(dec.num_subdomains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pieces = list(pool.map(run, indices))
    else:
        pieces = [run(ell) for ell in indices]
    return compose(dec, pieces)


def boundary_exact_parameters(
    dec: OverlapDecomposition,
    ell: int,
    dx: NodeBlockVector,
    dlam: NodeBlockVector,
) -> BoundaryParameters:
    """Boundary parameters that make the subproblem recover the exact direction."""
    return (
        dx.restrict(dec.external_depth2[ell]),
        dlam.restrict(dec.combined_boundary[ell]),
    )
