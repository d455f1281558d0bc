"""Node-indexed block vectors/matrices and symmetric-indefinite KKT solves.

Blocks are dense numpy arrays keyed by node (vectors) or node pair
(matrices); zero blocks are never stored. KKT systems are factorized with a
dense LDL^T (Bunch-Kaufman) factorization, which also yields the inertia.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg

from .errors import AssemblyError, InputValidationError, SolverError
from .graph import Graph, NodeSet


def _within_hops(g: Graph, i: int, j: int, hops: int) -> bool:
    # memoized per graph: assembly asks the same node pairs every iteration
    cache = g.__dict__.get("_hop_cache")
    if cache is None:
        cache = {}
        object.__setattr__(g, "_hop_cache", cache)
    key = (i, j, hops)
    hit = cache.get(key)
    if hit is not None:
        return hit
    frontier = {i}
    seen = {i}
    result = False
    for _ in range(hops):
        nxt = set()
        for k in frontier:
            for nb in g.adjacency[k]:
                if nb == j:
                    result = True
                if nb not in seen:
                    seen.add(nb)
                    nxt.add(nb)
        if result:
            break
        frontier = nxt
    cache[key] = cache[(j, i, hops)] = result
    return result


def block_offsets(nodes: NodeSet, dims: Mapping[int, int]) -> dict[int, int]:
    offsets = {}
    pos = 0
    for i in nodes:
        offsets[i] = pos
        pos += dims[i]
    return offsets


def total_dim(nodes: NodeSet, dims: Mapping[int, int]) -> int:
    return sum(dims[i] for i in nodes)


@dataclass
class NodeBlockVector:
    """Stacked per-node dense blocks over a strictly ordered node set."""

    nodes: NodeSet
    dims: Mapping[int, int]
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (total_dim(self.nodes, self.dims),):
            raise InputValidationError("vector data does not match block dimension table")
        self._offsets = block_offsets(self.nodes, self.dims)

    @staticmethod
    def zeros(nodes: NodeSet, dims: Mapping[int, int]) -> "NodeBlockVector":
        return NodeBlockVector(nodes, dims, np.zeros(total_dim(nodes, dims)))

    def block(self, i: int) -> np.ndarray:
        off = self._offsets[i]
        return self.data[off : off + self.dims[i]]

    def set_block(self, i: int, value) -> None:
        self.block(i)[:] = value

    def restrict(self, nodes: NodeSet) -> "NodeBlockVector":
        if not nodes.issubset(self.nodes):
            raise InputValidationError("restriction target is not a subset")
        out = NodeBlockVector.zeros(nodes, self.dims)
        for i in nodes:
            out.set_block(i, self.block(i))
        return out

    def embed(self, nodes: NodeSet) -> "NodeBlockVector":
        """Re-embed into a superset node set, zero outside the current support."""
        if not self.nodes.issubset(nodes):
            raise InputValidationError("embedding target is not a superset")
        out = NodeBlockVector.zeros(nodes, self.dims)
        for i in self.nodes:
            out.set_block(i, self.block(i))
        return out

    def copy(self) -> "NodeBlockVector":
        return NodeBlockVector(self.nodes, self.dims, self.data.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass
class NodeBlockMatrix:
    """Block-sparse matrix keyed by (row node, col node).

    `band` (with `graph`) optionally enforces a banded structure: blocks with
    graph distance above `band` are rejected at assembly and asserted absent
    on read. Symmetric matrices store the (i, j) block with i <= j and return
    the transpose for i > j.
    """

    rows: NodeSet
    row_dims: Mapping[int, int]
    cols: NodeSet
    col_dims: Mapping[int, int]
    symmetric: bool = False
    graph: Graph | None = None
    band: int | None = None
    blocks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self._row_set = frozenset(self.rows)
        self._col_set = frozenset(self.cols)

    def _check_band(self, i: int, j: int) -> None:
        if self.band is not None and self.graph is not None and i != j:
            # depth-bounded BFS: only "within band" matters, not the distance
            if not _within_hops(self.graph, i, j, self.band):
                raise AssemblyError(
                    f"block ({i},{j}) violates band {self.band} structure"
                )

    def shape_of(self, i: int, j: int) -> tuple[int, int]:
        return (self.row_dims[i], self.col_dims[j])

    def set_block(self, i: int, j: int, value: np.ndarray) -> None:
        if i not in self._row_set or j not in self._col_set:
            raise InputValidationError(f"block index ({i},{j}) outside matrix index sets")
        value = np.asarray(value, dtype=float)
        if value.shape != self.shape_of(i, j):
            raise AssemblyError(
                f"block ({i},{j}) has shape {value.shape}, expected {self.shape_of(i, j)}"
            )
        self._check_band(i, j)
        if self.symmetric and i > j:
            i, j, value = j, i, value.T
        if np.any(value):
            self.blocks[(i, j)] = value
        else:
            self.blocks.pop((i, j), None)

    def add_block(self, i: int, j: int, value: np.ndarray) -> None:
        if self.symmetric and i > j:
            i, j, value = j, i, np.asarray(value).T
        current = self.blocks.get((i, j))
        if current is None:
            self.set_block(i, j, np.array(value, dtype=float))
        else:
            self.set_block(i, j, current + value)

    def get_block(self, i: int, j: int) -> np.ndarray:
        if i not in self._row_set or j not in self._col_set:
            raise InputValidationError(f"block index ({i},{j}) outside matrix index sets")
        if self.symmetric and i > j:
            return self.get_block(j, i).T
        value = self.blocks.get((i, j))
        if value is None:
            self._check_band(i, j)
            return np.zeros(self.shape_of(i, j))
        return value

    def restrict(self, rows: NodeSet, cols: NodeSet) -> "NodeBlockMatrix":
        if not rows.issubset(self.rows) or not cols.issubset(self.cols):
            raise InputValidationError("restriction target is not a subset")
        symmetric = self.symmetric and rows.nodes == cols.nodes
        out = NodeBlockMatrix(
            rows, self.row_dims, cols, self.col_dims,
            symmetric=symmetric, graph=self.graph, band=self.band,
        )
        row_set, col_set = frozenset(rows), frozenset(cols)
        for (i, j), value in sorted(self.blocks.items()):
            if i in row_set and j in col_set:
                out.set_block(i, j, value)
            if self.symmetric and i != j and j in row_set and i in col_set:
                out.set_block(j, i, value.T)
        return out

    def to_dense(self) -> np.ndarray:
        roff = block_offsets(self.rows, self.row_dims)
        coff = block_offsets(self.cols, self.col_dims)
        out = np.zeros((total_dim(self.rows, self.row_dims), total_dim(self.cols, self.col_dims)))
        for (i, j), value in self.blocks.items():
            out[roff[i] : roff[i] + value.shape[0], coff[j] : coff[j] + value.shape[1]] = value
            if self.symmetric and i != j:
                out[roff[j] : roff[j] + value.shape[1], coff[i] : coff[i] + value.shape[0]] = value.T
        return out

    def matvec(self, v: NodeBlockVector) -> NodeBlockVector:
        if v.nodes.nodes != self.cols.nodes:
            raise InputValidationError("matvec operand indexed by a different node set")
        out = NodeBlockVector.zeros(self.rows, self.row_dims)
        for (i, j), value in self.blocks.items():
            out.block(i)[:] += value @ v.block(j)
            if self.symmetric and i != j:
                out.block(j)[:] += value.T @ v.block(i)
        return out

    def rmatvec(self, v: NodeBlockVector) -> NodeBlockVector:
        """Transpose-matvec: returns A^T v over the column node set."""
        if v.nodes.nodes != self.rows.nodes:
            raise InputValidationError("rmatvec operand indexed by a different node set")
        if self.symmetric:
            return self.matvec(v)
        out = NodeBlockVector.zeros(self.cols, self.col_dims)
        for (i, j), value in self.blocks.items():
            out.block(j)[:] += value.T @ v.block(i)
        return out

    def dump_coordinate(self, path) -> None:
        """Debug dump: 'row-node col-node row-offset col-offset value' per entry."""
        with open(path, "w") as fh:
            for (i, j) in sorted(self.blocks):
                value = self.blocks[(i, j)]
                for a in range(value.shape[0]):
                    for b in range(value.shape[1]):
                        if value[a, b] != 0.0:
                            fh.write(f"{i} {j} {a} {b} {float(value[a, b])!r}\n")


def min_singular_value(mat: NodeBlockMatrix) -> float:
    """Smallest singular value via dense SVD (desk scale only)."""
    dense = mat.to_dense()
    if dense.size == 0:
        raise InputValidationError("empty matrix")
    return float(np.linalg.svd(dense, compute_uv=False)[-1])


def spectral_norm_estimate(mat: NodeBlockMatrix, iters: int = 100) -> float:
    """Power-iteration estimate of the 2-norm of a square symmetric matrix.

    Deterministic: the start vector comes from a fixed seed.
    """
    if mat.rows.nodes != mat.cols.nodes:
        raise InputValidationError("spectral norm estimate requires a square matrix")
    n = total_dim(mat.rows, mat.row_dims)
    if n == 0:
        return 0.0
    rng = np.random.default_rng(0x5EED)
    v = NodeBlockVector(mat.rows, mat.row_dims, rng.standard_normal(n))
    v.data /= np.linalg.norm(v.data)
    est = 0.0
    for _ in range(max(1, iters)):
        w = mat.matvec(v)
        est = np.linalg.norm(w.data)
        if est == 0.0:
            return 0.0
        v = NodeBlockVector(mat.rows, mat.row_dims, w.data / est)
    return float(est)


@dataclass
class KktSystem:
    """Assembled 2x2 symmetric-indefinite system [[H, G^T], [G, 0]].

    Carries the node sets and dimension tables needed to split solutions back
    into primal/dual block vectors.
    """

    hess: np.ndarray
    jac: np.ndarray
    primal_nodes: NodeSet
    primal_dims: Mapping[int, int]
    dual_nodes: NodeSet
    dual_dims: Mapping[int, int]

    @property
    def n(self) -> int:
        return self.hess.shape[0]

    @property
    def m(self) -> int:
        return self.jac.shape[0]

    def to_dense(self) -> np.ndarray:
        n, m = self.n, self.m
        out = np.zeros((n + m, n + m))
        out[:n, :n] = self.hess
        out[:n, n:] = self.jac.T
        out[n:, :n] = self.jac
        return out

    def factorize(self) -> "KktFactorization":
        return KktFactorization(self)


def kkt_assemble(hblock: NodeBlockMatrix, gblock: NodeBlockMatrix) -> KktSystem:
    """Build the KKT system from a symmetric Hessian and a constraint Jacobian."""
    if hblock.rows.nodes != hblock.cols.nodes or not hblock.symmetric:
        raise AssemblyError("Hessian block matrix must be square symmetric")
    if gblock.cols.nodes != hblock.cols.nodes:
        raise AssemblyError("Jacobian column node set must match the Hessian's")
    for i in gblock.cols:
        if gblock.col_dims[i] != hblock.col_dims[i]:
            raise AssemblyError(f"primal dimension mismatch at node {i}")
    return KktSystem(
        hess=hblock.to_dense(),
        jac=gblock.to_dense(),
        primal_nodes=hblock.cols,
        primal_dims=hblock.col_dims,
        dual_nodes=gblock.rows,
        dual_dims=gblock.row_dims,
    )


class KktFactorization:
    """Dense LDL^T factorization with inertia of a KKT system."""

    def __init__(self, system: KktSystem, zero_pivot_rtol: float = 1e-15):
        self.system = system
        dense = system.to_dense()
        self._scale = float(np.max(np.abs(dense))) if dense.size else 0.0
        lu, d, perm = scipy.linalg.ldl(dense, lower=True)
        self._ltri = lu[perm]
        self._d = d
        self._perm = perm
        self.inertia = _tridiagonal_inertia(d, zero_pivot_rtol * max(self._scale, 1.0))
        # sign-only count: the boundary-penalty term can push the condition
        # number past any scale-relative zero threshold, so regularity is
        # judged by pivot signs alone (exact zeros still count as singular)
        self.sign_inertia = _tridiagonal_inertia(d, 0.0)
        self.min_pivot = _min_pivot_magnitude(d)

    @property
    def is_singular(self) -> bool:
        return self.sign_inertia[2] > 0

    def require_regular(self) -> None:
        n, m = self.system.n, self.system.m
        if self.sign_inertia != (n, m, 0):
            raise SolverError(
                f"KKT factorization has inertia {self.sign_inertia}, expected ({n}, {m}, 0)",
                min_pivot=self.min_pivot,
                inertia=self.sign_inertia,
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.is_singular:
            raise SolverError(
                "singular KKT factorization",
                min_pivot=self.min_pivot,
                inertia=self.inertia,
            )
        perm = self._perm
        w = scipy.linalg.solve_triangular(self._ltri, rhs[perm], lower=True, unit_diagonal=True)
        v = _solve_tridiagonal(self._d, w)
        y = scipy.linalg.solve_triangular(self._ltri.T, v, lower=False, unit_diagonal=True)
        out = np.empty_like(y)
        out[perm] = y
        return out

    def solve_system(self, rhs: np.ndarray) -> tuple[NodeBlockVector, NodeBlockVector]:
        """Solve and split into (primal, dual) node-block vectors."""
        sys = self.system
        if rhs.shape != (sys.n + sys.m,):
            raise InputValidationError("rhs dimension mismatch")
        sol = self.solve(rhs)
        primal = NodeBlockVector(sys.primal_nodes, sys.primal_dims, sol[: sys.n].copy())
        dual = NodeBlockVector(sys.dual_nodes, sys.dual_dims, sol[sys.n :].copy())
        return primal, dual


def kkt_solve(fact: KktFactorization, rhs: np.ndarray):
    return fact.solve_system(rhs)


def _tridiagonal_inertia(d: np.ndarray, zero_tol: float) -> tuple[int, int, int]:
    n = d.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            det = a * c - b * b
            tr = a + c
            if abs(det) <= zero_tol * max(abs(tr), zero_tol):
                zero += 1
                if abs(tr) <= zero_tol:
                    zero += 1
                elif tr > 0:
                    pos += 1
                else:
                    neg += 1
            elif det < 0:
                pos += 1
                neg += 1
            elif tr > 0:
                pos += 2
            else:
                neg += 2
            i += 2
        else:
            v = d[i, i]
            if abs(v) <= zero_tol:
                zero += 1
            elif v > 0:
                pos += 1
            else:
                neg += 1
            i += 1
    return (pos, neg, zero)


def _min_pivot_magnitude(d: np.ndarray) -> float:
    n = d.shape[0]
    if n == 0:
        return 0.0
    smallest = np.inf
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            block = d[i : i + 2, i : i + 2]
            smallest = min(smallest, float(np.min(np.abs(np.linalg.eigvalsh(block)))))
            i += 2
        else:
            smallest = min(smallest, abs(float(d[i, i])))
            i += 1
    return smallest


def _solve_tridiagonal(d: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    if n == 0:
        return rhs.copy()
    if n == 1:
        return rhs / d[0, 0]
    bands = np.zeros((3, n))
    bands[0, 1:] = np.diagonal(d, 1)
    bands[1, :] = np.diagonal(d)
    bands[2, :-1] = np.diagonal(d, -1)
    return scipy.linalg.solve_banded((1, 1), bands, rhs)
