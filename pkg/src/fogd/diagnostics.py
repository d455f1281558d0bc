"""Measured regularity constants and structural checks of the decomposition.

Everything here is desk scale: dense SVDs, eigendecompositions, and full KKT
inverses, gated by a total-dimension cap. The checks are the falsifiable
counterparts of the method's assumptions: constraint-gradient regularity,
reduced-Hessian positivity, off-diagonal decay of the KKT inverse, direction
error shrinking with overlap, and the quantitative descent margin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg

from .blocks import NodeBlockVector, block_offsets
from .driver import directional_derivative
from .engine import Subproblem, exact_newton_direction, ogd_direction
from .errors import (
    DegenerateSubdomainError,
    CompositionError,
    InputValidationError,
    SolverError,
)
from .graph import NodeSet, build_decomposition
from .model import EvaluationSnapshot, GsNlpModel

DENSE_SIZE_CAP = 5000


@dataclass
class RegularityReport:
    gamma_g: float
    gamma_h: float
    norm_hess_mod: float
    norm_hess: float
    norm_jac: float
    mu_hat: float
    licq_holds: bool

    @property
    def max_norm(self) -> float:
        return max(self.norm_hess_mod, self.norm_hess, self.norm_jac)


@dataclass
class DecayCurve:
    points: list[tuple[float, float]]
    slope: float = math.nan
    r_squared: float = math.nan
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        if any(b >= a for a, b in zip(xs[1:], xs)):
            raise InputValidationError("curve abscissas must be strictly increasing")
        if any(p[1] < 0 for p in self.points):
            raise InputValidationError("curve values must be nonnegative")

    def values(self) -> list[float]:
        return [p[1] for p in self.points]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("abscissa,value\n")
            for a, v in self.points:
                fh.write(f"{a!r},{v!r}\n")

    def write_summary(self, path, extra: dict | None = None) -> None:
        payload = {
            "slope": None if math.isnan(self.slope) else self.slope,
            "r_squared": None if math.isnan(self.r_squared) else self.r_squared,
            "points": self.points,
            "skipped": self.skipped,
        }
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fit_loglinear(points, floor: float = 1e-14) -> tuple[float, float]:
    """Least-squares slope of log(value) vs abscissa; returns (slope, R^2)."""
    usable = [(a, v) for a, v in points if v > floor]
    if len(usable) < 2:
        return math.nan, math.nan
    xs = np.array([a for a, _ in usable])
    ys = np.log(np.array([v for _, v in usable]))
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def _check_cap(total: int, cap: int) -> None:
    if total > cap:
        raise InputValidationError(
            f"dense diagnostic refused: {total} dims exceeds cap {cap}"
        )


def regularity_report(snap: EvaluationSnapshot, cap: int = DENSE_SIZE_CAP) -> RegularityReport:
    """Measure the regularity constants of a snapshot via dense linear algebra."""
    model = snap.model
    _check_cap(model.total_primal + model.total_dual, cap)
    jac = snap.jac.to_dense()
    hess = snap.hess.to_dense()
    hess_mod = snap.hess_mod.to_dense()

    sv = np.linalg.svd(jac, compute_uv=False) if jac.size else np.array([])
    smin = float(sv[-1]) if sv.size else 0.0
    smax = float(sv[0]) if sv.size else 0.0
    licq = smin > 1e-12 * max(1.0, smax)
    gamma_g = smin**2

    if jac.size and licq:
        null_basis = scipy.linalg.null_space(jac)
    else:
        null_basis = np.eye(hess_mod.shape[0])
    if null_basis.shape[1] == 0:
        gamma_h = math.inf
    else:
        reduced = null_basis.T @ hess_mod @ null_basis
        gamma_h = float(np.linalg.eigvalsh(reduced)[0])

    norms = (
        float(np.linalg.norm(hess_mod, 2)),
        float(np.linalg.norm(hess, 2)),
        smax,
    )
    upsilon = max(norms)
    if gamma_g > 0 and gamma_h > 0 and math.isfinite(gamma_h):
        mu_hat = 4.0 * upsilon**2 / (gamma_g * gamma_h)
    else:
        mu_hat = math.inf
    return RegularityReport(gamma_g, gamma_h, norms[0], norms[1], norms[2], mu_hat, licq)


def kkt_inverse_oracle(hess: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """Closed-form KKT inverse built from a null-space basis of the Jacobian.

    Independent of any factorization: with Z an orthonormal null-space basis
    of G and the reduced Hessian Z^T H Z invertible, the blocks of the
    inverse of [[H, G^T], [G, 0]] have explicit expressions. Used to
    cross-check dense inversion.
    """
    n = hess.shape[0]
    m = jac.shape[0]
    if m == 0:
        return np.linalg.inv(hess)
    z = scipy.linalg.null_space(jac)
    ggt_inv = np.linalg.inv(jac @ jac.T)
    if z.shape[1] == 0:
        proj = np.zeros((n, n))
    else:
        reduced_inv = np.linalg.inv(z.T @ hess @ z)
        proj = z @ reduced_inv @ z.T
    b1 = proj
    b2 = ggt_inv @ jac @ (np.eye(n) - hess @ proj)
    b3 = ggt_inv @ jac @ (hess @ proj @ hess - hess) @ jac.T @ ggt_inv
    return np.block([[b1, b2.T], [b2, b3]])


def kkt_inverse_decay(
    sp: Subproblem, cap: int = DENSE_SIZE_CAP, oracle_tol: float = 1e-8
) -> DecayCurve:
    """Max KKT-inverse block norm per graph-distance bin for one subproblem.

    The dense inverse is cross-checked against the null-space closed form
    before binning; disagreement raises a solver error.
    """
    system = sp.system
    total = system.n + system.m
    _check_cap(total, cap)
    dense = system.to_dense()
    try:
        inv = np.linalg.inv(dense)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"subproblem {sp.index} KKT matrix is singular") from exc
    oracle = kkt_inverse_oracle(system.hess, system.jac)
    scale = max(1.0, float(np.linalg.norm(inv, 2)))
    gap = float(np.linalg.norm(inv - oracle, 2))
    if gap > oracle_tol * scale:
        raise SolverError(
            f"dense KKT inverse disagrees with the null-space closed form "
            f"(relative gap {gap / scale:.3e})"
        )

    g = system.primal_nodes.graph
    primal = list(system.primal_nodes)
    dual = list(system.dual_nodes)
    poff = block_offsets(system.primal_nodes, system.primal_dims)
    doff = block_offsets(system.dual_nodes, system.dual_dims)

    # hop distances between all relevant node pairs, one BFS per node
    from collections import deque

    def bfs(src: int) -> dict[int, int]:
        dist = {src: 0}
        q = deque([src])
        while q:
            i = q.popleft()
            for j in g.adjacency[i]:
                if j not in dist:
                    dist[j] = dist[i] + 1
                    q.append(j)
        return dist

    dists = {i: bfs(i) for i in set(primal) | set(dual)}

    def spans():
        for i in primal:
            yield i, poff[i], system.primal_dims[i], 0
        for i in dual:
            yield i, doff[i], system.dual_dims[i], system.n

    bins: dict[int, float] = {}
    entries = list(spans())
    for i, off_i, dim_i, base_i in entries:
        for j, off_j, dim_j, base_j in entries:
            if dim_i == 0 or dim_j == 0:
                continue
            d = dists[i].get(j)
            if d is None:
                continue
            block = inv[base_i + off_i : base_i + off_i + dim_i,
                        base_j + off_j : base_j + off_j + dim_j]
            norm = float(np.linalg.norm(block, 2))
            bins[d] = max(bins.get(d, 0.0), norm)

    points = sorted(bins.items())
    slope, r2 = _fit_loglinear(points)
    return DecayCurve([(float(a), v) for a, v in points], slope, r2)


def error_vs_overlap(
    model: GsNlpModel,
    parts: list[NodeSet],
    x: NodeBlockVector,
    lam: NodeBlockVector,
    mu: float,
    b_list: list[int],
    hessian_mode: str = "adaptive",
) -> DecayCurve:
    """Composed-direction error against the exact direction for each overlap."""
    snap = model.evaluate(x, lam, hessian_mode=hessian_mode)
    dx, dlam = exact_newton_direction(snap)
    exact = np.concatenate([dx.data, dlam.data])
    points = []
    skipped = []
    for b in sorted(set(b_list)):
        try:
            dec = build_decomposition(model.graph, parts, b)
            ox, olam = ogd_direction(snap, dec, mu)
        except (DegenerateSubdomainError, CompositionError) as exc:
            skipped.append({"b": b, "reason": str(exc)})
            continue
        err = float(np.linalg.norm(np.concatenate([ox.data, olam.data]) - exact))
        points.append((float(b), err))
    slope, r2 = _fit_loglinear(points)
    return DecayCurve(points, slope, r2, skipped)


@dataclass
class DescentMargin:
    directional_derivative: float
    bound: float
    slack: float
    kkt_residual: float
    exact_dir_norm: float


def descent_margin(
    snap: EvaluationSnapshot,
    direction: tuple[NodeBlockVector, NodeBlockVector],
    exact_direction: tuple[NodeBlockVector, NodeBlockVector],
    eta1: float,
    eta2: float,
    gamma_g: float,
) -> DescentMargin:
    """Quantitative descent check: D against the theoretical upper bound.

    The bound uses the exact direction's norm and the measured constraint
    regularity constant; slack <= 0 means the guarantee held.
    """
    d = directional_derivative(snap, direction, eta1, eta2)
    res = snap.kkt_residual()
    ex, el = exact_direction
    exact_norm = math.sqrt(ex.norm() ** 2 + el.norm() ** 2)
    bound = -(eta2 / 8.0) * res**2 - (eta2 * gamma_g / 16.0) * exact_norm**2
    return DescentMargin(d, bound, d - bound, res, exact_norm)


def write_report_json(report: RegularityReport, path) -> None:
    payload = asdict(report)
    payload = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
               for k, v in payload.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
