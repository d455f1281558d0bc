"""SQP driver: merit function, Armijo line search, main iteration loop.

The merit is an exact augmented Lagrangian: the Lagrangian plus quadratic
penalties on the constraint residual and on the Lagrangian gradient itself.
Its gradient involves the true Hessian, so descent directions for it exist
even far from a solution, and near a regular solution the unit step is
accepted.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .blocks import NodeBlockVector
from .engine import exact_newton_direction, ogd_direction
from .errors import (
    InputValidationError,
    InsufficientDataError,
    LineSearchError,
    ModificationError,
    NonDescentError,
    SolverError,
)
from .graph import OverlapDecomposition
from .model import EvaluationSnapshot, GsNlpModel

# below this, nodewise errors are floating-point noise and excluded from
# rate estimation
PSI_FLOOR = 1e-13

TRACE_HEADER = "iter,kkt_residual,merit,alpha,backtracks,dir_norm,dir_deriv,sigma,psi,wall_ms"


@dataclass
class FogdConfig:
    eta1: float = 5.0
    eta2: float = 0.1
    beta: float = 0.1
    mu: float = 1.0
    overlap_b: int = 1
    backtrack_factor: float = 0.9
    alpha_init: float = 1.0
    max_iters: int = 500
    kkt_tolerance: float = 1e-6
    hessian_mode: str = "adaptive"
    direction_mode: str = "ogd"
    max_backtracks: int = 200
    sigma_min: float = 1e-8
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.eta1 < 0 or self.eta2 < 0:
            raise InputValidationError("merit penalties must be nonnegative")
        if not 0.0 < self.beta < 0.5:
            raise InputValidationError("beta must lie in (0, 0.5)")
        if self.mu <= 0:
            raise InputValidationError("mu must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise InputValidationError("backtrack factor must lie in (0, 1)")
        if self.alpha_init <= 0:
            raise InputValidationError("initial stepsize must be positive")
        if self.direction_mode not in ("ogd", "exact"):
            raise InputValidationError(f"unknown direction mode {self.direction_mode!r}")
        if self.overlap_b < 0:
            raise InputValidationError("overlap b must be nonnegative")
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise InputValidationError("iteration limits must be positive")


@dataclass
class TraceRow:
    iteration: int
    kkt_residual: float
    merit: float
    alpha: float = math.nan
    backtracks: int = -1
    dir_norm: float = math.nan
    dir_deriv: float = math.nan
    sigma: float = math.nan
    psi: float = math.nan
    wall_ms: float = math.nan


@dataclass
class IterateTrace:
    rows: list[TraceRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def kkt_residuals(self) -> list[float]:
        return [r.kkt_residual for r in self.rows]

    def psi_values(self) -> list[float]:
        return [r.psi for r in self.rows]

    def to_csv(self, path) -> None:
        def cell(v):
            if isinstance(v, float) and math.isnan(v):
                return ""
            if isinstance(v, int) and v < 0:
                return ""
            return repr(v) if isinstance(v, float) else str(v)

        with open(path, "w") as fh:
            fh.write(TRACE_HEADER + "\n")
            for r in self.rows:
                fh.write(",".join(cell(v) for v in (
                    r.iteration, r.kkt_residual, r.merit, r.alpha, r.backtracks,
                    r.dir_norm, r.dir_deriv, r.sigma, r.psi, r.wall_ms,
                )) + "\n")

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class FogdResult:
    x: NodeBlockVector
    lam: NodeBlockVector
    trace: IterateTrace
    converged: bool
    iterations: int
    kkt_residual: float


def merit_value(snap: EvaluationSnapshot, eta1: float, eta2: float) -> float:
    return (
        snap.lagrangian
        + 0.5 * eta1 * snap.c.norm() ** 2
        + 0.5 * eta2 * snap.grad_l.norm() ** 2
    )


def merit_gradient(
    snap: EvaluationSnapshot, eta1: float, eta2: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the merit at the snapshot point, using the exact Hessian."""
    g = snap.grad_l.data
    c = snap.c.data
    h_g = snap.hess.matvec(snap.grad_l).data
    jac_g = snap.jac.matvec(snap.grad_l).data
    grad_x = g + eta2 * h_g + eta1 * snap.jac.rmatvec(snap.c).data
    grad_lam = eta2 * jac_g + c
    return grad_x, grad_lam


def directional_derivative(
    snap: EvaluationSnapshot,
    direction: tuple[NodeBlockVector, NodeBlockVector],
    eta1: float,
    eta2: float,
) -> float:
    gx, gl = merit_gradient(snap, eta1, eta2)
    dx, dlam = direction
    return float(gx @ dx.data + gl @ dlam.data)


def armijo_linesearch(
    snap: EvaluationSnapshot,
    direction: tuple[NodeBlockVector, NodeBlockVector],
    config: FogdConfig,
    dir_deriv: float | None = None,
) -> tuple[float, NodeBlockVector, NodeBlockVector, int]:
    """Backtrack from alpha_init until the Armijo decrease condition holds.

    Trial merit values only need constraint and gradient evaluations, so
    trial points are evaluated without Hessian assembly.
    """
    model = snap.model
    dx, dlam = direction
    d = dir_deriv if dir_deriv is not None else directional_derivative(
        snap, direction, config.eta1, config.eta2
    )
    if not d < 0:
        raise NonDescentError(
            f"directional derivative {d:.6e} is not negative "
            f"(eta1={config.eta1}, eta2={config.eta2}, mu={config.mu}, "
            f"b={config.overlap_b})",
            directional_derivative=d,
        )
    base = merit_value(snap, config.eta1, config.eta2)
    alpha = config.alpha_init
    for k in range(config.max_backtracks + 1):
        x_trial = snap.x.copy()
        lam_trial = snap.lam.copy()
        x_trial.data += alpha * dx.data
        lam_trial.data += alpha * dlam.data
        trial = model.evaluate(x_trial, lam_trial, level="merit")
        if merit_value(trial, config.eta1, config.eta2) <= base + config.beta * alpha * d:
            return alpha, x_trial, lam_trial, k
        alpha *= config.backtrack_factor
    raise LineSearchError(
        f"no Armijo step after {config.max_backtracks} backtracks "
        f"(D={d:.3e}, merit={base:.6e})"
    )


def nodewise_error(
    x: NodeBlockVector,
    lam: NodeBlockVector,
    ref_x: NodeBlockVector,
    ref_lam: NodeBlockVector,
) -> float:
    """Largest per-node primal-dual distance to the reference point."""
    worst = 0.0
    for k in x.nodes:
        ex = x.block(k) - ref_x.block(k)
        el = lam.block(k) - ref_lam.block(k)
        worst = max(worst, math.sqrt(float(ex @ ex) + float(el @ el)))
    return worst


def _shift_candidates(snap, config, prev_sigma: float) -> list[float]:
    """Candidate diagonal shifts, most promising first.

    The merit descends for shifts in a window that tracks the most negative
    Hessian eigenvalue, with the strongest descent just above the value that
    convexifies the reduced Hessian. Candidates fan out geometrically around
    that estimate (and around the previous accepted shift), followed by a
    coarse global sweep as a backstop.
    """
    try:
        import scipy.linalg

        lam_min = float(scipy.linalg.eigvalsh(snap.hess.to_dense()).min())
    except Exception:
        lam_min = 0.0
    est = max(config.sigma_min, -lam_min)
    out: list[float] = []
    if prev_sigma > 0.0:
        out.append(prev_sigma)
    for f in (1.05, 1.4, 0.75, 2.0, 0.5, 3.0, 0.3, 5.0, 0.15, 10.0, 0.05, 0.01):
        out.append(est * f)
    hi = max(est, 1.0)
    out.extend(float(s) for s in np.geomspace(1e-6 * hi, 40.0 * hi, 24))
    seen: set[float] = set()
    uniq = []
    for s in out:
        if s > 0.0 and s not in seen:
            seen.add(s)
            uniq.append(s)
    return uniq


def compute_direction(
    snap: EvaluationSnapshot,
    dec: OverlapDecomposition | None,
    config: FogdConfig,
    prev_sigma: float = 0.0,
):
    """Search direction with descent-driven adaptive Hessian shifting.

    In adaptive mode the unshifted Hessian is tried first and kept whenever
    it already gives sufficient merit descent, so the shift vanishes near a
    regular solution. Otherwise candidate shifts are probed (see
    _shift_candidates) and the first one whose direction satisfies the
    sufficient-descent test D <= -(eta2/8) ||r||^2 is accepted; if none does,
    the strongest strictly descending candidate is used.

    Returns (snapshot actually used, direction, directional derivative).
    """
    adaptive = config.hessian_mode == "adaptive"

    def probe(trial):
        if config.direction_mode == "exact":
            direction = exact_newton_direction(trial)
        else:
            direction = ogd_direction(trial, dec, config.mu, workers=config.workers)
        d = directional_derivative(trial, direction, config.eta1, config.eta2)
        return trial, direction, d

    if not adaptive:
        return probe(snap)

    res = snap.kkt_residual()
    enough = -(config.eta2 / 8.0) * res * res
    last_error: SolverError | None = None
    best = None
    try:
        best = probe(snap)
        if best[2] <= enough:
            return best
    except SolverError as exc:
        last_error = exc
    for sigma in _shift_candidates(snap, config, prev_sigma):
        try:
            cand = probe(snap.with_shift(sigma))
        except SolverError as exc:
            last_error = exc
            continue
        if cand[2] <= enough:
            return cand
        if cand[2] < 0 and (best is None or cand[2] < best[2]):
            best = cand
    if best is not None and best[2] < 0:
        return best
    raise ModificationError(
        "no descent direction among candidate Hessian shifts"
        + (f" (last solver failure: {last_error})" if last_error else "")
    )


def run_fogd(
    model: GsNlpModel,
    dec: OverlapDecomposition | None,
    config: FogdConfig,
    x0: NodeBlockVector,
    lam0: NodeBlockVector,
    reference: tuple[NodeBlockVector, NodeBlockVector] | None = None,
) -> FogdResult:
    if config.direction_mode == "ogd" and dec is None:
        raise InputValidationError("ogd direction mode requires a decomposition")
    trace = IterateTrace()
    trace.metadata = {
        "config": asdict(config),
        "nodes": model.graph.node_count,
        "edges": model.graph.edge_count,
        "primal_dim": model.total_primal,
        "dual_dim": model.total_dual,
        "subdomains": dec.num_subdomains if dec is not None else 0,
        "reference": reference is not None,
    }
    x, lam = x0.copy(), lam0.copy()
    converged = False
    iteration = 0
    prev_sigma = 0.0
    eval_mode = "none" if config.hessian_mode == "adaptive" else config.hessian_mode
    for iteration in range(config.max_iters + 1):
        t0 = time.perf_counter()
        snap = model.evaluate(x, lam, hessian_mode=eval_mode, sigma_min=config.sigma_min)
        row = TraceRow(
            iteration=iteration,
            kkt_residual=snap.kkt_residual(),
            merit=merit_value(snap, config.eta1, config.eta2),
            sigma=snap.sigma,
        )
        if reference is not None:
            row.psi = nodewise_error(x, lam, reference[0], reference[1])
        if row.kkt_residual <= config.kkt_tolerance:
            row.wall_ms = 1e3 * (time.perf_counter() - t0)
            trace.append(row)
            converged = True
            break
        if iteration == config.max_iters:
            row.wall_ms = 1e3 * (time.perf_counter() - t0)
            trace.append(row)
            break
        try:
            used, direction, d = compute_direction(snap, dec, config, prev_sigma)
            row.sigma = prev_sigma = used.sigma
            alpha, x, lam, backtracks = armijo_linesearch(used, direction, config, d)
        except Exception as exc:
            exc.args = (f"iteration {iteration}: {exc.args[0]}",) + exc.args[1:]
            raise
        row.alpha = alpha
        row.backtracks = backtracks
        row.dir_norm = math.sqrt(direction[0].norm() ** 2 + direction[1].norm() ** 2)
        row.dir_deriv = d
        row.wall_ms = 1e3 * (time.perf_counter() - t0)
        trace.append(row)
    trace.metadata["converged"] = converged
    trace.metadata["iterations"] = iteration
    trace.metadata["final_kkt_residual"] = trace.rows[-1].kkt_residual
    return FogdResult(x, lam, trace, converged, iteration, trace.rows[-1].kkt_residual)


def exact_sqp_reference(
    model: GsNlpModel,
    x0: NodeBlockVector,
    lam0: NodeBlockVector,
    tol: float = 1e-10,
    config: FogdConfig | None = None,
    switch_tol: float = 1e-5,
    max_polish: int = 50,
) -> FogdResult:
    """High-accuracy reference solution by exact SQP.

    Runs the merit-globalized solver down to switch_tol, then polishes with
    plain unit Newton steps to tol. The polish phase avoids the line search
    because near the solution merit decreases drop below the rounding noise
    of the merit value itself, which stalls backtracking long before the
    KKT residual reaches tight tolerances.
    """
    config = config or FogdConfig()
    coarse = FogdConfig(
        **{**asdict(config), "direction_mode": "exact",
           "kkt_tolerance": max(tol, switch_tol)},
    )
    result = run_fogd(model, None, coarse, x0, lam0)
    if not result.converged:
        return result
    x, lam = result.x, result.lam
    res = result.kkt_residual
    for _ in range(max_polish):
        if res <= tol:
            return FogdResult(x, lam, result.trace, True, result.iterations, res)
        snap = model.evaluate(x, lam, hessian_mode="none")
        dx, dlam = exact_newton_direction(snap)
        x_new = x.copy()
        lam_new = lam.copy()
        x_new.data += dx.data
        lam_new.data += dlam.data
        new_res = model.evaluate(x_new, lam_new, level="merit").kkt_residual()
        if not new_res < res:
            # stalled at the attainable floating-point floor
            if res <= 1e4 * tol:
                return FogdResult(x, lam, result.trace, True, result.iterations, res)
            raise SolverError(
                f"Newton polish diverged: residual {res:.3e} -> {new_res:.3e}"
            )
        x, lam, res = x_new, lam_new, new_res
    raise SolverError(f"Newton polish did not reach {tol:g} (residual {res:.3e})")


def estimate_linear_rate(trace: IterateTrace, tail_fraction: float = 0.5) -> float:
    """Geometric-mean contraction ratio of the nodewise error over the tail."""
    if not 0.0 < tail_fraction <= 1.0:
        raise InputValidationError("tail fraction must lie in (0, 1]")
    psis = [p for p in trace.psi_values() if not math.isnan(p)]
    if not psis:
        raise InsufficientDataError("trace has no nodewise-error records")
    start = int(math.floor(len(psis) * (1.0 - tail_fraction)))
    tail = [p for p in psis[start:] if p > PSI_FLOOR]
    if len(tail) < 3:
        raise InsufficientDataError(
            f"only {len(tail)} usable tail points (need at least 3)"
        )
    return (tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1))
