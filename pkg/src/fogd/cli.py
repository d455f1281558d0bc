"""Command-line experiment runner.

Builds a problem, sweeps (seed, overlap) pairs through the solver, and emits
one trace CSV + JSON metadata file per run plus a summary CSV. A diagnostics
mode measures regularity constants and decay curves instead of running the
solver. All outputs embed a hash of the fully resolved experiment spec so
mismatched artifact sets are detectable.

Exit codes: 0 all runs converged, 1 invalid spec or setup failure, 2 at
least one run failed to converge (or diagnostics found LICQ violated).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .diagnostics import (
    DENSE_SIZE_CAP,
    descent_margin,
    error_vs_overlap,
    kkt_inverse_decay,
    regularity_report,
    write_report_json,
)
from .driver import FogdConfig, exact_sqp_reference, run_fogd, estimate_linear_rate
from .engine import assemble_subproblem, exact_newton_direction, ogd_direction
from .errors import FogdError, InputValidationError, InsufficientDataError
from .graph import NodeSet, build_decomposition, load_edge_list, load_partition
from .model import GsNlpModel, toy_chain_model, toy_graph_model
from .pde import PdeConfig, build_pde_model

SUMMARY_HEADER = "seed,b,converged,iterations,final_kkt_residual,rho_hat"


@dataclass
class ExperimentSpec:
    problem: str = "pde"
    rows: int = 40
    cols: int = 40
    strips: int = 5
    b_list: list[int] = field(default_factory=lambda: [1])
    eta1: float = 5.0
    eta2: float = 0.1
    beta: float = 0.1
    mu: float = 1.0
    tol: float = 1e-6
    max_iters: int = 500
    seeds: list[int] = field(default_factory=lambda: [0])
    init: str = "uniform(-100,100)"
    direction: str = "ogd"
    hessian: str = "adaptive"
    reference: str = "none"
    out: str = "fogd-out"
    diagnostics: bool = False
    workers: int = 1
    partition_file: str | None = None
    tail_fraction: float = 0.5

    def spec_hash(self) -> str:
        # the output directory is where results land, not what they are:
        # identical experiments into different directories share a hash
        payload = {k: v for k, v in asdict(self).items() if k != "out"}
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _parse_init(text: str):
    """Init spec: uniform(lo,hi), constant(c1,c2,...,cdual), or file:PATH."""
    text = text.strip()
    m = re.fullmatch(r"uniform\(\s*([^,]+)\s*,\s*([^)]+)\s*\)", text)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        if not lo < hi:
            raise InputValidationError("uniform init needs lo < hi")
        return ("uniform", lo, hi)
    m = re.fullmatch(r"constant\(([^)]*)\)", text)
    if m:
        vals = [float(v) for v in m.group(1).split(",")]
        if len(vals) < 2:
            raise InputValidationError("constant init needs primal value(s) and a dual value")
        return ("constant", vals)
    if text.startswith("file:"):
        return ("file", text[5:])
    raise InputValidationError(f"unrecognized init spec {text!r}")


def counter_uniform_init(model: GsNlpModel, seed: int, lo: float, hi: float):
    """Uniform init with one counter-keyed stream per (seed, node, component).

    Independent of iteration order: each scalar has its own generator keyed
    by its coordinates, dual components continuing the counter after the
    node's primal components.
    """
    x = model.zeros_primal()
    lam = model.zeros_dual()
    for i in range(model.graph.node_count):
        r = model.primal_dims[i]
        xb = x.block(i)
        for comp in range(r):
            xb[comp] = np.random.default_rng([seed, i, comp]).uniform(lo, hi)
        lb = lam.block(i)
        for comp in range(model.dual_dims[i]):
            lb[comp] = np.random.default_rng([seed, i, r + comp]).uniform(lo, hi)
    return x, lam


def build_init(model: GsNlpModel, spec: ExperimentSpec, seed: int):
    kind = _parse_init(spec.init)
    if kind[0] == "uniform":
        return counter_uniform_init(model, seed, kind[1], kind[2])
    if kind[0] == "constant":
        vals = kind[1]
        primal_vals, dual_val = vals[:-1], vals[-1]
        x = model.zeros_primal()
        lam = model.zeros_dual()
        for i in range(model.graph.node_count):
            xb = x.block(i)
            for comp in range(model.primal_dims[i]):
                xb[comp] = primal_vals[min(comp, len(primal_vals) - 1)]
            lam.block(i)[:] = dual_val
        return x, lam
    data = np.load(kind[1])
    x = model.zeros_primal()
    lam = model.zeros_dual()
    x.data[:] = data["x"]
    lam.data[:] = data["lam"]
    return x, lam


def build_problem(spec: ExperimentSpec):
    """Returns (model, partition parts)."""
    if spec.problem == "pde":
        cfg = PdeConfig(rows=spec.rows, cols=spec.cols, strips=spec.strips)
        model, _, parts = build_pde_model(cfg)
        return model, parts
    if spec.problem == "toy-chain":
        model = toy_chain_model(spec.rows)
        n = spec.rows
        strips = spec.strips
        if not 1 <= strips <= n:
            raise InputValidationError("strip count must be in 1..chain length")
        base, extra = divmod(n, strips)
        parts, start = [], 0
        for s in range(strips):
            width = base + (1 if s < extra else 0)
            parts.append(NodeSet.of(model.graph, range(start, start + width)))
            start += width
        return model, parts
    path = Path(spec.problem)
    if path.exists():
        g = load_edge_list(path)
        if spec.partition_file is None:
            raise InputValidationError("edge-list problems need a partition file")
        return toy_graph_model(g), load_partition(g, spec.partition_file)
    raise InputValidationError(f"unknown problem {spec.problem!r}")


def _append_hash_line(path: Path, spec_hash: str) -> None:
    with open(path, "a") as fh:
        fh.write(f"# spec_hash={spec_hash}\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return ""
    return repr(float(v))


def run_experiment(spec: ExperimentSpec) -> int:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    spec_hash = spec.spec_hash()
    model, parts = build_problem(spec)
    cfg_common = dict(
        eta1=spec.eta1, eta2=spec.eta2, beta=spec.beta, mu=spec.mu,
        kkt_tolerance=spec.tol, max_iters=spec.max_iters,
        hessian_mode=spec.hessian, workers=spec.workers,
    )

    rows = []
    all_converged = True
    b_values = [0] if spec.direction == "exact" else sorted(set(spec.b_list))
    for seed in spec.seeds:
        x0, lam0 = build_init(model, spec, seed)
        reference = None
        if spec.reference == "exact-sqp":
            ref_cfg = FogdConfig(direction_mode="exact", **cfg_common)
            ref = exact_sqp_reference(model, x0, lam0, tol=1e-10, config=ref_cfg)
            if not ref.converged:
                raise InputValidationError(
                    f"reference run for seed {seed} did not converge"
                )
            reference = (ref.x, ref.lam)
        for b in b_values:
            if spec.direction == "exact":
                cfg = FogdConfig(direction_mode="exact", seed=seed, **cfg_common)
                dec = None
                tag = f"s{seed}_exact"
            else:
                cfg = FogdConfig(direction_mode="ogd", overlap_b=b, seed=seed, **cfg_common)
                dec = build_decomposition(model.graph, parts, b)
                tag = f"s{seed}_b{b}"
            result = run_fogd(model, dec, cfg, x0, lam0, reference=reference)
            all_converged &= result.converged
            result.trace.metadata["spec_hash"] = spec_hash
            result.trace.metadata["spec"] = asdict(spec)
            result.trace.metadata["seed"] = seed
            result.trace.metadata["b"] = b
            csv_path = out / f"run_{tag}.csv"
            result.trace.to_csv(csv_path)
            _append_hash_line(csv_path, spec_hash)
            result.trace.write_sidecar(out / f"run_{tag}.json")
            rho = math.nan
            if reference is not None:
                try:
                    rho = estimate_linear_rate(result.trace, spec.tail_fraction)
                except InsufficientDataError:
                    pass
            rows.append((seed, b, result.converged, result.iterations,
                         result.kkt_residual, rho))

    summary = out / "summary.csv"
    with open(summary, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for seed, b, conv, iters, res, rho in rows:
            fh.write(f"{seed},{b},{int(conv)},{iters},{_fmt(res)},{_fmt(rho)}\n")
    _append_hash_line(summary, spec_hash)
    return 0 if all_converged else 2


def run_diagnostics(spec: ExperimentSpec) -> int:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    spec_hash = spec.spec_hash()
    model, parts = build_problem(spec)
    if model.total_primal + model.total_dual > DENSE_SIZE_CAP:
        print(f"error: problem has {model.total_primal + model.total_dual} dims, "
              f"above the dense diagnostics cap {DENSE_SIZE_CAP}; "
              "use a smaller instance", file=sys.stderr)
        return 1
    seed = spec.seeds[0]
    x0, lam0 = build_init(model, spec, seed)
    snap = model.evaluate(x0, lam0, hessian_mode=spec.hessian)

    report = regularity_report(snap)
    write_report_json(report, out / "regularity.json")
    _write_json(out / "regularity.meta.json",
                {"spec_hash": spec_hash, "spec": asdict(spec)})

    b_list = sorted(set(spec.b_list)) or [1]
    curve = error_vs_overlap(model, parts, x0, lam0, spec.mu, b_list,
                             hessian_mode=spec.hessian)
    curve.to_csv(out / "error_vs_b.csv")
    _append_hash_line(out / "error_vs_b.csv", spec_hash)
    curve.write_summary(out / "error_vs_b.json", {"spec_hash": spec_hash})

    dec = None
    for b in b_list:
        try:
            dec = build_decomposition(model.graph, parts, b)
            break
        except FogdError:
            continue
    if dec is not None:
        sp = assemble_subproblem(snap, dec, 0, spec.mu)
        if sp.system.n + sp.system.m <= DENSE_SIZE_CAP:
            decay = kkt_inverse_decay(sp)
            decay.to_csv(out / "kkt_decay.csv")
            _append_hash_line(out / "kkt_decay.csv", spec_hash)
            decay.write_summary(out / "kkt_decay.json", {"spec_hash": spec_hash})
        if report.licq_holds:
            exact = exact_newton_direction(snap)
            approx = ogd_direction(snap, dec, spec.mu, workers=spec.workers)
            margin = descent_margin(snap, approx, exact, spec.eta1, spec.eta2,
                                    report.gamma_g)
            _write_json(out / "descent.json",
                        {**asdict(margin), "spec_hash": spec_hash})
    return 0 if report.licq_holds else 2


def _parse_config_file(path: str) -> dict:
    """Flat key-value config: 'key = value' per line, '#' comments."""
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            else:
                key, _, val = line.partition(" ")
            key, val = key.strip().replace("-", "_"), val.strip()
            if not key or not val:
                raise InputValidationError(f"bad config line: {raw.rstrip()!r}")
            values[key] = val
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fogd",
        description="Parallel SQP with overlapping graph decomposition: "
                    "experiment and diagnostics runner.",
    )
    p.add_argument("--config", help="flat key-value config file; flags override it")
    p.add_argument("--problem", help="pde | toy-chain | edge-list file path")
    p.add_argument("--rows", type=int, help="grid rows (chain length for toy-chain)")
    p.add_argument("--cols", type=int, help="grid columns")
    p.add_argument("--strips", type=int, help="number of partition strips")
    p.add_argument("--b", type=int, action="append", dest="b_list",
                   help="overlap size (repeatable)")
    p.add_argument("--eta1", type=float, help="constraint penalty weight")
    p.add_argument("--eta2", type=float, help="gradient penalty weight")
    p.add_argument("--beta", type=float, help="Armijo parameter in (0, 0.5)")
    p.add_argument("--mu", type=float, help="boundary penalty weight")
    p.add_argument("--tol", type=float, help="KKT residual tolerance")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--seed", type=int, action="append", dest="seeds",
                   help="RNG seed (repeatable)")
    p.add_argument("--init", help="uniform(lo,hi) | constant(c1,...,cdual) | file:PATH")
    p.add_argument("--direction", choices=["ogd", "exact"])
    p.add_argument("--hessian", choices=["none", "levenberg", "adaptive"])
    p.add_argument("--reference", choices=["none", "exact-sqp"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--diagnostics", action="store_true", default=None,
                   help="run diagnostics instead of the solver")
    p.add_argument("--workers", type=int, help="subproblem solver threads")
    p.add_argument("--partition-file", dest="partition_file",
                   help="partition file for edge-list problems")
    p.add_argument("--tail-fraction", type=float, dest="tail_fraction",
                   help="trace fraction used for rate estimation")
    return p


_LIST_KEYS = {"b_list": ("b",), "seeds": ("seed",)}


def build_spec(argv) -> ExperimentSpec:
    parser = _build_parser()
    args = parser.parse_args(argv)
    values: dict = {}
    if args.config:
        raw = _parse_config_file(args.config)
        for key, val in raw.items():
            target = key
            for canonical, aliases in _LIST_KEYS.items():
                if key in aliases or key == canonical:
                    target = canonical
            if target not in ExperimentSpec.__dataclass_fields__:
                raise InputValidationError(f"unknown config key {key!r}")
            field_type = ExperimentSpec.__dataclass_fields__[target].type
            if target in _LIST_KEYS:
                values[target] = [int(v) for v in val.replace(",", " ").split()]
            elif field_type == "bool":
                values[target] = val.lower() in ("1", "true", "yes")
            elif field_type == "int":
                values[target] = int(val)
            elif field_type == "float":
                values[target] = float(val)
            else:
                values[target] = val
    for key in ExperimentSpec.__dataclass_fields__:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            values[key] = flag_val
    return ExperimentSpec(**values)


def main(argv=None) -> int:
    try:
        spec = build_spec(argv)
        if spec.diagnostics:
            return run_diagnostics(spec)
        return run_experiment(spec)
    except (FogdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
