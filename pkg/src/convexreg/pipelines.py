"""Pipelines behind the command line: each returns a summary dict and writes its tables."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ExperimentConfig

OUTPUT_ROOT_ENV = "CONVEXREG_OUTPUT_ROOT"
DEPENDS_ON_SOLVE = ("differentiability", "loglip")


@dataclass
class PipelineResult:
    name: str
    passed: bool
    verdict_bearing: bool
    summary: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class RunManifest:
    config: dict
    versions: dict
    wall_clock: dict
    verdicts: dict
    files: list[str]
    output_dir: str

    @property
    def exit_status(self) -> int:
        return 0 if all(v["passed"] for v in self.verdicts.values()) else 1

    def to_dict(self) -> dict:
        return {"config": self.config, "versions": self.versions, "wall_clock": self.wall_clock,
                "verdicts": self.verdicts, "files": self.files,
                "exit_status": self.exit_status}


def jsonable(obj):
    """Plain JSON types; non-finite numbers become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if hasattr(obj, "__dataclass_fields__"):
        return jsonable({k: getattr(obj, k) for k in obj.__dataclass_fields__})
    return str(obj)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# individual pipelines


def boundary_data(cfg: ExperimentConfig, g):
    choice = cfg.boundary
    if choice == "auto":
        choice = "exact" if hasattr(g, "exact") else "zero"
    if choice == "exact":
        if not hasattr(g, "exact"):
            raise ValueError(f"rhs {cfg.rhs!r} has no exact solution")
        return g.exact
    if choice == "x_n":
        return lambda x: np.asarray(x)[..., -1]
    return 0.0


def run_solve(cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    from .geometry import CubeSpec
    from .grid import GridFunction, sample
    from .solver import abp_check, harmonic_replacement, make_problem, solve, sup_norm

    dom, op, g = cfg.domain_obj(), cfg.operator_obj(), cfg.rhs_obj()
    problem = make_problem(dom, CubeSpec(1.0, 1.0), cfg.h, op, g, boundary_data(cfg, g))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = solve(problem)
        u = harmonic_replacement(problem).solution
    w = rep.solution
    state.update(w=w, dom=dom, op=op, g=g)
    pts = w.grid.points().reshape(-1, w.grid.n)
    keep = w.mask.reshape(-1)
    header = [f"x_{i + 1}" for i in range(w.grid.n)] + ["w"]
    write_csv(out / "solution.csv", header,
              (list(p) + [v] for p, v in zip(pts[keep], w.values.reshape(-1)[keep])))
    summary = {"residual": rep.residual_norm, "iterations": rep.iterations, "h": rep.h,
               "monotone": rep.monotone, "backend": rep.backend, "sup_w": sup_norm(w),
               "warnings": sorted({str(c.message) for c in caught})}
    passed = rep.residual_norm <= problem.tol
    from .engine.calibration import abp_constant

    try:
        C = abp_constant(cfg.n, cfg.lam, dom.name)
    except KeyError:
        C = None
    if C is not None:
        gf = GridFunction(w.grid, sample(g, w.grid), w.mask)
        ratio, holds, _ = abp_check(w, u, gf, cfg.n, C)
        summary["abp"] = {"ratio": ratio, "frozen_constant": C, "holds": holds}
        passed = passed and holds
    return PipelineResult("solve", bool(passed), True, summary)


def run_barriers(cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    from .barriers import BarrierParams, certify, comparison_checks
    from .coefficients import random_batch

    params = BarrierParams.build(cfg.n, cfg.lam)
    batch = random_batch(cfg.n, cfg.lam, cfg.option("barriers", "batch", 100), cfg.seed)
    density = cfg.option("barriers", "density", 64 if cfg.n == 2 else 24)
    certs = {bid: certify(bid, params, batch, density) for bid in ("phi", "Phi")}
    for bid, cert in certs.items():
        write_json(out / f"barrier_{bid}.json", cert.to_dict())
    comp = comparison_checks(params)
    summary = {"params": params, "comparison": comp,
               "valid": {bid: c.valid for bid, c in certs.items()}}
    passed = all(c.valid for c in certs.values()) and all(v >= -1e-10 for v in comp.values())
    return PipelineResult("barriers", bool(passed), True, summary)


def run_differentiability(cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    from .engine.derivative import boundary_derivative

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = boundary_derivative(state["w"], state["op"], state["g"], state["dom"], J=cfg.J,
                                  q=cfg.q, Lambda=cfg.Lambda,
                                  beta=cfg.option("differentiability", "beta"),
                                  nodes=cfg.option("differentiability", "nodes", 256))
    (out / "decay.csv").write_text(rep.to_csv(), encoding="utf-8", newline="")
    write_csv(out / "c_of_r.csv", ["r", "C_of_r"], rep.C_of_r)
    return PipelineResult("differentiability", bool(rep.verdicts["differentiable_at_0"]), True,
                          rep.summary())


def run_loglip(cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    from .engine.calibration import abp_constant
    from .engine.loglip import loglip_induction

    try:
        C = abp_constant(cfg.n, cfg.lam, state["dom"].name)
    except KeyError:
        C = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = loglip_induction(state["w"], state["op"], state["g"], cfg.rho, cfg.Kmax,
                               state["dom"], cfg.option("loglip", "nodes", 128), abp_C=C)
    steps = rep.extra["steps"]
    write_csv(out / "loglip.csv", ["k", "r", "sup_w_over_r", "sup_w_over_r_log"],
              ([s.k, s.r, lin, ll] for s, lin, ll in
               zip(steps, rep.extra["linear_ratios"], rep.extra["loglip_ratios"])))
    write_csv(out / "induction.csv", ["k", "r", "slope", "error", "bound", "passed"],
              ([s.k, s.r, s.slope / rep.alpha, s.error, s.r, int(s.passed)] for s in steps))
    summary = rep.summary()
    summary.pop("steps", None)
    return PipelineResult("loglip", bool(rep.verdicts["induction_passes"]), True, summary)


def run_lorentz_audit(cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    from .grid import GridFunction, sample
    from .lorentz import LorentzIndex, lorentz_norm, radial_dini, refinement_membership

    n = cfg.n
    if cfg.beta is None:
        from .geometry import CubeSpec, build_mask

        mg = build_mask(cfg.domain_obj(), CubeSpec(1.0, 1.0), cfg.h)
        g = GridFunction(mg.grid, sample(cfg.rhs_obj(), mg.grid), mg.in_domain)
        norm = lorentz_norm(g, LorentzIndex(n, 1))
        write_csv(out / "lorentz_audit.csv", ["h", "norm"], [[cfg.h, norm]])
        return PipelineResult("lorentz-audit", True, False,
                              {"norm": norm, "membership": "not assessed (single grid)"})
    beta = cfg.beta
    verdict = refinement_membership(beta, n, threshold=cfg.option("lorentz-audit", "threshold", -1.1))
    write_csv(out / "lorentz_audit.csv", ["h", "norm"], zip(verdict.scales, verdict.values))
    eps = [10.0**-k for k in (4, 8, 16, 32)]
    dini = [radial_dini(beta, n, e) for e in eps]
    summary = {
        "beta": beta,
        "membership": "in L(n,1)" if verdict.converges else "not in L(n,1)",
        "refinement_slope": verdict.slope,
        "radial_membership": "in L(n,1)" if beta > 1 else "not in L(n,1)",
        "dini_truncations": dict(zip(map(str, eps), dini)),
        "dini_condition": "converges" if beta > (n + 1) / n else "diverges",
    }
    return PipelineResult("lorentz-audit", True, False, summary)


RUNNERS = {"solve": run_solve, "barriers": run_barriers,
           "differentiability": run_differentiability, "loglip": run_loglip,
           "lorentz-audit": run_lorentz_audit}


def _guarded(name: str, cfg: ExperimentConfig, out: Path, state: dict) -> PipelineResult:
    try:
        return RUNNERS[name](cfg, out, state)
    except Exception as err:  # reported in the manifest, never swallowed silently
        return PipelineResult(name, False, True, error=f"{type(err).__name__}: {err}")


def output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    target = Path(override or cfg.output)
    if target.is_absolute():
        return target
    root = Path(os.environ.get(OUTPUT_ROOT_ENV) or "runs")
    return root / target


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> RunManifest:
    """Execute the selected pipelines and write tables, ``summary.json`` and ``manifest.json``."""
    out = output_dir(cfg, str(out) if out is not None else None)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    wanted = list(cfg.pipelines)
    needs_solve = any(p in DEPENDS_ON_SOLVE for p in wanted)
    chain = [p for p in ("solve", "differentiability", "loglip") if p in wanted or
             (p == "solve" and needs_solve)]
    free = [p for p in ("barriers", "lorentz-audit") if p in wanted]
    state: dict = {}
    results: dict[str, PipelineResult] = {}

    def run_chain():
        for name in chain:
            if name != "solve" and "w" not in state:
                results[name] = PipelineResult(name, False, True, error="skipped: solve failed")
                continue
            results[name] = _guarded(name, cfg, out, state)

    if cfg.concurrent and free:
        with ThreadPoolExecutor(max_workers=len(free)) as pool:
            futures = {name: pool.submit(_guarded, name, cfg, out, state) for name in free}
            run_chain()
            for name, fut in futures.items():
                results[name] = fut.result()
    else:
        for name in free:
            results[name] = _guarded(name, cfg, out, state)
        run_chain()

    ordered = [p for p in ("solve", "barriers", "differentiability", "loglip", "lorentz-audit")
               if p in results]
    write_json(out / "summary.json", {p: {"passed": results[p].passed, "error": results[p].error,
                                          **results[p].summary} for p in ordered})
    verdicts = {p: {"passed": results[p].passed, "verdict_bearing": results[p].verdict_bearing,
                    "error": results[p].error} for p in ordered}
    if "differentiability" in results and results["differentiability"].summary:
        src = results["differentiability"].summary
        verdicts["differentiability"]["differentiable_at_0"] = src["verdicts"]["differentiable_at_0"]
        verdicts["differentiability"]["a"] = src["a"]
    if "loglip" in results and results["loglip"].summary:
        verdicts["loglip"]["loglip_constant"] = results["loglip"].summary["verdicts"]["loglip_constant"]
    if "lorentz-audit" in results and results["lorentz-audit"].summary:
        verdicts["lorentz-audit"]["membership"] = results["lorentz-audit"].summary["membership"]
    import scipy

    versions = {"convexreg": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__,
                "assembly_backend": kernels.BACKEND}
    wall = {"started": start, "elapsed_s": time.time() - start}
    files = sorted({str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
                   | {"manifest.json"})
    manifest = RunManifest(cfg.to_dict(), versions, wall, verdicts, files, str(out))
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest
