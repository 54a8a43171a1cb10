"""Configuration, experiment orchestration and report files.

A configuration is a flat JSON object.  Every omitted field takes its
default, unknown keys are rejected, and the order gate, the clock and its
domain are validated at load time so a bad file fails before any numerics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, inclusion, linctl, probctl, verify
from .errors import ConfigError, GateError, HilferError
from .psicalc import GATE_MESSAGE, KINDS, FracOrder, PsiFunction
from .report import ConvergenceReport, fmt
from .spectral import EvolutionProblem, SpectralState, default_grid, parabola_coeffs, parabola_tail

log = logging.getLogger(__name__)

RUNS = ("verify", "sweep", "optimal", "inclusion", "problem1")
STATE_SPECS = ("e1", "zero", "parabola")


@dataclass
class ExperimentConfig:
    run: str = "sweep"
    alpha: float = 0.75
    beta: float = 0.5
    psi: str = "linear"
    psi_params: list = field(default_factory=list)
    a: float = 0.0
    b: float = 1.0
    n_modes: int = 32
    x0: object = "e1"
    x1: object = "zero"
    x_b: object = "parabola"
    control_gain: object = 1.0
    grid_nodes: int = 201
    eps_list: list = field(default_factory=lambda: list(linctl.DEFAULT_EPS))
    lambda_list: list = field(default_factory=lambda: [1e2, 1e1, 1.0, 1e-1, 1e-2, 1e-3, 1e-4])
    strategy: str = "midpoint"
    max_iter: int = 200
    tol: float = 1e-9
    convention: str = "argument"
    limit_policy: str = "warn"
    kappa: float = 0.5
    rho0: float = 0.5
    k1: float = 0.0
    k2: float = 1.0
    c_h: float = 1.0
    n_candidates: int = 8
    seed: int = 0
    out: str = "hilferctl_out"

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")  # where results go is not part of the experiment
        return d

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    # built objects -------------------------------------------------------

    def build_psi(self) -> PsiFunction:
        return PsiFunction(self.psi, tuple(self.psi_params), self.a, self.b)

    def state(self, spec) -> SpectralState:
        n = self.n_modes
        if isinstance(spec, list):
            c = np.zeros(n)
            c[: len(spec)] = spec
            return SpectralState(c)
        if spec == "e1":
            return SpectralState.mode(1, n)
        if spec == "zero":
            return SpectralState.zeros(n)
        if spec == "parabola":
            s = SpectralState(parabola_coeffs(n))
            s.tail = parabola_tail(n)
            return s
        raise ConfigError(f"unknown state spec {spec!r}", field="state")

    def build_problem(self) -> EvolutionProblem:
        gain = self.control_gain
        gain = np.full(self.n_modes, float(gain)) if not isinstance(gain, list) else np.asarray(gain, float)
        return EvolutionProblem(self.build_psi(), FracOrder(self.alpha, self.beta), self.n_modes,
                                self.state(self.x0), gain)

    def grid(self, problem: EvolutionProblem) -> np.ndarray:
        return default_grid(problem, self.grid_nodes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _line_of(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def _number(name, v, text, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}", field=name, line=_line_of(text, name))
    if kind is int and float(v) != int(v):
        raise ConfigError(f"{name} must be an integer, got {v!r}", field=name, line=_line_of(text, name))
    return kind(v)


def config_from_dict(raw: dict, text: str = "") -> ExperimentConfig:
    """Validate a parsed mapping; ``text`` is only used to locate fields."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", line=1)
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        k = unknown[0]
        raise ConfigError(f"unknown configuration key {k!r}", field=k, line=_line_of(text, k))
    cfg = ExperimentConfig()
    for k, v in raw.items():
        default = getattr(cfg, k)
        if isinstance(default, bool):
            v = bool(v)
        elif isinstance(default, int):
            v = _number(k, v, text, int)
        elif isinstance(default, float):
            v = _number(k, v, text)
        elif k in ("eps_list", "lambda_list", "psi_params"):
            if not isinstance(v, list):
                raise ConfigError(f"{k} must be a list of numbers", field=k, line=_line_of(text, k))
            v = [_number(k, e, text) for e in v]
        elif k in ("x0", "x1", "x_b"):
            if isinstance(v, list):
                v = [_number(k, e, text) for e in v]
            elif v not in STATE_SPECS:
                raise ConfigError(f"{k} must be one of {STATE_SPECS} or a coefficient list", field=k,
                                  line=_line_of(text, k))
        elif k == "control_gain":
            v = [_number(k, e, text) for e in v] if isinstance(v, list) else _number(k, v, text)
        elif not isinstance(v, str):
            raise ConfigError(f"{k} must be a string", field=k, line=_line_of(text, k))
        setattr(cfg, k, v)
    validate(cfg, text)
    return cfg


def validate(cfg: ExperimentConfig, text: str = "") -> None:
    def bad(name, msg):
        raise ConfigError(msg, field=name, line=_line_of(text, name))

    if cfg.run not in RUNS:
        bad("run", f"run must be one of {RUNS}")
    if not cfg.alpha > 0.5 or cfg.alpha > 1.0:
        bad("alpha", f"alpha must exceed 0.5 and be at most 1 (got {cfg.alpha}). {GATE_MESSAGE}")
    if not 0.0 <= cfg.beta <= 1.0:
        bad("beta", "beta must lie in [0, 1]")
    if cfg.psi not in KINDS or cfg.psi == "custom":
        bad("psi", f"psi must be one of {KINDS[:-1]} (custom clocks need the library interface)")
    if cfg.n_modes < 1:
        bad("n_modes", "n_modes must be positive")
    if cfg.grid_nodes < 3:
        bad("grid_nodes", "grid_nodes must be at least 3")
    for name in ("eps_list", "lambda_list"):
        v = getattr(cfg, name)
        if not v or any(e <= 0 for e in v):
            bad(name, f"{name} must be a nonempty list of positive numbers")
    if any(b >= a for a, b in zip(cfg.eps_list, cfg.eps_list[1:])):
        bad("eps_list", "eps_list must be strictly decreasing")
    if cfg.strategy not in inclusion.STRATEGIES:
        bad("strategy", f"strategy must be one of {inclusion.STRATEGIES}")
    if cfg.convention not in linctl.SIGN_CONVENTIONS:
        bad("convention", f"convention must be one of {linctl.SIGN_CONVENTIONS}")
    if cfg.limit_policy not in ("warn", "error"):
        bad("limit_policy", "limit_policy must be 'warn' or 'error'")
    if min(cfg.kappa, cfg.rho0, cfg.c_h) < 0:
        bad("kappa", "kappa, rho0 and c_h must be nonnegative")
    if cfg.n_candidates < 1:
        bad("n_candidates", "n_candidates must be at least 1")
    if not cfg.tol > 0 or cfg.max_iter < 1:
        bad("tol", "tol must be positive and max_iter at least 1")
    gain = cfg.control_gain
    if isinstance(gain, list):
        if len(gain) != cfg.n_modes or min(gain) < 0:
            bad("control_gain", "control_gain list needs n_modes nonnegative entries")
    elif gain < 0:
        bad("control_gain", "control_gain must be nonnegative")
    for name in ("x0", "x1", "x_b"):
        v = getattr(cfg, name)
        if isinstance(v, list) and len(v) > cfg.n_modes:
            bad(name, f"{name} has more coefficients than n_modes")
    try:
        cfg.build_psi()
    except (ValueError, HilferError) as exc:
        field_name = "psi_params" if cfg.psi_params else ("a" if "a" in str(exc) or "domain" in str(exc).lower() else "psi")
        bad(field_name, f"invalid clock: {exc}")


def parse_config_text(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error: {exc.msg} (column {exc.colno})", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", line=1)
    return raw


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON configuration file."""
    text = Path(path).read_text()
    return config_from_dict(parse_config_text(text), text)


# ---------------------------------------------------------------- output


def write_series(out: Path, name: str, x, y, xname: str, yname: str) -> None:
    rep = ConvergenceReport([xname, yname])
    for a, b in zip(x, y):
        rep.add(**{xname: a, yname: b})
    (out / f"series_{name}.csv").write_text(rep.to_csv())


def write_report(out: Path, cfg: ExperimentConfig, rep: ConvergenceReport, extra_meta: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rep.to_csv())
    meta = {
        "config_digest": cfg.digest(),
        "code_version": __version__,
        "run": cfg.run,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "csv_sha256": hashlib.sha256(rep.to_csv().encode()).hexdigest(),
    }
    meta.update(rep.meta)
    meta.update(extra_meta or {})
    doc = {"meta": _jsonable(meta), "config": cfg.canonical(), "columns": rep.columns,
           "rows": [{k: _jsonable(v) for k, v in r.items()} for r in rep.rows]}
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_error(out: Path, exc: BaseException) -> dict:
    doc = {
        "error": type(exc).__name__,
        "message": str(exc),
        "operation": getattr(exc, "operation", None),
        "field": getattr(exc, "field", None),
        "line": getattr(exc, "line", None),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(doc, indent=2) + "\n")
    except OSError:
        pass
    return doc


# ------------------------------------------------------------------- runs


def _run_verify(cfg, problem, out):
    results = verify.run_checks(problem, cfg.state(cfg.x1), cfg.convention)
    rep = ConvergenceReport(["check", "value", "tolerance", "passed", "seconds"])
    for r in results:
        rep.add(check=r.ident, value=r.value, tolerance=r.tolerance, passed=r.passed, seconds=round(r.seconds, 3))
    failed = [r.ident for r in results if not r.passed]
    rep.meta["failed"] = failed
    rep.meta["first_failure"] = failed[0] if failed else None
    rep.meta["sign_convention"] = cfg.convention
    # timings vary between runs; keep them out of the byte-stable CSV
    csv_rep = ConvergenceReport(["check", "value", "tolerance", "passed"],
                                [{k: r[k] for k in ("check", "value", "tolerance", "passed")} for r in rep.rows], rep.meta)
    write_report(out, cfg, csv_rep, {"seconds": {r.ident: r.seconds for r in results}})
    for r in results:
        log.info("%s %s", "PASS" if r.passed else "FAIL", r.ident)
    if failed:
        log.error("verify failed: first violated invariant %s", failed[0])
    return 0 if not failed else 1


def _run_sweep(cfg, problem, out):
    x1 = cfg.state(cfg.x1)
    rep = linctl.eps_sweep(problem, None, x1, cfg.eps_list, cfg.grid(problem))
    rep = rep.sorted_by("eps").with_logs()
    tail = getattr(x1, "tail", 0.0) + getattr(problem.x0, "tail", 0.0)
    write_report(out, cfg, rep, {"truncation_tail_bound": tail})
    write_series(out, "eps_miss", rep.column("eps"), rep.column("endpoint_miss"), "eps", "endpoint_miss")
    write_series(out, "eps_closed_form", rep.column("eps"), rep.column("closed_form_miss"), "eps", "closed_form_miss")
    return 0


def _run_optimal(cfg, problem, out):
    x_b = cfg.state(cfg.x_b)
    grid = cfg.grid(problem)
    gram = linctl.gramian(problem)
    rep = ConvergenceReport(["lambda", "miss", "energy", "cost", "fixed_point_gap"])
    for lam in sorted(cfg.lambda_list, reverse=True):
        res = linctl.optimal_control_quadratic(problem, lam, x_b, grid)
        qb = res.trajectory.endpoint().coeffs
        S = (x_b - res.target_gap).coeffs  # S(Psi(b,a)) x0
        gap = float(np.max(np.abs(qb - (S - gram.entries * (qb - x_b.coeffs) / lam))))
        rep.add(**{"lambda": lam, "miss": res.miss, "energy": res.energy, "cost": res.cost, "fixed_point_gap": gap})
    write_report(out, cfg, rep)
    write_series(out, "lambda_miss", rep.column("lambda"), rep.column("miss"), "lambda", "miss")
    write_series(out, "lambda_energy", rep.column("lambda"), rep.column("energy"), "lambda", "energy")
    return 0


def _run_inclusion(cfg, problem, out):
    spec = inclusion.MultimapSpec.default()
    spec.limit_policy = cfg.limit_policy
    inclusion.check_weighted_limit(problem, spec.m, cfg.limit_policy)
    x1 = cfg.state(cfg.x1)
    grid = cfg.grid(problem)
    rep = ConvergenceReport(["eps", "endpoint_miss", "closed_form_miss", "energy", "iterations", "residual", "converged"])
    last = None
    for eps in cfg.eps_list:
        res = inclusion.fixed_point_solve(problem, spec, cfg.strategy, x1, eps, cfg.max_iter, cfg.tol, grid=grid)
        gram = linctl.gramian(problem)
        rep.add(eps=eps, endpoint_miss=(res.trajectory.endpoint() - x1).norm(),
                closed_form_miss=linctl.endpoint_error_closed_form(eps, res.defect, gram).norm(),
                energy=res.control.energy, iterations=res.iterations, residual=res.residual, converged=res.converged)
        last = res
    rep = rep.sorted_by("eps").with_logs()
    rep.meta["strategy"] = cfg.strategy
    write_report(out, cfg, rep)
    write_series(out, "eps_miss", rep.column("eps"), rep.column("endpoint_miss"), "eps", "endpoint_miss")
    write_series(out, "iteration_residual", [h[0] for h in last.history], [h[1] for h in last.history],
                 "iteration", "step")
    return 0 if all(rep.column("converged")) else 1


def _run_problem1(cfg, problem, out):
    cspec = probctl.ConstraintSpec(cfg.kappa, cfg.rho0)
    k1, k2 = cfg.k1, cfg.k2
    hspec = probctl.RunningCostSpec(k1=lambda t: np.full(np.shape(t), k1), k2=lambda t: np.full(np.shape(t), k2),
                                    c_h=cfg.c_h)
    res = probctl.feasible_search(problem, cspec, hspec, cfg.n_candidates, cfg.seed, cfg.grid(problem))
    M0, N0 = res.bounds
    best = res.best
    meta = {"history_digest": res.digest, "best_candidate": best.cid, "best_cost": best.cost,
            "M0": M0, "N0": N0, "weighted_norm": best.trajectory.weighted_norm,
            "control_l2": math.sqrt(best.control.energy)}
    write_report(out, cfg, res.history, meta)
    write_series(out, "candidate_best", res.history.column("candidate_id"), res.history.column("running_best"),
                 "candidate_id", "running_best")
    return 0


_RUNNERS = {"verify": _run_verify, "sweep": _run_sweep, "optimal": _run_optimal,
            "inclusion": _run_inclusion, "problem1": _run_problem1}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment, writing its report into ``cfg.out``; returns the exit status."""
    out = Path(cfg.out)
    try:
        problem = cfg.build_problem()
        out.mkdir(parents=True, exist_ok=True)
        err = out / "error.json"
        if err.exists():
            err.unlink()
        status = _RUNNERS[cfg.run](cfg, problem, out)
        log.info("%s finished with status %d; results in %s", cfg.run, status, out)
        return status
    except (HilferError, ValueError, ArithmeticError) as exc:
        doc = write_error(out, exc)
        log.error("%s failed: %s", cfg.run, json.dumps(doc))
        return 2 if isinstance(exc, (ConfigError, GateError)) else 1


def configure_logging() -> None:
    level = os.environ.get("HILFERCTL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
