"""Deterministic verification sweeps, report files and manifests.

A sweep is a list of trials.  Trial t draws its test function from a seed
derived only from (global seed, t), so the worker count never changes any
number.  Workers return reports; the calling thread is the only writer.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .caps import as_fraction
from .ensembles import EnsembleKind, EnsembleSpec, generate
from .errors import LabError
from .parabola import ModelParams, make_params
from .verifiers import REGISTRY, VerificationReport, Workspace, run_check

THREADS_ENV = "DECOUPLING_LAB_THREADS"
# error codes meaning "this check does not apply here"; such runs are skipped in sweeps
INAPPLICABLE = {"N_TOO_SMALL", "PARAM_RANGE", "LEVEL_RANGE", "BETA_NOT_REPRESENTABLE", "PARAM_MISSING"}
# report fields that legitimately differ between identical runs
VOLATILE_FIELDS = ("wall_time",)


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def tool_version() -> str:
    from . import __version__

    return __version__


@dataclass
class SweepConfig:
    checks: list
    kind: str = "padic"
    p: int = 3
    N: int = 2
    beta: str = "1"
    ensemble: str = "random"
    trials: int = 10
    seed: int = 0
    alpha_grid: Optional[tuple] = None  # (lo, hi, count) relative to ||f||_inf
    tol: Optional[float] = None
    p_exp: float = 4.0
    q_exp: object = 4.0
    density: float = 0.2
    charset: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def params(self) -> ModelParams:
        return make_params(self.kind, self.p, self.N)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["alpha_grid"] is not None:
            d["alpha_grid"] = list(d["alpha_grid"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        if d.get("alpha_grid") is not None:
            d["alpha_grid"] = tuple(d["alpha_grid"])
        return cls(**d)


def trial_seed(global_seed: int, trial: int) -> int:
    ss = np.random.SeedSequence(int(global_seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def relative_alphas(params: ModelParams, grid: Optional[tuple]) -> np.ndarray:
    if grid is None:
        lo, hi, n = params.R**-0.5, 1.0, 8
    else:
        lo, hi, n = float(grid[0]), float(grid[1]), int(grid[2])
    if n <= 0 or lo <= 0 or hi < lo:
        raise LabError("BAD_GRID", f"alpha grid needs 0 < lo <= hi and count >= 1, got {grid}")
    return np.geomspace(lo, hi, n) if n > 1 else np.array([lo])


def build_function(config: SweepConfig, params: ModelParams, seed: int):
    kind = EnsembleKind.parse(config.ensemble)
    A: tuple = ()
    if kind is EnsembleKind.CHARSUM:
        if config.charset:
            A = tuple(int(a) for a in config.charset)
        else:
            rng = np.random.default_rng(seed)
            chosen = np.flatnonzero(rng.random(params.q) < config.density)
            A = tuple(int(a) for a in (chosen if chosen.size else [0]))
    spec = EnsembleSpec(kind, seed=seed, density=config.density, beta=as_fraction(config.beta), A=A)
    return spec, generate(spec, params)


def _reference_sup(name: str, f) -> float:
    if name == "critical_superlevel":
        from .uniformize import theta_sup

        return float(np.abs(f.grid).max()) / theta_sup(f)
    return float(np.abs(f.grid).max())


def run_trial(config: SweepConfig, trial: int) -> tuple[list, list]:
    """All reports of one trial, plus (check, code) pairs that were skipped."""
    params = config.params()
    seed = trial_seed(config.seed, trial)
    spec, f = build_function(config, params, seed)
    ws = Workspace(f)
    rel = relative_alphas(params, config.alpha_grid)
    reports, skipped = [], []
    for name in config.checks:
        needs_alpha = "alpha" in REGISTRY[name].requires
        alphas = [None]
        if needs_alpha:
            sup = _reference_sup(name, f)
            alphas = [float(r * sup) for r in rel]
        for alpha in alphas:
            P = {
                "beta": config.beta,
                "p_exp": config.p_exp,
                "q_exp": config.q_exp,
                "tol": config.tol,
                "ensemble": spec.describe(),
                "seed": seed,
                **config.extra,
            }
            if alpha is not None:
                P["alpha"] = alpha
            if name == "critical_superlevel" and alpha is not None:
                lo, hi = params.R**-0.5, params.R**0.5
                P["alpha"] = min(max(alpha, lo), hi)
            try:
                reports.append(run_check(name, f, P, ws))
            except LabError as e:
                if e.code not in INAPPLICABLE:
                    raise
                skipped.append((name, e.code))
    return reports, skipped


@dataclass
class SweepResult:
    config: SweepConfig
    reports: list
    skipped: list
    manifest: dict

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.reports)


def run_sweep(config: SweepConfig, threads: int = 1, out: Optional[str] = None, argv: Optional[Sequence[str]] = None) -> SweepResult:
    if config.trials <= 0:
        raise LabError("BUDGET_ZERO", "--trials must be positive")
    unknown = [c for c in config.checks if c not in REGISTRY]
    if unknown:
        raise LabError("UNKNOWN_CHECK", ", ".join(unknown))
    config.params()  # validates the field before any work starts
    relative_alphas(config.params(), config.alpha_grid)
    start = _dt.datetime.now(_dt.timezone.utc).isoformat()
    trials = range(config.trials)
    threads = max(1, int(threads))
    sink = open(out, "w", encoding="utf-8") if out else None
    reports: list = []
    skipped: list = []
    try:
        if threads == 1:
            results = (run_trial(config, t) for t in trials)
            pool = None
        else:
            pool = ThreadPoolExecutor(max_workers=threads)
            results = pool.map(lambda t: run_trial(config, t), trials)
        for reps, skip in results:
            for r in reps:
                reports.append(r)
                if sink:
                    sink.write(json.dumps(r.to_record(), sort_keys=False) + "\n")
            skipped.extend(skip)
        if pool is not None:
            pool.shutdown()
    finally:
        if sink:
            sink.close()
    manifest = {
        "command": list(argv) if argv is not None else list(sys.argv),
        "config": config.to_dict(),
        "global_seed": config.seed,
        "tool_version": tool_version(),
        "start": start,
        "end": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "task_seeds": [{"trial": t, "seed": trial_seed(config.seed, t)} for t in trials],
        "reports": out,
    }
    if out:
        with open(manifest_path(out), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
    return SweepResult(config, reports, skipped, manifest)


def manifest_path(out: str) -> str:
    return out + ".manifest.json"


def load_records(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def strip_volatile(rec: dict) -> dict:
    return {k: v for k, v in rec.items() if k not in VOLATILE_FIELDS}


def replay(manifest_file: str, threads: int = 1) -> dict:
    """Rerun a manifest and compare every non-timing field with the stored reports."""
    with open(manifest_file, encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = SweepConfig.from_dict(manifest["config"])
    fresh = run_sweep(config, threads=threads, out=None, argv=manifest.get("command"))
    new = [strip_volatile(json.loads(json.dumps(r.to_record()))) for r in fresh.reports]
    stored_path = manifest.get("reports")
    old = [strip_volatile(r) for r in load_records(stored_path)] if stored_path and os.path.exists(stored_path) else None
    mismatches = []
    if old is not None:
        if len(old) != len(new):
            mismatches.append({"index": None, "reason": f"{len(old)} stored vs {len(new)} replayed"})
        for i, (a, b) in enumerate(zip(old, new)):
            if a != b:
                keys = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
                mismatches.append({"index": i, "fields": keys})
    return {"records": len(new), "compared": old is not None, "mismatches": mismatches, "reports": fresh.reports}


def format_summary(rows: list) -> str:
    lines = [f"{'check':<24} {'trials':>6} {'max tightest':>14} {'pass rate':>9}"]
    for r in rows:
        mt = r["max_tightest"]
        lines.append(f"{r['check']:<24} {r['trials']:>6} {mt:>14.6g} {r['pass_rate']:>9.3f}")
    return "\n".join(lines)
