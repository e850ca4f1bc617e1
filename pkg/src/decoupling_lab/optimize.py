"""Random-restart coordinate ascent for large decoupling ratios.

The ratio ||f||_p^p / (sum_gamma ||f_gamma||_p^q)^{p/q} is maximized over the
phases of the coefficients (optionally their moduli too).  A move changes
one coefficient, so the grid of f changes by a multiple of one character and
only the profile of the small cap containing that frequency changes; both
are updated in place.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .caps import small_cap_level
from .ensembles import EnsembleKind, EnsembleSpec, generate
from .errors import LabError
from .fourier import synth
from .parabola import ModelParams, ParabolaFunction, embed_spectrum, make_function, make_params
from .verifiers import _parse_exp, combine_gamma, decoupling_ratio, theorem_bound_info

# explicit character tables are kept up to this q
TABLE_MAX_Q = 81
# the incremental state is rebuilt from scratch after this many accepted moves
RESYNC_EVERY = 200
VERIFY_RTOL = 1e-6


@dataclass
class SearchConfig:
    kind: str = "padic"
    p: int = 3
    N: int = 2
    beta: object = 1
    p_exp: float = 4.0
    q_exp: float = 4.0
    restarts: int = 200
    iterations: int = 500
    seed: int = 0
    step_start: float = math.pi / 2
    step_min: float = math.pi / 256
    stagnation: int = 50
    magnitudes: bool = False
    seed_block: bool = True
    support: Optional[Sequence[int]] = None
    threads: int = 1

    def params(self) -> ModelParams:
        return make_params(self.kind, self.p, self.N)

    def describe(self) -> dict:
        return {
            "kind": str(self.kind),
            "p": self.p,
            "N": self.N,
            "beta": str(self.beta),
            "p_exp": self.p_exp,
            "q_exp": "inf" if math.isinf(_parse_exp(self.q_exp)) else float(self.q_exp),
            "restarts": self.restarts,
            "iterations": self.iterations,
            "seed": self.seed,
            "magnitudes": self.magnitudes,
            "seed_block": self.seed_block,
        }


@dataclass
class RestartResult:
    index: int
    ratio: float
    coeffs: np.ndarray
    trace: list
    accepted: int
    proposals: int


@dataclass
class SearchResult:
    config: SearchConfig
    function: ParabolaFunction
    ratio: float
    search_ratio: float
    restart: int
    trace: list
    bound: float
    restarts: list = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return self.ratio <= self.bound

    def to_record(self) -> dict:
        return {
            "config": self.config.describe(),
            "best_ratio": self.ratio,
            "search_ratio": self.search_ratio,
            "best_restart": self.restart,
            "theorem_bound": self.bound,
            "within_bound": self.within_bound,
        }


class _Objective:
    """Incremental numerator and small-cap powers for one coefficient vector."""

    def __init__(self, params: ModelParams, M: int, p_exp: float, q_exp: float, table):
        self.params = params
        self.q = params.q
        self.nM = params.p**M
        self.pe = p_exp
        self.qe = q_exp
        self.table = table
        idx = np.arange(self.q)
        # 1-D characters v -> e(a v) as seen by the flat-cap profiles
        self.chars1 = synth(np.eye(self.q, dtype=complex), params.ring, ndim=1)
        self.gamma_of = idx % self.nM

    def basis(self, a: int) -> np.ndarray:
        if self.table is not None:
            return self.table[a]
        row = np.zeros(self.q, dtype=complex)
        row[a] = 1.0
        return synth(embed_spectrum(self.params, row), self.params.ring)

    def reset(self, coeffs: np.ndarray) -> None:
        params = self.params
        self.c = coeffs.astype(complex).copy()
        self.grid = synth(embed_spectrum(params, self.c), params.ring)
        rows = np.zeros((self.nM, self.q), dtype=complex)
        rows[self.gamma_of, np.arange(self.q)] = self.c
        self.prof = synth(rows, params.ring, ndim=1)
        self.num = float(np.sum(np.abs(self.grid) ** self.pe))
        self.pw = self._powers(self.prof)

    def _powers(self, prof: np.ndarray) -> np.ndarray:
        return self.q * np.sum(np.abs(prof) ** self.pe, axis=-1)

    def ratio(self, num: float, pw: np.ndarray) -> float:
        den = combine_gamma(pw, self.pe, self.qe)
        return num / den if den > 0 else 0.0

    def propose(self, a: int, new: complex):
        d = new - self.c[a]
        g = self.grid + d * self.basis(a)
        num = float(np.sum(np.abs(g) ** self.pe))
        gi = self.gamma_of[a]
        prow = self.prof[gi] + d * self.chars1[a]
        pw = self.pw.copy()
        pw[gi] = self.q * float(np.sum(np.abs(prow) ** self.pe))
        return self.ratio(num, pw), (a, new, g, num, gi, prow, pw)

    def accept(self, state) -> None:
        a, new, g, num, gi, prow, pw = state
        self.c[a] = new
        self.grid = g
        self.num = num
        self.prof[gi] = prow
        self.pw = pw


def _character_table(params: ModelParams) -> Optional[np.ndarray]:
    if params.q > TABLE_MAX_Q:
        return None
    return synth(embed_spectrum(params, np.eye(params.q, dtype=complex)), params.ring)


def _initial(config: SearchConfig, params: ModelParams, index: int, rng, support: np.ndarray) -> np.ndarray:
    q = params.q
    if index == 0 and config.seed_block and config.support is None:
        return generate(EnsembleSpec(EnsembleKind.BLOCK, beta=config.beta), params).coeffs.copy()
    c = np.zeros(q, dtype=complex)
    c[support] = np.exp(2j * np.pi * rng.random(support.size))
    if config.magnitudes:
        c[support] *= rng.random(support.size) + 0.5
    return c


def _run_restart(config: SearchConfig, params: ModelParams, M: int, table, index: int) -> RestartResult:
    pe, qe = _parse_exp(config.p_exp), _parse_exp(config.q_exp)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(index,)))
    support = np.arange(params.q) if config.support is None else np.unique(np.asarray(config.support, dtype=int) % params.q)
    obj = _Objective(params, M, pe, qe, table)
    obj.reset(_initial(config, params, index, rng, support))
    active = np.flatnonzero(obj.c != 0)
    current = obj.ratio(obj.num, obj.pw)
    trace = [(index, 0, current)]
    step = config.step_start
    rejected = 0
    accepted = 0
    proposals = 0
    for it in range(1, config.iterations + 1):
        if active.size == 0:
            break
        a = int(active[rng.integers(active.size)])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        c = obj.c[a]
        if config.magnitudes and rng.random() < 0.5:
            new = c * math.exp(sign * step / 2)
        else:
            new = c * complex(math.cos(sign * step), math.sin(sign * step))
        proposals += 1
        r, state = obj.propose(a, new)
        if r > current:
            obj.accept(state)
            current = r
            accepted += 1
            rejected = 0
            trace.append((index, it, current))
            if accepted % RESYNC_EVERY == 0:
                obj.reset(obj.c)
                current = obj.ratio(obj.num, obj.pw)
        else:
            rejected += 1
            if rejected >= config.stagnation:
                if step / 2 < config.step_min * (1 - 1e-12):
                    break
                step /= 2
                rejected = 0
    obj.reset(obj.c)
    final = obj.ratio(obj.num, obj.pw)
    return RestartResult(index, final, obj.c.copy(), trace, accepted, proposals)


def maximize_ratio(config: SearchConfig) -> SearchResult:
    if config.restarts <= 0 or config.iterations < 0:
        raise LabError("BUDGET_ZERO", "need at least one restart")
    params = config.params()
    M = small_cap_level(params, config.beta)
    table = _character_table(params)
    threads = max(1, int(config.threads))
    run = lambda i: _run_restart(config, params, M, table, i)
    if threads == 1:
        results = [run(i) for i in range(config.restarts)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(config.restarts)))
    best = results[0]
    for r in results[1:]:
        if r.ratio > best.ratio:
            best = r
    f = make_function(params, best.coeffs)
    if config.magnitudes:
        f = f.scaled(1.0 / max(np.abs(f.coeffs).max(), 1e-300))
    verified = decoupling_ratio(f, config.p_exp, config.q_exp, config.beta)
    if not math.isclose(verified, best.ratio, rel_tol=VERIFY_RTOL):
        raise RuntimeError(f"search ratio {best.ratio} disagrees with recomputed {verified}")
    info = theorem_bound_info(config.p_exp, config.q_exp, config.beta, params.bold_p, params.R)
    trace = []
    running = -math.inf
    for r in results:
        for idx, it, val in r.trace:
            running = max(running, val)
            trace.append({"restart": idx, "iteration": it, "ratio": val, "best": running})
    return SearchResult(config, f, verified, best.ratio, best.index, trace, info["value"], results)
