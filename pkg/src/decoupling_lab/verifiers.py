"""Registry of named inequality checks on model functions.

Each check returns the left side, the right side (with its explicit
constant), the constant itself, and a pass flag.  Checks that range over
several instances (levels, caps, pairs) report the instance with the worst
ratio lhs / rhs and count failures over all of them.

Integrals over the model ball are plain sums over the q x q grid.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional

import numpy as np

from .caps import (
    NONZERO_CAP_TOL,
    ThresholdMode,
    as_fraction,
    average_over_tiling,
    cap_coefficients,
    cap_grids,
    cap_norms,
    envelope_labels,
    envelope_threshold,
    flat_cap_powers,
    label_averages,
    small_cap_level,
)
from .errors import LabError
from .fourier import synth
from .localfield import Kind
from .parabola import ModelParams, ParabolaFunction, embed_spectrum, lp_power
from .pruning import (
    Annulus,
    bandpass,
    broad_narrow,
    class_mask,
    group_by_parent,
    prune,
)

IDENTITY_TOL = 1e-8
INEQUALITY_TOL = 1e-9
# absolute slack, relative to a natural size of each check, that absorbs
# round-off in quantities that vanish exactly in exact arithmetic
ABS_FLOOR = 1e-12
# gamma norms come from explicit grids up to this q, from 1-D profiles above
DIRECT_GAMMA_MAX_Q = 81
# elements per grid stack built at once
STACK_BUDGET = 1 << 24


class BoundWarning(UserWarning):
    pass


# -- reports ---------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, enum_types()):
        return x.value
    return x


def enum_types():
    import enum

    return (enum.Enum,)


@dataclass
class VerificationReport:
    check_name: str
    field: str
    p: int
    N: int
    beta: Optional[str]
    p_exp: Optional[float]
    q_exp: Optional[float]
    ensemble: Optional[str]
    seed: Optional[int]
    alpha: Optional[float]
    lhs: float
    rhs: float
    paper_constant: float
    tightest_constant: float
    passed: bool
    tol: float
    wall_time: float
    params: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    discrepancy: Optional[float] = None

    def to_record(self) -> dict:
        rec = {
            "check_name": self.check_name,
            "field": self.field,
            "p": self.p,
            "N": self.N,
            "beta": self.beta,
            "p_exp": self.p_exp,
            "q_exp": self.q_exp,
            "ensemble": self.ensemble,
            "seed": self.seed,
            "alpha": self.alpha,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "paper_constant": self.paper_constant,
            "tightest_constant": self.tightest_constant,
            "pass": self.passed,
            "tol": self.tol,
            "wall_time": self.wall_time,
            "params": self.params,
            "notes": self.notes,
            "discrepancy": self.discrepancy,
        }
        return _jsonable(rec)


def tightest(lhs: float, rhs: float, paper_constant: float) -> float:
    if lhs == 0:
        return 0.0
    if rhs == 0:
        return math.inf
    return lhs / (rhs / paper_constant)


@dataclass
class Outcome:
    lhs: float
    rhs: float
    paper_constant: float
    passed: bool
    identity: bool = False
    discrepancy: Optional[float] = None
    notes: dict = field(default_factory=dict)


class Tally:
    """Worst instance (by lhs / rhs) and failure count of a family of inequalities."""

    def __init__(self, tol: float, floor: float = 0.0):
        self.tol = tol
        self.floor = floor
        self.n = 0
        self.failures = 0
        self.worst = None  # (ratio, lhs, rhs, pc, where)

    def ratio(self, lhs: float, rhs: float) -> float:
        if lhs <= self.floor:
            return 0.0
        return lhs / rhs if rhs > 0 else math.inf

    def add(self, lhs: float, rhs: float, pc: float, where) -> None:
        self.n += 1
        if not lhs <= rhs * (1 + self.tol) + self.floor:
            self.failures += 1
        r = self.ratio(lhs, rhs)
        if self.worst is None or r > self.worst[0]:
            self.worst = (r, float(lhs), float(rhs), float(pc), where)

    def outcome(self, **notes) -> Outcome:
        if self.worst is None:
            return Outcome(0.0, 0.0, 1.0, True, notes={"instances": 0, **notes})
        _, lhs, rhs, pc, where = self.worst
        notes = {"instances": self.n, "failures": self.failures, "worst_at": where, "abs_floor": self.floor, **notes}
        return Outcome(lhs, rhs, pc, self.failures == 0, notes=notes)


# -- shared per-function data ------------------------------------------------------

class Workspace:
    """Lazily computed grids for one function; not shared across threads."""

    def __init__(self, f: ParabolaFunction):
        self.f = f
        self.params = f.params
        self._c: dict = {}

    def _get(self, key, make):
        if key not in self._c:
            self._c[key] = make()
        return self._c[key]

    @property
    def theta(self) -> np.ndarray:
        return self._get("theta", lambda: cap_grids(self.f, self.params.N))

    @property
    def theta_sq(self) -> np.ndarray:
        return self._get("theta_sq", lambda: np.abs(self.theta) ** 2)

    def caps(self, k: int) -> np.ndarray:
        """f_tau for every tau at level k <= N."""
        N = self.params.N
        return self._get(("caps", k), lambda: group_by_parent(self.theta, self.params, N, k))

    def caps_sq(self, k: int) -> np.ndarray:
        return self._get(("caps_sq", k), lambda: np.abs(self.caps(k)) ** 2)

    def g(self, k: int) -> np.ndarray:
        """g_tau = sum_{theta < tau} |f_theta|^2 for every tau at level k."""
        N = self.params.N
        return self._get(("g", k), lambda: group_by_parent(self.theta_sq, self.params, N, k))

    @property
    def square_total(self) -> np.ndarray:
        return self.g(0)[0]

    @property
    def sq_energy(self) -> float:
        """sum_x (sum_theta |f_theta|^2)^2, the natural size of L^2 integrals of square functions."""
        return self._get("sq_energy", lambda: float(np.sum(self.square_total**2)))

    def ntau(self, k: int) -> int:
        return self._get(("ntau", k), lambda: int(np.count_nonzero(cap_norms(self.f, k) > NONZERO_CAP_TOL)))

    def pruned(self, alpha: float):
        return self._get(("prune", float(alpha)), lambda: prune(self.f, alpha, ThresholdMode.PRUNING))

    def labels(self, alpha: float, m: int):
        return self._get(("bn", float(alpha), m), lambda: broad_narrow(self.pruned(alpha), m))

    def gamma_powers(self, M: int, e: float) -> np.ndarray:
        return self._get(("gamma", M, float(e)), lambda: gamma_powers(self.f, M, e))

    def envelope_energy(self, s: int, good_of=None, alpha=None, mode=ThresholdMode.THEOREM) -> float:
        """sum_{tau_s} sum_{U in G} mu(U) (avg_U g_tau)^2.

        good_of(c) gives the good-label mask of cap c; otherwise the selection
        is recomputed from f at amplitude alpha in the given mode.
        """
        params = self.params
        p, q = params.p, params.q
        n = p**s
        g = self.g(s)
        mu = q * q / n
        if good_of is None:
            T = envelope_threshold(alpha, self.ntau(s), params, mode)
        total = 0.0
        for c in range(n):
            avg = label_averages(g[c], envelope_labels(params, c, s), n)
            good = good_of(c) if good_of is not None else avg >= T
            total += mu * float(np.sum(avg[good] ** 2))
        return total


def gamma_powers(f: ParabolaFunction, M: int, e: float, direct: Optional[bool] = None) -> np.ndarray:
    """||f_gamma||_e^e (or the sup norm for e = inf) for every small cap at level M."""
    params = f.params
    if direct is None:
        direct = params.q <= DIRECT_GAMMA_MAX_Q
    if not direct or M < params.N:
        return flat_cap_powers(f, M, e)
    out = np.empty(params.p**M)
    for lo, grids in _cap_grid_chunks(f, M, range(params.p**M)):
        mag = np.abs(grids)
        if math.isinf(e):
            out[lo : lo + len(grids)] = mag.max(axis=(1, 2))
        else:
            out[lo : lo + len(grids)] = np.sum(mag**e, axis=(1, 2))
    return out


def _cap_grid_chunks(f: ParabolaFunction, level: int, residues):
    """Yield (offset, grids) for the listed caps, a few at a time."""
    params = f.params
    residues = list(residues)
    rows = cap_coefficients(f, level)
    chunk = max(1, STACK_BUDGET // (params.q * params.q))
    for lo in range(0, len(residues), chunk):
        sel = rows[residues[lo : lo + chunk]]
        yield lo, synth(embed_spectrum(params, sel), params.ring)


# -- norms and bounds ----------------------------------------------------------------

def _parse_exp(x) -> float:
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(x)


def theorem_bound_info(p_exp, q_exp, beta, bold_p: int, R: float) -> dict:
    """Small cap decoupling bound evaluated in log space, with region flags."""
    pe, qe = _parse_exp(p_exp), _parse_exp(q_exp)
    if not (pe >= 1 and qe >= 1) or math.isinf(pe):
        raise LabError("EXPONENT_RANGE", f"need finite p >= 1 and q >= 1, got ({p_exp}, {q_exp})")
    b = float(as_fraction(beta))
    inv_q = 0.0 if math.isinf(qe) else 1.0 / qe
    lnR = math.log(R)
    lnp = math.log(bold_p)
    a1 = b * (pe - pe * inv_q - 1) - 1
    a2 = pe * b * (0.5 - inv_q)
    log_value = (
        math.log(1e6) - 16 * math.log(lnp) + 12 * lnp + (16 + 6 / b) * math.log(lnR) + np.logaddexp(a1 * lnR, a2 * lnR)
    )
    region_ok = 3.0 / pe + inv_q <= 1 + 1e-12
    scale_ok = R >= float(bold_p) ** 32
    value = math.exp(log_value) if log_value < 709 else math.inf
    return {"value": value, "log_value": float(log_value), "region_ok": region_ok, "scale_ok": scale_ok}


def theorem_bound(p_exp, q_exp, beta, bold_p: int, R: float) -> float:
    info = theorem_bound_info(p_exp, q_exp, beta, bold_p, R)
    if not info["region_ok"]:
        warnings.warn("EXPONENT_REGION: 3/p + 1/q > 1, outside the theorem's range", BoundWarning, stacklevel=2)
    if not info["scale_ok"]:
        warnings.warn("SMALL_SCALE: R < bold_p^32, below the theorem's scale condition", BoundWarning, stacklevel=2)
    return info["value"]


def combine_gamma(powers: np.ndarray, p_exp: float, q_exp: float) -> float:
    """(sum_gamma ||f_gamma||_p^q)^{p/q} from the p-th powers; q = inf gives the max."""
    a = np.asarray(powers, dtype=float)
    top = float(a.max()) if a.size else 0.0
    if top == 0:
        return 0.0
    if math.isinf(q_exp):
        return top
    r = q_exp / p_exp
    return top * float(np.sum((a / top) ** r)) ** (1.0 / r)


def decoupling_ratio(f: ParabolaFunction, p_exp, q_exp, beta, direct: Optional[bool] = None) -> float:
    """||f||_p^p / (sum_gamma ||f_gamma||_p^q)^{p/q} over the small caps of width R^-beta."""
    if f.is_zero():
        raise LabError("ZERO_FUNCTION", "ratio undefined for f = 0")
    pe, qe = _parse_exp(p_exp), _parse_exp(q_exp)
    M = small_cap_level(f.params, beta)
    num = lp_power(f.grid, pe)
    den = combine_gamma(gamma_powers(f, M, pe, direct=False if direct is None else direct), pe, qe)
    return num / den


def block_ratio_bound(R: float, beta, p_exp, q_exp) -> float:
    b = float(as_fraction(beta))
    pe, qe = _parse_exp(p_exp), _parse_exp(q_exp)
    inv_q = 0.0 if math.isinf(qe) else 1.0 / qe
    return float(R) ** ((b - 0.5) * (1.0 - 1.0 / pe - inv_q))


# -- helpers -------------------------------------------------------------------------

def _radius(params: ModelParams, j: int) -> float:
    return float(params.p) ** j


def _lowpass(arr, params, j):
    """Keep frequencies with |xi| <= p^j."""
    return bandpass(arr, Annulus.le(_radius(params, j)), params)


def _highpass(arr, params, j):
    return bandpass(arr, Annulus.gt(_radius(params, j)), params)


def _levels(P: Mapping, key: str, lo: int, hi: int) -> list:
    if key in P and P[key] is not None:
        v = int(P[key])
        if not lo <= v <= hi:
            raise LabError("LEVEL_RANGE", f"{key}={v} not in [{lo}, {hi}]")
        return [v]
    return list(range(lo, hi + 1))


def _children(params: ModelParams, parent_level: int, residue: int, child_level: int) -> np.ndarray:
    return np.arange(residue, params.p**child_level, params.p**parent_level)


def _alpha(P: Mapping) -> float:
    a = float(P["alpha"])
    if a <= 0:
        raise LabError("ALPHA_NONPOSITIVE", f"alpha={a}")
    return a


def _require_N(params: ModelParams, n: int, why: str) -> None:
    if params.N < n:
        raise LabError("N_TOO_SMALL", why)


# -- checks ------------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckSpec:
    name: str
    fn: Callable
    requires: tuple = ()
    identity: bool = False
    summary: str = ""


REGISTRY: dict[str, CheckSpec] = {}


def register(name: str, requires: tuple = (), identity: bool = False, summary: str = ""):
    def deco(fn):
        REGISTRY[name] = CheckSpec(name, fn, tuple(requires), identity, summary)
        return fn

    return deco


@register("low_lemma", identity=True, summary="low-passed square functions agree across levels")
def _low_lemma(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p = params.N, params.p
    if "m" in P and P.get("m") is not None:
        m = int(P["m"])
        src = ws.pruned(_alpha(P)).bad_pieces(m)
        what = f"bad parts m={m}"
    else:
        src = ws.theta
        what = "f"
    worst, worst_at, lhs_max, rhs_max = 0.0, None, 0.0, 0.0
    count = 0
    per_level = {}
    for k in _levels(P, "k", 0, N):
        sq_k = np.abs(group_by_parent(src, params, N, k)) ** 2
        lp_k = _lowpass(sq_k, params, -k)
        for s in _levels(P, "s", 0, k):
            if s > k:
                continue
            if s not in per_level:
                per_level[s] = np.abs(group_by_parent(src, params, N, s)) ** 2
            lhs = _lowpass(per_level[s], params, -k)
            rhs = group_by_parent(lp_k, params, k, s)
            diff = float(np.abs(lhs - rhs).max())
            scale = float(np.abs(lhs).max())
            rel = 0.0 if diff == 0 else (diff / scale if scale > 0 else math.inf)
            count += 1
            if worst_at is None or rel > worst:
                worst, worst_at = rel, {"k": k, "s": s}
                lhs_max, rhs_max = scale, float(np.abs(rhs).max())
    return Outcome(lhs_max, rhs_max, 1.0, worst <= tol, identity=True, discrepancy=worst,
                   notes={"instances": count, "worst_at": worst_at, "source": what})


@register("high_lemma_a", summary="high-passed square function splits over level-k caps")
def _high_lemma_a(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for k in _levels(P, "k", 0, N):
        hp = _highpass(ws.g(k), params, k - 2 * N)
        lhs = float(np.sum(hp.sum(axis=0) ** 2))
        rhs = float(np.sum(hp**2))
        t.add(lhs, rhs, 1.0, {"k": k})
    return t.outcome()


@register("high_lemma_b", summary="high-passed |f_tau|^2 overlap bounded by |2|^-1 bold_p^l")
def _high_lemma_b(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    inv2, bp = params.ring.abs2_inv, params.bold_p
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for k in _levels(P, "k", 0, N):
        for l in _levels(P, "l", 0, N):
            if l > k or k + l > N:
                continue
            hp = _highpass(ws.caps_sq(k), params, -(k + l))
            pc = float(inv2 * bp**l)
            lhs = float(np.sum(hp.sum(axis=0) ** 2))
            base = float(np.sum(hp**2))
            t.add(lhs, pc * base, pc, {"k": k, "l": l})
    return t.outcome()


@register("wave_env_high", summary="high part of the level-l square function against low parts")
def _wave_env_high(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    _require_N(params, 2, "needs 1 <= l < N")
    pc = 3.0 * params.bold_p**4 * N
    low_terms = {}
    for k in range(1, N + 1):
        lp = _lowpass(ws.g(k), params, k - 2 * N)
        low_terms[k] = float(np.sum(lp**2))
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for ell in _levels(P, "l", 1, N - 1):
        hp = _highpass(ws.caps_sq(ell).sum(axis=0), params, ell - 2 * N)
        lhs = float(np.sum(hp**2))
        base = sum(low_terms[k] for k in range(ell, N + 1))
        t.add(lhs, pc * base, pc, {"l": ell})
    return t.outcome()


def bilinear_ladders(params: ModelParams) -> list:
    """All (g, d, s) level triples for which distinct caps exist in a common parent."""
    shift = 1 if params.ring.abs2_inv > 1 else 0
    top = 2 * params.N
    out = []
    for g in range(0, top + 1):
        for d in range(g + 1 + shift, top + 1):
            for s in range(d, top + 1):
                out.append((g, d, s))
    return out


@register("bilinear_restriction", summary="bilinear L^2 of separated caps against the level-s square function")
def _bilinear(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    f = ws.f
    p, N, q = params.p, params.N, params.q
    shift = 1 if params.ring.abs2_inv > 1 else 0
    ladders = bilinear_ladders(params)
    for key, pos in (("g", 0), ("d", 1), ("s", 2)):
        if P.get(key) is not None:
            ladders = [x for x in ladders if x[pos] == int(P[key])]
    if not ladders:
        raise LabError("LEVEL_RANGE", "no admissible (g, d, s) ladder for these parameters")
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    by_g: dict = {}
    for g, d, s in ladders:
        by_g.setdefault(g, set()).update((d, s))
    for g, levels in sorted(by_g.items()):
        levels = sorted(levels)
        ds = sorted({d for (gg, d, s) in ladders if gg == g})
        for J in range(p**g):
            S = {}
            pairs = {}
            for lev in levels:
                members = _children(params, g, J, lev)
                acc = np.zeros((q, q))
                need_gram = lev in ds
                vecs = []
                for lo, grids in _cap_grid_chunks(f, lev, members):
                    sq = np.abs(grids) ** 2
                    acc += sq.sum(axis=0)
                    if need_gram:
                        vecs.append(sq.reshape(len(sq), -1))
                S[lev] = float(np.sum(acc**2))
                if need_gram:
                    X = np.concatenate(vecs)
                    G = X @ X.T
                    L = members % p ** (lev - shift)
                    valid = L[:, None] != L[None, :]
                    pairs[lev] = float(G[valid].max()) if np.any(valid) else 0.0
            for gg, d, s in ladders:
                if gg != g:
                    continue
                pc = max(1.0, float(p) ** (2 * (d - g + s - 2 * N)))
                t.add(pairs[d], pc * S[s], pc, {"g": g, "d": d, "s": s, "J": J})
    return t.outcome(ladders=len(ladders))


@register("cordoba_fefferman", summary="L^4 of f against twice the L^2 of the square function")
def _cf(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    lhs = float(np.sum(np.abs(ws.f.grid) ** 4))
    base = ws.sq_energy
    t = Tally(tol, ABS_FLOOR * base)
    t.add(lhs, 2.0 * base, 2.0, {})
    return t.outcome()


@register("wave_env_expansion", requires=("alpha",), summary="low part of the bad square function vs envelope averages")
def _wave_env_expansion(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p, q = params.N, params.p, params.q
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    part = str(P.get("part", "ab"))
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for m in _levels(P, "m", 1, N):
        bad_sq = np.abs(pr.bad_pieces(m)) ** 2
        for k in _levels(P, "k", 0, N):
            gB = group_by_parent(bad_sq, params, N, k)
            lp = _lowpass(gB, params, k - 2 * N)
            n = p**k
            for c in range(n):
                labels = envelope_labels(params, c, k)
                avg = label_averages(gB[c], labels, n)
                a_int = float(np.sum((avg**2)[labels]))
                if "a" in part:
                    t.add(float(np.sum(lp[c] ** 2)), a_int, 1.0, {"part": "a", "m": m, "k": k, "tau": c})
                if "b" in part and k >= m:
                    g_avg = label_averages(ws.g(k)[c], labels, n)
                    good = pr.good[k][c]
                    rhs = (q * q / n) * float(np.sum(g_avg[good] ** 2))
                    t.add(a_int, rhs, 1.0, {"part": "b", "m": m, "k": k, "tau": c})
    return t.outcome(mode="pruning")


@register("case_m0", requires=("alpha",), summary="superlevel part where the low pruning dominates")
def _case_m0(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, q = params.N, params.q
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    lhs = alpha**4 * int(np.count_nonzero(class_mask(pr, 0)))
    base = q * q * float(ws.square_total.mean()) ** 2 if bool(pr.good[0][0][0]) else 0.0
    pc = 4.0 * N**10
    t = Tally(tol, ABS_FLOOR * alpha**4)
    t.add(lhs, pc * base, pc, {})
    return t.outcome(mode="pruning")


def _nonzero_children(ws: Workspace, k: int, ell: int) -> np.ndarray:
    """Number of nonvanishing level-ell caps of f inside each level-k cap."""
    params = ws.params
    nz = cap_norms(ws.f, ell) > NONZERO_CAP_TOL
    return np.bincount(np.arange(params.p**ell) % params.p**k, weights=nz, minlength=params.p**k)


@register("wk_high_dom", requires=("alpha",), summary="pointwise bounds on low and high parts of bad square functions")
def _wk_high_dom(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    C = float(P.get("C", 2.0))
    if C <= 1:
        raise LabError("PARAM_RANGE", "C must exceed 1")
    part = str(P.get("part", "ab"))
    pc_a = 1.0 / (2 * math.e**2 * N**2)
    pc_b = C**2 / (C**2 - 1)
    scale = float(ws.square_total.max())
    t = Tally(tol, ABS_FLOOR * max(scale, alpha**2))
    for m in _levels(P, "m", 1, N):
        bad = pr.bad_pieces(m)
        for ell in range(m, N + 1):
            if P.get("l") is not None and int(P["l"]) != ell:
                continue
            b_sq = np.abs(group_by_parent(bad, params, N, ell)) ** 2
            for k in _levels(P, "k", 0, m - 1):
                T = group_by_parent(b_sq, params, ell, k)
                if "a" in part:
                    nt = ws.ntau(ell)
                    kids = _nonzero_children(ws, k, ell)
                    lp = np.abs(_lowpass(T, params, ell - 2 * N))
                    for c in range(T.shape[0]):
                        base = alpha**2 * kids[c] / nt**2 if nt else 0.0
                        t.add(float(lp[c].max()), pc_a * base, pc_a, {"part": "a", "m": m, "l": ell, "k": k, "tau": c})
                if "b" in part:
                    fk = np.abs(group_by_parent(bad, params, N, k))
                    hp = np.abs(_highpass(T, params, ell - 2 * N))
                    sel = fk >= C * alpha / (math.sqrt(2) * math.e * N)
                    if np.any(sel):
                        lhs_v = T[sel]
                        rhs_v = pc_b * hp[sel]
                        with np.errstate(divide="ignore", invalid="ignore"):
                            r = np.where(rhs_v > 0, lhs_v / rhs_v, np.where(lhs_v > t.floor, np.inf, 0.0))
                        i = int(np.argmax(r))
                        bad_pts = int(np.count_nonzero(~(lhs_v <= rhs_v * (1 + tol) + t.floor)))
                        t.add(float(lhs_v[i]), float(rhs_v[i]), pc_b, {"part": "b", "m": m, "l": ell, "k": k, "points": int(sel.sum())})
                        if bad_pts and lhs_v[i] <= rhs_v[i] * (1 + tol) + t.floor:
                            t.failures += 1
    return t.outcome(mode="pruning", C=C, child_count="nonvanishing")


def _broad_lower(P: Mapping, N: int) -> float:
    if P.get("lower") is not None:
        return float(P["lower"])
    return (1 - 1 / (math.sqrt(2) * math.e * N)) / (math.e * N)


@register("broad_high_dom", requires=("alpha",), summary="bilinear integral over broad sets against high square functions")
def _broad_high_dom(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p = params.N, params.p
    bp = params.bold_p
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    lower = _broad_lower(P, N)
    pc = 4.0 * bp**2
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for m in _levels(P, "m", 1, N):
        bad = pr.bad_pieces(m)
        pieces = {j: group_by_parent(bad, params, N, j) for j in range(N + 1)}
        for k in _levels(P, "k", 1, m):
            if k > m:
                continue
            ell = max(m - 1, k)
            T = group_by_parent(np.abs(pieces[ell]) ** 2, params, ell, k - 1)
            hp = _highpass(T, params, ell - 2 * N)
            mags = np.abs(pieces[k])
            for par in range(p ** (k - 1)):
                base = float(np.sum(hp[par] ** 2))
                a = np.abs(pieces[k - 1][par])
                kids = _children(params, k - 1, par, k)
                for i, r1 in enumerate(kids):
                    for r2 in kids[i + 1 :]:
                        prod = mags[r1] * mags[r2]
                        br = (lower * alpha <= a) & (a <= bp * N * np.sqrt(prod))
                        lhs = float(np.sum(prod[br] ** 2))
                        t.add(lhs, pc * base, pc, {"m": m, "k": k, "pair": [int(r1), int(r2)]})
    return t.outcome(mode="pruning", lower=lower)


@register("narrow_decoupling", requires=("alpha",), summary="narrow sets decouple into children")
def _narrow_decoupling(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p = params.N, params.p
    _require_N(params, 2, "the narrow factor 1 + 1/(N-1) needs N >= 2")
    alpha = _alpha(P)
    pc = (1 + 1 / (N - 1)) ** 4
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for m in _levels(P, "m", 1, N):
        bn = ws.labels(alpha, m)
        for k in _levels(P, "k", 1, N):
            par4 = np.abs(bn.cap_pieces[k - 1]) ** 4
            kid4 = np.abs(bn.cap_pieces[k]) ** 4
            for c in range(p ** (k - 1)):
                nar = bn.narrow[k][c]
                lhs = float(par4[c][nar].sum())
                base = float(sum(kid4[r][nar].sum() for r in _children(params, k - 1, c, k)))
                t.add(lhs, pc * base, pc, {"m": m, "k": k, "tau": c})
    return t.outcome(mode="pruning")


def _pruned_energy(ws: Workspace, pr, s: int) -> float:
    return ws.envelope_energy(s, good_of=lambda c: pr.good[s][c])


@register("narrow_bound", requires=("alpha",), summary="theta-level L^4 of bad parts against theta envelopes")
def _narrow_bound(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    base = _pruned_energy(ws, pr, N)
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for m in _levels(P, "m", 1, N):
        lhs = float(np.sum(np.abs(pr.bad_pieces(m)) ** 4))
        t.add(lhs, base, 1.0, {"m": m})
    return t.outcome(mode="pruning")


@register("broad_bound", requires=("alpha",), summary="L^4 of bad parts on broad sets against envelope sums")
def _broad_bound(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p = params.N, params.p
    _require_N(params, 2, "broad sets are built by the narrow recursion, which needs N >= 2")
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    bp = params.bold_p
    pc = 12.0 * bp**12 * N**5
    energies = [_pruned_energy(ws, pr, s) for s in range(N + 1)]
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for m in _levels(P, "m", 1, N):
        bn = ws.labels(alpha, m)
        base = sum(energies[m:])
        for k in _levels(P, "k", 1, N):
            par4 = np.abs(bn.cap_pieces[k - 1]) ** 4
            lhs = float(sum(par4[c][bn.broad[k][c]].sum() for c in range(p ** (k - 1))))
            t.add(lhs, pc * base, pc, {"m": m, "k": k})
    return t.outcome(mode="pruning")


def _superlevel_lhs(ws: Workspace, alpha: float, e: float = 4) -> float:
    return alpha**e * int(np.count_nonzero(np.abs(ws.f.grid) > alpha))


@register("local_wave_envelope", requires=("alpha",), summary="superlevel estimate with pruned envelope sets")
def _local_wave_envelope(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    alpha = _alpha(P)
    pr = ws.pruned(alpha)
    bp = params.bold_p
    pc = 12.0 * (1 + N**-5.0) ** 10 * bp**12 * N**10
    base = sum(_pruned_energy(ws, pr, s) for s in range(N + 1))
    lhs = _superlevel_lhs(ws, alpha)
    t = Tally(tol, ABS_FLOOR * alpha**4)
    t.add(lhs, pc * base, pc, {})
    alt = 13.0 * (1 + N**-5.0) ** 10 / (1 - 1 / (math.sqrt(2) * math.e * N)) * bp**12 * N**10
    return t.outcome(mode="pruning", final_constant=alt, final_pass=bool(lhs <= alt * base * (1 + tol) + t.floor))


@register("theorem_wave_envelope", requires=("alpha",), summary="superlevel estimate with the good envelopes of f")
def _theorem_wave_envelope(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    alpha = _alpha(P)
    bp = params.bold_p
    lnR = math.log(params.R)
    pc = 13.0 * bp**12 * lnR**10
    base = sum(ws.envelope_energy(s, alpha=alpha, mode=ThresholdMode.THEOREM) for s in range(N + 1))
    lhs = _superlevel_lhs(ws, alpha)
    t = Tally(tol, ABS_FLOOR * alpha**4)
    t.add(lhs, pc * base, pc, {})
    readings = {
        "natural_log": pc,
        "base_p_log": 13.0 * bp**12 * (2 * N) ** 10,
        "local_constant": 12.0 * (1 + N**-5.0) ** 10 * bp**12 * N**10,
    }
    passes = {k: bool(lhs <= c * base * (1 + tol) + t.floor) for k, c in readings.items()}
    return t.outcome(mode="theorem", readings=readings, reading_pass=passes)


def _gamma_counts(ws: Workspace, M: int):
    params = ws.params
    nz = cap_norms(ws.f, M) > NONZERO_CAP_TOL
    return nz


@register("partial_prop", requires=("alpha", "beta", "p_exp"), summary="envelope sum of one cap against small cap norms")
def _partial_prop(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p, q = params.N, params.p, params.q
    alpha = _alpha(P)
    pe = float(P["p_exp"])
    if pe < 4:
        raise LabError("PARAM_RANGE", "partial_prop needs p_exp >= 4")
    M = small_cap_level(params, P["beta"])
    nz = _gamma_counts(ws, M)
    sup = ws.gamma_powers(M, math.inf)
    lam = float(sup.max()) if sup.size else 0.0
    pw = ws.gamma_powers(M, pe)
    l2 = ws.gamma_powers(M, 2.0)
    if P.get("c_p") is not None:
        cp = float(P["c_p"])
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(nz & (pw > 0), l2 * lam ** (pe - 2) / np.where(pw > 0, pw, 1), 0.0)
        cp = max(1.0, float(r.max()) if r.size else 1.0)
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    gam = np.arange(p**M)
    for k in _levels(P, "k", 0, N):
        ntau = ws.ntau(k)
        if ntau == 0:
            continue
        T = envelope_threshold(alpha, ntau, params, ThresholdMode.THEOREM)
        Lk = min(M, 2 * N - k)
        n = p**k
        mu = q * q / n
        g = ws.g(k)
        for c in range(n):
            avg = label_averages(g[c], envelope_labels(params, c, k), n)
            lhs = mu * float(np.sum(avg[avg >= T] ** 2))
            inside = nz & (gam % n == c)
            n_tau = int(inside.sum())
            if n_tau == 0:
                t.add(lhs, 0.0, cp, {"k": k, "tau": c})
                continue
            per_gk = np.bincount(gam[inside] % p**Lk, minlength=p**Lk)
            mx = int(per_gk.max())
            base = (math.sqrt(2) * math.e * N * ntau / alpha) ** (pe - 4) * (mx * n_tau) ** (pe / 2 - 1) * float(pw[inside].sum())
            t.add(lhs, cp * base, cp, {"k": k, "tau": c})
    return t.outcome(mode="theorem", c_p=cp, lam=lam)


def critical_pair(beta) -> tuple[float, float]:
    b = float(as_fraction(beta))
    pe = 2 + 2 / b
    qe = pe / (2 / b - 1)
    return pe, qe


@register("critical_superlevel", requires=("alpha", "beta"), summary="superlevel estimate at the critical exponent pair")
def _critical_superlevel(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    from .uniformize import theta_sup

    params = ws.params
    N = params.N
    R = params.R
    alpha = _alpha(P)
    if not R**-0.5 * (1 - 1e-12) <= alpha <= R**0.5 * (1 + 1e-12):
        raise LabError("PARAM_RANGE", f"alpha must lie in [R^-1/2, R^1/2], got {alpha}")
    b = float(as_fraction(P["beta"]))
    pe, qe = critical_pair(P["beta"])
    M = small_cap_level(params, P["beta"])
    sup = theta_sup(ws.f)
    if sup == 0:
        raise LabError("ZERO_FUNCTION", "cannot normalize f = 0")
    fn = ws.f.scaled(1.0 / sup)
    lhs = alpha**pe * int(np.count_nonzero(np.abs(fn.grid) > alpha))
    S = combine_gamma(gamma_powers(fn, M, pe), pe, qe)
    lnR = math.log(R)
    e1 = b * (pe - pe / qe - 1) - 1
    e2 = b * (pe / 2 - pe / qe)
    pre = params.bold_p**12 * N ** (2 * pe - 2) * lnR ** (pe + 2)
    pc = pre * max(R**e1, R**e2)
    t = Tally(tol, ABS_FLOOR * alpha**pe)
    t.add(lhs, pc * S, pc, {})
    sum_c = pre * (R**e1 + R**e2)
    return t.outcome(normalized_by=sup, p_crit=pe, q_crit=qe, sum_constant=sum_c,
                     sum_pass=bool(lhs <= sum_c * S * (1 + tol) + t.floor), implied_constant=1.0)


@register("d44_bound", requires=("beta",), summary="L^4 decoupling into small caps")
def _d44(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N = params.N
    b = float(as_fraction(P["beta"]))
    M = small_cap_level(params, P["beta"])
    lhs = float(np.sum(np.abs(ws.f.grid) ** 4))
    base = float(ws.gamma_powers(M, 4.0).sum())
    pc = 8 * math.e**4 * params.bold_p**5 * N**8 * params.R**b
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    t.add(lhs, pc * base, pc, {})
    return t.outcome()


@register("flat_decoupling", requires=("beta",), summary="L^4 of a flat cap against its small caps")
def _flat_decoupling(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    N, p = params.N, params.p
    M = small_cap_level(params, P["beta"])
    gam = ws.gamma_powers(M, 4.0)
    t = Tally(tol, ABS_FLOOR * ws.sq_energy)
    for j in _levels(P, "j", N, M):
        caps4 = ws.gamma_powers(j, 4.0)
        pc = float(p) ** (2 * (M - j))
        per_cap = np.bincount(np.arange(p**M) % p**j, weights=gam, minlength=p**j)
        for c in range(p**j):
            t.add(float(caps4[c]), pc * float(per_cap[c]), pc, {"j": j, "cap": c})
    return t.outcome()


@register("smallcap_decoupling", requires=("p_exp", "q_exp", "beta"), summary="decoupling ratio against the closed-form bound")
def _smallcap(ws: Workspace, P: Mapping, tol: float) -> Outcome:
    params = ws.params
    pe, qe = _parse_exp(P["p_exp"]), _parse_exp(P["q_exp"])
    if ws.f.is_zero():
        raise LabError("ZERO_FUNCTION", "ratio undefined for f = 0")
    M = small_cap_level(params, P["beta"])
    ratio = lp_power(ws.f.grid, pe) / combine_gamma(ws.gamma_powers(M, pe), pe, qe)
    info = theorem_bound_info(pe, qe, P["beta"], params.bold_p, params.R)
    bound = info["value"]
    t = Tally(tol)
    t.add(ratio, bound, bound, {})
    return t.outcome(region_ok=info["region_ok"], scale_ok=info["scale_ok"], log_bound=info["log_value"])


# -- runner --------------------------------------------------------------------------

def check_names() -> list[str]:
    return list(REGISTRY)


def run_check(name: str, f: ParabolaFunction, params: Optional[Mapping] = None,
              workspace: Optional[Workspace] = None) -> VerificationReport:
    if name not in REGISTRY:
        raise LabError("UNKNOWN_CHECK", f"no check named {name!r}")
    spec = REGISTRY[name]
    P = dict(params or {})
    missing = [k for k in spec.requires if P.get(k) is None]
    if missing:
        raise LabError("PARAM_MISSING", f"{name} needs {', '.join(missing)}")
    tol = float(P["tol"]) if P.get("tol") is not None else (IDENTITY_TOL if spec.identity else INEQUALITY_TOL)
    ws = workspace if workspace is not None else Workspace(f)
    if ws.f is not f:
        raise ValueError("workspace belongs to a different function")
    t0 = time.perf_counter()
    out = spec.fn(ws, P, tol)
    wall = time.perf_counter() - t0
    mp = f.params
    beta = P.get("beta")
    return VerificationReport(
        check_name=name,
        field=mp.kind.value,
        p=mp.p,
        N=mp.N,
        beta=None if beta is None else str(as_fraction(beta)),
        p_exp=None if P.get("p_exp") is None else _parse_exp(P["p_exp"]),
        q_exp=None if P.get("q_exp") is None else _parse_exp(P["q_exp"]),
        ensemble=P.get("ensemble"),
        seed=P.get("seed"),
        alpha=None if P.get("alpha") is None else float(P["alpha"]),
        lhs=out.lhs,
        rhs=out.rhs,
        paper_constant=out.paper_constant,
        tightest_constant=tightest(out.lhs, out.rhs, out.paper_constant),
        passed=bool(out.passed),
        tol=tol,
        wall_time=wall,
        params={k: v for k, v in P.items() if k not in ("ensemble", "seed", "alpha", "beta", "p_exp", "q_exp", "tol")},
        notes=out.notes,
        discrepancy=out.discrepancy,
    )


def summarize(reports) -> list[dict]:
    """Per check: number of reports, max tightest constant, pass rate."""
    rows: dict = {}
    for r in reports:
        rec = r.to_record() if isinstance(r, VerificationReport) else r
        row = rows.setdefault(rec["check_name"], {"check": rec["check_name"], "trials": 0, "passed": 0, "max_tightest": 0.0})
        row["trials"] += 1
        row["passed"] += bool(rec["pass"])
        tc = rec["tightest_constant"]
        tc = math.inf if tc == "inf" else float(tc)
        row["max_tightest"] = max(row["max_tightest"], tc)
    for row in rows.values():
        row["pass_rate"] = row["passed"] / row["trials"] if row["trials"] else 1.0
    return list(rows.values())
