"""Square functions, spectral annuli, pruning of wave envelopes, and broad/narrow labels.

Frequencies xi in (Z/q)^2 have norm |xi| = p^-v(xi) with
v(xi) = min(v(xi1), v(xi2)) and v(0) = 2N, so the zero frequency stands for
the ball of radius 1/R.  A low-pass at radius p^-t keeps v(xi) >= t.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .caps import (
    Cap,
    Envelope,
    ThresholdMode,
    cap_grids,
    cap_norms,
    caps_at_level,
    envelope_labels,
    envelope_threshold,
    label_averages,
)
from .errors import LabError
from .fourier import analyze, synth
from .parabola import ModelParams, ParabolaFunction, SpatialFunction, squares

NONE_CLASS = -1
CLASS_SLACK = 1e-12


# -- spectral annuli -----------------------------------------------------------

@functools.lru_cache(maxsize=None)
def frequency_valuation(params: ModelParams) -> np.ndarray:
    """v(xi) on the frequency grid; |xi| = p^-v."""
    v1 = params.ring.valuation(np.arange(params.q))
    out = np.minimum(v1[:, None], v1[None, :])
    out.setflags(write=False)
    return out


def radius_exponent(params: ModelParams, r: float) -> Optional[float]:
    """j with r = p^j; None for r = 0 and +inf for r = inf."""
    if r == 0:
        return None
    if math.isinf(r):
        return math.inf
    if r < 0:
        raise LabError("RADIUS_NOT_IN_RANGE", f"radius {r} is negative")
    j = math.log(r) / math.log(params.p)
    if abs(j - round(j)) > 1e-9:
        raise LabError("RADIUS_NOT_IN_RANGE", f"radius {r} is not a power of {params.p}")
    return float(round(j))


@dataclass(frozen=True)
class Annulus:
    """Frequencies with lo < |xi| <= hi."""

    lo: float = 0.0
    hi: float = math.inf

    @classmethod
    def le(cls, r: float) -> "Annulus":
        return cls(0.0, r)

    @classmethod
    def gt(cls, r: float) -> "Annulus":
        return cls(r, math.inf)

    def mask(self, params: ModelParams) -> np.ndarray:
        v = frequency_valuation(params)
        keep = np.ones(v.shape, dtype=bool)
        jhi = radius_exponent(params, self.hi)
        jlo = radius_exponent(params, self.lo)
        if jhi is None:
            return np.zeros(v.shape, dtype=bool)
        if not math.isinf(jhi):
            keep &= v >= -jhi
        if jlo is not None:
            if math.isinf(jlo):
                return np.zeros(v.shape, dtype=bool)
            keep &= v < -jlo
        return keep


def bandpass(g, annulus: Annulus, params: Optional[ModelParams] = None):
    """Exact Fourier multiplier by the annulus indicator.

    Accepts a SpatialFunction or a raw array whose last two axes are the grid
    (stacks are transformed in one go).  Real input gives real output.
    """
    if isinstance(g, SpatialFunction):
        out = bandpass(g.grid, annulus, g.params)
        return SpatialFunction(g.params, out)
    if params is None:
        raise TypeError("params required for raw arrays")
    arr = np.asarray(g)
    keep = annulus.mask(params)
    spec = analyze(arr, params.ring) * keep
    out = synth(spec, params.ring)
    return out.real if not np.iscomplexobj(arr) else out


def low_pass(g, r: float, params: Optional[ModelParams] = None):
    return bandpass(g, Annulus.le(r), params)


def high_pass(g, r: float, params: Optional[ModelParams] = None):
    return bandpass(g, Annulus.gt(r), params)


# -- square functions ------------------------------------------------------------

def group_by_parent(pieces: np.ndarray, params: ModelParams, child_level: int, parent_level: int) -> np.ndarray:
    """Sum a stack indexed by caps at child_level into their parents at parent_level."""
    n = params.p**parent_level
    out = np.zeros((n,) + pieces.shape[1:], dtype=pieces.dtype)
    for r in range(pieces.shape[0]):
        out[r % n] += pieces[r]
    return out


def square_function(f: ParabolaFunction, k: int, per_cap: bool = False):
    """sum_{theta < tau} |f_theta|^2 for every tau at level k (or summed over tau)."""
    params = f.params
    if not 0 <= k <= params.N:
        raise LabError("LEVEL_RANGE", f"level {k} not in [0, {params.N}]")
    sq = np.abs(cap_grids(f, params.N)) ** 2
    per = group_by_parent(sq, params, params.N, k)
    if per_cap:
        return per
    return SpatialFunction(params, per.sum(axis=0))


# -- pruning ---------------------------------------------------------------------

@dataclass
class PruningResult:
    """Outcome of pruning f at amplitude alpha.

    masks[k, r] is the indicator grid by which f_theta (theta with residue r)
    is multiplied to give f_{k,theta}; good[k][c] marks the good envelopes
    (by label) of the level-k cap with residue c.
    """

    params: ModelParams
    alpha: float
    mode: ThresholdMode
    f: ParabolaFunction
    theta_grids: np.ndarray
    masks: np.ndarray
    good: list
    ntau: list
    thresholds: list

    @property
    def N(self) -> int:
        return self.params.N

    def pieces(self, k: int) -> np.ndarray:
        """f_{k,theta} for every theta, shape (#theta, q, q)."""
        return np.where(self.masks[k], self.theta_grids, 0)

    def bad_pieces(self, k: int) -> np.ndarray:
        """f^B_{k,theta} = f_{k,theta} - f_{k-1,theta} for 1 <= k <= N."""
        if not 1 <= k <= self.N:
            raise LabError("LEVEL_RANGE", f"bad parts exist for 1 <= k <= N, got {k}")
        return np.where(self.masks[k] & ~self.masks[k - 1], self.theta_grids, 0)

    def f_level(self, k: int) -> np.ndarray:
        return self.pieces(k).sum(axis=0)

    def f_bad(self, m: int) -> np.ndarray:
        return self.bad_pieces(m).sum(axis=0)

    def good_envelopes(self, k: int, residue: int) -> list[Envelope]:
        cap = Cap(self.params, k, residue)
        return [Envelope(cap, k, int(j)) for j in np.flatnonzero(self.good[k][residue])]

    def superlevel(self) -> np.ndarray:
        return np.abs(self.f.grid) > self.alpha

    def v_alpha(self) -> np.ndarray:
        c = 1.0 - 1.0 / (math.sqrt(2.0) * math.e * self.N)
        return np.abs(self.f_level(self.N)) > c * self.alpha

    def spectrum_leak(self) -> float:
        """Largest off-theta spectral mass fraction over all pruned pieces."""
        params = self.params
        q, nth = params.q, self.theta_grids.shape[0]
        allowed = np.zeros((nth, q, q), dtype=bool)
        a = np.arange(q)
        allowed[a % nth, a, squares(params)] = True
        worst = 0.0
        for k in range(self.N + 1):
            spec = analyze(self.pieces(k), params.ring)
            power = np.abs(spec) ** 2
            tot = power.sum(axis=(1, 2))
            off = np.where(allowed, 0, power).sum(axis=(1, 2))
            ok = tot > 0
            if np.any(ok):
                worst = max(worst, float(np.max(off[ok] / tot[ok])))
        return worst

    def telescoping_error(self) -> float:
        top = self.pieces(self.N)
        rebuilt = self.pieces(0) + sum(self.bad_pieces(k) for k in range(1, self.N + 1))
        scale = max(float(np.abs(top).max()), 1e-300)
        return float(np.abs(rebuilt - top).max() / scale)

    def monotonicity_violation(self) -> float:
        """max over points of |f_{k,theta}| - |f_{k+1,theta}| and |f_{N,theta}| - |f_theta| (should be <= 0)."""
        worst = -math.inf
        prev = np.abs(self.theta_grids)
        for k in range(self.N, -1, -1):
            cur = np.abs(self.pieces(k))
            worst = max(worst, float((cur - prev).max()))
            prev = cur
        return worst

    def containment_violations(self) -> int:
        """Number of points in U_alpha outside V_alpha."""
        return int(np.count_nonzero(self.superlevel() & ~self.v_alpha()))


def prune(f: ParabolaFunction, alpha: float, mode=ThresholdMode.PRUNING) -> PruningResult:
    """Prune f at amplitude alpha, from the theta level down to level 0."""
    if alpha <= 0:
        raise LabError("ALPHA_NONPOSITIVE", f"alpha={alpha}")
    mode = ThresholdMode.parse(mode)
    params = f.params
    p, N, q = params.p, params.N, params.q
    grids = cap_grids(f, N)
    nth = p**N
    masks = np.zeros((N + 1, nth, q, q), dtype=bool)
    good: list = [None] * (N + 1)
    ntau = [int(np.count_nonzero(cap_norms(f, k) > 1e-12)) for k in range(N + 1)]
    thresholds = [envelope_threshold(alpha, ntau[k], params, mode) for k in range(N + 1)]
    current = np.ones((nth, q, q), dtype=bool)
    for k in range(N, -1, -1):
        ncap = p**k
        good[k] = {}
        sq = np.abs(np.where(current, grids, 0)) ** 2
        per_cap = group_by_parent(sq, params, N, k)
        new = np.zeros_like(current)
        for c in range(ncap):
            labels = envelope_labels(params, c, k)
            avg = label_averages(per_cap[c], labels, p**k)
            ok = avg >= thresholds[k]
            good[k][c] = ok
            inside = ok[labels]
            for r in range(c, nth, ncap):
                new[r] = current[r] & inside
        masks[k] = new
        current = new
    return PruningResult(params, float(alpha), mode, f, grids, masks, good, ntau, thresholds)


def classify_pruning_levels(pr: PruningResult) -> np.ndarray:
    """Smallest m whose defining inequality holds at each point of V_alpha; NONE_CLASS elsewhere."""
    N = pr.N
    fN = np.abs(pr.f_level(N))
    inV = pr.v_alpha()
    cls = np.full(fN.shape, NONE_CLASS, dtype=np.int64)
    unset = inV.copy()
    f0 = np.abs(pr.f_level(0))
    hit = unset & (f0 * (1 + CLASS_SLACK) >= fN / (N**5 + 1))
    cls[hit] = 0
    unset &= ~hit
    c = 1.0 / (N * (1.0 + N**-5.0))
    for m in range(1, N + 1):
        fb = np.abs(pr.f_bad(m))
        hit = unset & (fb * (1 + CLASS_SLACK) >= c * fN)
        cls[hit] = m
        unset &= ~hit
    return cls


def class_mask(pr: PruningResult, m: int) -> np.ndarray:
    """U_alpha^m itself (points may belong to several of these sets)."""
    N = pr.N
    fN = np.abs(pr.f_level(N))
    inV = pr.v_alpha()
    if m == 0:
        return inV & (np.abs(pr.f_level(0)) >= fN / (N**5 + 1))
    return inV & (np.abs(pr.f_bad(m)) >= fN / (N * (1.0 + N**-5.0)))


# -- broad / narrow ----------------------------------------------------------------

def top_two(mags: np.ndarray, params: ModelParams, child_level: int, parent_level: int):
    """For each parent cap, the largest and second largest child magnitude at each point."""
    n = params.p**parent_level
    shape = (n,) + mags.shape[1:]
    first = np.zeros(shape)
    second = np.zeros(shape)
    for r in range(mags.shape[0]):
        c = r % n
        v = mags[r]
        bigger = v > first[c]
        second[c] = np.where(bigger, first[c], np.maximum(second[c], v))
        first[c] = np.where(bigger, v, first[c])
    return first, second


@dataclass
class BroadNarrowLabels:
    """Broad/narrow classification of the level-m bad part.

    cap_pieces[j] holds f^B_{m,tau_j} for every tau_j; broad_cond[j] marks the
    points where tau_j is bilinearly dominated by two distinct children;
    narrow[k] / broad[k] (1 <= k <= N) are Narrow_{k,m}(tau_{k-1}) and
    Broad_{k,m}(tau_{k-1}) indexed by tau_{k-1}.
    """

    params: ModelParams
    m: int
    alpha: float
    u_m: np.ndarray
    cap_pieces: list
    largest: list
    second: list
    broad_cond: list
    narrow_cond: list
    narrow: dict
    broad: dict

    def lemma_violations(self) -> int:
        """Points where neither alternative of the narrow lemma holds, over all caps and levels."""
        bad = 0
        for j in range(self.params.N):
            bad += int(np.count_nonzero(~(self.broad_cond[j] | self.narrow_cond[j])))
        return bad

    def partition_ok(self) -> bool:
        """Broad and narrow at each step split the surviving set exactly."""
        p, N = self.params.p, self.params.N
        prev = self.u_m[None]
        for k in range(1, N + 1):
            n_prev = p ** (k - 1)
            surv = np.stack([prev[r % max(prev.shape[0], 1)] for r in range(n_prev)])
            if np.any(self.broad[k] & self.narrow[k]) or np.any((self.broad[k] | self.narrow[k]) != surv):
                return False
            # survivors for the next step: Narrow_k(parent of tau_k)
            prev = np.stack([self.narrow[k][r % n_prev] for r in range(p**k)])
        return True

    def broad_set(self, k: int, residue: int, other: int, lower: Optional[float] = None) -> np.ndarray:
        """Br^m_alpha(tau_k, tau_k') for distinct siblings, lower amplitude constant selectable."""
        params = self.params
        N, bp = params.N, params.bold_p
        if lower is None:
            lower = (1 - 1 / (math.sqrt(2) * math.e * N)) / (math.e * N)
        parent = residue % params.p ** (k - 1)
        a = np.abs(self.cap_pieces[k - 1][parent])
        prod = np.sqrt(np.abs(self.cap_pieces[k][residue]) * np.abs(self.cap_pieces[k][other]))
        return (lower * self.alpha <= a) & (a <= bp * N * prod)


def broad_narrow(pr: PruningResult, m: int, alpha: Optional[float] = None) -> BroadNarrowLabels:
    params = pr.params
    p, N = params.p, params.N
    if N < 2:
        raise LabError("N_TOO_SMALL", "the narrow factor 1 + 1/(N-1) needs N >= 2")
    if not 1 <= m <= N:
        raise LabError("LEVEL_RANGE", f"m={m} not in [1, {N}]")
    alpha = pr.alpha if alpha is None else alpha
    bad = pr.bad_pieces(m)
    pieces = [group_by_parent(bad, params, N, j) for j in range(N + 1)]
    mags = [np.abs(x) for x in pieces]
    bp = params.bold_p
    narrow_factor = 1.0 + 1.0 / (N - 1)
    largest, second, bcond, ncond = [], [], [], []
    for j in range(N):
        first, sec = top_two(mags[j + 1], params, j + 1, j)
        largest.append(first)
        second.append(sec)
        bcond.append(mags[j] <= bp * N * np.sqrt(first * sec))
        ncond.append(mags[j] <= narrow_factor * first)
    u_m = class_mask(pr, m)
    narrow, broad = {}, {}
    survivors = u_m[None]
    for k in range(1, N + 1):
        n_prev = p ** (k - 1)
        # survivors indexed by tau_{k-1}: Narrow_{k-1}(parent), or U^m for k = 1
        surv = np.stack([survivors[r % survivors.shape[0]] for r in range(n_prev)])
        broad[k] = surv & bcond[k - 1]
        narrow[k] = surv & ~bcond[k - 1]
        survivors = narrow[k]
    return BroadNarrowLabels(params, m, float(alpha), u_m, pieces, largest, second, bcond, ncond, narrow, broad)
