"""Frequency caps, their dual wave-envelope tilings, and good-envelope selection.

A cap at level m is the set of frequencies a with a = c (mod uniformizer^m);
it has width p^-m.  Canonical caps tau_k live at levels 0..N, the caps theta
at level N, and small caps gamma at level M = 2N*beta.

The envelope tiling of a cap with anchor a at envelope level L is the set of
cosets of H = {u : u1 + 2a*u2 = 0 mod uniformizer^L}.  There are p^L cosets,
each of measure q^2 / p^L; for a canonical cap tau_k the standard level is
L = k, giving the R x R/R_k boxes.  Cosets are labelled by the residue of
u1 + 2a*u2, so a tiling is one integer label grid.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .errors import LabError
from .fourier import synth
from .localfield import Kind
from .parabola import ModelParams, ParabolaFunction, SpatialFunction, coordinates, embed_spectrum

NONZERO_CAP_TOL = 1e-12


class ThresholdMode(enum.Enum):
    THEOREM = "theorem"
    PRUNING = "pruning"

    @classmethod
    def parse(cls, value) -> "ThresholdMode":
        return value if isinstance(value, ThresholdMode) else cls(str(value).lower())


@dataclass(frozen=True)
class Cap:
    params: ModelParams
    level: int
    residue: int

    @property
    def anchor(self) -> int:
        return self.residue

    @property
    def diam(self) -> float:
        return float(self.params.p) ** (-self.level)

    @property
    def modulus(self) -> int:
        return self.params.p**self.level

    def contains(self, a) -> np.ndarray:
        return np.asarray(a) % self.modulus == self.residue

    def members(self) -> np.ndarray:
        return np.flatnonzero(self.contains(np.arange(self.params.q)))

    def parent(self, level: int) -> "Cap":
        if not 0 <= level <= self.level:
            raise LabError("LEVEL_RANGE", f"parent level {level} not in [0, {self.level}]")
        return Cap(self.params, level, self.residue % self.params.p**level)

    def children(self, level: Optional[int] = None) -> list["Cap"]:
        level = self.level + 1 if level is None else level
        return [c for c in caps_at_level(self.params, level) if c.residue % self.modulus == self.residue]

    def precedes(self, other: "Cap") -> bool:
        """self is contained in other (the refinement order)."""
        return other.level <= self.level and self.residue % other.modulus == other.residue

    def __repr__(self) -> str:
        return f"Cap(level={self.level}, residue={self.residue})"


def _check_level(params: ModelParams, m: int, top: Optional[int] = None) -> None:
    top = 2 * params.N if top is None else top
    if not 0 <= m <= top:
        raise LabError("LEVEL_RANGE", f"level {m} not in [0, {top}]")


def caps_at_level(params: ModelParams, m: int) -> list[Cap]:
    _check_level(params, m)
    return [Cap(params, m, c) for c in range(params.p**m)]


def cap_labels(params: ModelParams, m: int) -> np.ndarray:
    """Residue (cap index) of every frequency at level m."""
    _check_level(params, m)
    return np.arange(params.q) % params.p**m


def as_fraction(beta) -> Fraction:
    if isinstance(beta, Fraction):
        return beta
    if isinstance(beta, str):
        return Fraction(beta)
    return Fraction(beta).limit_denominator(10**6)


def small_cap_level(params: ModelParams, beta) -> int:
    """M = 2N*beta, which must be an integer with beta in [1/2, 1]."""
    b = as_fraction(beta)
    if not Fraction(1, 2) <= b <= 1:
        raise LabError("BETA_NOT_REPRESENTABLE", f"beta={beta} must lie in [1/2, 1]")
    M = 2 * params.N * b
    if M.denominator != 1:
        raise LabError("BETA_NOT_REPRESENTABLE", f"2N*beta = {float(M):g} is not an integer")
    return int(M)


def representable_betas(params: ModelParams) -> list[Fraction]:
    return [Fraction(M, 2 * params.N) for M in range(params.N, 2 * params.N + 1)]


def small_cap_partition(params: ModelParams, beta) -> list[Cap]:
    return caps_at_level(params, small_cap_level(params, beta))


# -- envelopes ---------------------------------------------------------------

def envelope_labels(params: ModelParams, anchor: int, level: int) -> np.ndarray:
    """Label grid: residue of u1 + 2*anchor*u2 modulo uniformizer^level."""
    # the labels only see the anchor modulo uniformizer^level
    return _envelope_labels(params, int(anchor) % params.p**level, level)


@functools.lru_cache(maxsize=512)
def _envelope_labels(params: ModelParams, anchor: int, level: int) -> np.ndarray:
    ring = params.ring
    u1, u2 = coordinates(params)
    two_a = ring.scale(2, anchor)
    if ring.kind is Kind.INT_MOD:
        v = (u1 + int(two_a) * u2) % params.q
    else:
        v = ring.add(u1, ring.mul(two_a, u2))
    lab = (v % params.p**level).astype(np.int32)
    lab.setflags(write=False)
    return lab


@dataclass(frozen=True)
class Envelope:
    cap: Cap
    level: int
    label: int

    @property
    def params(self) -> ModelParams:
        return self.cap.params

    @property
    def measure(self) -> int:
        return self.params.q**2 // self.params.p**self.level

    def mask(self) -> np.ndarray:
        return envelope_labels(self.params, self.cap.anchor, self.level) == self.label

    def contains(self, u1: int, u2: int) -> bool:
        ring = self.params.ring
        v = ring.add(u1, ring.mul(ring.scale(2, self.cap.anchor), u2))
        return int(v) % self.params.p**self.level == self.label


def envelope_tiling(cap: Cap, level: Optional[int] = None) -> list[Envelope]:
    """All p^level envelopes of the cap; level defaults to the cap's own level (which must be <= N)."""
    if level is None:
        _check_level(cap.params, cap.level, cap.params.N)
        level = cap.level
    _check_level(cap.params, level)
    return [Envelope(cap, level, j) for j in range(cap.params.p**level)]


def label_averages(values: np.ndarray, labels: np.ndarray, count: int) -> np.ndarray:
    """Mean of `values` over each label class (classes all have equal size)."""
    flat = labels.ravel()
    size = values.size // count
    v = np.asarray(values).ravel()
    if np.iscomplexobj(v):
        re = np.bincount(flat, weights=v.real, minlength=count)
        im = np.bincount(flat, weights=v.imag, minlength=count)
        return (re + 1j * im) / size
    return np.bincount(flat, weights=v, minlength=count) / size


def average_over_tiling(values: np.ndarray, cap: Cap, level: Optional[int] = None) -> np.ndarray:
    """The averaging operator A_U applied pointwise: each point gets its coset mean."""
    level = cap.level if level is None else level
    labels = envelope_labels(cap.params, cap.anchor, level)
    avg = label_averages(values, labels, cap.params.p**level)
    return avg[labels]


def coset_average(g, U: Envelope) -> complex:
    vals = g.grid if isinstance(g, (SpatialFunction, ParabolaFunction)) else np.asarray(g)
    out = vals[U.mask()].mean()
    return complex(out) if np.iscomplexobj(out) else float(out)


# -- per-cap pieces ----------------------------------------------------------

def cap_coefficients(f: ParabolaFunction, level: int) -> np.ndarray:
    """Row r holds the coefficients of f restricted to the level cap with residue r."""
    p, q = f.params.p, f.params.q
    n = p**level
    out = np.zeros((n, q), dtype=complex)
    a = np.arange(q)
    out[a % n, a] = f.coeffs
    return out


def cap_norms(f: ParabolaFunction, level: int) -> np.ndarray:
    return np.linalg.norm(cap_coefficients(f, level), axis=1)


def count_nonzero_caps(f: ParabolaFunction, level: int) -> int:
    return int(np.count_nonzero(cap_norms(f, level) > NONZERO_CAP_TOL))


def cap_grids(f: ParabolaFunction, level: int) -> np.ndarray:
    """Spatial grids of every cap projection f_tau at the level, shape (p^level, q, q)."""
    params = f.params
    rows = cap_coefficients(f, level)
    out = np.empty((rows.shape[0], params.q, params.q), dtype=complex)
    for r in range(rows.shape[0]):
        if np.any(rows[r]):
            out[r] = synth(embed_spectrum(params, rows[r]), params.ring)
        else:
            out[r] = 0
    return out


def flat_cap_profiles(f: ParabolaFunction, level: int) -> np.ndarray:
    """For caps at level >= N: row r is v -> f_cap(v, 0), a 1-D synthesis.

    On a flat cap the quadratic term is constant, so |f_cap(u1, u2)| equals
    |f_cap(u1 + 2a*u2, 0)| and every fibre of u -> u1 + 2a*u2 has q points.
    """
    if level < f.params.N:
        raise LabError("LEVEL_RANGE", "flat-cap profiles need level >= N")
    return synth(cap_coefficients(f, level), f.params.ring, ndim=1)


def flat_cap_powers(f: ParabolaFunction, level: int, e: float) -> np.ndarray:
    """||f_cap||_e^e for every cap at a level >= N."""
    h = np.abs(flat_cap_profiles(f, level))
    if math.isinf(e):
        return h.max(axis=1)
    return f.params.q * np.sum(h**e, axis=1)


# -- good envelopes ------------------------------------------------------------

def envelope_threshold(alpha: float, ntau: int, params: ModelParams, mode) -> float:
    """Lower bound on the envelope average that makes an envelope good."""
    mode = ThresholdMode.parse(mode)
    if ntau == 0:
        return math.inf
    if mode is ThresholdMode.THEOREM:
        # (e^2/2) (log R / log bold_p)^2 * avg >= alpha^2 / ntau^2
        ratio = math.log(params.R) / math.log(params.bold_p)
        return alpha**2 / ntau**2 * 2.0 / (math.e**2 * ratio**2)
    return alpha**2 / (2.0 * math.e**2 * ntau**2)


def good_labels(square_fn: np.ndarray, cap: Cap, threshold: float, level: Optional[int] = None) -> np.ndarray:
    """Boolean per envelope label: is the coset average of square_fn at least threshold."""
    level = cap.level if level is None else level
    labels = envelope_labels(cap.params, cap.anchor, level)
    avg = label_averages(square_fn, labels, cap.params.p**level)
    return avg >= threshold


def good_envelopes(f: ParabolaFunction, cap: Cap, alpha: float, threshold_mode=ThresholdMode.THEOREM) -> list[Envelope]:
    """Envelopes U of the cap's tiling with avg_U sum_{theta < cap} |f_theta|^2 above the threshold."""
    if alpha <= 0:
        raise LabError("ALPHA_NONPOSITIVE", f"alpha={alpha}")
    params = f.params
    _check_level(params, cap.level, params.N)
    ntau = count_nonzero_caps(f, cap.level)
    if ntau == 0:
        return []
    T = envelope_threshold(alpha, ntau, params, threshold_mode)
    thetas = [t for t in caps_at_level(params, params.N) if t.precedes(cap)]
    g = np.zeros((params.q, params.q))
    grids = cap_grids(f, params.N)
    for t in thetas:
        g += np.abs(grids[t.residue]) ** 2
    good = good_labels(g, cap, T)
    return [Envelope(cap, cap.level, int(j)) for j in np.flatnonzero(good)]
