"""Functions on (Z/q)^2 whose spectrum lies on the model parabola {(a, a^2)}.

The model works on a single ball of radius R = q, discretised to unit cells,
so every integral over that ball is a plain sum over the q x q grid (each
point has measure 1).  A ParabolaFunction is stored by its coefficient
vector c; its spatial values are

    f(u1, u2) = sum_a c[a] * character(u1*a + u2*a^2).

Grids are indexed grid[u1, u2].
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .errors import LabError
from .fourier import analyze, synth
from .localfield import Kind, LocalRing, make_ring

SPECTRUM_TOL = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Ring of precision 2N together with the derived scales R = q and R_k = p^k."""

    ring: LocalRing
    N: int

    def __post_init__(self):
        if self.ring.n != 2 * self.N:
            raise LabError("PRECISION_ODD", "ring precision must equal 2N")

    @property
    def q(self) -> int:
        return self.ring.q

    @property
    def p(self) -> int:
        return self.ring.p

    @property
    def R(self) -> int:
        return self.ring.q

    @property
    def bold_p(self) -> int:
        return self.ring.bold_p

    @property
    def kind(self) -> Kind:
        return self.ring.kind

    def R_k(self, k: int) -> int:
        return self.p**k

    def describe(self) -> dict:
        return {"field": self.kind.value, "p": self.p, "N": self.N}


def make_params(kind, p: int, N: int) -> ModelParams:
    if N < 1:
        raise LabError("PRECISION_OVERFLOW", "N must be at least 1")
    return ModelParams(make_ring(kind, p, 2 * N), int(N))


# -- cached geometry ---------------------------------------------------------

@functools.lru_cache(maxsize=None)
def squares(params: ModelParams) -> np.ndarray:
    """sigma(a) = a^2 in the ring, for every a."""
    out = params.ring.sqr(params.ring.elements())
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=None)
def coordinates(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    q = params.q
    u1, u2 = np.meshgrid(np.arange(q, dtype=np.int64), np.arange(q, dtype=np.int64), indexing="ij")
    u1.setflags(write=False)
    u2.setflags(write=False)
    return u1, u2


@functools.lru_cache(maxsize=None)
def parabola_mask(params: ModelParams) -> np.ndarray:
    """Boolean q x q mask of the frequencies (a, a^2)."""
    m = np.zeros((params.q, params.q), dtype=bool)
    a = params.ring.elements()
    m[a, squares(params)] = True
    m.setflags(write=False)
    return m


def embed_spectrum(params: ModelParams, coeffs: np.ndarray) -> np.ndarray:
    """Full 2-D spectrum of a coefficient vector (or a stack of them on axis -1)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    q = params.q
    F = np.zeros(coeffs.shape[:-1] + (q, q), dtype=complex)
    a = np.arange(q)
    F[..., a, squares(params)] = coeffs
    return F


# -- function types ----------------------------------------------------------

@dataclass
class SpatialFunction:
    """Arbitrary function on the grid; used for square functions whose spectrum leaves the parabola."""

    params: ModelParams
    grid: np.ndarray
    _spectrum: Optional[np.ndarray] = field(default=None, repr=False)

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = analyze(self.grid, self.params.ring)
        return self._spectrum

    def __add__(self, other: "SpatialFunction") -> "SpatialFunction":
        return SpatialFunction(self.params, self.grid + other.grid)


class ParabolaFunction:
    """Coefficient vector on the model parabola with a lazily synthesised grid."""

    __slots__ = ("params", "coeffs", "_grid")

    def __init__(self, params: ModelParams, coeffs: np.ndarray):
        self.params = params
        c = np.array(coeffs, dtype=complex)
        c.setflags(write=False)
        self.coeffs = c
        self._grid = None

    @property
    def q(self) -> int:
        return self.params.q

    @property
    def grid(self) -> np.ndarray:
        if self._grid is None:
            g = synth(embed_spectrum(self.params, self.coeffs), self.params.ring)
            g.setflags(write=False)
            self._grid = g
        return self._grid

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs != 0)

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __add__(self, other: "ParabolaFunction") -> "ParabolaFunction":
        if other.params != self.params:
            raise LabError("RING_MISMATCH", "functions live on different models")
        return ParabolaFunction(self.params, self.coeffs + other.coeffs)

    def __sub__(self, other: "ParabolaFunction") -> "ParabolaFunction":
        if other.params != self.params:
            raise LabError("RING_MISMATCH", "functions live on different models")
        return ParabolaFunction(self.params, self.coeffs - other.coeffs)

    def scaled(self, s: complex) -> "ParabolaFunction":
        return ParabolaFunction(self.params, self.coeffs * s)

    def __repr__(self) -> str:
        return f"ParabolaFunction(q={self.q}, support={len(self.support())})"


def make_function(params: ModelParams, coeffs: Union[Mapping[int, complex], np.ndarray, None]) -> ParabolaFunction:
    q = params.q
    if coeffs is None:
        return ParabolaFunction(params, np.zeros(q, dtype=complex))
    if isinstance(coeffs, Mapping):
        c = np.zeros(q, dtype=complex)
        for a, v in coeffs.items():
            a = int(a)
            if not 0 <= a < q:
                raise LabError("INDEX_RANGE", f"frequency {a} outside [0, {q})")
            c[a] += v
        return ParabolaFunction(params, c)
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (q,):
        raise LabError("INDEX_RANGE", f"coefficient vector must have length {q}")
    return ParabolaFunction(params, c)


def evaluate_spatial(f: ParabolaFunction) -> SpatialFunction:
    return SpatialFunction(f.params, f.grid, embed_spectrum(f.params, f.coeffs))


def _values(f) -> np.ndarray:
    if isinstance(f, (ParabolaFunction, SpatialFunction)):
        return f.grid
    return np.asarray(f)


def lp_norm(f, e: float) -> float:
    """(sum_u |f(u)|^e)^(1/e); e = inf gives the sup norm."""
    vals = np.abs(_values(f))
    if math.isinf(e):
        return float(vals.max()) if vals.size else 0.0
    if e < 1:
        raise ValueError("exponent must be at least 1")
    return float(np.sum(vals**e) ** (1.0 / e))


def lp_power(f, e: float) -> float:
    """sum_u |f(u)|^e, the e-th power of the norm without the root."""
    return float(np.sum(np.abs(_values(f)) ** e))


def superlevel_measure(f, alpha: float) -> int:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return int(np.count_nonzero(np.abs(_values(f)) > alpha))


def project(f: ParabolaFunction, predicate: Union[Callable, np.ndarray]) -> ParabolaFunction:
    """Fourier projection onto the frequencies a selected by a predicate or boolean mask."""
    if callable(predicate):
        a = np.arange(f.q)
        keep = np.asarray(predicate(a), dtype=bool)
        if keep.shape != (f.q,):
            keep = np.array([bool(predicate(int(x))) for x in a])
    else:
        keep = np.asarray(predicate, dtype=bool)
    return ParabolaFunction(f.params, np.where(keep, f.coeffs, 0))


def off_parabola_fraction(params: ModelParams, spectrum: np.ndarray) -> float:
    total = float(np.sum(np.abs(spectrum) ** 2))
    if total == 0.0:
        return 0.0
    off = float(np.sum(np.abs(spectrum[~parabola_mask(params)]) ** 2))
    return off / total


def from_grid(params: ModelParams, grid: np.ndarray, tol: float = SPECTRUM_TOL) -> ParabolaFunction:
    """Re-express a spatial grid as a ParabolaFunction, refusing if spectrum leaves the parabola."""
    spec = analyze(grid, params.ring)
    leak = off_parabola_fraction(params, spec)
    if leak > tol:
        raise LabError("SPECTRUM_LEAK", f"off-parabola spectral mass fraction {leak:.3e}")
    coeffs = spec[np.arange(params.q), squares(params)]
    f = ParabolaFunction(params, coeffs)
    return f


def multiply_indicator(f: ParabolaFunction, U, tol: float = SPECTRUM_TOL) -> ParabolaFunction:
    """Pointwise product of f with the indicator of an envelope U (see caps.Envelope)."""
    mask = U.mask()
    return from_grid(f.params, np.where(mask, f.grid, 0), tol)
