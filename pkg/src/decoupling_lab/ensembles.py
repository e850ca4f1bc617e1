"""Test-function ensembles and the parabola energy count."""
from __future__ import annotations

import enum
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .caps import small_cap_level
from .errors import LabError
from .localfield import LocalRing
from .parabola import ModelParams, ParabolaFunction, make_function


class EnsembleKind(enum.Enum):
    RANDOM_PHASE = "random"
    SPARSE = "sparse"
    BLOCK = "block"
    CHARSUM = "charsum"

    @classmethod
    def parse(cls, value) -> "EnsembleKind":
        if isinstance(value, EnsembleKind):
            return value
        v = str(value).lower()
        for k in cls:
            if v in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown ensemble {value!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    kind: EnsembleKind
    seed: int = 0
    density: float = 0.2
    beta: object = 1
    A: tuple = field(default_factory=tuple)

    def describe(self) -> str:
        if self.kind is EnsembleKind.SPARSE:
            return f"sparse(density={self.density})"
        if self.kind is EnsembleKind.BLOCK:
            return f"block(beta={self.beta})"
        if self.kind is EnsembleKind.CHARSUM:
            return "charsum(A=" + ",".join(str(a) for a in self.A) + ")"
        return self.kind.value


def generate(spec: EnsembleSpec, params: ModelParams) -> ParabolaFunction:
    q = params.q
    kind = spec.kind
    if kind is EnsembleKind.RANDOM_PHASE:
        rng = np.random.default_rng(spec.seed)
        return make_function(params, np.exp(2j * np.pi * rng.random(q)))
    if kind is EnsembleKind.SPARSE:
        rng = np.random.default_rng(spec.seed)
        chosen = rng.random(q) < spec.density
        if not chosen.any():
            chosen[rng.integers(q)] = True
        return make_function(params, chosen.astype(complex))
    if kind is EnsembleKind.BLOCK:
        M = small_cap_level(params, spec.beta)
        pN, pM = params.p**params.N, params.p**M
        coeffs = np.zeros(q, dtype=complex)
        # one modulation c per small cap over the flat cap at 0, times the
        # full block of frequencies c + delta, delta = 0 mod uniformizer^M
        for c in range(0, pM, pN):
            coeffs[np.arange(c, q, pM)] = 1.0
        return make_function(params, coeffs)
    if kind is EnsembleKind.CHARSUM:
        A = list(spec.A)
        if not A:
            raise LabError("EMPTY_SET", "CHARSUM needs a nonempty set")
        reduced = [int(a) % q for a in A]
        if len(set(reduced)) != len(reduced):
            warnings.warn("CHARSUM set has collisions modulo q; duplicates are merged", stacklevel=2)
        coeffs = np.zeros(q, dtype=complex)
        coeffs[sorted(set(reduced))] = 1.0
        return make_function(params, coeffs)
    raise ValueError(kind)


def block_lower_bound(R: float, beta, p_exp: float, q_exp: float) -> float:
    """R^{(beta - 1/2)(1 - 1/p - 1/q)}."""
    b = float(beta) if not isinstance(beta, str) else float(eval_fraction(beta))
    inv_q = 0.0 if np.isinf(q_exp) else 1.0 / q_exp
    return float(R) ** ((b - 0.5) * (1.0 - 1.0 / p_exp - inv_q))


def eval_fraction(s: str):
    from fractions import Fraction

    return Fraction(s)


def parabola_energy(A: Iterable[int], ring: LocalRing) -> int:
    """#{(a1,a2,a3,a4) in A^4 : a1+a3 = a2+a4 and a1^2+a3^2 = a2^2+a4^2 in the ring}."""
    elems = np.unique(np.asarray([int(a) for a in A], dtype=np.int64) % ring.q)
    if elems.size == 0:
        raise LabError("EMPTY_SET", "energy of the empty set")
    x = elems[:, None]
    y = elems[None, :]
    s1 = ring.add(x, y)
    s2 = ring.add(ring.sqr(x), ring.sqr(y))
    counts = Counter(zip(s1.ravel().tolist(), s2.ravel().tolist()))
    return int(sum(c * c for c in counts.values()))
