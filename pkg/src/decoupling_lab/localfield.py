"""Finite models of the rings of integers of Q_p and F_p((t)), truncated at precision n.

Two kinds of ring are supported:

* ``INT_MOD``  -- Z/p^n, the integers of Q_p modulo p^n (ordinary carries).
* ``POLY_MOD`` -- F_p[t]/(t^n), the integers of F_p((t)) modulo t^n (no carries).

Both have q = p^n elements.  Elements are stored as their canonical integer
encoding in [0, q): for POLY_MOD the base-p digits of the encoding are the
coefficients c_0, ..., c_{n-1} of the polynomial.  With that encoding the
t-adic valuation of a polynomial equals the p-adic valuation of its encoding,
and "a = c mod t^m" is "encoding(a) = encoding(c) mod p^m", so caps and balls
look identical for the two kinds.

All array operations accept numpy integer arrays and are vectorised.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import LabError

MAX_Q = 2**40


class Kind(enum.Enum):
    INT_MOD = "int_mod"
    POLY_MOD = "poly_mod"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        aliases = {
            "int_mod": cls.INT_MOD, "padic": cls.INT_MOD, "qp": cls.INT_MOD,
            "poly_mod": cls.POLY_MOD, "laurent": cls.POLY_MOD, "fpt": cls.POLY_MOD,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown field kind {value!r}") from None


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def vp(n: int, p: int) -> int:
    """p-adic valuation of a nonzero integer."""
    n = abs(int(n))
    if n == 0:
        raise ValueError("vp(0) is infinite")
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


@dataclass(frozen=True)
class LocalRing:
    kind: Kind
    p: int
    n: int

    @property
    def q(self) -> int:
        return self.p**self.n

    @property
    def bold_p(self) -> int:
        # 2^d with d = 1 for Q_2; p otherwise
        return self.p

    @property
    def abs2_inv(self) -> int:
        """|2|^{-1} in the field: 2 for Q_2, 1 for every odd residue characteristic."""
        return 2 if (self.kind is Kind.INT_MOD and self.p == 2) else 1

    @property
    def uniformizer(self) -> "RingElem":
        return RingElem(self, self.p % self.q)

    def __repr__(self) -> str:
        name = "Z" if self.kind is Kind.INT_MOD else f"F_{self.p}[t]"
        mod = f"{self.p}^{self.n}" if self.kind is Kind.INT_MOD else f"t^{self.n}"
        return f"LocalRing({name}/{mod})"

    # -- digits ---------------------------------------------------------------
    def digits(self, x) -> np.ndarray:
        """Base-p digits, shape x.shape + (n,), least significant first."""
        x = np.asarray(x, dtype=np.int64)
        out = np.empty(x.shape + (self.n,), dtype=np.int64)
        for i in range(self.n):
            out[..., i] = x % self.p
            x = x // self.p
        return out

    def from_digits(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.int64)
        x = np.zeros(d.shape[:-1], dtype=np.int64)
        for i in reversed(range(self.n)):
            x = x * self.p + d[..., i]
        return x

    # -- arithmetic -------------------------------------------------------------
    def reduce(self, x) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=np.int64), self.q)

    def add(self, x, y) -> np.ndarray:
        if self.kind is Kind.INT_MOD:
            return np.mod(np.asarray(x, dtype=np.int64) + np.asarray(y, dtype=np.int64), self.q)
        return self.from_digits(np.mod(self.digits(x) + self.digits(y), self.p))

    def neg(self, x) -> np.ndarray:
        if self.kind is Kind.INT_MOD:
            return np.mod(-np.asarray(x, dtype=np.int64), self.q)
        return self.from_digits(np.mod(-self.digits(x), self.p))

    def sub(self, x, y) -> np.ndarray:
        return self.add(x, self.neg(y))

    def mul(self, x, y) -> np.ndarray:
        if self.kind is Kind.INT_MOD:
            x = np.asarray(x, dtype=np.int64)
            y = np.asarray(y, dtype=np.int64)
            if self.q <= 2**31:
                return np.mod(x * y, self.q)
            return np.asarray(
                np.mod(x.astype(object) * y.astype(object), self.q), dtype=np.int64
            )
        dx, dy = self.digits(x), self.digits(y)
        shape = np.broadcast_shapes(dx.shape, dy.shape)
        out = np.zeros(shape, dtype=np.int64)
        for i in range(self.n):
            for j in range(self.n - i):
                out[..., i + j] += dx[..., i] * dy[..., j]
        return self.from_digits(np.mod(out, self.p))

    def sqr(self, x) -> np.ndarray:
        return self.mul(x, x)

    def scale(self, c: int, x) -> np.ndarray:
        """Multiply by the image of the integer c (for POLY_MOD that is c mod p)."""
        return self.mul(self.reduce(c % self.p if self.kind is Kind.POLY_MOD else c), x)

    # -- valuation, norm, character ----------------------------------------------
    def valuation(self, x) -> np.ndarray:
        """Largest k <= n with uniformizer^k | x; valuation(0) = n."""
        x = np.asarray(x, dtype=np.int64) % self.q
        v = np.zeros(x.shape, dtype=np.int64)
        for k in range(1, self.n + 1):
            v += (x % (self.p**k) == 0)
        return v

    def norm(self, x) -> np.ndarray:
        return np.power(float(self.p), -self.valuation(x).astype(float))

    def character(self, z) -> np.ndarray:
        """Additive character, nontrivial on uniformizer^{n-1} and trivial on 0."""
        z = np.asarray(z, dtype=np.int64) % self.q
        if self.kind is Kind.INT_MOD:
            return np.exp(2j * np.pi * z / self.q)
        top = z // (self.p ** (self.n - 1))
        return np.exp(2j * np.pi * top / self.p)

    def elements(self) -> np.ndarray:
        return np.arange(self.q, dtype=np.int64)

    # scalar helpers
    def __call__(self, value: Union[int, list, tuple]) -> "RingElem":
        """Build an element from an int (INT_MOD) or a coefficient list (POLY_MOD)."""
        if isinstance(value, (list, tuple)):
            if self.kind is not Kind.POLY_MOD:
                raise TypeError("coefficient lists only make sense for POLY_MOD")
            coeffs = list(value)[: self.n] + [0] * max(0, self.n - len(value))
            return RingElem(self, int(self.from_digits(np.mod(coeffs, self.p))))
        if self.kind is Kind.POLY_MOD:
            if not 0 <= int(value) < self.q:
                raise ValueError("POLY_MOD encodings must lie in [0, q)")
            return RingElem(self, int(value))
        return RingElem(self, int(value) % self.q)


def make_ring(kind, p: int, precision: int) -> LocalRing:
    kind = Kind.parse(kind)
    if not is_prime(p):
        raise LabError("NON_PRIME", f"{p} is not prime")
    if kind is Kind.POLY_MOD and p == 2:
        raise LabError("CHAR_TWO_POLY", "F_2[t] models a characteristic-2 field, which is excluded")
    if precision < 1:
        raise LabError("PRECISION_OVERFLOW", "precision must be at least 1")
    if precision * math.log2(p) > 40:
        raise LabError("PRECISION_OVERFLOW", f"q = {p}^{precision} exceeds 2^40")
    return LocalRing(kind, p, int(precision))


@dataclass(frozen=True)
class RingElem:
    ring: LocalRing
    rep: int

    def _check(self, other: "RingElem") -> None:
        if not isinstance(other, RingElem) or other.ring != self.ring:
            raise LabError("RING_MISMATCH", f"{self.ring!r} vs {getattr(other, 'ring', other)!r}")

    def __add__(self, other: "RingElem") -> "RingElem":
        self._check(other)
        return RingElem(self.ring, int(self.ring.add(self.rep, other.rep)))

    def __sub__(self, other: "RingElem") -> "RingElem":
        self._check(other)
        return RingElem(self.ring, int(self.ring.sub(self.rep, other.rep)))

    def __neg__(self) -> "RingElem":
        return RingElem(self.ring, int(self.ring.neg(self.rep)))

    def __mul__(self, other: "RingElem") -> "RingElem":
        self._check(other)
        return RingElem(self.ring, int(self.ring.mul(self.rep, other.rep)))

    def coefficients(self) -> list[int]:
        return [int(c) for c in self.ring.digits(self.rep)]

    def valuation(self) -> int:
        return int(self.ring.valuation(self.rep))

    def norm(self) -> float:
        return float(self.ring.norm(self.rep))

    def character(self) -> complex:
        return complex(self.ring.character(self.rep))


def add(x: RingElem, y: RingElem) -> RingElem:
    return x + y


def mul(x: RingElem, y: RingElem) -> RingElem:
    return x * y


def sqr(x: RingElem) -> RingElem:
    return x * x


def valuation(x: RingElem) -> int:
    return x.valuation()


def character(z: RingElem) -> complex:
    return z.character()
